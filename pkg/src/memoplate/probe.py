"""High-frequency resolvent probe for the abstract fractional-coupling model.

For each eigenvalue scale the probe picks a frequency on the imaginary axis
from the quartic dispersion relation and builds an explicit near-resonant
state whose resolvent input has closed-form norm. Growth of the probe norm
relative to the input along a scale sweep rules out a uniform resolvent
bound and hence exponential decay. All norms here have closed forms; the
sampled-grid residual check is a separate, deliberately discrete route.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BranchError, DegenerateModeError, DomainError, FitError
from .history import uniform_grid
from .kernels import (POWER_EXPONENTIAL, ConditionCheck, KernelSpec,
                      ValidationReport, kernel_moment, laplace_transform)

BRANCH_LARGER = "larger"
BRANCH_SMALLER = "smaller"


@dataclass(frozen=True)
class AbstractParams:
    """Exponents of the abstract model.

    alpha: memory strength in (0, 2); coupling: power of the cross coupling,
    in [0, 1]; omega1/omega2: kernel singularities of the thermal and shear
    memories. with_shear toggles the second memory channel entirely.
    """

    alpha: float
    coupling: float
    omega1: float
    omega2: float = 0.0
    with_shear: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise DomainError(f"alpha must lie in (0,2), got {self.alpha}")
        if not 0.0 <= self.coupling <= 1.0:
            raise DomainError(f"coupling must lie in [0,1], got {self.coupling}")
        for name, w in (("omega1", self.omega1), ("omega2", self.omega2)):
            if not 0.0 <= w < 1.0:
                raise DomainError(f"{name} must lie in [0,1), got {w}")

    def thermal_kernel(self) -> KernelSpec:
        return KernelSpec(POWER_EXPONENTIAL, 1.0, 1.0, self.omega1)

    def shear_kernel(self) -> KernelSpec | None:
        if not self.with_shear:
            return None
        return KernelSpec(POWER_EXPONENTIAL, 1.0, 1.0, self.omega2)

    @property
    def k0(self) -> float:
        return kernel_moment(self.thermal_kernel(), 0)

    @property
    def h0(self) -> float:
        k = self.shear_kernel()
        return 0.0 if k is None else kernel_moment(k, 0)


def admissibility_report(ap: AbstractParams) -> ValidationReport:
    """Exponent constraints for the non-uniform-decay construction.

    Margins are <= 0 when satisfied. The shear-free route constrains only
    omega1; the shear route additionally ties the coupling to alpha and
    nests omega2 under omega1. Inclusive boundaries tolerate roundoff of the
    derived window ends.
    """
    slack = 1e-12
    checks = [
        ConditionCheck("memory_exponent_range",
                       max(-ap.alpha, ap.alpha - 2.0),
                       0.0 < ap.alpha < 2.0, value=ap.alpha),
        ConditionCheck("coupling_range",
                       max(-ap.coupling, ap.coupling - 1.0),
                       0.0 <= ap.coupling <= 1.0, value=ap.coupling),
    ]
    upper1 = 0.5 * (2.0 - ap.alpha)
    if not ap.with_shear:
        checks.append(ConditionCheck("omega1_window",
                                     max(-ap.omega1, ap.omega1 - upper1),
                                     0.0 <= ap.omega1 < upper1, value=ap.omega1))
    else:
        lower1 = 0.5 * (2.0 * ap.coupling - ap.alpha)
        checks.append(ConditionCheck("coupling_vs_memory", ap.alpha - 2.0 * ap.coupling,
                                     ap.alpha <= 2.0 * ap.coupling + slack, value=ap.coupling))
        checks.append(ConditionCheck("omega1_window",
                                     max(lower1 - ap.omega1, ap.omega1 - upper1),
                                     lower1 - slack <= ap.omega1 < upper1, value=ap.omega1))
        upper2 = ap.omega1 - lower1
        checks.append(ConditionCheck("omega2_window",
                                     max(-ap.omega2, ap.omega2 - upper2),
                                     0.0 <= ap.omega2 <= upper2 + slack, value=ap.omega2))
    return ValidationReport(tuple(checks))


@dataclass(frozen=True)
class ProbeFrequency:
    lam: float
    b_coeff: float
    c_coeff: float
    quartic_residual: float


def mode_frequency(ap: AbstractParams, gamma: float,
                   branch: str = BRANCH_LARGER) -> ProbeFrequency:
    """Real probe frequency from the quartic dispersion relation.

    Picks one of the two positive roots of x^2 - B x + C in x = lam^2; the
    larger root is the one whose probe state grows along the scan.
    """
    if gamma <= 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    if branch not in (BRANCH_LARGER, BRANCH_SMALLER):
        raise BranchError(f"unknown branch {branch!r}")
    k0, h0 = ap.k0, ap.h0
    B = (1.0 + h0) * gamma ** 2 + gamma ** (2.0 * ap.coupling) + k0 * gamma ** ap.alpha
    C = k0 * (1.0 + h0) * gamma ** (ap.alpha + 2.0)
    disc = B * B - 4.0 * C
    if disc < 0.0:
        raise DegenerateModeError(f"complex dispersion roots at gamma={gamma} "
                                  f"(discriminant {disc:.3g})")
    root = 0.5 * (B + np.sqrt(disc)) if branch == BRANCH_LARGER else 0.5 * (B - np.sqrt(disc))
    if root <= 0.0:
        raise DegenerateModeError(f"nonpositive squared frequency at gamma={gamma}")
    lam = float(np.sqrt(root))
    residual = float(abs(root * root - B * root + C))
    return ProbeFrequency(lam, float(B), float(C), residual)


@dataclass(frozen=True)
class ProbePair:
    """Probe state and resolvent input at one scale, with closed-form norms.

    The state is (u, v, theta) = (p, q, r) plus the integrated oscillatory
    history profiles; the input is supported on the history blocks with
    constant profiles. gamma_lam is the scale-weighted shear input amplitude
    whose growth exponent the scan fits.
    """

    gamma: float
    lam: float
    p: complex
    q: complex
    r: complex
    shear_amp: complex          # constant shear input profile
    thermal_transform: complex  # kernel transform at the probe frequency
    shear_transform: complex
    z_norm: float
    z_tilde_norm: float
    hist_thermal_sq: float
    hist_shear_sq: float
    quartic_residual: float

    @property
    def ratio(self) -> float:
        return self.z_tilde_norm / self.z_norm

    @property
    def gamma_lam(self) -> float:
        return self.gamma * abs(self.shear_amp)


def build_probe_pair(ap: AbstractParams, gamma: float,
                     branch: str = BRANCH_LARGER) -> ProbePair:
    freq = mode_frequency(ap, gamma, branch)
    lam = freq.lam
    k0, h0 = ap.k0, ap.h0
    mu = ap.thermal_kernel()
    beta = ap.shear_kernel()
    c = laplace_transform(mu, lam)
    b = laplace_transform(beta, lam) if beta is not None else 0.0 + 0.0j

    ga2 = gamma ** (0.5 * ap.alpha)
    if abs(c) == 0.0:
        raise DegenerateModeError(f"vanishing thermal transform at gamma={gamma}")
    r = (k0 - c) / (ga2 * c)
    denom = (1.0 + h0) * gamma ** 2 - lam ** 2
    if denom == 0.0:
        raise DegenerateModeError(f"resonant denominator at gamma={gamma}")
    p = gamma ** ap.coupling * r / denom
    q = 1j * lam * p
    if beta is not None:
        if abs(h0 - b) == 0.0:
            raise DegenerateModeError(f"vanishing shear denominator at gamma={gamma}")
        Lam = 1j * lam * p * b / (h0 - b)
    else:
        Lam = 0.0 + 0.0j

    # |1 - exp(-i lam s)|^2 integrates against the kernel to twice the
    # difference between its mass and the real part of its transform
    osc_mu = 2.0 * (k0 - c.real) / lam ** 2
    hist_th = abs(r + 1.0 / ga2) ** 2 * osc_mu
    if beta is not None:
        osc_beta = 2.0 * (h0 - b.real) / lam ** 2
        hist_sh = abs(q + Lam) ** 2 * osc_beta
    else:
        hist_sh = 0.0

    z_sq = (gamma ** 2 * abs(p) ** 2 + abs(q) ** 2 + abs(r) ** 2
            + gamma ** ap.alpha * hist_th + gamma ** 2 * hist_sh)
    zt_sq = k0 + h0 * (gamma * abs(Lam)) ** 2
    return ProbePair(gamma, lam, p, q, r, Lam, c, b,
                     float(np.sqrt(z_sq)), float(np.sqrt(zt_sq)),
                     float(hist_th), float(hist_sh), freq.quartic_residual)


@dataclass(frozen=True)
class ScanResult:
    gammas: np.ndarray
    lam: np.ndarray
    z_norm: np.ndarray
    z_tilde_norm: np.ndarray
    ratio: np.ndarray
    gamma_lam: np.ndarray
    quartic_residual: np.ndarray
    slope_z: float
    slope_gamma_lam: float       # nan without the shear channel
    ratio_decreasing: bool

    def rows(self):
        for k in range(self.gammas.size):
            yield (self.gammas[k], self.lam[k], self.z_norm[k], self.z_tilde_norm[k],
                   self.ratio[k], self.quartic_residual[k])


def _log_slope(x: np.ndarray, y: np.ndarray) -> float:
    if np.any(y <= 0.0) or not np.all(np.isfinite(y)):
        raise FitError("log-slope fit needs positive finite values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def resolvent_scan(ap: AbstractParams, gammas: np.ndarray,
                   branch: str = BRANCH_LARGER) -> ScanResult:
    """Probe-pair norms along a scale sweep with fitted growth exponents."""
    g = np.asarray(gammas, dtype=float)
    if g.size < 2:
        raise FitError(f"scan needs at least two scales, got {g.size}")
    pairs = [build_probe_pair(ap, float(x), branch) for x in g]
    lam = np.array([p.lam for p in pairs])
    zn = np.array([p.z_norm for p in pairs])
    zt = np.array([p.z_tilde_norm for p in pairs])
    gl = np.array([p.gamma_lam for p in pairs])
    qr = np.array([p.quartic_residual for p in pairs])
    ratio = zt / zn
    slope_gl = _log_slope(g, gl) if ap.with_shear else float("nan")
    return ScanResult(g, lam, zn, zt, ratio, gl, qr,
                      _log_slope(g, zn), slope_gl,
                      bool(np.all(np.diff(ratio) < 0.0)))


@dataclass(frozen=True)
class ResidualReport:
    gamma: float
    lam: float
    grid_size: int
    cutoff: float
    residual: float              # relative discrete resolvent defect


def residual_check(ap: AbstractParams, gamma: float, grid_size: int,
                   *, s_max: float | None = None,
                   branch: str = BRANCH_LARGER) -> ResidualReport:
    """Discrete resolvent defect of the sampled probe pair.

    The probe profiles oscillate at a fixed frequency, so the histories are
    sampled on uniform grids; the defect is first order in the spacing and
    halves under grid doubling. The span defaults to four times the slowest
    relaxation time.
    """
    pair = build_probe_pair(ap, gamma, branch)
    lam = pair.lam
    mu = ap.thermal_kernel()
    beta = ap.shear_kernel()
    if s_max is None:
        rates = [mu.decay] + ([beta.decay] if beta is not None else [])
        s_max = 4.0 / min(rates)

    def profile(s: np.ndarray, amp: complex) -> np.ndarray:
        return amp * (1.0 - np.exp(-1j * lam * s)) / (1j * lam)

    grid_mu = uniform_grid(mu, grid_size, s_max)
    s = grid_mu.nodes
    h = grid_mu.spacing
    phi = profile(s, pair.r + gamma ** (-0.5 * ap.alpha))
    dminus_phi = (phi - np.concatenate([[0.0], phi[:-1]])) / h

    res_u = 1j * lam * pair.p - pair.q
    res_th = 1j * lam * pair.r + gamma ** ap.coupling * pair.q \
        + gamma ** ap.alpha * np.sum(grid_mu.weights * phi)
    res_eta = 1j * lam * phi + dminus_phi - pair.r - gamma ** (-0.5 * ap.alpha)

    num_sq = (gamma ** 2 * abs(res_u) ** 2 + abs(res_th) ** 2
              + gamma ** ap.alpha * float(np.sum(grid_mu.weights * np.abs(res_eta) ** 2)))
    den_sq = float(np.sum(grid_mu.weights)) * gamma ** ap.alpha * gamma ** (-ap.alpha)

    if beta is not None:
        grid_b = uniform_grid(beta, grid_size, s_max)
        sb, hb = grid_b.nodes, grid_b.spacing
        psi = profile(sb, pair.q + pair.shear_amp)
        dminus_psi = (psi - np.concatenate([[0.0], psi[:-1]])) / hb
        res_v = 1j * lam * pair.q + gamma ** 2 * pair.p - gamma ** ap.coupling * pair.r \
            + gamma ** 2 * np.sum(grid_b.weights * psi)
        res_xi = 1j * lam * psi + dminus_psi - pair.q - pair.shear_amp
        num_sq += abs(res_v) ** 2 \
            + gamma ** 2 * float(np.sum(grid_b.weights * np.abs(res_xi) ** 2))
        den_sq += gamma ** 2 * abs(pair.shear_amp) ** 2 * float(np.sum(grid_b.weights))
    else:
        res_v = 1j * lam * pair.q + gamma ** 2 * pair.p - gamma ** ap.coupling * pair.r
        num_sq += abs(res_v) ** 2

    return ResidualReport(gamma, lam, grid_size, float(s_max),
                          float(np.sqrt(num_sq / den_sq)))
