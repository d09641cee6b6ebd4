"""Closeness of the memory system to its collapsed comparison system.

The full state is compared against the zero-padded lift of the collapsed
evolution started from the projected triplet. The history blocks of the lift
are zero, so their share of the distance is the full system's own history
norm; the triplet share is the weighted modal distance. A reconstruction of
the limit histories (transport driven by the collapsed temperature and
velocity) is stepped alongside as auxiliary proof machinery.

The measured distance is compared against the decaying contribution of the
initial histories plus parameter powers; the surplus constants are fitted,
never assumed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularStepError
from .dynamics import MidpointStepper, TransportStepper, _state_arrays
from .modes import Params, PhaseSpace, PhaseVector, build_phase_space, zero_phase_vector


def lift_triplet(space: PhaseSpace, triplet: np.ndarray, order: int = 0) -> PhaseVector:
    """Zero-padded embedding of collapsed states into the full phase space."""
    t = np.asarray(triplet, dtype=float)
    n = space.modes.count
    if t.shape != (n, 3):
        raise DomainError(f"triplet has shape {t.shape}, expected ({n}, 3)")
    vec = zero_phase_vector(space, order)
    vec.u, vec.v, vec.theta = t[:, 0].copy(), t[:, 1].copy(), t[:, 2].copy()
    return vec


def project_triplet(vec: PhaseVector) -> np.ndarray:
    """Drop the histories; returns (modes, 3)."""
    return np.stack([vec.u, vec.v, vec.theta], axis=1)


def extract_histories(vec: PhaseVector) -> tuple[np.ndarray | None, np.ndarray | None]:
    return vec.eta, vec.xi


def pi_bounds(params: Params) -> tuple[float, float]:
    """Parameter powers controlling the closeness surplus: the quarter-power
    sum and the half-power thermal pair."""
    flat = params.eps ** 0.25 + params.sigma ** 0.25 + params.psi() ** 0.25
    sharp = params.psi() ** 0.5 + params.phi() ** 0.5
    return flat, sharp


def upsilon_coefficients(initial: PhaseVector) -> dict[str, float]:
    """Initial history norms feeding the decaying part of the bound."""
    b = initial.block_norms_sq()
    return {"eta_mu": float(np.sqrt(b["eta_mu"])), "eta_nu": float(np.sqrt(b["eta_nu"])),
            "xi": float(np.sqrt(b["xi"]))}


def upsilon_series(space: PhaseSpace, coeff: dict[str, float], times: np.ndarray) -> np.ndarray:
    """Decaying initial-history contribution at the given times.

    Each term decays at a quarter of its kernel's sampled relaxation rate.
    """
    t = np.asarray(times, dtype=float)
    out = np.zeros_like(t)
    if space.mu is not None:
        out += coeff["eta_mu"] * np.exp(-0.25 * space.mu.decay * t)
    if space.nu is not None:
        out += coeff["eta_nu"] * np.exp(-0.25 * space.nu.decay * t)
    if space.beta is not None:
        out += coeff["xi"] * np.exp(-0.25 * space.beta.decay * t)
    return out


@dataclass
class LimitComparison:
    """Distance record for one parameter point."""

    space: PhaseSpace
    order: int
    dt: float
    t0: float
    times: np.ndarray
    distance: np.ndarray          # zero-padded-lift distance D(t)
    distance_proof: np.ndarray    # distance against reconstructed histories
    upsilon: np.ndarray
    energy_full: np.ndarray
    energy_limit: np.ndarray
    eta_mu_norm: np.ndarray       # measured history norms, aggregated over modes
    eta_nu_norm: np.ndarray
    xi_norm: np.ndarray
    coeff: dict[str, float]
    pi_flat: float
    pi_sharp: float

    @property
    def sup_distance(self) -> float:
        mask = self.times >= self.t0
        return float(np.max(self.distance[mask])) if mask.any() else 0.0

    @property
    def upsilon_at_t0(self) -> float:
        return float(np.interp(self.t0, self.times, self.upsilon))

    def sup_upsilon_tail(self, t0: float | None = None) -> float:
        """Largest decaying-bound value from t0 on; the series is monotone
        decreasing so this is just its value at t0."""
        return float(np.interp(self.t0 if t0 is None else t0, self.times, self.upsilon))

    @property
    def k_hat(self) -> float:
        """Per-point surplus constant over the quarter-power scale."""
        excess = np.maximum(self.distance - self.upsilon, 0.0)
        top = float(np.max(excess))
        if self.pi_flat == 0.0:
            return 0.0 if top == 0.0 else float("inf")
        return top / self.pi_flat

    def q_hat(self, k_global: float) -> float:
        """Thermal surplus left after removing a shared quarter-power part."""
        if self.space.params.tau == 0.0:
            return 0.0
        if self.pi_sharp == 0.0:
            return 0.0
        excess = np.maximum(self.distance - self.upsilon - k_global * self.pi_flat, 0.0)
        return float(np.max(excess)) / self.pi_sharp


def compare_trajectories(space: PhaseSpace, initial: PhaseVector, dt: float,
                         horizon: float, *, t0: float = 0.5,
                         store_stride: int | None = None) -> LimitComparison:
    """Step the full and collapsed systems together and record distances.

    Both use the same implicit midpoint scheme and step, so the comparison
    isolates the model difference rather than the integrator difference.
    """
    if dt <= 0 or horizon <= 0:
        raise DomainError(f"need positive dt and horizon, got {dt}, {horizon}")
    nsteps = max(1, int(round(horizon / dt)))
    if store_stride is None:
        store_stride = max(1, nsteps // 2000)

    n = space.modes.count
    me, mx = space.eta_size, space.xi_size
    g = space.modes.eigenvalues
    m = initial.order
    wu, wv = g ** (m + 2), g ** m
    wmu, wnu = g ** (m + 1), g ** m

    stepper = MidpointStepper(space, dt)
    space_lim = build_phase_space(space.modes, Params(0.0, 0.0, 0.0))
    stepper_lim = MidpointStepper(space_lim, dt)
    tr_eta = TransportStepper(space.eta_grid, dt) if me else None
    tr_xi = TransportStepper(space.xi_grid, dt) if mx else None

    u, v, th, eta, xi = _state_arrays(initial)
    lu, lv, lth = u.copy(), v.copy(), th.copy()
    eta_hat = np.zeros((me, n)) if me else None
    xi_hat = np.zeros((mx, n)) if mx else None

    stored = list(range(0, nsteps + 1, store_stride))
    if stored[-1] != nsteps:
        stored.append(nsteps)
    k_of_step = {s: k for k, s in enumerate(stored)}
    K = len(stored)
    D = np.zeros(K); DP = np.zeros(K); EF = np.zeros(K); EL = np.zeros(K)
    HMU = np.zeros(K); HNU = np.zeros(K); HXI = np.zeros(K)

    def record(step: int):
        k = k_of_step.get(step)
        if k is None:
            return
        trip = float(np.sum(wu * (u - lu) ** 2 + wv * ((v - lv) ** 2 + (th - lth) ** 2)))
        hmu = hnu = hxi = 0.0
        proof = trip
        ef = float(np.sum(wu * u ** 2 + wv * (v ** 2 + th ** 2)))
        if me:
            sq = eta ** 2
            dq = (eta - eta_hat) ** 2
            if space.w_mu is not None:
                hmu = float(np.sum(wmu * (space.w_mu @ sq)))
                proof += float(np.sum(wmu * (space.w_mu @ dq)))
            if space.w_nu is not None:
                hnu = float(np.sum(wnu * (space.w_nu @ sq)))
                proof += float(np.sum(wnu * (space.w_nu @ dq)))
        if mx:
            hxi = float(np.sum(wu * (space.w_beta @ xi ** 2)))
            proof += float(np.sum(wu * (space.w_beta @ (xi - xi_hat) ** 2)))
        D[k] = np.sqrt(trip + hmu + hnu + hxi)
        DP[k] = np.sqrt(proof)
        EF[k] = ef + hmu + hnu + hxi
        EL[k] = float(np.sum(wu * lu ** 2 + wv * (lv ** 2 + lth ** 2)))
        HMU[k], HNU[k], HXI[k] = np.sqrt(hmu), np.sqrt(hnu), np.sqrt(hxi)

    record(0)
    for step in range(1, nsteps + 1):
        u, v, th, eta, xi = stepper.step(u, v, th, eta, xi)
        lth_old, lv_old = lth, lv
        lu, lv, lth, _, _ = stepper_lim.step(lu, lv, lth, None, None)
        if me:
            eta_hat = tr_eta.step_driven(eta_hat, 0.5 * (lth_old + lth))
        if mx:
            xi_hat = tr_xi.step_driven(xi_hat, 0.5 * (lv_old + lv))
        if not np.isfinite(u[0]):
            raise SingularStepError(f"full state left the finite range at step {step}")
        record(step)

    times = dt * np.array(stored, dtype=float)
    coeff = upsilon_coefficients(initial)
    ups = upsilon_series(space, coeff, times)
    flat, sharp = pi_bounds(space.params)
    return LimitComparison(space, m, dt, t0, times, D, DP, ups, EF, EL,
                           HMU, HNU, HXI, coeff, flat, sharp)


def fit_limit_constants(points: list[LimitComparison]) -> dict:
    """Two-stage surplus fit over a sweep.

    The shared quarter-power constant is taken from the thermally collapsed
    points (all points if none are); each thermal point then gets its own
    half-power surplus on top of that shared part.
    """
    if not points:
        raise DomainError("empty sweep")
    base = [p for p in points if p.space.params.tau == 0.0] or points
    k_global = max(p.k_hat for p in base)
    return {"k_hat": k_global,
            "q_hat": [p.q_hat(k_global) for p in points],
            "k_hat_rows": [p.k_hat for p in points]}


@dataclass(frozen=True)
class EnvelopeFit:
    k_eta: float
    k_xi: float
    eta_envelope: np.ndarray
    xi_envelope: np.ndarray
    eta_margin: float     # min envelope - measured over the full horizon
    xi_margin: float


def history_envelopes(comp: LimitComparison, fit_fraction: float = 0.5) -> EnvelopeFit:
    """Fit history-norm envelopes on the early window, check on the whole run.

    The measured slow-memory norm must stay under its initial decaying part
    plus a fitted multiple of sqrt(eps) + sqrt(psi); the viscous history gets
    the same treatment over sqrt(sigma). Fitting uses only the first part of
    the run, so the late-time check is a genuine prediction.
    """
    space, t = comp.space, comp.times
    cut = t <= fit_fraction * t[-1]
    meas_eta = np.sqrt(comp.eta_mu_norm ** 2 + comp.eta_nu_norm ** 2)
    dec_eta = np.zeros_like(t)
    if space.mu is not None:
        dec_eta += comp.coeff["eta_mu"] * np.exp(-0.25 * space.mu.decay * t)
    if space.nu is not None:
        dec_eta += comp.coeff["eta_nu"] * np.exp(-0.25 * space.nu.decay * t)
    scale_eta = np.sqrt(space.params.eps) + np.sqrt(space.params.psi())
    k_eta = 0.0
    if scale_eta > 0 and cut.any():
        k_eta = float(np.max(np.maximum(meas_eta[cut] - dec_eta[cut], 0.0))) / scale_eta
    env_eta = dec_eta + k_eta * scale_eta

    meas_xi = comp.xi_norm
    dec_xi = np.zeros_like(t)
    if space.beta is not None:
        dec_xi += comp.coeff["xi"] * np.exp(-0.25 * space.beta.decay * t)
    scale_xi = np.sqrt(space.params.sigma)
    k_xi = 0.0
    if scale_xi > 0 and cut.any():
        k_xi = float(np.max(np.maximum(meas_xi[cut] - dec_xi[cut], 0.0))) / scale_xi
    env_xi = dec_xi + k_xi * scale_xi

    return EnvelopeFit(k_eta, k_xi, env_eta, env_xi,
                       float(np.min(env_eta - meas_eta)),
                       float(np.min(env_xi - meas_xi)))
