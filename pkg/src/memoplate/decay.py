"""Decay-rate estimation and cross-functional differential checks.

The energy alone does not expose the decay rate directly; small multiples of
mixed products (deflection times velocity, temperature times memory
integral) turn it into functionals whose time derivative is provably
controlled. We evaluate those series on a sampled trajectory, fit the decay
rate by least squares on the log-energy, and extract the largest constants
for which the differential inequalities hold along the sampled run.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError
from .dynamics import Trajectory

DEFAULT_WINDOW = (1.0, 15.0)


@dataclass(frozen=True)
class FunctionalConfig:
    """Mixing coefficients for the cross functionals.

    rho_flat and rho_sharp must stay small enough that the primary
    functional is equivalent to the energy within a factor two; the default
    scale multiplies the energy inside the secondary functional, and
    scale=None asks the fitting routine to scan a small ladder.
    """

    rho_flat: float = 0.01
    rho_sharp: float = 0.02
    scale: float | None = 20.0

    SCALE_LADDER = (5.0, 10.0, 20.0, 40.0, 80.0)


def lyapunov_series(traj: Trajectory, config: FunctionalConfig = FunctionalConfig(),
                    scale: float | None = None) -> dict[str, np.ndarray]:
    """Functional time series on the trajectory's stored samples."""
    p = traj.space.params
    g = traj.space.modes.eigenvalues[:, None]
    E = traj.total_energy()
    theta_flat = np.sum(traj.u * traj.v, axis=0)
    theta_sharp = -p.sigma * np.sum(traj.ibe * traj.v / g, axis=0)
    K = -p.eps * np.sum(traj.theta * traj.imu, axis=0)
    K2 = K - p.eps * np.sum(g * traj.u * traj.imu, axis=0)
    K3 = 4.0 * theta_sharp + K2 + theta_flat
    N = config.scale if scale is None else scale
    if N is None:
        N = FunctionalConfig.SCALE_LADDER[-1]
    F1 = E + config.rho_flat * theta_flat + config.rho_sharp * theta_sharp
    F2 = N * E + K3
    return {"energy": E, "theta_flat": theta_flat, "theta_sharp": theta_sharp,
            "K": K, "K2": K2, "K3": K3, "F1": F1, "F2": F2, "F": F1 + F2,
            "scale": np.full_like(E, float(N))}


def equivalence_margins(series: dict[str, np.ndarray]) -> tuple[float, float]:
    """(min of E - F1/2, min of 2*F1 - E); both nonnegative when the primary
    functional is energy-equivalent within a factor two."""
    E, F1 = series["energy"], series["F1"]
    return float(np.min(E - 0.5 * F1)), float(np.min(2.0 * F1 - E))


def _window_indices(times: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    idx = np.nonzero((times >= lo) & (times <= hi))[0]
    if idx.size < 3:
        raise FitError(f"window {window} covers only {idx.size} samples")
    return idx


@dataclass(frozen=True)
class DecayFit:
    rate: float
    prefactor: float       # fitted amplitude relative to the initial energy
    r_squared: float
    window: tuple[float, float]
    samples: int


def fit_decay_rate(times: np.ndarray, energy: np.ndarray,
                   window: tuple[float, float] = DEFAULT_WINDOW) -> DecayFit:
    """Least-squares slope of log energy over the window."""
    idx = _window_indices(np.asarray(times), window)
    e = np.asarray(energy)[idx]
    if np.any(e <= 0.0):
        raise FitError("energy reaches zero inside the fit window")
    t, y = np.asarray(times)[idx], np.log(e)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, intercept), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    y_hat = A @ np.array([slope, intercept])
    ss_res = float(np.sum((y - y_hat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    e0 = float(energy[0]) if energy[0] > 0 else 1.0
    return DecayFit(-float(slope), float(np.exp(intercept)) / e0, r2,
                    window, int(idx.size))


def _centered_derivative(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.gradient(values, times)


@dataclass(frozen=True)
class InequalityReport:
    """Largest constants satisfying the two differential inequalities on the
    sampled window, with the residual left at those constants."""

    lambda_hat: float      # primary: dF1/dt <= -(phi/2) * lambda * F1 + slack
    d0_hat: float          # secondary: dF2/dt <= -d0 * F2 + slack
    scale: float
    residual: float
    degenerate: bool       # phi = 0 turns the primary check into dF1/dt <= slack
    window: tuple[float, float]
    slack: float


def check_differential_inequalities(traj: Trajectory,
                                    config: FunctionalConfig = FunctionalConfig(),
                                    window: tuple[float, float] = DEFAULT_WINDOW,
                                    slack: float = 0.0) -> InequalityReport:
    """Fit the inequality constants along the run.

    With scale=None in the config, the secondary functional's energy multiple
    is scanned over a fixed ladder and the first value giving a positive
    decay constant wins (falling back to the best seen).
    """
    scales = (config.SCALE_LADDER if config.scale is None else (config.scale,))
    idx = _window_indices(traj.times, window)
    t = traj.times

    best: InequalityReport | None = None
    for N in scales:
        series = lyapunov_series(traj, config, scale=N)
        F1, F2 = series["F1"], series["F2"]
        dF1 = _centered_derivative(t, F1)[idx]
        dF2 = _centered_derivative(t, F2)[idx]
        f1, f2 = F1[idx], F2[idx]
        phi = traj.space.params.phi()
        degenerate = phi == 0.0
        if degenerate:
            lam = np.nan
            res1 = float(np.max(np.maximum(dF1 - slack, 0.0)))
        elif np.any(f1 <= 0.0):
            raise FitError("primary functional loses positivity inside the window")
        else:
            lam = float(np.min(2.0 * (slack - dF1) / (phi * f1)))
            res1 = float(np.max(np.maximum(dF1 + 0.5 * phi * lam * f1 - slack, 0.0)))
        if np.any(f2 <= 0.0):
            raise FitError("secondary functional loses positivity inside the window; "
                           "increase the energy scale")
        d0 = float(np.min((slack - dF2) / f2))
        res2 = float(np.max(np.maximum(dF2 + d0 * f2 - slack, 0.0)))
        report = InequalityReport(lam, d0, float(N), max(res1, res2),
                                  degenerate, window, slack)
        if best is None or report.d0_hat > best.d0_hat:
            best = report
        if d0 > 0.0:
            return report
    return best
