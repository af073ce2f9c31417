"""Chebyshev coefficient decay of particle trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev

from .lagrangian import Trajectory

MIN_SAMPLES = 64


@dataclass(frozen=True)
class DecayFit:
    coefficients: np.ndarray
    noise_floor: float
    fit_range: tuple[int, int]  # inclusive index range used for the slope
    decay_rate: float  # slope of log|c_k| per index; nan if fewer than 3 points
    r2: float


@dataclass(frozen=True)
class ProbeResult:
    coefficients: np.ndarray  # shape (2, degree + 1), one row per coordinate
    decay_rate: float  # slope of log|c_k| per index for the vector coefficients
    fit_quality: float  # R^2 of that fit
    fit: DecayFit  # fit of the vector coefficient norms
    coordinate_fits: tuple[DecayFit, DecayFit]  # per-coordinate diagnostics

    def __iter__(self):
        return iter((self.coefficients, self.decay_rate, self.fit_quality))

    def geometric(self, max_rate: float = -0.5, min_r2: float = 0.99) -> bool:
        return bool(self.decay_rate <= max_rate and self.fit_quality > min_r2)


def chebyshev_coefficients(times: np.ndarray, values: np.ndarray, degree: int) -> np.ndarray:
    """Least-squares Chebyshev coefficients of samples on [t0, t1]."""
    t0, t1 = times[0], times[-1]
    tau = (2.0 * times - (t0 + t1)) / (t1 - t0)
    return chebyshev.chebfit(tau, values, degree)


def default_degree(n_samples: int) -> int:
    # least squares on uniform samples stays well conditioned for deg <~ 2 sqrt(N)
    return int(min(n_samples - 1, 2 * np.sqrt(n_samples), 40))


def fit_decay(c: np.ndarray, floor_factor: float = 1e2, start: int = 2) -> DecayFit:
    """Fit log|c_k| ~ a + sigma k for k >= start over the pre-plateau range.

    The plateau level is the median of the last third of |c_k| (at least
    16 eps max|c_k|); points are kept while the monotone envelope
    max_{j>=k} |c_j| stays above ``floor_factor`` times that level. The
    envelope keeps isolated near-zero coefficients from breaking the fit.
    The default start skips c_0 and c_1, which carry the affine part of a curve.
    """
    a = np.abs(np.asarray(c, dtype=float))
    K = len(a)
    scale = a.max() if K else 0.0
    tail = a[max(1, 2 * K // 3):]
    floor = max(float(np.median(tail)) if tail.size else 0.0, 16 * np.finfo(float).eps * scale)
    env = np.maximum.accumulate(a[::-1])[::-1]
    last = start - 1
    for k in range(start, K):
        if not env[k] > floor_factor * floor:
            break
        last = k
    if last - start + 1 < 3 or scale == 0:
        return DecayFit(np.asarray(c), floor, (start, last), float("nan"), float("nan"))
    k = np.arange(start, last + 1)
    y = np.log(env[start : last + 1])
    slope, intercept = np.polyfit(k, y, 1)
    resid = y - (slope * k + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(np.asarray(c), floor, (start, last), float(slope), r2)


def analyticity_probe(traj: Trajectory, degree: int | None = None) -> ProbeResult:
    """Chebyshev expansion of the displacement x(t) - x(0) of a trajectory.

    The decay fit uses the Euclidean norm of the vector coefficient
    (c_k of x1, c_k of x2), so a cancellation in one coordinate does not
    masquerade as fast decay. Geometric decay (negative slope, high R^2) is
    the numerical signature of a real-analytic curve. For constant or affine
    trajectories nothing survives above the plateau and rate and R^2 are nan.
    """
    n = len(traj.times)
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    dt = np.diff(traj.times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("trajectory samples must be uniform in time")
    degree = default_degree(n) if degree is None else degree
    disp = traj.positions - traj.positions[0]
    coeffs = np.stack([chebyshev_coefficients(traj.times, disp[:, j], degree) for j in range(2)])
    fit = fit_decay(np.hypot(coeffs[0], coeffs[1]))
    per = (fit_decay(coeffs[0]), fit_decay(coeffs[1]))
    return ProbeResult(coeffs, fit.decay_rate, fit.r2, fit, per)
