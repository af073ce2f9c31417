"""Eulerian pseudo-spectral solver for rho_t + (u . grad) rho = 0 with the Darcy
velocity, advanced by classical fourth-order Runge-Kutta.

The state is held as real-FFT coefficients; the zero mode of the tendency is
dropped because div u = 0 makes the advection term a pure divergence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operators import check_mean_zero, darcy_symbols
from .spectral import Grid, RealField, deriv_symbol

log = logging.getLogger(__name__)


class SolverAbort(RuntimeError):
    """Raised when a run leaves the admissible regime (CFL, blow-up, NaN, det <= 0)."""

    def __init__(self, reason: str, step: int):
        super().__init__(f"{reason} at step {step}")
        self.reason = reason
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 5e-3
    T: float = 1.0
    integrator: str = "rk4"
    dealias: bool = True
    cfl_guard: float = 0.5
    blowup_factor: float = 1e3
    backward: bool = False

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T >= 0:
            raise ValueError(f"T must be nonnegative, got {self.T}")
        if self.T > 0 and self.dt > self.T * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds horizon T={self.T}")
        if self.integrator != "rk4":
            raise ValueError(f"unsupported integrator {self.integrator!r}")
        if not self.cfl_guard > 0:
            raise ValueError(f"cfl_guard must be positive, got {self.cfl_guard}")

    @property
    def n_steps(self) -> int:
        if self.T == 0:
            return 0
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    @property
    def step(self) -> float:
        """Effective step T / n_steps (equal to dt when dt divides T)."""
        return self.T / self.n_steps if self.n_steps else 0.0

    def replace(self, **kw) -> "SolverConfig":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class Diagnostics:
    times: np.ndarray
    mean: np.ndarray
    l2: np.ndarray
    min: np.ndarray
    max: np.ndarray
    hs: np.ndarray

    def rows(self):
        for i in range(len(self.times)):
            yield (self.times[i], self.mean[i], self.l2[i], self.min[i], self.max[i], self.hs[i])


@dataclass(frozen=True)
class SolutionRecord:
    rho_final: RealField
    diagnostics: Diagnostics
    steps: int
    snapshots: dict = field(default_factory=dict, repr=False)


class SpectralKernel:
    """Precomputed half-spectrum symbols for one grid."""

    def __init__(self, grid: Grid, dealias: bool = True):
        self.grid = grid
        half = grid.n2 // 2 + 1
        self.shape = grid.shape
        s1, s2 = darcy_symbols(grid)
        self.u1 = s1[:, :half]
        self.u2 = s2[:, :half]
        self.d1 = deriv_symbol(grid, 0)[:, :half]
        self.d2 = deriv_symbol(grid, 1)[:, :half]
        mask = grid.dealias_mask[:, :half].copy() if dealias else np.ones((grid.n1, half), bool)
        mask[0, 0] = False
        self.mask = mask
        # weights for norms from half spectra: interior columns appear twice
        dup = np.full(half, 2.0)
        dup[0] = 1.0
        if grid.n2 % 2 == 0:
            dup[-1] = 1.0
        self.dup = dup[None, :]
        self.hs_weight = (1.0 + grid.xi_abs2[:, :half]) ** grid.s * self.dup * grid.sobolev_weight

    def rfft(self, a: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(a)

    def irfft(self, A: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(A, s=self.shape)

    def velocity(self, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.irfft(self.u1 * R), self.irfft(self.u2 * R)

    def tendency(self, R: np.ndarray) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
        """Spectral tendency -(u.grad rho)^ and the physical velocity."""
        u1, u2 = self.velocity(R)
        prod = u1 * self.irfft(self.d1 * R) + u2 * self.irfft(self.d2 * R)
        P = self.rfft(prod)
        P *= self.mask
        return -P, (u1, u2)

    def hs_norm(self, R: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.hs_weight * (R.real**2 + R.imag**2))))


def rhs_eulerian(rho: RealField, dealias: bool = True) -> RealField:
    """-(u . grad) rho with u the Darcy velocity of rho."""
    check_mean_zero(rho)
    k = SpectralKernel(rho.grid, dealias)
    P, _ = k.tendency(k.rfft(rho.samples))
    return RealField(rho.grid, k.irfft(P))


Hook = Callable[[int, float, np.ndarray, tuple[np.ndarray, np.ndarray]], None]


def _record(diag: dict, t: float, rho: np.ndarray, hs: float, area: float) -> None:
    diag["times"].append(t)
    diag["mean"].append(float(rho.mean()))
    diag["l2"].append(float(np.sqrt(area * np.sum(rho**2))))
    diag["min"].append(float(rho.min()))
    diag["max"].append(float(rho.max()))
    diag["hs"].append(hs)


def integrate(
    rho0: RealField,
    cfg: SolverConfig,
    extra_state: np.ndarray | None = None,
    extra_rhs: Callable[[np.ndarray, tuple[np.ndarray, np.ndarray]], np.ndarray] | None = None,
    on_step: Callable[[int, float, np.ndarray, np.ndarray | None], None] | None = None,
) -> tuple[np.ndarray, np.ndarray | None, Diagnostics, int]:
    """RK4 driver shared by the density, flow-map and trajectory solvers.

    ``extra_state`` is advanced alongside rho with tendency
    ``extra_rhs(state, (u1, u2))`` evaluated with the stage velocity, so all
    co-evolved quantities share one clock. Returns the final physical rho,
    the final extra state, the diagnostics and the step count.
    """
    check_mean_zero(rho0)
    grid = rho0.grid
    kern = SpectralKernel(grid, cfg.dealias)
    n_steps = cfg.n_steps
    dt = cfg.step
    sign = -1.0 if cfg.backward else 1.0
    h = sign * dt
    R = kern.rfft(rho0.samples)
    X = None if extra_state is None else np.array(extra_state, dtype=float)
    hs0 = kern.hs_norm(R)
    diag: dict[str, list] = {k: [] for k in ("times", "mean", "l2", "min", "max", "hs")}
    _record(diag, 0.0, rho0.samples, hs0, grid.cell_area)
    if on_step is not None:
        on_step(0, 0.0, rho0.samples, X)
    h_min = min(grid.h1, grid.h2)

    # backward runs use the negative step h; the tendencies keep their sign
    def stage(Rs, Xs):
        dR, u = kern.tendency(Rs)
        dX = None if Xs is None else extra_rhs(Xs, u)
        return dR, dX, u

    for step in range(1, n_steps + 1):
        k1, x1, u = stage(R, X)
        umax = float(np.sqrt((u[0] ** 2 + u[1] ** 2).max()))
        if umax * dt / h_min > cfg.cfl_guard:
            raise SolverAbort(f"CFL guard violated (|u|dt/h = {umax * dt / h_min:.3f})", step)
        k2, x2, _ = stage(R + 0.5 * h * k1, None if X is None else X + 0.5 * h * x1)
        k3, x3, _ = stage(R + 0.5 * h * k2, None if X is None else X + 0.5 * h * x2)
        k4, x4, _ = stage(R + h * k3, None if X is None else X + h * x3)
        R = R + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if X is not None:
            X = X + (h / 6.0) * (x1 + 2 * x2 + 2 * x3 + x4)
        rho = kern.irfft(R)
        hs = kern.hs_norm(R)
        if not (np.all(np.isfinite(rho)) and (X is None or np.all(np.isfinite(X)))):
            raise SolverAbort("non-finite field", step)
        if hs0 > 0 and hs > cfg.blowup_factor * hs0:
            raise SolverAbort(f"H^s norm grew beyond {cfg.blowup_factor:g} x initial", step)
        t = sign * step * dt
        _record(diag, t, rho, hs, grid.cell_area)
        if on_step is not None:
            on_step(step, t, rho, X)
    rho_final = kern.irfft(R) if n_steps else np.array(rho0.samples)
    diagnostics = Diagnostics(**{k: np.asarray(v) for k, v in diag.items()})
    return rho_final, X, diagnostics, n_steps


def solve_density(rho0: RealField, cfg: SolverConfig | None = None) -> SolutionRecord:
    cfg = cfg or SolverConfig()
    rho, _, diag, steps = integrate(rho0, cfg)
    if steps == 0:
        return SolutionRecord(rho0, diag, 0)
    return SolutionRecord(RealField(rho0.grid, rho), diag, steps)


def solution_map(rho0: RealField, T: float, cfg: SolverConfig | None = None) -> RealField:
    """Phi_T(rho0) = rho(T)."""
    cfg = (cfg or SolverConfig()).replace(T=T)
    if T == 0:
        return rho0
    if cfg.dt > T:
        cfg = cfg.replace(dt=T)
    return solve_density(rho0, cfg).rho_final
