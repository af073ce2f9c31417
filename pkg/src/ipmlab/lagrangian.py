"""Flow maps phi = id + g on the periodic box.

Compositions ``f o phi`` use periodic cubic-spline interpolation. The flow
itself is integrated together with the Eulerian density: each RK4 stage
evaluates the Darcy velocity of the stage density at ``x + g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage

from .operators import darcy_velocity
from .spectral import Grid, RealField, VectorField, check_same_grid, deriv_symbol
from .transport import SolutionRecord, SolverAbort, SolverConfig, integrate

INVERSION_TOL = 1e-10
INVERSION_MAX_ITER = 100


class InversionError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"flow-map inversion failed: residual {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


class SplineInterpolator:
    """Periodic cubic B-spline interpolant of gridded samples."""

    def __init__(self, grid: Grid, samples: np.ndarray):
        self.grid = grid
        self.coeffs = ndimage.spline_filter(np.asarray(samples, dtype=float), order=3, mode="grid-wrap")

    def __call__(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        g = self.grid
        coords = np.stack([(np.asarray(x1) - g.origin[0]) / g.h1, (np.asarray(x2) - g.origin[1]) / g.h2])
        return ndimage.map_coordinates(self.coeffs, coords, order=3, mode="grid-wrap", prefilter=False)


def spectral_eval(grid: Grid, samples: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant evaluated at scattered points, O(n1 n2) per point."""
    F = np.fft.fft2(samples) / (grid.n1 * grid.n2)
    return spectral_eval_coeffs(grid, F, x1, x2)


def spectral_eval_coeffs(grid: Grid, F: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    xi1, xi2 = (2 * np.pi / grid.box_length) * grid.k1, (2 * np.pi / grid.box_length) * grid.k2
    E1 = np.exp(1j * np.outer(x1 - grid.origin[0], xi1))
    E2 = np.exp(1j * np.outer(x2 - grid.origin[1], xi2))
    return np.einsum("pk,pk->p", E1 @ F, E2).real


@dataclass(frozen=True)
class FlowMap:
    """phi(x) = x + g(x), g stored on the grid."""

    displacement: VectorField

    @property
    def grid(self) -> Grid:
        return self.displacement.grid

    @classmethod
    def identity(cls, grid: Grid) -> "FlowMap":
        return cls(VectorField.zeros(grid))

    @classmethod
    def translation(cls, grid: Grid, a: tuple[float, float]) -> "FlowMap":
        return cls(VectorField.from_arrays(grid, np.full(grid.shape, float(a[0])), np.full(grid.shape, float(a[1]))))

    @classmethod
    def from_arrays(cls, grid: Grid, g1: np.ndarray, g2: np.ndarray) -> "FlowMap":
        return cls(VectorField.from_arrays(grid, g1, g2))

    def is_identity(self) -> bool:
        g1, g2 = self.displacement.arrays
        return not (np.any(g1) or np.any(g2))

    def jacobian(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Entries (a11, a12, a21, a22) of d phi = I + dg at the nodes."""
        grid = self.grid
        g1, g2 = self.displacement.arrays
        G1, G2 = np.fft.fft2(g1), np.fft.fft2(g2)
        d = [deriv_symbol(grid, 0), deriv_symbol(grid, 1)]
        a11 = 1.0 + np.fft.ifft2(d[0] * G1).real
        a12 = np.fft.ifft2(d[1] * G1).real
        a21 = np.fft.ifft2(d[0] * G2).real
        a22 = 1.0 + np.fft.ifft2(d[1] * G2).real
        return a11, a12, a21, a22

    def det(self) -> np.ndarray:
        a11, a12, a21, a22 = self.jacobian()
        return a11 * a22 - a12 * a21

    def lipschitz(self) -> float:
        """max over nodes of the operator 2-norm of d phi."""
        a11, a12, a21, a22 = self.jacobian()
        return float(_opnorm(a11, a12, a21, a22).max())

    def displacement_gradient_norm(self) -> float:
        """max over nodes of the operator 2-norm of dg."""
        a11, a12, a21, a22 = self.jacobian()
        return float(_opnorm(a11 - 1.0, a12, a21, a22 - 1.0).max())

    def __call__(self, x1, x2, method: str = "spline") -> tuple[np.ndarray, np.ndarray]:
        """Evaluate phi at scattered points."""
        g1, g2 = self.displacement.arrays
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if method == "spectral":
            return x1 + spectral_eval(self.grid, g1, x1, x2), x2 + spectral_eval(self.grid, g2, x1, x2)
        return x1 + SplineInterpolator(self.grid, g1)(x1, x2), x2 + SplineInterpolator(self.grid, g2)(x1, x2)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Images phi(x_i) of the grid nodes."""
        X1, X2 = self.grid.mesh
        g1, g2 = self.displacement.arrays
        return X1 + g1, X2 + g2


def _opnorm(a, b, c, d):
    # largest singular value of [[a, b], [c, d]]
    s = a * a + b * b + c * c + d * d
    det = a * d - b * c
    return np.sqrt(0.5 * (s + np.sqrt(np.maximum(s * s - 4 * det * det, 0.0))))


def compose(f: RealField, phi: FlowMap) -> RealField:
    """Samples of f o phi by periodic cubic-spline interpolation."""
    check_same_grid(f.grid, phi.grid)
    if phi.is_identity():
        return f
    x1, x2 = phi.nodes()
    return RealField(f.grid, SplineInterpolator(f.grid, f.samples)(x1, x2))


def compose_vector(v: VectorField, phi: FlowMap) -> VectorField:
    return VectorField(compose(v.c1, phi), compose(v.c2, phi))


def inversion_residual(phi: FlowMap, psi: FlowMap) -> float:
    """sup |phi(psi(x)) - x| over the nodes."""
    k1, k2 = psi.displacement.arrays
    X1, X2 = phi.grid.mesh
    y1, y2 = phi(X1 + k1, X2 + k2)
    return float(np.hypot(y1 - X1, y2 - X2).max())


def invert_flow_map(
    phi: FlowMap, tol: float = INVERSION_TOL, max_iter: int = INVERSION_MAX_ITER
) -> FlowMap:
    """psi = phi^-1 via the fixed point k <- -g(x + k) on the inverse displacement."""
    grid = phi.grid
    if phi.is_identity():
        return phi
    if phi.det().min() <= 0:
        raise InversionError(float("inf"), 0)
    g1, g2 = phi.displacement.arrays
    G1, G2 = SplineInterpolator(grid, g1), SplineInterpolator(grid, g2)
    X1, X2 = grid.mesh
    k1, k2 = -g1, -g2
    best = np.inf
    stalled = 0
    for it in range(1, max_iter + 1):
        n1 = -G1(X1 + k1, X2 + k2)
        n2 = -G2(X1 + k1, X2 + k2)
        # residual of the previous iterate: phi(x + k) - x = k + g(x + k)
        res = float(np.hypot(k1 - n1, k2 - n2).max())
        k1, k2 = n1, n2
        if res <= tol:
            return FlowMap.from_arrays(grid, k1, k2)
        if res < 0.99 * best:
            best, stalled = res, 0
        else:
            stalled += 1
            if stalled >= 5:
                raise InversionError(res, it)
    raise InversionError(res, max_iter)


def reconstruct_density(rho0: RealField, phi: FlowMap) -> RealField:
    """rho0 o phi^-1."""
    return compose(rho0, invert_flow_map(phi))


# ---------------------------------------------------------------------------
# flow integration


def _flow_rhs(grid: Grid):
    X1, X2 = grid.mesh

    def rhs(X: np.ndarray, u: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        p1, p2 = X1 + X[0], X2 + X[1]
        return np.stack([SplineInterpolator(grid, u[0])(p1, p2), SplineInterpolator(grid, u[1])(p1, p2)])

    return rhs


@dataclass(frozen=True)
class FlowSnapshot:
    t: float
    phi: FlowMap
    rho: RealField

    def velocity(self) -> VectorField:
        """v = u o phi, the Lagrangian velocity."""
        return compose_vector(darcy_velocity(self.rho), self.phi)


@dataclass(frozen=True)
class FlowSolution:
    phi: FlowMap
    v: VectorField
    record: SolutionRecord
    snapshots: list[FlowSnapshot] = field(default_factory=list, repr=False)

    def __iter__(self):
        # unpacks as (phi, v, record)
        return iter((self.phi, self.v, self.record))


def solve_flow(
    rho0: RealField,
    cfg: SolverConfig | None = None,
    snapshot_every: int | None = None,
    snapshot_steps: Iterable[int] | None = None,
) -> FlowSolution:
    """Co-evolve rho and the displacement g with g_t = u o (id + g), g(0) = 0.

    Snapshots are kept every ``snapshot_every`` steps and at the listed
    ``snapshot_steps``.
    """
    cfg = cfg or SolverConfig()
    grid = rho0.grid
    snaps: list[FlowSnapshot] = []
    wanted = set(snapshot_steps or ())

    def on_step(step, t, rho, X):
        if step > 0:
            det = FlowMap.from_arrays(grid, X[0], X[1]).det()
            if det.min() <= 0:
                raise SolverAbort("flow map lost orientation (det d phi <= 0)", step)
        if (snapshot_every and step % snapshot_every == 0) or step in wanted:
            snaps.append(FlowSnapshot(t, FlowMap.from_arrays(grid, X[0], X[1]), RealField(grid, rho)))

    X0 = np.zeros((2,) + grid.shape)
    rho, X, diag, steps = integrate(rho0, cfg, X0, _flow_rhs(grid), on_step)
    phi = FlowMap.from_arrays(grid, X[0], X[1])
    rho_T = RealField(grid, rho)
    v = compose_vector(darcy_velocity(rho_T), phi)
    return FlowSolution(phi, v, SolutionRecord(rho_T, diag, steps), snaps)


def psi_map(rho0: RealField, cfg: SolverConfig | None = None) -> FlowMap:
    """Psi(rho0) = phi(1; rho0)."""
    cfg = (cfg or SolverConfig()).replace(T=1.0)
    return solve_flow(rho0, cfg).phi


# ---------------------------------------------------------------------------
# particle trajectories


@dataclass(frozen=True)
class Trajectory:
    x0: tuple[float, float]
    times: np.ndarray
    positions: np.ndarray  # shape (len(times), 2)

    def __post_init__(self) -> None:
        if len(self.times) != len(self.positions):
            raise ValueError("times and positions differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be increasing")


def trace_trajectories(
    points: np.ndarray,
    rho0: RealField,
    cfg: SolverConfig | None = None,
    sample_stride: int = 1,
    method: str = "spectral",
) -> list[Trajectory]:
    """Advance particles x' = u(x) with the Eulerian solver's RK4 clock.

    ``method="spectral"`` evaluates the trigonometric interpolant of u at the
    particles (exact for the discrete field); ``"spline"`` uses the cubic
    spline used for compositions.
    """
    cfg = cfg or SolverConfig()
    grid = rho0.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if method not in ("spectral", "spline"):
        raise ValueError(f"unknown interpolation method {method!r}")

    def rhs(X: np.ndarray, u: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        if method == "spectral":
            return np.stack([spectral_eval(grid, u[0], X[:, 0], X[:, 1]), spectral_eval(grid, u[1], X[:, 0], X[:, 1])], axis=1)
        return np.stack([SplineInterpolator(grid, u[0])(X[:, 0], X[:, 1]), SplineInterpolator(grid, u[1])(X[:, 0], X[:, 1])], axis=1)

    times: list[float] = []
    positions: list[np.ndarray] = []

    def on_step(step, t, rho, X):
        if step % sample_stride == 0:
            times.append(t)
            positions.append(X.copy())

    integrate(rho0, cfg, pts, rhs, on_step)
    P = np.array(positions)
    T = np.array(times)
    return [Trajectory((float(p[0]), float(p[1])), T, P[:, i, :]) for i, p in enumerate(pts)]


def trace_trajectory(x0, rho0: RealField, cfg: SolverConfig | None = None, sample_stride: int = 1, method: str = "spectral") -> Trajectory:
    return trace_trajectories(np.asarray([x0], dtype=float), rho0, cfg, sample_stride, method)[0]
