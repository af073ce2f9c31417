"""Darcy velocity law, advection, Riesz commutators and the Lagrangian
right-hand side.

The velocity is recovered from the density by

    u = (-R1 R2 rho, R1^2 rho)

which is the same field as ``-grad p - (0, rho)`` with ``-Lap p = d2 rho``.
Both routes are implemented so they can be checked against each other.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from .spectral import (
    Grid,
    RealField,
    VectorField,
    check_same_grid,
    deriv_symbol,
    riesz_symbol,
)

if TYPE_CHECKING:
    from .lagrangian import FlowMap
    from .transport import SolverConfig

MEAN_TOL = 1e-12


class NonzeroMeanError(ValueError):
    pass


def riesz_pair_symbol(grid: Grid, j: int, k: int) -> np.ndarray:
    """Symbol of R_j R_k (axes 0/1)."""
    return riesz_symbol(grid, j) * riesz_symbol(grid, k)


def darcy_symbols(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Symbols taking rho_hat to (u1_hat, u2_hat)."""
    return -riesz_pair_symbol(grid, 0, 1), riesz_pair_symbol(grid, 0, 0)


def check_mean_zero(rho: RealField) -> None:
    mean = abs(rho.mean())
    if mean > MEAN_TOL * rho.l2() and mean > 0:
        raise NonzeroMeanError(
            f"density must be mean-zero: mean {rho.mean():.3e} vs L2 norm {rho.l2():.3e}"
        )


def darcy_velocity(rho: RealField) -> VectorField:
    check_mean_zero(rho)
    grid = rho.grid
    R = np.fft.fft2(rho.samples)
    s1, s2 = darcy_symbols(grid)
    return VectorField.from_arrays(grid, np.fft.ifft2(s1 * R).real, np.fft.ifft2(s2 * R).real)


def pressure(rho: RealField) -> RealField:
    """p = (-Lap)^{-1} d2 rho, mean-zero."""
    check_mean_zero(rho)
    grid = rho.grid
    P = grid.inv_abs2 * deriv_symbol(grid, 1) * np.fft.fft2(rho.samples)
    return RealField(grid, np.fft.ifft2(P).real)


def darcy_from_pressure(rho: RealField) -> VectorField:
    """u = -grad p - (0, rho): the second, independent route to the velocity."""
    grid = rho.grid
    P = np.fft.fft2(pressure(rho).samples)
    u1 = -np.fft.ifft2(deriv_symbol(grid, 0) * P).real
    u2 = -np.fft.ifft2(deriv_symbol(grid, 1) * P).real - rho.samples
    return VectorField.from_arrays(grid, u1, u2)


def _advect_arrays(grid: Grid, w1: np.ndarray, w2: np.ndarray, f: np.ndarray, dealias: bool = True) -> np.ndarray:
    F = np.fft.fft2(f)
    d1 = np.fft.ifft2(deriv_symbol(grid, 0) * F).real
    d2 = np.fft.ifft2(deriv_symbol(grid, 1) * F).real
    prod = w1 * d1 + w2 * d2
    if not dealias:
        return prod
    P = np.fft.fft2(prod)
    P[~grid.dealias_mask] = 0.0
    return np.fft.ifft2(P).real


def advect(w: VectorField, f: RealField, dealias: bool = True) -> RealField:
    """(w . grad) f with spectral derivatives and a 2/3-rule dealiased product."""
    check_same_grid(w.grid, f.grid)
    w1, w2 = w.arrays
    return RealField(f.grid, _advect_arrays(f.grid, w1, w2, f.samples, dealias))


def _apply(grid: Grid, symbol: np.ndarray, f: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(symbol * np.fft.fft2(f)).real


def commutator(w: VectorField, j: int, k: int, f: RealField) -> RealField:
    """[w . grad, R_j R_k] f = (w.grad)(R_j R_k f) - R_j R_k ((w.grad) f)."""
    check_same_grid(w.grid, f.grid)
    grid = f.grid
    sym = riesz_pair_symbol(grid, j, k)
    w1, w2 = w.arrays
    first = _advect_arrays(grid, w1, w2, _apply(grid, sym, f.samples))
    second = _apply(grid, sym, _advect_arrays(grid, w1, w2, f.samples))
    return RealField(grid, first - second)


def commutator_pair(w: VectorField, rho: RealField) -> VectorField:
    """([w.grad, -R1 R2] rho, [w.grad, R1^2] rho): the Eulerian forcing of u."""
    return VectorField(-commutator(w, 0, 1, rho), commutator(w, 0, 0, rho))


def rhs_F(phi: "FlowMap", v: VectorField, rho0: RealField) -> VectorField:
    """Right-hand side of the second-order flow equation phi_tt = F(phi, phi_t, rho0).

    The conjugations by phi are carried out by interpolation: the Eulerian
    fields ``w = v o phi^-1`` and ``rho = rho0 o phi^-1`` are formed on the
    grid, the commutator pair is evaluated there and the result is pulled
    back with ``o phi``.
    """
    from .lagrangian import compose, compose_vector, invert_flow_map

    check_same_grid(phi.grid, v.grid, rho0.grid)
    check_mean_zero(rho0)
    if phi.is_identity():
        return commutator_pair(v, rho0)
    psi = invert_flow_map(phi)
    w = compose_vector(v, psi)
    rho = compose(rho0, psi)
    return compose_vector(commutator_pair(w, rho), phi)


def default_epsilon(rho_bar: RealField) -> float:
    """Finite-difference step with eps * ||rho_bar||_s = 1e-3."""
    from .spectral import sobolev_norm

    norm = sobolev_norm(rho_bar)
    return 1e-3 / norm if norm > 0 else 1e-3


def linearized_psi(
    rho_base: RealField,
    rho_bar: RealField,
    eps: float | None = None,
    cfg: "SolverConfig | None" = None,
    richardson: bool = False,
) -> VectorField:
    """Central-difference approximation of d Psi at ``rho_base`` in direction ``rho_bar``.

    Returns the displacement field ``(Psi(b + eps r) - Psi(b - eps r)) / (2 eps)``.
    With ``richardson=True`` the estimates at ``eps`` and ``eps/2`` are combined
    as ``(4 D(eps/2) - D(eps)) / 3``.
    """
    from .lagrangian import psi_map

    check_same_grid(rho_base.grid, rho_bar.grid)
    if eps is None:
        eps = default_epsilon(rho_bar)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not np.any(rho_bar.samples):
        return VectorField.zeros(rho_bar.grid)

    def central(e: float) -> VectorField:
        plus = psi_map(rho_base + e * rho_bar, cfg).displacement
        minus = psi_map(rho_base - e * rho_bar, cfg).displacement
        return (plus - minus) * (1.0 / (2.0 * e))

    d1 = central(eps)
    if not richardson:
        return d1
    d2 = central(eps / 2)
    return (4.0 / 3.0) * d2 - (1.0 / 3.0) * d1
