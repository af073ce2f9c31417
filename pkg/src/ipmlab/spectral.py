"""Periodic grids, discrete Fourier transforms and Fourier multipliers.

Conventions used everywhere in the package:

* samples are stored as arrays of shape ``(n1, n2)`` indexed ``[i1, i2]`` with
  ``x1 = origin1 + i1 * h1`` and ``x2 = origin2 + i2 * h2``;
* the forward transform is unscaled, the inverse carries ``1 / (n1 * n2)``;
* frequencies are ``xi = (2 pi / box_length) * k`` with integer
  ``k in [-n/2, n/2)``;
* homogeneous symbols (Riesz, inverse Laplacian) vanish at ``xi = 0``;
* odd symbols (first derivatives, single Riesz transforms) are set to zero on
  the Nyquist line so that real fields stay real.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

HERMITIAN_TOL = 1e-10


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n1: int = 256
    n2: int = 256
    box_length: float = 32.0
    s: float = 2.5
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        for name in ("n1", "n2"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {n}")
        if not self.box_length > 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")
        if not self.s > 2:
            raise ValueError(f"Sobolev exponent s must exceed 2, got {self.s}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def h1(self) -> float:
        return self.box_length / self.n1

    @property
    def h2(self) -> float:
        return self.box_length / self.n2

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    def compatible(self, other: "Grid") -> bool:
        return (
            self.n1 == other.n1
            and self.n2 == other.n2
            and self.box_length == other.box_length
            and self.origin == other.origin
        )

    def with_resolution(self, n1: int, n2: int | None = None) -> "Grid":
        return Grid(n1, n1 if n2 is None else n2, self.box_length, self.s, self.origin)

    @cached_property
    def x1(self) -> np.ndarray:
        return self.origin[0] + self.h1 * np.arange(self.n1)

    @cached_property
    def x2(self) -> np.ndarray:
        return self.origin[1] + self.h2 * np.arange(self.n2)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    @cached_property
    def k1(self) -> np.ndarray:
        return np.fft.fftfreq(self.n1, d=1.0 / self.n1)

    @cached_property
    def k2(self) -> np.ndarray:
        return np.fft.fftfreq(self.n2, d=1.0 / self.n2)

    @cached_property
    def xi(self) -> tuple[np.ndarray, np.ndarray]:
        """Dual frequencies on the full lattice, shape (n1, n2) each."""
        scale = 2.0 * np.pi / self.box_length
        return np.meshgrid(scale * self.k1, scale * self.k2, indexing="ij")

    @cached_property
    def xi_odd(self) -> tuple[np.ndarray, np.ndarray]:
        """Frequencies with the Nyquist line zeroed, for odd symbols."""
        x1, x2 = (a.copy() for a in self.xi)
        x1[self.n1 // 2, :] = 0.0
        x2[:, self.n2 // 2] = 0.0
        return x1, x2

    @cached_property
    def xi_abs2(self) -> np.ndarray:
        x1, x2 = self.xi
        return x1**2 + x2**2

    @cached_property
    def inv_abs2(self) -> np.ndarray:
        """1/|xi|^2 with the zero mode set to 0."""
        out = np.zeros(self.shape)
        nz = self.xi_abs2 > 0
        out[nz] = 1.0 / self.xi_abs2[nz]
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        k1, k2 = np.meshgrid(np.abs(self.k1), np.abs(self.k2), indexing="ij")
        return (k1 <= self.n1 / 3) & (k2 <= self.n2 / 3)

    @cached_property
    def sobolev_weight(self) -> np.ndarray:
        # quadrature weight so that s = 0 reproduces the physical L2 norm
        return self.cell_area / (self.n1 * self.n2)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RealField:
    grid: Grid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        a = np.array(self.samples, dtype=float)
        if a.size != self.grid.n1 * self.grid.n2:
            raise ValueError(f"expected {self.grid.n1 * self.grid.n2} samples, got {a.size}")
        a = a.reshape(self.grid.shape)
        if not np.all(np.isfinite(a)):
            raise ValueError("field samples must be finite")
        object.__setattr__(self, "samples", _freeze(a))

    @classmethod
    def zeros(cls, grid: Grid) -> "RealField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "RealField":
        X1, X2 = grid.mesh
        return cls(grid, np.broadcast_to(fn(X1, X2), grid.shape))

    def mean(self) -> float:
        return float(self.samples.mean())

    def l2(self) -> float:
        return float(np.sqrt(self.grid.cell_area * np.sum(self.samples**2)))

    def __add__(self, other: "RealField") -> "RealField":
        check_same_grid(self.grid, other.grid)
        return RealField(self.grid, self.samples + other.samples)

    def __sub__(self, other: "RealField") -> "RealField":
        check_same_grid(self.grid, other.grid)
        return RealField(self.grid, self.samples - other.samples)

    def __mul__(self, c: float) -> "RealField":
        return RealField(self.grid, c * self.samples)

    __rmul__ = __mul__

    def __neg__(self) -> "RealField":
        return RealField(self.grid, -self.samples)


@dataclass(frozen=True)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=complex).reshape(self.grid.shape)
        object.__setattr__(self, "coeffs", _freeze(c))

    def hermitian_defect(self) -> float:
        """Max |F(-k) - conj F(k)| relative to max |F|."""
        c = self.coeffs
        flipped = np.roll(c[::-1, ::-1], shift=(1, 1), axis=(0, 1))
        scale = max(float(np.abs(c).max()), np.finfo(float).tiny)
        return float(np.abs(flipped - np.conj(c)).max() / scale)


@dataclass(frozen=True)
class VectorField:
    c1: RealField
    c2: RealField

    def __post_init__(self) -> None:
        check_same_grid(self.c1.grid, self.c2.grid)

    @property
    def grid(self) -> Grid:
        return self.c1.grid

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(RealField.zeros(grid), RealField.zeros(grid))

    @classmethod
    def from_arrays(cls, grid: Grid, a1: np.ndarray, a2: np.ndarray) -> "VectorField":
        return cls(RealField(grid, a1), RealField(grid, a2))

    @property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.c1.samples, self.c2.samples

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.c1.samples, self.c2.samples)

    def l2(self) -> float:
        return float(np.hypot(self.c1.l2(), self.c2.l2()))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.c1 + other.c1, self.c2 + other.c2)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.c1 - other.c1, self.c2 - other.c2)

    def __mul__(self, c: float) -> "VectorField":
        return VectorField(c * self.c1, c * self.c2)

    __rmul__ = __mul__


def check_same_grid(*grids: Grid) -> None:
    first = grids[0]
    for g in grids[1:]:
        if not first.compatible(g):
            raise GridMismatchError(f"grid mismatch: {first} vs {g}")


# ---------------------------------------------------------------------------
# transforms


def forward_transform(f: RealField) -> SpectralField:
    if not np.all(np.isfinite(f.samples)):
        raise ValueError("cannot transform non-finite samples")
    return SpectralField(f.grid, np.fft.fft2(f.samples))


def inverse_transform(F: SpectralField, tol: float = HERMITIAN_TOL) -> RealField:
    defect = F.hermitian_defect()
    if defect > tol:
        raise ValueError(f"coefficients are not Hermitian-symmetric (defect {defect:.3e})")
    return RealField(F.grid, np.fft.ifft2(F.coeffs).real)


Symbol = Callable[[np.ndarray, np.ndarray], np.ndarray]


def apply_multiplier(F: SpectralField, symbol: Symbol | np.ndarray, zero_value: complex | None = None) -> SpectralField:
    """Multiply coefficients by ``symbol(xi1, xi2)``.

    ``symbol`` may be a callable or a precomputed array on the lattice. When
    ``zero_value`` is given it overrides the symbol at ``xi = 0``, which is
    how homogeneous symbols that are singular at the origin are supplied.
    """
    grid = F.grid
    if callable(symbol):
        xi1, xi2 = grid.xi
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.asarray(symbol(xi1, xi2), dtype=complex)
        m = np.broadcast_to(m, grid.shape).copy()
    else:
        m = np.asarray(symbol, dtype=complex).copy()
    if zero_value is not None:
        m[0, 0] = zero_value
    if not np.all(np.isfinite(m)):
        raise ValueError("multiplier symbol is not finite on the lattice")
    return SpectralField(grid, F.coeffs * m)


# symbol arrays, shared by the spectral kernels below and by operators.py


def deriv_symbol(grid: Grid, axis: int) -> np.ndarray:
    return 1j * grid.xi_odd[axis]


def riesz_symbol(grid: Grid, axis: int) -> np.ndarray:
    """i xi_j / |xi|, zero at the origin and on the Nyquist line of axis j."""
    out = np.zeros(grid.shape, dtype=complex)
    nz = grid.xi_abs2 > 0
    out[nz] = 1j * grid.xi_odd[axis][nz] / np.sqrt(grid.xi_abs2[nz])
    return out


def riesz(f: RealField, j: int) -> RealField:
    """Riesz transform ``R_j f``, axis ``j`` in {0, 1} (R_1, R_2 in one-based notation)."""
    if j not in (0, 1):
        raise ValueError(f"axis must be 0 or 1, got {j}")
    F = forward_transform(f)
    return inverse_transform(apply_multiplier(F, riesz_symbol(f.grid, j)))


def gradient(f: RealField) -> VectorField:
    grid = f.grid
    F = np.fft.fft2(f.samples)
    return VectorField.from_arrays(
        grid,
        np.fft.ifft2(F * deriv_symbol(grid, 0)).real,
        np.fft.ifft2(F * deriv_symbol(grid, 1)).real,
    )


def divergence(w: VectorField) -> RealField:
    grid = w.grid
    a1, a2 = w.arrays
    div = np.fft.fft2(a1) * deriv_symbol(grid, 0) + np.fft.fft2(a2) * deriv_symbol(grid, 1)
    return RealField(grid, np.fft.ifft2(div).real)


def sobolev_norm(f: RealField, s: float | None = None) -> float:
    """Discrete H^s norm; ``s`` defaults to the grid's exponent.

    The weight is chosen so that ``s = 0`` gives the L2 norm of the samples.
    """
    grid = f.grid
    s = grid.s if s is None else s
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    F = np.fft.fft2(f.samples)
    w = (1.0 + grid.xi_abs2) ** s
    return float(np.sqrt(grid.sobolev_weight * np.sum(w * (F.real**2 + F.imag**2))))


def sobolev_norm_vector(w: VectorField, s: float | None = None) -> float:
    return float(np.hypot(sobolev_norm(w.c1, s), sobolev_norm(w.c2, s)))


def c1_norm(f: RealField) -> float:
    """max |f| + max |grad f| over the samples, gradient computed spectrally."""
    g = gradient(f)
    return float(np.abs(f.samples).max() + g.magnitude().max())


def dealias(F: SpectralField) -> SpectralField:
    """2/3 rule: zero every mode with |k1| > n1/3 or |k2| > n2/3."""
    return SpectralField(F.grid, np.where(F.grid.dealias_mask, F.coeffs, 0.0))
