"""Divergence-free Fourier surrogate on the periodic box ``[0, 2*pi)**dim``.

Coefficients are stored in ``numpy.fft`` order with the vector component on the
leading axis and normalized so that ``u(x) = sum_k uhat(k) exp(i k.x)``.  The
coefficient 2-norm therefore equals the mean-square norm of ``u`` over the box.

A :class:`SpectralOperator` is either the Stokes operator ``nu |k|^2`` on a
:class:`SpectralGrid` or a user-supplied positive diagonal ("synthetic" mode).
In synthetic mode a field is a plain coefficient array whose last axis indexes
the eigenvalues, and there is no nonlinearity.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np
from scipy import fft as sfft


class SymmetryError(ValueError):
    """Raw coefficients do not describe a real-valued field."""


# {{{ grid, field, operator


@dataclass(frozen=True)
class SpectralGrid:
    dim: int = 2
    n_modes: int = 32
    nu: float = 1.0

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n_modes < 4 or self.n_modes % 2:
            raise ValueError(f"n_modes must be an even integer >= 4, got {self.n_modes}")
        if not (self.nu > 0.0 and math.isfinite(self.nu)):
            raise ValueError(f"viscosity must be positive, got nu={self.nu}")
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_modes,) * self.dim

    @property
    def size(self) -> int:
        return self.n_modes**self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        """Spatial axes of a ``(dim, n, ..., n)`` coefficient array."""
        return tuple(range(1, self.dim + 1))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        # per-axis integers -n/2+1 .. n/2, Nyquist carried as +n/2
        n = self.n_modes
        k1 = np.fft.fftfreq(n, 1.0 / n)
        k1[n // 2] = n // 2
        return tuple(np.meshgrid(*([k1] * self.dim), indexing="ij"))

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        out = []
        for kj in self.wavenumbers:
            kj = kj.copy()
            kj[np.abs(kj) == self.n_modes // 2] = 0.0
            out.append(kj)
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(kj * kj for kj in self.wavenumbers)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.ones(self.shape, dtype=bool)
        for kj in self.wavenumbers:
            keep &= np.abs(kj) < self.n_modes / 3.0
        return keep

    @cached_property
    def nyquist(self) -> np.ndarray:
        """Slots with some ``|k_j| = n/2``."""
        hit = np.zeros(self.shape, dtype=bool)
        for kj in self.wavenumbers:
            hit |= np.abs(kj) == self.n_modes // 2
        return hit

    def zeros(self) -> np.ndarray:
        return np.zeros((self.dim,) + self.shape, dtype=complex)


def _reflect(c: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Array of values at ``-k`` in FFT layout."""
    return np.roll(np.flip(c, axis=axes), 1, axis=axes)


def hermitian_defect(grid: SpectralGrid, coeffs: np.ndarray) -> float:
    """Largest ``|uhat(-k) - conj(uhat(k))|`` over all modes and components."""
    c = np.asarray(coeffs)
    if c.size == 0:
        return 0.0
    return float(np.max(np.abs(c - np.conj(_reflect(c, grid.axes)))))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A real, mean-free, divergence-free vector field given by its coefficients."""

    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=complex)
        expected = (self.grid.dim,) + self.grid.shape
        if c.shape != expected:
            raise ValueError(f"coefficient array has shape {c.shape}, expected {expected}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        scale = max(float(np.sqrt(np.sum(np.abs(c) ** 2))), 1e-300)
        tol = 1e-12 * scale
        if np.max(np.abs(c[(slice(None),) + (0,) * self.grid.dim])) > tol:
            raise ValueError("mean mode must vanish")
        if hermitian_defect(self.grid, c) > tol:
            raise SymmetryError("coefficients violate Hermitian symmetry")
        div = sum(kj * c[j] for j, kj in enumerate(self.grid.wavenumbers))
        if np.max(np.abs(div)) > tol:
            raise ValueError("field is not divergence-free")

    def __add__(self, other: SpectralField) -> SpectralField:
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, s: float) -> SpectralField:
        return SpectralField(self.grid, float(s) * self.coeffs)

    __rmul__ = __mul__

    @classmethod
    def zero(cls, grid: SpectralGrid) -> SpectralField:
        return cls(grid, grid.zeros())


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Positive diagonal operator: Stokes on a grid, or a synthetic eigenvalue list.

    On a grid the mean mode carries no eigenvalue; its slot in
    :attr:`eigenvalues` is zero and every power of the operator maps it to zero.
    """

    eigenvalues: np.ndarray
    grid: SpectralGrid | None = None

    def __post_init__(self) -> None:
        lam = np.array(self.eigenvalues, dtype=float)
        if self.grid is None:
            if lam.ndim != 1 or lam.size == 0:
                raise ValueError("synthetic eigenvalues must be a nonempty 1-d list")
            if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
                raise ValueError("synthetic eigenvalues must be finite and strictly positive")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @classmethod
    def stokes(cls, grid: SpectralGrid) -> SpectralOperator:
        return cls(grid.nu * grid.k2, grid)

    @classmethod
    def synthetic(cls, eigenvalues) -> SpectralOperator:
        return cls(np.atleast_1d(np.asarray(eigenvalues, dtype=float)), None)

    @property
    def is_synthetic(self) -> bool:
        return self.grid is None

    @cached_property
    def active(self) -> np.ndarray:
        """Boolean mask of slots carrying a genuine eigenvalue."""
        return self.eigenvalues > 0

    @cached_property
    def spectrum(self) -> np.ndarray:
        """Sorted distinct eigenvalues."""
        return np.unique(self.eigenvalues[self.active])

    @property
    def lambda_min(self) -> float:
        return float(self.spectrum[0])

    def symbol(self, fn) -> np.ndarray:
        """Evaluate ``fn`` on the eigenvalue table; inactive slots get zero."""
        out = np.zeros(self.eigenvalues.shape)
        out[self.active] = np.asarray(fn(self.spectrum), dtype=float)[self._inverse]
        return out

    @cached_property
    def _inverse(self) -> np.ndarray:
        _, inv = np.unique(self.eigenvalues[self.active], return_inverse=True)
        return inv.ravel()

    def power(self, beta: float) -> np.ndarray:
        if beta == 0:
            return self.active.astype(float)
        return self.symbol(lambda lam: lam**beta)


FieldLike = Union[SpectralField, np.ndarray]


def coefficients(u: FieldLike) -> np.ndarray:
    return u.coeffs if isinstance(u, SpectralField) else np.asarray(u)


def rewrap(template: FieldLike, coeffs: np.ndarray) -> FieldLike:
    """Package ``coeffs`` the same way as ``template``."""
    if isinstance(template, SpectralField):
        return SpectralField(template.grid, coeffs)
    return coeffs


# }}}

# {{{ transforms and projections


def to_physical(grid: SpectralGrid, coeffs: np.ndarray) -> np.ndarray:
    """Real grid values ``u(x_j)`` at ``x_j = 2*pi*j/n``, shape ``(dim, n, ..., n)``."""
    return sfft.ifftn(coeffs, axes=grid.axes).real * grid.size


def from_physical(grid: SpectralGrid, values: np.ndarray) -> np.ndarray:
    return sfft.fftn(np.asarray(values, dtype=float), axes=grid.axes) / grid.size


def grid_points(grid: SpectralGrid) -> tuple[np.ndarray, ...]:
    x = 2.0 * np.pi * np.arange(grid.n_modes) / grid.n_modes
    return tuple(np.meshgrid(*([x] * grid.dim), indexing="ij"))


def project_coefficients(grid: SpectralGrid, coeffs: np.ndarray) -> np.ndarray:
    """``(I - k k^T/|k|^2) c`` with the mean and Nyquist modes zeroed; no validation.

    A Nyquist slot stands for both ``+n/2`` and ``-n/2``, so projecting it along
    either sign would break Hermitian symmetry.
    """
    k = grid.wavenumbers
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    kdotc = sum(kj * coeffs[j] for j, kj in enumerate(k)) / k2
    out = np.stack([coeffs[j] - kj * kdotc for j, kj in enumerate(k)])
    out[(slice(None),) + (0,) * grid.dim] = 0.0
    out[:, grid.nyquist] = 0.0
    return out


def leray_project(grid: SpectralGrid, raw: np.ndarray, tol: float = 1e-10) -> SpectralField:
    """Divergence-free part of a real vector field given by raw coefficients.

    Raises
    ------
    SymmetryError
        If ``raw`` is not Hermitian to within ``tol`` relative to its norm.
    """
    c = np.asarray(raw, dtype=complex)
    expected = (grid.dim,) + grid.shape
    if c.shape != expected:
        raise ValueError(f"coefficient array has shape {c.shape}, expected {expected}")
    scale = float(np.sqrt(np.sum(np.abs(c) ** 2)))
    if hermitian_defect(grid, c) > tol * max(scale, 1e-300):
        raise SymmetryError("raw coefficients violate Hermitian symmetry")
    return SpectralField(grid, _flush(project_coefficients(grid, c), np.max(np.abs(c), initial=0.0)))


def _flush(c: np.ndarray, scale: float) -> np.ndarray:
    # a pure gradient projects to round-off, which cannot pass validation
    # relative to its own norm
    c[np.abs(c) <= 64 * np.finfo(float).eps * scale] = 0.0
    return c


def apply_fractional_power(op: SpectralOperator, beta: float, u: FieldLike) -> FieldLike:
    """``A**beta u`` for any real ``beta``."""
    return rewrap(u, coefficients(u) * op.power(beta))


def sobolev_norm(op: SpectralOperator, beta: float, u: FieldLike) -> float:
    c = coefficients(u) * op.power(beta)
    return float(np.sqrt(np.sum(np.abs(c) ** 2)))


def inner(u: FieldLike, v: FieldLike) -> float:
    """Real ``L^2`` inner product in the coefficient normalization."""
    return float(np.real(np.sum(np.conj(coefficients(u)) * coefficients(v))))


def advection_coefficients(grid: SpectralGrid, coeffs: np.ndarray) -> np.ndarray:
    """Dealiased ``(u.grad)u`` coefficients, not projected."""
    mask = grid.dealias_mask
    c = coeffs * mask
    vel = to_physical(grid, c)
    adv = np.zeros_like(vel)
    for j, kj in enumerate(grid.derivative_wavenumbers):
        adv += vel[j] * to_physical(grid, 1j * kj * c)
    return from_physical(grid, adv) * mask


def nonlinear_coefficients(grid: SpectralGrid, coeffs: np.ndarray) -> np.ndarray:
    return -project_coefficients(grid, advection_coefficients(grid, coeffs))


def nonlinear_term(u: SpectralField) -> SpectralField:
    """``Fu = -P (u.grad) u`` by the pseudo-spectral method with the 2/3 rule."""
    grid = u.grid
    raw = advection_coefficients(grid, u.coeffs)
    return SpectralField(grid, _flush(-project_coefficients(grid, raw), np.max(np.abs(raw), initial=0.0)))


# }}}

# {{{ sample fields


def taylor_green(grid: SpectralGrid, amplitude: float = 1.0) -> SpectralField:
    """``(sin x cos y, -cos x sin y)``; in 3-d each component also carries ``cos z``."""
    pts = grid_points(grid)
    x, y = pts[0], pts[1]
    vel = np.zeros((grid.dim,) + grid.shape)
    vel[0] = np.sin(x) * np.cos(y)
    vel[1] = -np.cos(x) * np.sin(y)
    if grid.dim == 3:
        vel[:2] *= np.cos(pts[2])
    c = from_physical(grid, amplitude * vel)
    # scrub transform round-off so the invariants hold exactly
    c[np.abs(c) < 1e-14 * abs(amplitude)] = 0.0
    return SpectralField(grid, c)


def hermitian_part(grid: SpectralGrid, coeffs: np.ndarray) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(_reflect(coeffs, grid.axes)))


def random_field(
    grid: SpectralGrid,
    decay: float,
    rng: np.random.Generator,
    dealiased: bool = True,
) -> SpectralField:
    """Random divergence-free field with coefficient magnitudes ``~ |k|**(-decay)``.

    Coefficients are i.i.d. complex Gaussians scaled by ``|k|**(-decay)``,
    symmetrized, projected, and restricted to the dealiasing band unless
    ``dealiased`` is false.
    """
    shape = (grid.dim,) + grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    c *= k2 ** (-0.5 * decay)
    c = hermitian_part(grid, c)
    if dealiased:
        c *= grid.dealias_mask
    return SpectralField(grid, project_coefficients(grid, c))


# }}}

# {{{ serialization

_HEADER = struct.Struct("<iid")


def _lexicographic_index(grid: SpectralGrid) -> np.ndarray:
    n = grid.n_modes
    return np.arange(-n // 2 + 1, n // 2 + 1) % n


def write_field(path: str | Path, u: SpectralField) -> None:
    """Binary dump: little-endian header ``int32 dim, int32 n_modes, float64 nu``,
    then float64 ``(re, im)`` pairs for every wavevector in lexicographic order
    of ``(k_1, ..., k_dim)`` with each axis running ``-n/2+1 .. n/2`` and the
    vector component varying fastest.
    """
    grid = u.grid
    idx = _lexicographic_index(grid)
    c = u.coeffs[np.ix_(range(grid.dim), *([idx] * grid.dim))]
    c = np.moveaxis(c, 0, -1)
    flat = np.empty(c.size * 2, dtype="<f8")
    flat[0::2] = c.real.ravel()
    flat[1::2] = c.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(grid.dim, grid.n_modes, grid.nu))
        fh.write(flat.tobytes())


def read_field(path: str | Path) -> SpectralField:
    data = Path(path).read_bytes()
    dim, n, nu = _HEADER.unpack_from(data)
    grid = SpectralGrid(dim, n, nu)
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    expected = 2 * dim * grid.size
    if flat.size != expected:
        raise ValueError(f"field file holds {flat.size} values, expected {expected}")
    c = (flat[0::2] + 1j * flat[1::2]).reshape(grid.shape + (dim,))
    c = np.moveaxis(c, -1, 0)
    out = grid.zeros()
    idx = _lexicographic_index(grid)
    out[np.ix_(range(dim), *([idx] * dim))] = c
    return SpectralField(grid, out)


def write_spectrum_csv(path: str | Path, u: SpectralField) -> None:
    """One row per nonzero wavevector: its integer components and ``|uhat(k)|``."""
    grid = u.grid
    mag = np.sqrt(np.sum(np.abs(u.coeffs) ** 2, axis=0))
    ks = [kj.astype(int) for kj in grid.wavenumbers]
    header = [f"k{j + 1}" for j in range(grid.dim)] + ["abs_uhat"]
    idx = _lexicographic_index(grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for pos in np.ndindex(*grid.shape):
            sel = tuple(idx[p] for p in pos)
            if all(k[sel] == 0 for k in ks):
                continue
            w.writerow([k[sel] for k in ks] + [repr(float(mag[sel]))])


# }}}
