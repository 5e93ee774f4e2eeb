"""Divergence-free spectral fields on the 2-torus and the Stokes calculus.

A mean-zero, divergence-free, real velocity field on the torus (R/2pi)^2 is
stored as one complex "stream amplitude" a_k per half-lattice Fourier mode.
With the orthonormal basis e_k = exp(i k.x)/(2pi), the velocity coefficient
of mode k is

    u_k = a_k * perp(k)/|k|,      perp(k) = (-k2, k1),

so k . u_k = 0 holds by construction (divergence-free), and the conjugate
mode carries u_{-k} = conj(u_k) (real field).  Only one representative per
conjugate pair {k, -k} is stored; the companion amplitude is -conj(a_k).

Because the basis is orthonormal, coefficient-space sums are the L^2
quantities directly: no 2pi factors appear anywhere downstream.

Equivalence with the real-coefficient convention (x_k in R^2 with
k.x_k = 0): writing a_k = (alpha + i beta)/sqrt(2) gives the isometric map
onto the two real degrees of freedom of the pair {k, -k}; all norms and
inner products agree.

The Stokes operator acts diagonally with eigenvalue |k|^2, so fractional
powers, Sobolev-type norms and low/high frequency splits reduce to exact
per-mode arithmetic with integer |k|^2.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class GridMismatchError(ValueError):
    """Raised when two fields on different truncations are combined."""


@dataclass(frozen=True)
class SpectralGrid:
    """Galerkin truncation: modes k in Z^2 with 0 < |k| <= n_max.

    half_k holds one representative per conjugate pair (the one with
    k1 > 0, or k1 == 0 and k2 > 0), sorted by (|k|^2, k1, k2).  That order
    is the canonical serialization order; low-|k| modes form a prefix, so
    the band |k| <= m is always a contiguous slice.
    """

    n_max: int
    half_k: np.ndarray = field(repr=False)     # (M, 2) int64
    ksq: np.ndarray = field(repr=False)        # (M,) int64, |k|^2 per mode
    kabs: np.ndarray = field(repr=False)       # (M,) float64, |k|

    @property
    def n_modes(self) -> int:
        return self.half_k.shape[0]

    def band_size(self, m: int) -> int:
        """Number of half-lattice modes with |k| <= m."""
        return int(np.searchsorted(self.ksq, m * m, side="right"))

    def mode_index(self, k1: int, k2: int) -> int:
        """Index of the representative of the pair {k, -k}; -1 if absent."""
        if (k1, k2) not in self._lookup and (-k1, -k2) not in self._lookup:
            return -1
        return self._lookup.get((k1, k2), self._lookup.get((-k1, -k2), -1))

    @property
    def _lookup(self) -> dict:
        cache = getattr(self, "_lookup_cache", None)
        if cache is None:
            cache = {(int(k1), int(k2)): i for i, (k1, k2) in enumerate(self.half_k)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache


@lru_cache(maxsize=None)
def make_grid(n_max: int) -> SpectralGrid:
    """Build (and cache) the half-lattice grid for truncation radius n_max."""
    if n_max < 1:
        raise ValueError(f"truncation radius must be >= 1, got {n_max}")
    ks = []
    for k1 in range(0, n_max + 1):
        for k2 in range(-n_max, n_max + 1):
            if k1 == 0 and k2 <= 0:
                continue
            if 0 < k1 * k1 + k2 * k2 <= n_max * n_max:
                ks.append((k1, k2))
    ks.sort(key=lambda k: (k[0] * k[0] + k[1] * k[1], k[0], k[1]))
    half = np.array(ks, dtype=np.int64)
    ksq = half[:, 0] ** 2 + half[:, 1] ** 2
    return SpectralGrid(n_max=n_max, half_k=half, ksq=ksq, kabs=np.sqrt(ksq.astype(np.float64)))


@dataclass(frozen=True)
class PhysicsParams:
    """Viscosity and degeneracy radius of the forcing."""

    nu: float
    n_forced: int   # modes |k| <= n_forced receive noise

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if self.n_forced < 1:
            raise ValueError(f"degeneracy radius must be >= 1, got {self.n_forced}")

    def validate_against(self, grid: SpectralGrid) -> None:
        if self.n_forced > grid.n_max:
            raise ValueError(
                f"degeneracy radius {self.n_forced} exceeds truncation {grid.n_max}"
            )


@dataclass(frozen=True)
class FourierField:
    """A divergence-free mean-zero real field: one amplitude per half mode."""

    grid: SpectralGrid
    amps: np.ndarray = field(repr=False)   # (M,) complex128, read-only

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=np.complex128)
        if a.shape != (self.grid.n_modes,):
            raise ValueError(f"expected {self.grid.n_modes} amplitudes, got {a.shape}")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    def __add__(self, other: "FourierField") -> "FourierField":
        _check_same_grid(self, other)
        return FourierField(self.grid, self.amps + other.amps)

    def __sub__(self, other: "FourierField") -> "FourierField":
        _check_same_grid(self, other)
        return FourierField(self.grid, self.amps - other.amps)

    def __mul__(self, c: float) -> "FourierField":
        return FourierField(self.grid, self.amps * c)

    __rmul__ = __mul__

    def __neg__(self) -> "FourierField":
        return FourierField(self.grid, -self.amps)

    def norm(self) -> float:
        return float(np.sqrt(2.0 * np.sum(np.abs(self.amps) ** 2)))


def zero_field(grid: SpectralGrid) -> FourierField:
    return FourierField(grid, np.zeros(grid.n_modes, dtype=np.complex128))


def _check_same_grid(u: FourierField, v: FourierField) -> None:
    if u.grid.n_max != v.grid.n_max:
        raise GridMismatchError(
            f"fields live on different truncations ({u.grid.n_max} vs {v.grid.n_max})"
        )


def inner(u: FourierField, v: FourierField) -> float:
    """L^2 inner product; the full-lattice sum folded onto the half lattice."""
    _check_same_grid(u, v)
    return float(2.0 * np.sum(u.amps.real * v.amps.real + u.amps.imag * v.amps.imag))


def stokes_apply(alpha: float, u: FourierField) -> FourierField:
    """Fractional Stokes power: amplitude a_k -> |k|^(2 alpha) a_k.

    On divergence-free fields the projection is the identity, so the
    operator is diagonal.  Every retained mode has |k| >= 1, so any real
    alpha (including negative) is well defined.
    """
    if alpha == 0.0:
        return u
    return FourierField(u.grid, u.amps * u.grid.ksq.astype(np.float64) ** alpha)


def sobolev_norm(alpha: float, u: FourierField) -> float:
    """|A^alpha u| = sqrt(sum over full lattice of |k|^(4 alpha) |u_k|^2)."""
    w = u.grid.ksq.astype(np.float64) ** (2.0 * alpha)
    return float(np.sqrt(2.0 * np.sum(w * np.abs(u.amps) ** 2)))


def split_low_high(n0: int, u: FourierField) -> tuple[FourierField, FourierField]:
    """Split into the parts supported on |k| <= n0 and |k| > n0."""
    if n0 < 1 or n0 > u.grid.n_max:
        raise ValueError(f"split radius {n0} outside [1, {u.grid.n_max}]")
    cut = u.grid.band_size(n0)
    low = np.zeros_like(u.amps)
    high = np.zeros_like(u.amps)
    low[:cut] = u.amps[:cut]
    high[cut:] = u.amps[cut:]
    return FourierField(u.grid, low), FourierField(u.grid, high)


def project_low(n0: int, u: FourierField) -> FourierField:
    """The part of u supported on |k| <= n0 (band projection)."""
    return split_low_high(n0, u)[0]


def leray_project(grid: SpectralGrid, coeffs: np.ndarray) -> FourierField:
    """Project raw C^2 coefficients onto the divergence-free subspace.

    coeffs has shape (M, 2): one complex velocity coefficient w_k per half
    mode.  Each w_k is replaced by w_k - (k.w_k) k / |k|^2; the remainder
    is parallel to perp(k) and is stored as the stream amplitude
    a_k = w_k . perp(k)/|k|.  Idempotent, and self-adjoint for `inner`.
    """
    w = np.asarray(coeffs, dtype=np.complex128)
    if w.shape != (grid.n_modes, 2):
        raise ValueError(f"expected coefficient array of shape ({grid.n_modes}, 2)")
    k = grid.half_k.astype(np.float64)
    amps = (-k[:, 1] * w[:, 0] + k[:, 0] * w[:, 1]) / grid.kabs
    return FourierField(grid, amps)


def velocity_coeffs(u: FourierField) -> np.ndarray:
    """Raw C^2 velocity coefficients u_k = a_k perp(k)/|k| on the half lattice."""
    k = u.grid.half_k.astype(np.float64)
    out = np.empty((u.grid.n_modes, 2), dtype=np.complex128)
    out[:, 0] = -k[:, 1] / u.grid.kabs * u.amps
    out[:, 1] = k[:, 0] / u.grid.kabs * u.amps
    return out


def field_to_csv(u: FourierField) -> str:
    """Serialize as (k1, k2, Re a_k, Im a_k) rows in canonical mode order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k1", "k2", "re", "im"])
    for (k1, k2), a in zip(u.grid.half_k, u.amps):
        writer.writerow([int(k1), int(k2), repr(float(a.real)), repr(float(a.imag))])
    return buf.getvalue()


def field_from_csv(text: str, grid: SpectralGrid) -> FourierField:
    """Inverse of field_to_csv; rows must match the grid's mode order."""
    rows = list(csv.reader(io.StringIO(text)))
    if rows and rows[0][:2] == ["k1", "k2"]:
        rows = rows[1:]
    if len(rows) != grid.n_modes:
        raise ValueError(f"expected {grid.n_modes} rows, got {len(rows)}")
    amps = np.empty(grid.n_modes, dtype=np.complex128)
    for i, row in enumerate(rows):
        k1, k2 = int(row[0]), int(row[1])
        if (k1, k2) != (int(grid.half_k[i, 0]), int(grid.half_k[i, 1])):
            raise ValueError(f"row {i} has mode ({k1},{k2}), expected canonical order")
        amps[i] = float(row[2]) + 1j * float(row[3])
    return FourierField(grid, amps)


def random_field(grid: SpectralGrid, rng: np.random.Generator, scale: float = 1.0) -> FourierField:
    """Gaussian random field: iid complex normal amplitudes, per-mode std `scale`."""
    g = rng.standard_normal((grid.n_modes, 2))
    return FourierField(grid, scale * (g[:, 0] + 1j * g[:, 1]) / np.sqrt(2.0))
