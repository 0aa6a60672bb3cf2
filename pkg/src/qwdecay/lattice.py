"""Truncated lattice geometry and diagonal position weights.

The infinite lattice Z^d is replaced by a centered periodic box with an odd
number of sites per axis. Coordinates run over ``-(L-1)/2 .. (L-1)/2`` so a
wraparound step flips the sign of one coordinate and leaves ``|x|`` unchanged.

Every Hilbert-space vector is laid out site-major: the amplitude of internal
component ``(j, s)`` (leg ``j = 0..d-1``, spin ``s = 0, 1``) at site ``i`` lives
at ``i * 2d + 2j + s``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "EXP_CAP",
    "WeightOverflowError",
    "LatticeBox",
    "WaveFunction",
    "DiagonalWeight",
    "build_box",
    "shell_projector",
    "ceil_b",
    "shell_index",
    "lambda_weight",
    "lambda_weight_truncated",
    "exp_weight",
    "translation",
]

# Largest exponent passed to exp(); exp(709.8) is the float64 ceiling.
EXP_CAP = 700.0


class WeightOverflowError(OverflowError):
    """Raised when an exponential weight would exceed the configured cap."""


@dataclass(frozen=True)
class LatticeBox:
    """Centered periodic box of ``L**d`` sites with ``2d`` internal states each."""

    d: int
    L: int

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ValueError(f"dimension d must be a positive integer, got {self.d!r}")
        if not isinstance(self.L, (int, np.integer)) or self.L < 3 or self.L % 2 == 0:
            raise ValueError(
                f"L must be an odd integer >= 3 (got {self.L!r}); even or tiny boxes "
                "break |x|-preserving wraparound"
            )

    @property
    def half(self) -> int:
        return (self.L - 1) // 2

    @property
    def internal_dim(self) -> int:
        return 2 * self.d

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    @property
    def dim(self) -> int:
        return self.internal_dim * self.n_sites

    @cached_property
    def coords(self) -> NDArray[np.int64]:
        """Site coordinates, shape ``(n_sites, d)``, last axis varying fastest."""
        h = self.half
        axis = range(-h, h + 1)
        return np.array(list(itertools.product(axis, repeat=self.d)), dtype=np.int64)

    @cached_property
    def radii(self) -> NDArray[np.float64]:
        """Euclidean norm ``|x|`` of every site."""
        return np.sqrt((self.coords.astype(np.float64) ** 2).sum(axis=1))

    @property
    def max_radius(self) -> float:
        return float(self.radii.max())

    @cached_property
    def _strides(self) -> NDArray[np.int64]:
        return self.L ** np.arange(self.d - 1, -1, -1, dtype=np.int64)

    def site_index(self, x) -> int | NDArray[np.int64]:
        """Index of site(s) ``x``; coordinates are wrapped into the box first."""
        x = np.asarray(x, dtype=np.int64)
        h = self.half
        wrapped = (x + h) % self.L
        return (wrapped * self._strides).sum(axis=-1)

    @property
    def origin(self) -> int:
        return int(self.site_index(np.zeros(self.d, dtype=np.int64)))

    def neighbor_index(self, axis: int, steps: int = 1) -> NDArray[np.int64]:
        """``idx[i]`` is the site index of ``x_i + steps * e_axis`` (periodic)."""
        shifted = self.coords.copy()
        shifted[:, axis] += steps
        return self.site_index(shifted)

    def component_sites(self) -> NDArray[np.int64]:
        """Site index of each Hilbert-space component."""
        return np.repeat(np.arange(self.n_sites), self.internal_dim)


def build_box(d: int, L: int) -> LatticeBox:
    return LatticeBox(d, L)


@dataclass(frozen=True)
class WaveFunction:
    """A state on the box, blocked per site as ``(f_11, f_12, ..., f_d1, f_d2)``."""

    box: LatticeBox
    amplitudes: NDArray[np.complex128]

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128)
        if amp.shape != (self.box.dim,):
            raise ValueError(f"expected {self.box.dim} amplitudes, got shape {amp.shape}")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def per_site(self) -> NDArray[np.complex128]:
        return self.amplitudes.reshape(self.box.n_sites, self.box.internal_dim)

    def site_norms(self) -> NDArray[np.float64]:
        """``||psi(x)||`` in C^{2d} for every site."""
        return np.linalg.norm(self.per_site, axis=1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class DiagonalWeight:
    """Site-diagonal real operator, acting trivially on the internal space."""

    box: LatticeBox
    values: NDArray[np.float64]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.box.n_sites,):
            raise ValueError(f"expected {self.box.n_sites} site values, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    def full(self) -> NDArray[np.float64]:
        """Diagonal of the operator on the full ``2d * L**d`` space."""
        return np.repeat(self.values, self.box.internal_dim)

    def as_matrix(self) -> NDArray[np.float64]:
        return np.diag(self.full())

    def apply(self, vec):
        """Multiply a vector (or the rows of a matrix) by the weight."""
        vec = np.asarray(vec)
        w = self.full()
        return w * vec if vec.ndim == 1 else w[:, None] * vec

    def is_projection(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    def __mul__(self, other: DiagonalWeight) -> DiagonalWeight:
        if not isinstance(other, DiagonalWeight):
            return NotImplemented
        return DiagonalWeight(self.box, self.values * other.values)

    def __add__(self, other: DiagonalWeight) -> DiagonalWeight:
        if not isinstance(other, DiagonalWeight):
            return NotImplemented
        return DiagonalWeight(self.box, self.values + other.values)


def shell_projector(box: LatticeBox, R1: float, R2: float = math.inf) -> DiagonalWeight:
    """Spectral projection of ``|Q|`` onto the half-open interval ``[R1, R2)``."""
    if R1 < 0 or not R2 > R1:
        raise ValueError(f"need 0 <= R1 < R2, got R1={R1}, R2={R2}")
    r = box.radii
    return DiagonalWeight(box, ((r >= R1) & (r < R2)).astype(np.float64))


def ceil_b(x: float, b: float) -> float:
    """Smallest positive multiple of ``b`` that is ``>= x``."""
    if x <= 0 or b <= 0:
        raise ValueError(f"ceil_b needs x > 0 and b > 0, got x={x}, b={b}")
    n = max(1, math.ceil(x / b))
    # x / b may round either way across an exact multiple
    while n > 1 and x <= (n - 1) * b:
        n -= 1
    while x > n * b:
        n += 1
    return n * b


def shell_index(r, b: float):
    """``n`` such that ``r`` lies in ``B_n = [(n-1)b, nb)``."""
    return np.floor(np.asarray(r, dtype=np.float64) / b).astype(np.int64) + 1


def _check_step_args(delta, b):
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if b <= 0:
        raise ValueError(f"b must be positive, got {b}")


def lambda_weight(box: LatticeBox, delta: float, b: float) -> DiagonalWeight:
    """Step weight equal to ``delta * n * b`` on the shell ``B_n``."""
    _check_step_args(delta, b)
    n = shell_index(box.radii, b)
    return DiagonalWeight(box, delta * b * n)


def lambda_weight_truncated(box: LatticeBox, delta: float, b: float, N: int) -> DiagonalWeight:
    """Step weight cut off at the plateau ``delta * N * b`` for ``|x| >= N b``."""
    _check_step_args(delta, b)
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    n = np.minimum(shell_index(box.radii, b), N)
    return DiagonalWeight(box, delta * b * n)


def exp_weight(w: DiagonalWeight, sign: int = 1, cap: float = EXP_CAP) -> DiagonalWeight:
    """Pointwise ``exp(sign * w)``.

    Raises
    ------
    WeightOverflowError
        If ``max |w|`` exceeds ``cap``; reduce delta or the box size.
    """
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    peak = float(np.max(np.abs(w.values))) if w.values.size else 0.0
    if peak > cap:
        raise WeightOverflowError(
            f"exponent {peak:.1f} exceeds cap {cap:.1f}; reduce delta or L"
        )
    return DiagonalWeight(w.box, np.exp(sign * w.values))


def translation(box: LatticeBox, axis: int, steps: int = 1) -> NDArray[np.complex128]:
    """Matrix of ``(T f)(x) = f(x + steps * e_axis)`` on every internal component."""
    m = box.internal_dim
    nb = box.neighbor_index(axis, steps)
    T = np.zeros((box.dim, box.dim), dtype=np.complex128)
    rows = np.arange(box.dim)
    cols = nb[rows // m] * m + rows % m
    T[rows, cols] = 1.0
    return T
