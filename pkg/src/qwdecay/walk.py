"""Shift, defect coin and walk operators, plus the Bloch symbol of the bulk walk.

The shift acts leg by leg,

    S_j = [[p_j,            q_j L_j],
           [conj(q_j) L_j*, -p_j   ]],   (L_j f)(x) = f(x + e_j),

and the coin is the reflection ``2|chi><chi| - 1`` with ``chi = Omega`` at the
origin and ``chi = Phi`` elsewhere. The walk is ``U = S C``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from qwdecay.lattice import LatticeBox

__all__ = [
    "ALGEBRA_TOL",
    "ValidationError",
    "ShiftParams",
    "CoinSpec",
    "CoinReport",
    "WalkOperator",
    "BlochSymbol",
    "validate_shift_params",
    "validate_coin_spec",
    "reflection",
    "build_shift",
    "build_coin",
    "build_walk",
    "bloch_symbol",
    "bloch_symbols",
    "unitarity_defect",
]

ALGEBRA_TOL = 1e-12
# threshold below which a scalar condition counts as "= 0"
NONZERO_TOL = 1e-12

SIGMA_1 = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_3 = np.array([[1, 0], [0, -1]], dtype=np.complex128)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)


class ValidationError(ValueError):
    """A model parameter violates one of the walk's structural assumptions."""

    def __init__(self, condition: str, message: str, report=None):
        super().__init__(f"{condition}: {message}")
        self.condition = condition
        self.report = report


@dataclass(frozen=True)
class ShiftParams:
    p: NDArray[np.float64]
    q: NDArray[np.complex128]

    @property
    def d(self) -> int:
        return len(self.p)

    def in_D_l(self, l: int) -> bool:
        """Whether ``p_l q_l != 0`` (``l`` is zero-based)."""
        return abs(self.p[l] * self.q[l]) > NONZERO_TOL

    def D_l_memberships(self) -> list[int]:
        return [l for l in range(self.d) if self.in_D_l(l)]


def validate_shift_params(p, q) -> ShiftParams:
    """Check ``p_j**2 + |q_j|**2 = 1`` for every leg and return the params."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.complex128).reshape(-1)
    if p.size == 0 or p.shape != q.shape:
        raise ValidationError("shift-dimension", f"p and q need equal nonzero length, got {p.size} and {q.size}")
    resid = p**2 + np.abs(q) ** 2 - 1.0
    bad = np.flatnonzero(np.abs(resid) > ALGEBRA_TOL)
    if bad.size:
        j = int(bad[0])
        raise ValidationError(
            "shift-constraint",
            f"p_j^2 + |q_j|^2 = {1 + resid[j]:.15g} != 1 at j={j + 1}",
        )
    return ShiftParams(p, q)


@dataclass(frozen=True)
class CoinSpec:
    """Bulk coin vector ``Phi`` and defect coin vector ``Omega``, both in C^{2d}."""

    Phi: NDArray[np.complex128]
    Omega: NDArray[np.complex128]

    def __post_init__(self):
        phi = np.asarray(self.Phi, dtype=np.complex128).reshape(-1)
        om = np.asarray(self.Omega, dtype=np.complex128).reshape(-1)
        if phi.shape != om.shape or phi.size % 2 or phi.size == 0:
            raise ValidationError("coin-dimension", f"Phi and Omega need equal even length, got {phi.size} and {om.size}")
        for name, v in (("Phi", phi), ("Omega", om)):
            n = np.linalg.norm(v)
            if abs(n - 1.0) > ALGEBRA_TOL:
                raise ValidationError("coin-normalization", f"||{name}|| = {n:.15g} != 1")
        object.__setattr__(self, "Phi", phi)
        object.__setattr__(self, "Omega", om)

    @property
    def d(self) -> int:
        return self.Phi.size // 2


@dataclass
class CoinReport:
    """Values behind the coin assumptions, and which of them hold."""

    sigma1_overlaps: NDArray[np.complex128]  # Phi_j1 Omega_j2 + Phi_j2 Omega_j1
    sigma_plus_overlaps: NDArray[np.complex128]  # <Phi_l, sigma_+ Omega_l>
    valid_l: list[int]
    a_Omega: float
    a_Phi: float
    p0: NDArray[np.int64]
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = []
        for j, v in enumerate(self.sigma1_overlaps, start=1):
            out.append(f"Phi_{j}.(sigma1 Omega_{j}) = {v.real:+.6g}{v.imag:+.6g}j")
        for j, v in enumerate(self.sigma_plus_overlaps, start=1):
            out.append(f"<Phi_{j}, sigma+ Omega_{j}> = {v.real:+.6g}{v.imag:+.6g}j")
        out.append(f"valid l: {[l + 1 for l in self.valid_l]}")
        out.append(f"a_Omega(p0) = {self.a_Omega:.6g}, a_Phi(p0) = {self.a_Phi:.6g}")
        return out


def _legs(v):
    return v.reshape(-1, 2)


def _sigma3_weight(v, p):
    legs = _legs(v)
    expect = np.einsum("ja,ab,jb->j", legs.conj(), SIGMA_3, legs).real
    return float(np.sum(p * expect))


def validate_coin_spec(spec: CoinSpec, p0) -> CoinReport:
    """Check the coin assumptions needed for a nonempty discrete spectrum.

    Raises ``ValidationError`` naming the first failing condition.
    """
    d = spec.d
    if d < 2:
        raise ValidationError("dimension", "the coin assumptions are incompatible for d = 1")
    p0 = np.asarray(p0).reshape(-1)
    if p0.size != d or not np.all(np.isin(p0, (-1, 1))):
        raise ValidationError("p0", f"p0 must be a vector in {{-1, 1}}^{d}, got {p0.tolist()}")
    p0 = p0.astype(np.int64)

    phi, om = _legs(spec.Phi), _legs(spec.Omega)
    # bilinear, no conjugation
    s1 = np.einsum("ja,ab,jb->j", phi, SIGMA_1, om)
    # <u, v> is conjugate-linear in u
    splus = np.einsum("ja,ab,jb->j", phi.conj(), SIGMA_PLUS, om)
    valid_l = [l for l in range(d) if abs(splus[l]) > NONZERO_TOL]
    report = CoinReport(
        sigma1_overlaps=s1,
        sigma_plus_overlaps=splus,
        valid_l=valid_l,
        a_Omega=_sigma3_weight(spec.Omega, p0),
        a_Phi=_sigma3_weight(spec.Phi, p0),
        p0=p0,
    )
    for j in range(d):
        if abs(s1[j]) <= NONZERO_TOL:
            report.failures.append(f"coin-overlap fails at j={j + 1}: Phi_j1 Omega_j2 + Phi_j2 Omega_j1 = 0")
    if not valid_l:
        report.failures.append("coin-raising-overlap fails: <Phi_l, sigma+ Omega_l> = 0 for every l")
    if abs(report.a_Omega - report.a_Phi) <= NONZERO_TOL:
        report.failures.append("coin-asymmetry fails: a_Omega(p0) == a_Phi(p0)")
    if report.failures:
        raise ValidationError(report.failures[0].split(" ")[0], "; ".join(report.failures), report)
    return report


@dataclass(frozen=True)
class WalkOperator:
    """Dense operator on the box with its declared propagation constant ``b``."""

    box: LatticeBox
    matrix: NDArray[np.complex128]
    b: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def unitarity_defect(M) -> float:
    """``max |M^dagger M - I|`` entrywise."""
    M = getattr(M, "matrix", M)
    return float(np.max(np.abs(M.conj().T @ M - np.eye(M.shape[0]))))


def reflection(v) -> NDArray[np.complex128]:
    """``2|v><v| - 1`` for a unit vector ``v``."""
    v = np.asarray(v, dtype=np.complex128)
    return 2.0 * np.outer(v, v.conj()) - np.eye(v.size)


def _check_d(box, d):
    if box.d != d:
        raise ValueError(f"box has d={box.d} but parameters have d={d}")


def build_shift(box: LatticeBox, params: ShiftParams) -> WalkOperator:
    _check_d(box, params.d)
    m = box.internal_dim
    S = np.zeros((box.dim, box.dim), dtype=np.complex128)
    base = np.arange(box.n_sites) * m
    for j in range(box.d):
        up = box.neighbor_index(j, +1) * m + 2 * j
        down = box.neighbor_index(j, -1) * m + 2 * j
        a = base + 2 * j
        S[a, a] = params.p[j]
        S[a, up + 1] = params.q[j]
        S[a + 1, down] = np.conj(params.q[j])
        S[a + 1, a + 1] = -params.p[j]
    return WalkOperator(box, S, 1.0)


def build_coin(box: LatticeBox, spec: CoinSpec) -> WalkOperator:
    _check_d(box, spec.d)
    m = box.internal_dim
    C1, C0 = reflection(spec.Phi), reflection(spec.Omega)
    blocks = np.broadcast_to(C1, (box.n_sites, m, m)).copy()
    blocks[box.origin] = C0
    C = np.zeros((box.dim, box.dim), dtype=np.complex128)
    for i in range(box.n_sites):
        C[i * m:(i + 1) * m, i * m:(i + 1) * m] = blocks[i]
    return WalkOperator(box, C, 0.0)


def build_walk(box: LatticeBox, params: ShiftParams, spec: CoinSpec, order: str = "SC") -> WalkOperator:
    """The walk ``U = S C`` (``order="CS"`` gives the unitarily equivalent ``C S``)."""
    S = build_shift(box, params).matrix
    C = build_coin(box, spec).matrix
    if order == "SC":
        U = S @ C
    elif order == "CS":
        U = C @ S
    else:
        raise ValueError(f"order must be 'SC' or 'CS', got {order!r}")
    return WalkOperator(box, U, 1.0)


@dataclass(frozen=True)
class BlochSymbol:
    k: NDArray[np.float64]
    matrix: NDArray[np.complex128]


def bloch_symbols(params: ShiftParams, Phi, ks) -> NDArray[np.complex128]:
    """Stack of symbols ``S(k) C_1`` for momenta ``ks`` of shape ``(n, d)``."""
    ks = np.atleast_2d(np.asarray(ks, dtype=np.float64))
    d = params.d
    if ks.shape[1] != d:
        raise ValueError(f"momenta need {d} components, got {ks.shape[1]}")
    n = ks.shape[0]
    Sk = np.zeros((n, 2 * d, 2 * d), dtype=np.complex128)
    phase = np.exp(1j * ks)
    for j in range(d):
        Sk[:, 2 * j, 2 * j] = params.p[j]
        Sk[:, 2 * j, 2 * j + 1] = params.q[j] * phase[:, j]
        Sk[:, 2 * j + 1, 2 * j] = np.conj(params.q[j]) * np.conj(phase[:, j])
        Sk[:, 2 * j + 1, 2 * j + 1] = -params.p[j]
    return Sk @ reflection(Phi)


def bloch_symbol(params: ShiftParams, Phi, k) -> BlochSymbol:
    k = np.asarray(k, dtype=np.float64).reshape(-1)
    if np.any(k < -np.pi) or np.any(k >= np.pi):
        raise ValueError(f"momentum must lie in [-pi, pi)^d, got {k.tolist()}")
    return BlochSymbol(k, bloch_symbols(params, Phi, k[None, :])[0])
