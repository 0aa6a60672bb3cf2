"""Eigenpairs of the truncated walk, essential arcs, and discrete-eigenvalue detection."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
from numpy.typing import NDArray
from scipy.sparse.csgraph import connected_components

from qwdecay.lattice import LatticeBox
from qwdecay.walk import ShiftParams, bloch_symbols, unitarity_defect

__all__ = [
    "EigensolverError",
    "NormConvergenceError",
    "SpectrumResult",
    "EssentialArcs",
    "DetectionCriteria",
    "DiscreteEigenpair",
    "block_components",
    "eigendecompose",
    "fix_phase",
    "momentum_grid",
    "essential_arcs",
    "gap_distance",
    "gap_distances",
    "core_masses",
    "detect_discrete",
    "truncation_shift",
    "operator_norm",
]

logger = logging.getLogger(__name__)

UNIT_CIRCLE_TOL = 1e-10
# eigenvalue args closer than this are treated as ties when ordering
ARG_TIE_DECIMALS = 9


class EigensolverError(RuntimeError):
    pass


class NormConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: NDArray[np.complex128]
    eigenvectors: NDArray[np.complex128]  # columns
    residuals: NDArray[np.float64]

    def __len__(self):
        return self.eigenvalues.size


def block_components(M) -> list[NDArray[np.int64]]:
    """Index sets on which ``M`` is block diagonal (connected components of its pattern)."""
    pattern = scipy.sparse.csr_matrix(M != 0)
    n, labels = connected_components(pattern, directed=True, connection="weak")
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    return np.split(order, splits)


def fix_phase(vecs, rel_tol: float = 1e-8):
    """Rotate each column so its first significant entry is real and positive."""
    vecs = np.array(vecs, dtype=np.complex128, copy=True)
    if vecs.ndim == 1:
        return fix_phase(vecs[:, None], rel_tol)[:, 0]
    mags = np.abs(vecs)
    significant = mags > rel_tol * mags.max(axis=0, keepdims=True)
    first = np.argmax(significant, axis=0)
    lead = vecs[first, np.arange(vecs.shape[1])]
    vecs *= (np.abs(lead) / lead)[None, :]
    return vecs


def eigendecompose(U, split_blocks: bool = True) -> SpectrumResult:
    """Complete eigendecomposition of a unitary via the complex Schur form.

    For a normal matrix the Schur factor is diagonal and its unitary factor
    holds orthonormal eigenvectors, including inside degenerate eigenspaces.
    Exactly decoupled blocks are reduced independently. Eigenpairs are ordered
    by principal argument, ties broken by the position of the first significant
    eigenvector entry, and every eigenvector is phase-fixed by ``fix_phase``.
    """
    M = np.asarray(getattr(U, "matrix", U), dtype=np.complex128)
    n = M.shape[0]
    comps = block_components(M) if split_blocks else [np.arange(n)]
    vals = np.empty(n, dtype=np.complex128)
    vecs = np.zeros((n, n), dtype=np.complex128)
    res = np.empty(n)
    col = 0
    for idx in comps:
        sub = M[np.ix_(idx, idx)]
        try:
            T, Z = scipy.linalg.schur(sub, output="complex")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigensolverError(
                f"Schur reduction failed on a block of size {idx.size}: {exc}; "
                f"unitarity defect {unitarity_defect(sub):.3e}, "
                f"condition number {np.linalg.cond(sub):.3e}"
            ) from exc
        lam = np.diag(T).copy()
        k = idx.size
        vals[col:col + k] = lam
        vecs[idx, col:col + k] = Z
        res[col:col + k] = np.linalg.norm(sub @ Z - Z * lam[None, :], axis=0)
        col += k

    vecs = fix_phase(vecs)
    first = np.argmax(np.abs(vecs) > 1e-8 * np.abs(vecs).max(axis=0, keepdims=True), axis=0)
    order = np.lexsort((first, np.round(np.angle(vals), ARG_TIE_DECIMALS)))
    result = SpectrumResult(vals[order], vecs[:, order], res[order])
    off = np.max(np.abs(np.abs(result.eigenvalues) - 1.0)) if n else 0.0
    if off > UNIT_CIRCLE_TOL:
        logger.warning("eigenvalues leave the unit circle by %.2e; is U unitary?", off)
    return result


def momentum_grid(L: int, refinement: int) -> NDArray[np.float64]:
    """Sorted momenta ``2 pi m / (L r)`` folded into ``[-pi, pi)``; contains every ``2 pi m / L``."""
    n = L * refinement
    k = 2 * np.pi * np.arange(n) / n
    return np.sort((k + np.pi) % (2 * np.pi) - np.pi)


@dataclass(frozen=True)
class EssentialArcs:
    """Bloch-symbol eigenvalues sampled on a momentum grid.

    ``ks`` has shape ``(n_k, d)`` and ``branches`` shape ``(n_k, 2d)``; each
    row of ``branches`` is sorted by argument. ``resolution`` bounds how far a
    point of the continuous arcs can be from the nearest sample.
    """

    ks: NDArray[np.float64]
    branches: NDArray[np.complex128]
    L: int
    refinement: int
    resolution: float

    @property
    def samples(self) -> NDArray[np.complex128]:
        return self.branches.reshape(-1)

    def __len__(self):
        return self.samples.size

    @property
    def _sorted(self):
        cached = self.__dict__.get("_sorted_cache")
        if cached is None:
            s = self.samples
            order = np.argsort(np.angle(s), kind="stable")
            cached = (np.angle(s)[order], s[order])
            object.__setattr__(self, "_sorted_cache", cached)
        return cached


def essential_arcs(params: ShiftParams, Phi, grid_refinement: int = 8, L: int = 21) -> EssentialArcs:
    """Sample the bulk arcs over the refined momentum grid for a box of side ``L``.

    Axes with ``q_j = 0`` leave the symbol independent of ``k_j``; they are
    sampled at ``k_j = 0`` only, which leaves the sample set unchanged.
    """
    if grid_refinement < 1:
        raise ValueError(f"grid_refinement must be >= 1, got {grid_refinement}")
    axis = momentum_grid(L, grid_refinement)
    axes = [axis if params.q[j] != 0 else np.zeros(1) for j in range(params.d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    ks = np.stack([m.reshape(-1) for m in mesh], axis=1)
    ev = np.linalg.eigvals(bloch_symbols(params, Phi, ks))
    ev = np.take_along_axis(ev, np.argsort(np.angle(ev), axis=1), axis=1)
    # unitary symbols move by at most max|q_j| * |dk|_inf
    resolution = float(np.max(np.abs(params.q))) * np.pi / (L * grid_refinement)
    return EssentialArcs(ks, ev, L, grid_refinement, resolution)


def gap_distances(lams, arcs: EssentialArcs) -> NDArray[np.float64]:
    """Vectorized ``gap_distance``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=np.complex128))
    if len(arcs) == 0:
        raise ValueError("essential arcs are empty")
    off = np.abs(np.abs(lams) - 1.0)
    if np.any(off > UNIT_CIRCLE_TOL):
        raise ValueError(f"lambda must lie on the unit circle (off by {off.max():.2e})")
    angles, pts = arcs._sorted
    m = angles.size
    pos = np.searchsorted(angles, np.angle(lams))
    # nearest in angle is nearest in chord for points on the circle; check a small window
    cand = (pos[:, None] + np.arange(-2, 2)[None, :]) % m
    return np.abs(lams[:, None] - pts[cand]).min(axis=1)


def gap_distance(lam: complex, arcs: EssentialArcs) -> float:
    """Chordal distance ``min |lambda - mu|`` over the arc samples."""
    return float(gap_distances([lam], arcs)[0])


def core_masses(vecs, box: LatticeBox, radius: float) -> NDArray[np.float64]:
    """Fraction of each column's squared norm carried by sites with ``|x| <= radius``."""
    vecs = np.asarray(vecs)
    if vecs.ndim == 1:
        vecs = vecs[:, None]
    per_site = (np.abs(vecs) ** 2).reshape(box.n_sites, box.internal_dim, -1).sum(axis=1)
    inside = box.radii <= radius
    total = per_site.sum(axis=0)
    return per_site[inside].sum(axis=0) / np.where(total > 0, total, 1.0)


@dataclass(frozen=True)
class DetectionCriteria:
    gap_min: float = 0.05
    mass_min: float = 0.9
    core_radius: float | None = None  # None -> L / 4

    def radius_for(self, box: LatticeBox) -> float:
        return box.L / 4 if self.core_radius is None else self.core_radius


@dataclass(frozen=True)
class DiscreteEigenpair:
    index: int
    lam: complex
    psi: NDArray[np.complex128]
    gap: float
    core_mass: float


def detect_discrete(spec: SpectrumResult, arcs: EssentialArcs, box: LatticeBox,
                    criteria: DetectionCriteria | None = None) -> list[DiscreteEigenpair]:
    """Eigenpairs isolated from the arcs by ``gap_min`` and localized near the defect.

    An empty list means no discrete spectrum was detected at this truncation.
    """
    criteria = criteria or DetectionCriteria()
    gaps = gap_distances(spec.eigenvalues, arcs)
    masses = core_masses(spec.eigenvectors, box, criteria.radius_for(box))
    hits = np.flatnonzero((gaps > criteria.gap_min) & (masses > criteria.mass_min))
    return [
        DiscreteEigenpair(int(i), complex(spec.eigenvalues[i]), spec.eigenvectors[:, i],
                          float(gaps[i]), float(masses[i]))
        for i in hits
    ]


def truncation_shift(lam: complex, eigenvalues) -> float:
    """Distance from ``lam`` to the nearest eigenvalue of another truncation."""
    return float(np.min(np.abs(np.asarray(eigenvalues) - lam)))


def _power_norm(M, tol, max_iter, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(M.shape[1]) + 1j * rng.standard_normal(M.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = M @ x
        new = np.linalg.norm(y)
        if new == 0.0:
            return 0.0
        x = M.conj().T @ y
        x /= np.linalg.norm(x)
        if abs(new - est) <= tol * new:
            return float(np.linalg.norm(M @ x))
        est = new
    raise NormConvergenceError(f"power iteration did not reach rtol {tol:g} in {max_iter} steps")


def operator_norm(M, tol: float = 1e-10, max_iter: int = 20000, dense_max: int = 2000) -> float:
    """Largest singular value of ``M``.

    Zero rows and columns are dropped and the remaining pattern is split into
    independent blocks; the norm is the largest block norm. Blocks up to
    ``dense_max`` are handled by a full SVD, larger ones by power iteration on
    ``M^dagger M``.
    """
    M = np.asarray(getattr(M, "matrix", M))
    if M.size == 0:
        return 0.0
    rows = np.flatnonzero(np.any(M != 0, axis=1))
    cols = np.flatnonzero(np.any(M != 0, axis=0))
    if rows.size == 0:
        return 0.0
    sub = M[np.ix_(rows, cols)]
    nr, nc = sub.shape
    # bipartite row/column graph
    r, c = np.nonzero(sub)
    graph = scipy.sparse.coo_matrix((np.ones(r.size), (r, nr + c)), shape=(nr + nc, nr + nc))
    _, labels = connected_components(graph, directed=False)
    best = 0.0
    for lab in np.unique(labels):
        ri = np.flatnonzero(labels[:nr] == lab)
        ci = np.flatnonzero(labels[nr:] == lab)
        if ri.size == 0 or ci.size == 0:
            continue
        block = sub[np.ix_(ri, ci)]
        if max(block.shape) <= dense_max:
            val = float(scipy.linalg.svdvals(block)[0])
        else:
            val = _power_norm(block, tol, max_iter)
        best = max(best, val)
    return best
