"""End-to-end runs: validate, build, decompose, detect, certify, and write reports.

Every run returns one of the exit codes in ``ExitCode``. Partial outputs are
written before a failing code is returned.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from qwdecay.certify import (
    CertifyOptions,
    DecayCertificate,
    check_cutoff_commutator,
    check_exp_commutator,
    certify,
    propagation_bound,
    shell_norms,
)
from qwdecay.config import WalkConfig
from qwdecay.lattice import LatticeBox, WeightOverflowError
from qwdecay.spectrum import (
    DetectionCriteria,
    DiscreteEigenpair,
    EssentialArcs,
    SpectrumResult,
    core_masses,
    detect_discrete,
    eigendecompose,
    essential_arcs,
    gap_distances,
    truncation_shift,
)
from qwdecay.walk import ALGEBRA_TOL, ShiftParams, WalkOperator, build_walk, unitarity_defect

__all__ = [
    "ExitCode",
    "PrecheckError",
    "PointResult",
    "BOUNDS_DELTAS",
    "BOUNDS_NS",
    "BOUNDS_RADII",
    "precheck",
    "analyze_point",
    "run_spectrum",
    "run_certify",
    "run_bounds",
]

logger = logging.getLogger(__name__)

BOUNDS_DELTAS = tuple(round(0.05 * i, 2) for i in range(0, 11))
BOUNDS_NS = tuple(range(1, 9))
BOUNDS_RADII = tuple(float(R) for R in range(2, 9))


class ExitCode(IntEnum):
    OK = 0
    INVALID = 2
    NO_DISCRETE = 3
    FAILED = 4


class PrecheckError(ValueError):
    """The operator fails unitarity or its declared propagation bound."""


def precheck(U: WalkOperator) -> None:
    defect = unitarity_defect(U)
    if not defect <= ALGEBRA_TOL:
        raise PrecheckError(f"operator is not unitary: max|U^dagger U - I| = {defect:.3e}")
    reach = propagation_bound(U)
    if reach > U.b + 1e-12:
        raise PrecheckError(f"operator moves |x| by {reach:g} > declared b = {U.b:g}")


@dataclass
class PointResult:
    label: str
    params: ShiftParams
    operator: WalkOperator
    spectrum: SpectrumResult
    arcs: EssentialArcs
    gaps: np.ndarray
    masses: np.ndarray
    detections: list[DiscreteEigenpair] = field(default_factory=list)
    stability: dict[int, float] = field(default_factory=dict)
    certificates: list[DecayCertificate] = field(default_factory=list)
    stability_tol: float = 1e-4

    @property
    def stable(self) -> list[DiscreteEigenpair]:
        """Detections whose eigenvalue moves by at most ``stability_tol`` under ``L -> L + 4``."""
        return [dp for dp in self.detections
                if self.stability.get(dp.index, math.inf) <= self.stability_tol]


def _criteria(cfg: WalkConfig) -> DetectionCriteria:
    th = cfg.thresholds
    return DetectionCriteria(th.gap_min, th.mass_min, th.core_radius)


def analyze_point(cfg: WalkConfig, label: str, params: ShiftParams, operator: WalkOperator | None = None,
                  stability: bool = True) -> PointResult:
    """Build, check, decompose and run detection for one parameter point."""
    box = cfg.box
    U = operator if operator is not None else build_walk(box, params, cfg.coins)
    precheck(U)
    spec = eigendecompose(U)
    arcs = essential_arcs(params, cfg.coins.Phi, int(cfg.thresholds.grid_refinement), box.L)
    criteria = _criteria(cfg)
    gaps = gap_distances(spec.eigenvalues, arcs)
    masses = core_masses(spec.eigenvectors, box, criteria.radius_for(box))
    result = PointResult(label, params, U, spec, arcs, gaps, masses,
                         stability_tol=cfg.thresholds.stability_tol)
    result.detections = detect_discrete(spec, arcs, box, criteria)
    if stability and result.detections:
        big = LatticeBox(box.d, box.L + 4)
        larger = eigendecompose(build_walk(big, params, cfg.coins)).eigenvalues
        for dp in result.detections:
            result.stability[dp.index] = truncation_shift(dp.lam, larger)
    return result


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_spectrum(path: Path, res: PointResult) -> None:
    ev = res.spectrum.eigenvalues
    rows = (
        (i, _fmt(ev[i].real), _fmt(ev[i].imag), _fmt(np.angle(ev[i])), _fmt(res.spectrum.residuals[i]),
         _fmt(res.gaps[i]), _fmt(res.masses[i]))
        for i in range(ev.size)
    )
    _write_csv(path, ("index", "re_lambda", "im_lambda", "arg_lambda", "residual", "gap_distance", "core_mass"), rows)


def write_arcs(path: Path, arcs: EssentialArcs) -> None:
    d = arcs.ks.shape[1]
    header = [f"k_{j + 1}" for j in range(d)] + ["branch", "re_mu", "im_mu"]
    rows = (
        [_fmt(k) for k in arcs.ks[i]] + [br, _fmt(mu.real), _fmt(mu.imag)]
        for i in range(arcs.ks.shape[0])
        for br, mu in enumerate(arcs.branches[i])
    )
    _write_csv(path, header, rows)


def write_shells(path: Path, psi, box: LatticeBox, b: float) -> None:
    ns, s = shell_norms(psi / np.linalg.norm(psi), box, b)
    rows = (
        (int(n), _fmt((n - 1) * b), _fmt(n * b), _fmt(sn), _fmt(math.log(sn) if sn > 0 else -math.inf))
        for n, sn in zip(ns, s)
    )
    _write_csv(path, ("n", "R_lo", "R_hi", "shell_norm", "log_shell_norm"), rows)


def _point_dir(out: Path, cfg: WalkConfig, label: str) -> Path:
    return out if cfg.scan is None else out / label


def _map_points(fn, points):
    workers = max(1, min(len(points), os.cpu_count() or 1))
    if workers == 1:
        return [fn(*pt) for pt in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda pt: fn(*pt), points))


def _complex_list(v):
    return [[float(z.real), float(z.imag)] for z in np.atleast_1d(v)]


def _config_summary(cfg: WalkConfig) -> dict:
    return {
        "d": cfg.d,
        "L": cfg.L,
        "p": [float(x) for x in cfg.params.p],
        "q": _complex_list(cfg.params.q),
        "phi": _complex_list(cfg.coins.Phi),
        "omega": _complex_list(cfg.coins.Omega),
        "p0": [int(x) for x in cfg.p0],
        "composition": "U = S C",
        "a_Omega": cfg.coin_report.a_Omega,
        "a_Phi": cfg.coin_report.a_Phi,
        "valid_l": [l + 1 for l in cfg.coin_report.valid_l],
        "thresholds": {k: getattr(cfg.thresholds, k) for k in cfg.thresholds.__dataclass_fields__},
    }


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _sanitize(obj):
    # json has no inf/nan
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_sanitize(doc), indent=2, default=_json_default, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def run_spectrum(cfg: WalkConfig, output_dir, operator: WalkOperator | None = None) -> ExitCode:
    """Write ``spectrum.csv`` and ``arcs.csv`` for every parameter point."""
    out = Path(output_dir)
    try:
        results = _map_points(lambda label, params: analyze_point(cfg, label, params, operator, stability=False),
                              cfg.points())
    except PrecheckError as exc:
        logger.error("%s", exc)
        return ExitCode.INVALID
    for res in results:
        pdir = _point_dir(out, cfg, res.label)
        write_spectrum(pdir / "spectrum.csv", res)
        write_arcs(pdir / "arcs.csv", res.arcs)
    return ExitCode.OK


def _certify_point(cfg: WalkConfig, label, params, operator) -> PointResult:
    res = analyze_point(cfg, label, params, operator)
    th = cfg.thresholds
    options = CertifyOptions(fraction=th.delta_fraction, seed=int(th.seed), trials=int(th.trials))
    for dp in res.stable:
        res.certificates.append(certify(res.operator, dp.lam, dp.psi, res.arcs, cfg.box, options))
    return res


def run_certify(cfg: WalkConfig, output_dir, operator: WalkOperator | None = None) -> ExitCode:
    """Detect discrete eigenpairs at every point and certify their decay.

    Exit codes: 0 if any certificate passes, 3 if nothing is detected, 4 if
    something is detected but no certificate passes, 2 on invalid input.
    """
    out = Path(output_dir)
    try:
        results = _map_points(lambda label, params: _certify_point(cfg, label, params, operator), cfg.points())
    except (PrecheckError, WeightOverflowError, ValueError) as exc:
        logger.error("%s", exc)
        return ExitCode.INVALID

    points = []
    n_detected = n_passed = 0
    for res in results:
        pdir = _point_dir(out, cfg, res.label)
        write_spectrum(pdir / "spectrum.csv", res)
        write_arcs(pdir / "arcs.csv", res.arcs)
        for dp in res.stable:
            write_shells(pdir / f"shells_{dp.index}.csv", dp.psi, cfg.box, res.operator.b)
        n_detected += len(res.stable)
        n_passed += sum(c.passed for c in res.certificates)
        points.append({
            "label": res.label,
            "p": [float(x) for x in res.params.p],
            "q": _complex_list(res.params.q),
            "D_l": [l + 1 for l in res.params.D_l_memberships()],
            "detections": [
                {"index": dp.index, "lambda": [dp.lam.real, dp.lam.imag], "gap_distance": dp.gap,
                 "core_mass": dp.core_mass, "truncation_shift": res.stability.get(dp.index),
                 "stable": dp in res.stable}
                for dp in res.detections
            ],
            "certificates": [dict(c.to_dict(), index=dp.index) for dp, c in zip(res.stable, res.certificates)],
        })
    if n_detected == 0:
        code = ExitCode.NO_DISCRETE
        logger.info("no discrete spectrum detected at this truncation")
    elif n_passed == 0:
        code = ExitCode.FAILED
    else:
        code = ExitCode.OK
    _write_json(out / "certificates.json",
                {"config": _config_summary(cfg), "points": points, "exit_code": int(code)})
    return code


def bounds_rows(U: WalkOperator, deltas=BOUNDS_DELTAS, Ns=BOUNDS_NS, radii=BOUNDS_RADII):
    """Rows ``(check, delta, N_or_R, measured, bound, pass)`` for both commutator sweeps."""
    box, b = U.box, U.b
    rows = []
    for delta in deltas:
        for N in Ns:
            rep = check_exp_commutator(U, box, delta, b, N)
            rows.append(("exp_commutator", delta, N, rep.measured, rep.bound, rep.passed))
    for delta in deltas:
        for R in radii:
            rep = check_cutoff_commutator(U, box, delta, b, R)
            rows.append(("cutoff_commutator", delta, R, rep.measured, rep.bound, rep.passed))
    return rows


def run_bounds(cfg: WalkConfig, output_dir, operator: WalkOperator | None = None) -> ExitCode:
    """Sweep both commutator inequalities and write ``bounds.csv`` per point."""
    out = Path(output_dir)
    box = cfg.box
    ops = []
    try:
        for label, params in cfg.points():
            U = operator if operator is not None else build_walk(box, params, cfg.coins)
            precheck(U)
            ops.append((label, U))
    except PrecheckError as exc:
        logger.error("%s", exc)
        return ExitCode.INVALID
    all_ok = True
    for label, U in ops:
        rows = bounds_rows(U)
        all_ok &= all(r[5] for r in rows)
        _write_csv(
            _point_dir(out, cfg, label) / "bounds.csv",
            ("check", "delta", "N_or_R", "measured", "bound", "pass"),
            ((c, _fmt(dl), n if isinstance(n, int) else _fmt(n), _fmt(m), _fmt(bd), "true" if ok else "false")
             for c, dl, n, m, bd, ok in rows),
        )
    return ExitCode.OK if all_ok else ExitCode.FAILED
