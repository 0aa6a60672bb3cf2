"""Decay certificates for discrete eigenpairs and numerical checks of the bounds behind them.

For an eigenpair ``(lam, psi)`` at distance ``d`` from the essential arcs and a
walk that moves ``|x|`` by at most ``b`` per step, ``exp(delta |x|) psi`` is
square summable whenever ``2 sinh(delta b) < d``. ``certify`` picks such a
``delta`` and collects evidence for it on the truncated box:

* the weighted norm converges inside the box (small outermost-shell share),
* shell norms decay at least at rate ``asinh(d / 2) / b`` up to a slack,
* the pointwise envelope ``||psi(x)|| <= C exp(-delta |x|)``,
* the three operator inequalities the argument is built from
  (gap lower bound away from the origin, cutoff commutator, exponential
  commutator), each measured against its bound.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from qwdecay.lattice import (
    EXP_CAP,
    LatticeBox,
    WaveFunction,
    WeightOverflowError,
    ceil_b,
    exp_weight,
    lambda_weight,
    lambda_weight_truncated,
    shell_index,
    shell_projector,
)
from qwdecay.spectrum import EssentialArcs, gap_distance, operator_norm

__all__ = [
    "ENTRY_TOL",
    "NORM_SLACK",
    "CheckReport",
    "CertifyOptions",
    "DecayCertificate",
    "propagation_bound",
    "shell_norms",
    "delta_max",
    "fit_decay_rate",
    "exp_summability",
    "pointwise_constant",
    "check_gap_lower_bound",
    "gap_threshold_scan",
    "check_cutoff_commutator",
    "check_exp_commutator",
    "check_cutoff_growth",
    "certify",
]

# matrix entries at or below this modulus count as structural zeros
ENTRY_TOL = 1e-13
# additive slack when comparing a measured operator norm to its bound
NORM_SLACK = 1e-9


@dataclass
class CheckReport:
    name: str
    passed: bool
    measured: float
    bound: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _matrix(U):
    return np.asarray(getattr(U, "matrix", U))


def _amplitudes(psi):
    return np.asarray(getattr(psi, "amplitudes", psi), dtype=np.complex128)


def propagation_bound(U, box: LatticeBox | None = None) -> float:
    """Largest change of ``|x|`` along any nonzero matrix entry of ``U``.

    This is the smallest ``b`` for which ``U`` maps the shell ``[R1, R2)`` into
    ``[R1 - b, R2 + b)`` on the box.
    """
    box = box if box is not None else U.box
    M = _matrix(U)
    rows, cols = np.nonzero(np.abs(M) > ENTRY_TOL)
    if rows.size == 0:
        return 0.0
    m = box.internal_dim
    r = box.radii
    return float(np.max(np.abs(r[rows // m] - r[cols // m])))


def shell_norms(psi, box: LatticeBox, b: float = 1.0):
    """Norms ``s_n`` of ``psi`` on the shells ``[(n-1)b, nb)``.

    Returns ``(ns, s)`` with ``ns = 1 .. ceil(max|x| / b)``.
    """
    amp = _amplitudes(psi)
    nrm = np.linalg.norm(amp)
    if abs(nrm - 1.0) > 1e-10:
        raise ValueError(f"psi must be normalized (||psi|| = {nrm:.12g})")
    site_sq = WaveFunction(box, amp).site_norms() ** 2
    idx = shell_index(box.radii, b)
    n_max = int(idx.max())
    s = np.sqrt(np.bincount(idx, weights=site_sq, minlength=n_max + 1)[1:])
    return np.arange(1, n_max + 1), s


def delta_max(d_lambda: float, b: float = 1.0) -> float:
    """Supremum of the admissible decay rates, ``asinh(d / 2) / b``."""
    if d_lambda <= 0:
        raise ValueError(f"d(lambda) = {d_lambda} <= 0: lambda is not isolated from the arcs")
    if b <= 0:
        raise ValueError(f"b must be positive, got {b}")
    return math.asinh(d_lambda / 2.0) / b


def fit_decay_rate(shells, window, b: float = 1.0, floor: float = 1e-14):
    """Least-squares decay rate of the shell norms over ``window = (R_lo, R_hi)``.

    ``shells`` is ``(ns, s)`` or a sequence of ``(n, s_n)`` pairs. Shells with
    ``n b`` inside the window and ``s_n > floor`` enter the fit of ``log s_n``
    against ``n b``. Returns ``(rate, r_squared)`` with ``rate = -slope``.
    """
    if isinstance(shells, tuple) and len(shells) == 2 and np.ndim(shells[0]) == 1:
        ns, s = (np.asarray(a, dtype=np.float64) for a in shells)
    else:
        arr = np.asarray(shells, dtype=np.float64)
        ns, s = arr[:, 0], arr[:, 1]
    if not np.any(s > 0):
        raise ValueError("all shell norms are zero")
    lo, hi = window
    r = ns * b
    use = (r >= lo) & (r <= hi) & (s > floor)
    if use.sum() < 4:
        raise ValueError(f"need at least 4 shells above {floor:g} in window {window}, found {int(use.sum())}")
    x, y = r[use], np.log(s[use])
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2


def _check_exponent(delta, box, cap):
    top = delta * box.max_radius
    if top > cap:
        raise WeightOverflowError(
            f"delta * max|x| = {top:.1f} exceeds cap {cap:.1f}; use a smaller delta or a larger cap"
        )


def exp_summability(psi, delta: float, box: LatticeBox, b: float = 1.0, cap: float = EXP_CAP):
    """``(||exp(delta |Q|) psi||^2, outermost-shell share of it)``."""
    _check_exponent(delta, box, cap)
    site_sq = WaveFunction(box, _amplitudes(psi)).site_norms() ** 2
    weighted = np.exp(2.0 * delta * box.radii) * site_sq
    total = float(weighted.sum())
    idx = shell_index(box.radii, b)
    tail = float(weighted[idx == idx.max()].sum())
    return total, (tail / total if total > 0 else 0.0)


def pointwise_constant(psi, delta: float, box: LatticeBox, cap: float = EXP_CAP) -> float:
    """``max_x exp(delta |x|) ||psi(x)||``."""
    _check_exponent(delta, box, cap)
    norms = WaveFunction(box, _amplitudes(psi)).site_norms()
    return float(np.max(np.exp(delta * box.radii) * norms))


def check_gap_lower_bound(U, lam: complex, arcs: EssentialArcs, box: LatticeBox, R: float,
                          epsilon: float, trials: int = 200, seed: int = 0,
                          vectors=None) -> CheckReport:
    """Sample ``||U f - lam f|| >= (d - epsilon) ||f||`` for ``f`` supported on ``|x| >= R``.

    ``f`` are seeded complex Gaussian vectors unless ``vectors`` (columns) are
    given. A failure is reported, not raised.
    """
    M = _matrix(U)
    d = gap_distance(lam, arcs)
    bound = d - epsilon
    support = shell_projector(box, R).full().astype(bool)
    if vectors is None:
        rng = np.random.default_rng(seed)
        k = int(support.sum())
        F = rng.standard_normal((k, trials)) + 1j * rng.standard_normal((k, trials))
    else:
        F = np.asarray(vectors, dtype=np.complex128)
        if F.ndim == 1:
            F = F[:, None]
        if np.any(np.abs(F[~support]) > 0):
            raise ValueError(f"supplied vectors are not supported on |x| >= {R}")
        F = F[support]
    if F.shape[0] == 0:
        return CheckReport("gap_lower_bound", True, math.inf, bound, {"R": R, "trials": 0, "empty": True})
    resid = M[:, support] @ F
    resid[support] -= lam * F
    ratios = np.linalg.norm(resid, axis=0) / np.linalg.norm(F, axis=0)
    worst = float(ratios.min())
    return CheckReport(
        "gap_lower_bound", worst >= bound, worst, bound,
        {"R": R, "trials": int(F.shape[1]), "epsilon": epsilon, "seed": seed,
         "failures": int(np.sum(ratios < bound))},
    )


def gap_threshold_scan(U, lam, arcs, box, epsilon, radii, trials=200, seed=0):
    """Run the gap check over ``radii``; return ``(reports, R_star)``.

    ``R_star`` is the smallest scanned radius from which every larger scanned
    radius passes, or ``None`` if the largest one fails.
    """
    reports = [check_gap_lower_bound(U, lam, arcs, box, R, epsilon, trials, seed) for R in radii]
    r_star = None
    for rep in reversed(reports):
        if not rep.passed:
            break
        r_star = rep.details["R"]
    return reports, r_star


def check_cutoff_commutator(U, box: LatticeBox, delta: float, b: float, R: float,
                            cap: float = EXP_CAP) -> CheckReport:
    """Measure ``||exp(Lambda) [U, E(R)]||`` against ``e^{delta ceil_b(R+b)} + e^{delta ceil_b(R)}``.

    ``E(R)`` projects onto ``|x| >= R``. Also checks that the commutator equals
    ``-E[R, R+b) U E[R-b, R) + E[R-b, R) U E[R, R+b)`` entry for entry.
    """
    if R <= 0:
        raise ValueError(f"R must be positive, got {R}")
    M = _matrix(U)
    e = shell_projector(box, R).full()
    inner = shell_projector(box, max(0.0, R - b), R).full()
    outer = shell_projector(box, R, R + b).full()
    K = M * e[None, :] - e[:, None] * M
    expected = inner[:, None] * M * outer[None, :] - outer[:, None] * M * inner[None, :]
    support_residual = float(np.max(np.abs(K - expected)))
    w = exp_weight(lambda_weight(box, delta, b), +1, cap).full()
    measured = operator_norm(w[:, None] * K)
    bound = math.exp(delta * ceil_b(R + b, b)) + math.exp(delta * ceil_b(R, b))
    support_ok = support_residual <= 1e-12
    return CheckReport(
        "cutoff_commutator", bool(measured <= bound + NORM_SLACK and support_ok), measured, bound,
        {"delta": delta, "b": b, "R": R, "support_ok": support_ok,
         "support_residual": support_residual},
    )


def check_exp_commutator(U, box: LatticeBox, delta: float, b: float, N: int,
                         cap: float = EXP_CAP) -> CheckReport:
    """Measure ``||[U, W] W^{-1}||`` with ``W = exp(Lambda_N)`` against ``2 sinh(delta b)``."""
    M = _matrix(U)
    lam_n = lambda_weight_truncated(box, delta, b, N)
    exp_weight(lam_n, +1, cap)  # overflow guard
    v = lam_n.full()
    # (U W - W U) W^{-1} = U - W U W^{-1}; entries U_xy (1 - w_x / w_y)
    ratio = np.exp(v[:, None] - v[None, :])
    measured = operator_norm(M * (1.0 - ratio))
    bound = 2.0 * math.sinh(delta * b)
    return CheckReport(
        "exp_commutator", measured <= bound + NORM_SLACK, measured, bound,
        {"delta": delta, "b": b, "N": N},
    )


def check_cutoff_growth(psi, box: LatticeBox, delta: float, b: float, R: float,
                        d_lambda: float, Ns=None, cap: float = EXP_CAP) -> CheckReport:
    """Track ``||exp(Lambda_N) E(R) psi||`` as ``N`` grows.

    The sequence must be nondecreasing and, once ``N b > R``, stay below
    ``(e^{delta ceil_b(R+b)} + e^{delta ceil_b(R)}) ||psi|| * 2 / (d - 2 sinh(delta b))``.
    """
    amp = _amplitudes(psi)
    gap = d_lambda - 2.0 * math.sinh(delta * b)
    if gap <= 0:
        raise ValueError("2 sinh(delta b) must be below d(lambda)")
    if Ns is None:
        Ns = range(1, int(shell_index(box.max_radius, b)) + 2)
    Ns = list(Ns)
    tail = shell_projector(box, R).apply(amp)
    norms = []
    for N in Ns:
        w = exp_weight(lambda_weight_truncated(box, delta, b, N), +1, cap)
        norms.append(float(np.linalg.norm(w.apply(tail))))
    norms_arr = np.array(norms)
    monotone = bool(np.all(np.diff(norms_arr) >= -1e-12 * norms_arr.max(initial=0.0)))
    bound = (math.exp(delta * ceil_b(R + b, b)) + math.exp(delta * ceil_b(R, b))) \
        * float(np.linalg.norm(amp)) * 2.0 / gap
    late = np.array([N * b > R for N in Ns])
    worst = float(norms_arr[late].max()) if late.any() else 0.0
    return CheckReport(
        "cutoff_growth", monotone and worst <= bound, worst, bound,
        {"R": R, "delta": delta, "N": Ns, "norms": norms, "monotone": monotone},
    )


@dataclass
class CertifyOptions:
    fraction: float = 0.9
    fit_window: tuple[float, float] | None = None  # default (3b, (n_max - 2)b)
    noise_floor: float = 1e-14
    tail_max: float = 1e-6
    rate_slack: float = 0.05
    trials: int = 200
    seed: int = 0
    N_grid: tuple[int, ...] = tuple(range(1, 9))
    radii: tuple[float, ...] | None = None  # default 1, 2, ... < max|x| - 2
    residual_max: float = 1e-8
    cap: float = EXP_CAP


@dataclass
class DecayCertificate:
    lam: complex
    d_lambda: float
    d_lambda_resolution: float
    b: float
    delta_max: float
    delta_used: float
    fitted_rate: float
    fit_r_squared: float
    fit_window: tuple[float, float]
    summability_total: float
    summability_tail_ratio: float
    pointwise_C_delta: float
    gap_threshold_R: float | None
    truncation_L: int
    lemma_checks: dict[str, list[CheckReport]]
    checks: dict[str, bool]
    passed: bool
    failed_checks: list[str]

    def to_dict(self) -> dict:
        out = {
            "lambda": [self.lam.real, self.lam.imag],
            "arg_lambda": math.atan2(self.lam.imag, self.lam.real),
        }
        for k, v in asdict(self).items():
            if k in ("lam", "lemma_checks"):
                continue
            out[k] = list(v) if isinstance(v, tuple) else v
        out["lemma_checks"] = {k: [r.to_dict() for r in reps] for k, reps in self.lemma_checks.items()}
        return out


def certify(U, lam: complex, psi, arcs: EssentialArcs, box: LatticeBox | None = None,
            options: CertifyOptions | None = None) -> DecayCertificate:
    """Assemble a decay certificate for one eigenpair of ``U``.

    Failing sub-checks mark the certificate as failed and are listed by name.

    Raises
    ------
    ValueError
        If ``U`` moves ``|x|`` by more than its declared ``b``, if ``(lam, psi)``
        is not an eigenpair, if ``lam`` touches the arcs, or if
        ``options.fraction`` is outside ``(0, 1)``.
    """
    options = options or CertifyOptions()
    box = box if box is not None else U.box
    M = _matrix(U)
    b = float(U.b)
    reach = propagation_bound(M, box)
    if b <= 0 or reach > b + 1e-12:
        raise ValueError(f"U moves |x| by up to {reach:g}, more than the declared b = {b:g}")
    if not 0.0 < options.fraction < 1.0:
        raise ValueError(
            f"delta fraction {options.fraction} must lie in (0, 1) so that 2 sinh(delta b) < d(lambda)"
        )

    amp = _amplitudes(psi)
    amp = amp / np.linalg.norm(amp)
    residual = float(np.linalg.norm(M @ amp - lam * amp))
    if residual > options.residual_max:
        raise ValueError(f"(lambda, psi) is not an eigenpair: residual {residual:.3e}")

    d = gap_distance(lam, arcs)
    dmax = delta_max(d, b)
    delta = options.fraction * dmax
    hypothesis = 2.0 * math.sinh(delta * b) < d
    eps = (d - 2.0 * math.sinh(delta * b)) / 2.0
    checks: dict[str, bool] = {"hypothesis": hypothesis}

    total, tail = exp_summability(amp, delta, box, b, options.cap)
    checks["summability"] = tail <= options.tail_max

    ns, s = shell_norms(amp, box, b)
    n_max = int(ns[-1])
    window = options.fit_window or (3 * b, (n_max - 2) * b)
    in_window = (ns * b >= window[0]) & (ns * b <= window[1])
    if not np.any(s[in_window] > options.noise_floor):
        # decays below the noise floor before the window opens
        rate, r2 = math.inf, 1.0
    else:
        try:
            rate, r2 = fit_decay_rate((ns, s), window, b, options.noise_floor)
        except ValueError:
            rate, r2 = math.nan, math.nan
    checks["decay_rate"] = bool(rate >= dmax - options.rate_slack)

    C = pointwise_constant(amp, delta, box, options.cap)
    norms = WaveFunction(box, amp).site_norms()
    envelope = C * np.exp(-delta * box.radii)
    checks["pointwise"] = bool(np.all(norms <= envelope * (1 + 1e-12)))

    radii = options.radii
    if radii is None:
        radii = tuple(float(R) for R in range(1, int(math.ceil(box.max_radius - 2))))
    gap_reports, r_star = gap_threshold_scan(U, lam, arcs, box, eps, radii, options.trials, options.seed)
    checks["gap_lower_bound"] = r_star is not None and r_star < box.L / 2

    cutoff = [check_cutoff_commutator(U, box, delta, b, R, options.cap) for R in radii]
    checks["cutoff_commutator"] = all(r.passed for r in cutoff)

    expc = [check_exp_commutator(U, box, delta, b, N, options.cap) for N in options.N_grid]
    checks["exp_commutator"] = all(r.passed for r in expc)

    lemma_checks = {"gap_lower_bound": gap_reports, "cutoff_commutator": cutoff, "exp_commutator": expc}
    if r_star is not None:
        growth = check_cutoff_growth(amp, box, delta, b, r_star, d, cap=options.cap)
        checks["cutoff_growth"] = growth.passed
        lemma_checks["cutoff_growth"] = [growth]
    else:
        checks["cutoff_growth"] = False

    failed = [k for k, ok in checks.items() if not ok]
    return DecayCertificate(
        lam=complex(lam), d_lambda=d, d_lambda_resolution=arcs.resolution, b=b,
        delta_max=dmax, delta_used=delta, fitted_rate=rate, fit_r_squared=r2,
        fit_window=tuple(window), summability_total=total, summability_tail_ratio=tail,
        pointwise_C_delta=C, gap_threshold_R=r_star, truncation_L=box.L,
        lemma_checks=lemma_checks, checks=checks, passed=not failed, failed_checks=failed,
    )
