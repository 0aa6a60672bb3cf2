"""Walk configuration files.

A configuration is a YAML (or JSON) mapping::

    d: 2
    L: 21
    p: [1.0, 1.0]
    q: [[0, 0], [0, 0]]            # complex numbers as [re, im]
    phi: [[0.5, 0], [0.5, 0], [0.5, 0], [0.5, 0]]
    omega: [[0.8366600265340756, 0], ...]
    p0: [1, 1]
    scan: {q_magnitudes: [0.05, 0.1, 0.2], axis: 1}   # optional, axis is 1-based
    thresholds: {gap_min: 0.05, delta_fraction: 0.9}  # optional overrides
    enforce_existence_assumptions: true                # optional

The coin conditions that guarantee a nonempty discrete spectrum are enforced
by default. Setting ``enforce_existence_assumptions: false`` records their
failures in the coin report instead, which is how control runs (for example
``omega == phi``) get through to detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from qwdecay.lattice import LatticeBox
from qwdecay.walk import (
    CoinReport,
    CoinSpec,
    ShiftParams,
    ValidationError,
    validate_coin_spec,
    validate_shift_params,
)

__all__ = ["ConfigError", "Thresholds", "ScanSpec", "WalkConfig", "parse_config", "load_config"]


class ConfigError(ValueError):
    """The configuration cannot be parsed or violates a model assumption."""


@dataclass(frozen=True)
class Thresholds:
    gap_min: float = 0.05
    mass_min: float = 0.9
    core_radius: float | None = None
    delta_fraction: float = 0.9
    grid_refinement: int = 8
    seed: int = 0
    stability_tol: float = 1e-4
    trials: int = 200


@dataclass(frozen=True)
class ScanSpec:
    q_magnitudes: tuple[float, ...]
    axis: int  # 1-based


@dataclass(frozen=True)
class WalkConfig:
    d: int
    L: int
    params: ShiftParams
    coins: CoinSpec
    p0: np.ndarray
    coin_report: CoinReport
    scan: ScanSpec | None = None
    thresholds: Thresholds = field(default_factory=Thresholds)

    @property
    def box(self) -> LatticeBox:
        return LatticeBox(self.d, self.L)

    def points(self) -> list[tuple[str, ShiftParams]]:
        """``(label, shift params)`` for every walk the configuration describes."""
        if self.scan is None:
            return [("base", self.params)]
        a = self.scan.axis - 1
        out = []
        for i, m in enumerate(self.scan.q_magnitudes):
            p = self.params.p.copy()
            q = self.params.q.copy()
            sign = np.sign(p[a]) if p[a] != 0 else self.p0[a]
            q[a] = m
            p[a] = sign * math.sqrt(max(0.0, 1.0 - m * m))
            out.append((f"point_{i:02d}", validate_shift_params(p, q)))
        return out


def _complex_array(raw, name):
    vals = []
    for item in raw:
        if isinstance(item, (list, tuple)):
            if len(item) != 2:
                raise ConfigError(f"{name}: complex entries must be [re, im] pairs, got {item!r}")
            vals.append(complex(float(item[0]), float(item[1])))
        else:
            vals.append(complex(float(item)))
    return np.array(vals, dtype=np.complex128)


def _require(doc, key):
    if key not in doc:
        raise ConfigError(f"missing required key {key!r}")
    return doc[key]


def parse_config(doc: dict, L: int | None = None, **overrides) -> WalkConfig:
    """Build and validate a configuration from a parsed mapping.

    ``L`` and keyword ``overrides`` (threshold names) take precedence over the
    document. Every failure is raised as ``ConfigError`` naming the condition.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        d = int(_require(doc, "d"))
        L = int(L if L is not None else _require(doc, "L"))
        LatticeBox(d, L)
        params = validate_shift_params(
            np.asarray(_require(doc, "p"), dtype=np.float64), _complex_array(_require(doc, "q"), "q")
        )
        if params.d != d:
            raise ConfigError(f"p and q have length {params.d}, expected d={d}")
        coins = CoinSpec(_complex_array(_require(doc, "phi"), "phi"), _complex_array(_require(doc, "omega"), "omega"))
        if coins.d != d:
            raise ConfigError(f"phi and omega have length {2 * coins.d}, expected 2d={2 * d}")
        p0 = np.asarray(_require(doc, "p0"))
        try:
            report = validate_coin_spec(coins, p0)
        except ValidationError as exc:
            if exc.report is None or doc.get("enforce_existence_assumptions", True):
                raise
            report = exc.report
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    raw_th = doc.get("thresholds") or {}
    known = set(Thresholds.__dataclass_fields__)
    unknown = set(raw_th) - known
    if unknown:
        raise ConfigError(f"unknown threshold keys: {sorted(unknown)}")
    th = replace(Thresholds(), **raw_th)
    th = replace(th, **{k: v for k, v in overrides.items() if v is not None})
    if not 0.0 < th.delta_fraction < 1.0:
        raise ConfigError(
            f"delta_fraction={th.delta_fraction} must lie in (0, 1); otherwise 2 sinh(delta b) >= d(lambda)"
        )
    if int(th.grid_refinement) < 1:
        raise ConfigError(f"grid_refinement must be >= 1, got {th.grid_refinement}")

    scan = None
    if doc.get("scan"):
        raw = doc["scan"]
        try:
            mags = tuple(float(m) for m in raw["q_magnitudes"])
            axis = int(raw.get("axis", 1))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed scan block: {exc}") from exc
        if not 1 <= axis <= d:
            raise ConfigError(f"scan axis {axis} outside 1..{d}")
        if any(not 0.0 <= m <= 1.0 for m in mags):
            raise ConfigError(f"scan magnitudes must lie in [0, 1], got {list(mags)}")
        scan = ScanSpec(mags, axis)

    cfg = WalkConfig(d, L, params, coins, p0.astype(np.int64), report, scan, th)
    try:
        cfg.points()
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path, L: int | None = None, **overrides) -> WalkConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(doc, L=L, **overrides)
