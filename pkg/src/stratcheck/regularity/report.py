"""Report containers, verdict thresholds and JSON/CSV serialisation helpers."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np

HOLDS = "holds"
FAILS = "fails"
INCONCLUSIVE = "inconclusive"
VACUOUS = "vacuous"

CONDITIONS = (
    "a", "c", "m", "c_d", "kuo", "kuo2",
    "claimI", "claimII", "claimIV", "lemma_cd", "key_estimation",
)


@dataclass(frozen=True)
class Thresholds:
    """Verdict thresholds. All of them are recorded in every report."""

    gap_pass: float = 0.05
    cauchy_tol: float = 0.02
    cd_floor: float = 0.25 * (1 - 0.2)
    C_floor: float = 1e-3
    slope_tol: float = 0.1
    feas_factor: float = 1e-10
    m_tol: float = 1e-3
    rho_eval: float = 1e-3
    claim_slack: float = 0.0
    vanish_rel: float = 1e-8
    angle_tol: float = 1e-7
    rank_tol: float = 1e-14

    def feas_tol(self, rho: float, r: int) -> float:
        return self.feas_factor * rho**r

    def in_eval_range(self, rho: float) -> bool:
        return rho <= self.rho_eval * (1 + 1e-9)

    def replace(self, **changes) -> "Thresholds":
        names = {f.name for f in fields(self)}
        unknown = set(changes) - names
        if unknown:
            raise ValueError(f"unknown threshold(s): {', '.join(sorted(unknown))}")
        return Thresholds(**{**asdict(self), **{k: float(v) for k, v in changes.items()}})

    def to_json(self) -> dict:
        return asdict(self)


def jsonable(obj: Any) -> Any:
    """Plain JSON-compatible data; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "to_json"):
        return jsonable(obj.to_json())
    return obj


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        out = []
        for c in columns:
            v = row.get(c, "")
            if isinstance(v, (float, np.floating)):
                v = repr(float(v))
            elif isinstance(v, (list, tuple, np.ndarray)):
                v = " ".join(repr(float(a)) for a in np.ravel(v))
            out.append(v)
        w.writerow(out)
    return buf.getvalue()


@dataclass
class RegularityReport:
    """Per-condition outcome: measurements per radius, verdict, and violation witnesses."""

    condition: str
    verdict: str
    measurements: list[dict] = field(default_factory=list)
    witnesses: list[dict] = field(default_factory=list)
    thresholds: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def to_json(self) -> dict:
        return jsonable({
            "condition": self.condition,
            "verdict": self.verdict,
            "measurements": self.measurements,
            "witnesses": self.witnesses,
            "thresholds": self.thresholds,
            "notes": self.notes,
            "extra": self.extra,
        })

    def to_csv(self) -> str:
        cols = list(self.columns) or sorted({k for row in self.measurements for k in row})
        # plot scripts key on a leading radius column
        if "radius" in cols:
            cols = ["radius"] + [c for c in cols if c != "radius"]
        return rows_to_csv(self.measurements, cols)


def combine_verdicts(verdicts: Sequence[str]) -> str:
    """fails beats inconclusive beats holds; an empty list is inconclusive."""
    if not verdicts:
        return INCONCLUSIVE
    if FAILS in verdicts:
        return FAILS
    if INCONCLUSIVE in verdicts:
        return INCONCLUSIVE
    if all(v == VACUOUS for v in verdicts):
        return VACUOUS
    return HOLDS


def searched_radius(radii: Sequence[float], ok: Sequence[bool]) -> float | None:
    """Largest radius rho* such that every listed shell with radius <= rho* is ok.

    ``radii`` must be strictly decreasing; returns None when the smallest shell fails.
    """
    best = None
    for rho, good in zip(reversed(list(radii)), reversed(list(ok))):
        if not good:
            break
        best = float(rho)
    return best


def tail_verdict(radii: Sequence[float], ok: Sequence[bool], th: Thresholds) -> tuple[str, float | None]:
    """holds iff the inequality is met on every shell at or below ``rho_eval``."""
    rho_star = searched_radius(radii, ok)
    if not any(th.in_eval_range(r) for r in radii):
        return INCONCLUSIVE, rho_star
    if rho_star is not None and rho_star >= th.rho_eval * (1 - 1e-9):
        return HOLDS, rho_star
    return FAILS, rho_star
