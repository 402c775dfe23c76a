"""Conditions (m), (a), (c) and (c_d) for the pair (Y, Z) along sampled sequences, and the combined pipeline."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..horn import HornSpec, ShellScan, shell_radii
from ..subspace import Subspace, gap, intersection_dim, null_space
from .family import DeformationFamily, NotOnSmoothStratum, SequenceSpec, StratificationSpec, control_function, stratify, tangent_plane_Y
from .kuo import AllShellsEmptyError, KuoReport, kuo_check
from .report import FAILS, HOLDS, INCONCLUSIVE, RegularityReport, Thresholds, combine_verdicts, jsonable

GAP_ZERO = 1e-10


def _t_axis(m: int) -> Subspace:
    e = np.zeros(m)
    e[-1] = 1.0
    return Subspace(e[None], m)


def _tail(seq: SequenceSpec, th: Thresholds) -> list[int]:
    return [i for i, rho in enumerate(seq.radii) if th.in_eval_range(rho)]


def _empty_report(name: str, th: Thresholds) -> RegularityReport:
    return RegularityReport(
        name, HOLDS, thresholds=th.to_json(),
        notes=["F^-1(0) = {0} x J near the axis: two-stratum case, regular by construction"],
        extra={"empty_Y": True},
    )


def _finish(name, seqs, per_seq, rows, witnesses, th, columns, notes=(), extra=None) -> RegularityReport:
    verdicts = [v for v, _ in per_seq]
    notes = list(notes)
    for reason in sorted({d for v, d in per_seq if v == INCONCLUSIVE}):
        notes.append(f"inconclusive sequence(s): {reason}")
    ex = {"per_sequence": [{"t0": s.t0, "branch": s.branch, "verdict": v, "detail": d}
                           for s, (v, d) in zip(seqs, per_seq)], "empty_Y": False}
    ex.update(extra or {})
    return RegularityReport(name, combine_verdicts(verdicts), rows, witnesses, th.to_json(),
                            notes, ex, columns)


def condition_m_check(fam: DeformationFamily, strat: StratificationSpec, th: Thresholds = Thresholds()) -> RegularityReport:
    """(t, rho_hat) restricted to T Y must be a submersion: rank 2 of the restricted differentials.

    Both covectors are normalised first, so the margin sigma_min / sigma_max is scale free.
    """
    if strat.empty_Y:
        return _empty_report("m", th)
    m = fam.n + 1
    rows, wit, per_seq = [], [], []
    for s in strat.sequences:
        margins = []
        for i, (rho, xt) in enumerate(zip(s.radii, s.points)):
            try:
                ty = tangent_plane_Y(fam, xt, th.rank_tol)
            except NotOnSmoothStratum as exc:
                margins.append(np.nan)
                wit.append({"t0": s.t0, "branch": s.branch, "radius": rho, "point": xt, "reason": str(exc)})
                continue
            _, grho = control_function(xt)
            d = np.vstack([np.eye(m)[-1], grho / np.linalg.norm(grho)])
            sv = np.linalg.svd(d @ ty.basis.T, compute_uv=False)
            rank = int(np.sum(sv > th.m_tol * sv[0])) if sv[0] > 0 else 0
            margin = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
            margins.append(margin)
            rows.append({"t0": s.t0, "branch": s.branch, "radius": rho, "margin": margin, "rank": rank})
            if margin < th.m_tol:
                wit.append({"t0": s.t0, "branch": s.branch, "radius": rho, "point": xt, "margin": margin})
        tail = [margins[i] for i in _tail(s, th)]
        if not tail:
            per_seq.append((INCONCLUSIVE, "no points at or below rho_eval"))
        elif any(np.isnan(v) for v in tail):
            per_seq.append((INCONCLUSIVE, "non-smooth point of Y in the tail"))
        else:
            per_seq.append((HOLDS if min(tail) >= th.m_tol else FAILS, f"min margin {min(tail):.3e}"))
    return _finish("m", strat.sequences, per_seq, rows, wit, th, ("t0", "branch", "radius", "margin", "rank"))


def _trend_ok(radii, gaps, th: Thresholds) -> bool:
    """Gaps must not grow as rho shrinks: slope of log-gap against log-rho >= -slope_tol."""
    gaps = np.asarray(gaps)
    if len(gaps) < 2 or gaps.max() <= GAP_ZERO:
        return True
    slope = np.polyfit(np.log(radii), np.log(np.maximum(gaps, GAP_ZERO)), 1)[0]
    return bool(slope >= -th.slope_tol)


def a_regularity_test(fam: DeformationFamily, strat: StratificationSpec, th: Thresholds = Thresholds()) -> RegularityReport:
    """Whitney (a) for (Y, Z): the t-axis must lie in the limits of T Y, measured by gap(e_t, T Y)."""
    if strat.empty_Y:
        return _empty_report("a", th)
    et = _t_axis(fam.n + 1)
    rows, wit, per_seq = [], [], []
    for s in strat.sequences:
        gaps = []
        for rho, xt in zip(s.radii, s.points):
            try:
                ty = tangent_plane_Y(fam, xt, th.rank_tol)
            except NotOnSmoothStratum as exc:
                gaps.append(np.nan)
                wit.append({"t0": s.t0, "branch": s.branch, "radius": rho, "point": xt, "reason": str(exc)})
                continue
            gv = gap(et, ty).gap
            gaps.append(gv)
            rows.append({"t0": s.t0, "branch": s.branch, "radius": rho, "gap": gv})
        idx = _tail(s, th)
        tail = [gaps[i] for i in idx]
        if not tail or any(np.isnan(v) for v in tail):
            per_seq.append((INCONCLUSIVE, "no usable points at or below rho_eval"))
            continue
        ok = max(tail) < th.gap_pass and _trend_ok([s.radii[i] for i in idx], tail, th)
        if not ok:
            k = idx[int(np.argmax(tail))]
            wit.append({"t0": s.t0, "branch": s.branch, "radius": s.radii[k], "point": s.points[k], "gap": gaps[k]})
        per_seq.append((HOLDS if ok else FAILS, f"max tail gap {max(tail):.3e}"))
    return _finish("a", strat.sequences, per_seq, rows, wit, th, ("t0", "branch", "radius", "gap"))


def kernel_tangent_plane(fam: DeformationFamily, xt) -> Subspace:
    """ker d rho_hat ∩ T Y, as the orthogonal complement of {grad rho_hat, grad F_j}."""
    xt = np.asarray(xt, dtype=float)
    _, grho = control_function(xt)
    normals = np.vstack([grho / np.linalg.norm(grho), fam.grad_F(xt[:-1], xt[-1])])
    return null_space(normals)


def c_regularity_test(fam: DeformationFamily, strat: StratificationSpec, th: Thresholds = Thresholds()) -> RegularityReport:
    """(c) for (Y, Z) with the control function rho_hat, measured directly on ker d rho_hat ∩ T Y.

    A sequence counts as pre-regular when consecutive planes in the tail differ by
    less than ``cauchy_tol``; the plane at the smallest radius stands in for the limit.
    """
    if strat.empty_Y:
        return _empty_report("c", th)
    want = strat.dim_Y - 1
    et = _t_axis(fam.n + 1)
    rows, wit, per_seq = [], [], []
    for s in strat.sequences:
        planes, gaps, anomalies = [], [], []
        for rho, xt in zip(s.radii, s.points):
            pl = kernel_tangent_plane(fam, xt)
            planes.append(pl)
            if pl.dim != want or pl.dim == 0:
                anomalies.append(rho)
                gaps.append(np.nan)
                wit.append({"t0": s.t0, "branch": s.branch, "radius": rho, "point": xt,
                            "reason": f"dim(ker d rho ∩ T Y) = {pl.dim}, expected {want}"})
                continue
            gaps.append(gap(et, pl).gap)
        cauchy = [np.nan] + [
            gap(a, b).gap if a.dim == b.dim and a.dim > 0 else np.nan for a, b in zip(planes, planes[1:])
        ]
        for rho, gv, cd, pl in zip(s.radii, gaps, cauchy, planes):
            rows.append({"t0": s.t0, "branch": s.branch, "radius": rho, "gap": gv, "cauchy": cd, "dim": pl.dim})
        idx = _tail(s, th)
        tail = [gaps[i] for i in idx]
        tail_cauchy = [cauchy[i] for i in idx[1:]]
        if not tail:
            per_seq.append((INCONCLUSIVE, "no points at or below rho_eval"))
        elif any(np.isnan(v) for v in tail):
            per_seq.append((INCONCLUSIVE, "(m)/(c_d) anomaly: kernel plane of unexpected dimension"))
        elif any(not (c < th.cauchy_tol) for c in tail_cauchy):
            per_seq.append((INCONCLUSIVE, "sequence not pre-regular (Cauchy defect above cauchy_tol)"))
        else:
            ok = max(tail) < th.gap_pass
            if not ok:
                k = idx[int(np.argmax(tail))]
                wit.append({"t0": s.t0, "branch": s.branch, "radius": s.radii[k], "point": s.points[k], "gap": gaps[k]})
            per_seq.append((HOLDS if ok else FAILS, f"max tail gap {max(tail):.3e}"))
    tau = [{"t0": s.t0, "branch": s.branch, "tau": kernel_tangent_plane(fam, s.points[-1]).to_list()}
           for s in strat.sequences if s.points]
    return _finish("c", strat.sequences, per_seq, rows, wit, th,
                   ("t0", "branch", "radius", "gap", "cauchy", "dim"), extra={"tau": tau})


def cd_condition_test(fam: DeformationFamily, strat: StratificationSpec, th: Thresholds = Thresholds()) -> RegularityReport:
    """(c_d) through gap(l, W) with l = span grad rho_hat and W = span grad F_j.

    The transversality of ker d rho_hat and T Y is cross-checked by counting
    small principal angles: the two readings must agree at every point.
    """
    if strat.empty_Y:
        return _empty_report("c_d", th)
    want = strat.dim_Y - 1
    m = fam.n + 1
    rows, wit, per_seq = [], [], []
    mismatches = 0
    for s in strat.sequences:
        gaps = []
        for rho, xt in zip(s.radii, s.points):
            _, grho = control_function(xt)
            ell = Subspace((grho / np.linalg.norm(grho))[None], m)
            normals = fam.grad_F(xt[:-1], xt[-1])
            try:
                sigma = tangent_plane_Y(fam, xt, th.rank_tol)
            except NotOnSmoothStratum as exc:
                gaps.append(np.nan)
                wit.append({"t0": s.t0, "branch": s.branch, "radius": rho, "point": xt, "reason": str(exc)})
                continue
            w = Subspace.span(normals)
            gv = gap(ell, w).gap
            mu = null_space(grho[None])
            idim = intersection_dim(mu, sigma, th.angle_tol)
            agree = (gv > 10 * th.angle_tol) == (idim == want)
            mismatches += not agree
            gaps.append(gv)
            rows.append({"t0": s.t0, "branch": s.branch, "radius": rho, "gap": gv,
                         "intersection_dim": idim, "readings_agree": agree})
            if gv < th.cd_floor:
                wit.append({"t0": s.t0, "branch": s.branch, "radius": rho, "point": xt, "gap": gv})
        tail = [gaps[i] for i in _tail(s, th)]
        if not tail or any(np.isnan(v) for v in tail):
            per_seq.append((INCONCLUSIVE, "no usable points at or below rho_eval"))
        else:
            per_seq.append((HOLDS if min(tail) >= th.cd_floor else FAILS, f"min tail gap {min(tail):.3e}"))
    notes = [] if not mismatches else [f"{mismatches} point(s) where the gap and intersection-dimension readings disagree"]
    return _finish("c_d", strat.sequences, per_seq, rows, wit, th,
                   ("t0", "branch", "radius", "gap", "intersection_dim", "readings_agree"),
                   notes, {"readings_mismatches": mismatches})


@dataclass
class PipelineConfig:
    width: float = 1.0
    radius_cap: float = 1.0
    rho0: float = 0.1
    gamma: float = 10 ** (-0.25)
    shells: int = 17
    samples: int = 500
    restarts: int = 5
    seed: int = 0
    t0s: tuple[float, ...] = (0.0, 0.5, 1.0)
    branches: int = 4
    thresholds: Thresholds = field(default_factory=Thresholds)

    @property
    def radii(self) -> np.ndarray:
        return shell_radii(self.rho0, self.gamma, self.shells)

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in ("width", "radius_cap", "rho0", "gamma", "shells", "samples",
                                            "restarts", "seed", "branches")}
        d["t0s"] = list(self.t0s)
        d["thresholds"] = self.thresholds.to_json()
        return d


@dataclass
class PipelineResult:
    kuo: KuoReport
    reports: dict[str, RegularityReport]
    stratification: StratificationSpec
    implication_consistent: bool
    implication_counterexamples: list[dict]
    theorem_consistent: bool
    timings: dict[str, float]

    @property
    def verdicts(self) -> dict[str, str]:
        out = {"kuo": self.kuo.verdict}
        out.update({k: r.verdict for k, r in self.reports.items()})
        return out

    def to_json(self) -> dict:
        return jsonable({
            "empty_Y": self.stratification.empty_Y,
            "dim_Y": self.stratification.dim_Y,
            "verdicts": self.verdicts,
            "implication_consistent": self.implication_consistent,
            "implication_counterexamples": self.implication_counterexamples,
            "theorem_consistent": self.theorem_consistent,
            "kuo": self.kuo.to_json(),
            "conditions": {k: r.to_json() for k, r in self.reports.items()},
            "sequences": [s.to_json() for s in self.stratification.sequences],
        })


def implication_counterexamples(reports: dict[str, RegularityReport]) -> list[dict]:
    """Sequences where (a), (m), (c_d) hold but (c) fails."""
    if reports["c"].extra.get("empty_Y"):
        return []
    out = []
    per = {k: reports[k].extra["per_sequence"] for k in ("a", "m", "c_d", "c")}
    for i, entry in enumerate(per["c"]):
        hyp = all(per[k][i]["verdict"] == HOLDS for k in ("a", "m", "c_d"))
        if hyp and entry["verdict"] == FAILS:
            out.append({"t0": entry["t0"], "branch": entry["branch"]})
    if not out:
        hyp = all(reports[k].verdict == HOLDS for k in ("a", "m", "c_d"))
        if hyp and reports["c"].verdict == FAILS:
            out.append({"t0": None, "branch": None})
    return out


def full_pipeline(fam: DeformationFamily, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Kuo scan, then (a), (m), (c_d), then an independent (c) test, with the implication check."""
    th = config.thresholds
    timings = {}
    t = time.perf_counter()
    horn = HornSpec(fam.r, config.width, config.radius_cap)
    try:
        kuo = kuo_check(fam.f, fam.r, horn, config.radii, config.samples, config.seed, th, config.restarts)
    except AllShellsEmptyError as exc:
        kuo = KuoReport("kuo", fam.r - 1, ShellScan(), float("nan"), float("nan"), INCONCLUSIVE, [],
                        {"horn": horn.to_json()}, th.to_json(), [str(exc)])
    timings["kuo"] = time.perf_counter() - t
    t = time.perf_counter()
    strat = stratify(fam, config.radii, config.t0s, config.branches, config.seed, th)
    timings["stratify"] = time.perf_counter() - t
    reports = {}
    for name, test in (("a", a_regularity_test), ("m", condition_m_check), ("c_d", cd_condition_test),
                       ("c", c_regularity_test)):
        t = time.perf_counter()
        reports[name] = test(fam, strat, th)
        timings[name] = time.perf_counter() - t
    bad = implication_counterexamples(reports)
    theorem_ok = kuo.verdict != HOLDS or reports["c"].verdict == HOLDS
    return PipelineResult(kuo, reports, strat, not bad, bad, theorem_ok, timings)
