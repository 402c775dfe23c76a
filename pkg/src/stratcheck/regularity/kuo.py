"""Kuo condition and second Kuo condition estimated from per-shell minima of the Kuo distance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..horn import HornSpec, ShellScan, loglog_slope, scan_shells, shell_radii
from ..poly import JetMismatchError, MapGerm, jet_mismatches
from ..subspace import kuo_distance_batch
from .report import FAILS, HOLDS, INCONCLUSIVE, Thresholds, jsonable, rows_to_csv


class AllShellsEmptyError(ValueError):
    pass


@dataclass
class KuoReport:
    """Per-shell minima of kappa(grad f_1, ..., grad f_p) over a horn, and the fitted constants.

    ``C_est`` is the smallest min-kappa / rho^exponent over non-empty shells and
    ``slope`` the least-squares slope of log(min kappa) against log(rho).
    """

    name: str
    exponent: float
    scan: ShellScan
    C_est: float
    slope: float
    verdict: str
    vanishing_radii: list[float]
    params: dict
    thresholds: dict
    notes: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def rows(self) -> list[dict]:
        out = []
        for m in self.scan.minima:
            row = {"radius": m.radius, "n_points": m.n_points, "seed": m.seed}
            if not m.empty:
                row.update(min_kappa=m.value, ratio=m.value / m.radius**self.exponent, argmin=m.argmin)
            out.append(row)
        return out

    def to_json(self) -> dict:
        return jsonable({
            "condition": self.name,
            "verdict": self.verdict,
            "exponent": self.exponent,
            "C_est": self.C_est,
            "slope": self.slope,
            "vanishing_radii": self.vanishing_radii,
            "shells": self.rows(),
            "params": self.params,
            "thresholds": self.thresholds,
            "notes": self.notes,
        })

    def to_csv(self) -> str:
        return rows_to_csv(self.rows(), ("radius", "min_kappa", "ratio", "n_points", "argmin"))


def kuo_functional(f: MapGerm):
    """x -> kappa(grad f_1(x), ..., grad f_p(x)), vectorised over rows of x."""

    def fn(x: np.ndarray) -> np.ndarray:
        return kuo_distance_batch(f.jacobian(x))

    return fn


def _estimate(name, kappa_germ, horn_germ, spec, exponent, radii, samples, seed, th, restarts, threads):
    scan = scan_shells(kuo_functional(kappa_germ), horn_germ, spec, radii, samples, seed, restarts, threads)
    mins = scan.nonempty()
    params = {"horn": spec.to_json(), "radii": [float(r) for r in radii], "samples": samples,
              "seed": seed, "restarts": restarts}
    if not mins:
        raise AllShellsEmptyError(f"{name}: the horn misses every sampled sphere")
    rad = np.array([m.radius for m in mins])
    val = np.array([m.value for m in mins])
    scale = np.array([m.radius ** exponent for m in mins])
    # a minimum this far below the shell's own scale is a zero of kappa
    vanishing = [float(r) for r, v, s in zip(rad, val, scale) if v <= th.vanish_rel * s]
    clean = np.where(val <= th.vanish_rel * scale, 0.0, val)
    C_est = float(np.min(clean / scale))
    slope = loglog_slope(rad, clean)
    notes = []
    if len(mins) < len(scan.minima):
        notes.append(f"{len(scan.minima) - len(mins)} empty shell(s) skipped")
    if vanishing:
        notes.append("kappa vanishes on the horn at some shells; decay is faster than any power")
    slope_ok = np.isfinite(slope) and slope <= exponent + th.slope_tol
    if np.isnan(slope):
        verdict = INCONCLUSIVE
        notes.append("fewer than two non-empty shells; slope undefined")
    elif C_est >= th.C_floor and slope_ok:
        verdict = HOLDS
    elif C_est < th.C_floor and not slope_ok:
        verdict = FAILS
    else:
        verdict = INCONCLUSIVE
    return KuoReport(name, float(exponent), scan, C_est, slope, verdict, vanishing, params, th.to_json(), notes)


def kuo_check(
    f: MapGerm,
    r: int,
    spec: HornSpec,
    radii: Sequence[float] | None = None,
    samples: int = 2000,
    seed: int = 0,
    th: Thresholds = Thresholds(),
    restarts: int = 5,
    threads: int | None = None,
) -> KuoReport:
    """Estimate C in kappa(grad f) >= C |x|^(r-1) on H_r(f; w) ∩ {|x| < alpha}.

    holds: C_est >= C_floor and slope <= r - 1 + slope_tol;
    fails: C_est < C_floor and the slope exceeds that bound; inconclusive otherwise.
    """
    radii = shell_radii() if radii is None else radii
    if spec.degree_r != r:
        spec = HornSpec(r, spec.width, spec.radius_cap)
    return _estimate("kuo", f, f, spec, r - 1, radii, samples, seed, th, restarts, threads)


def second_kuo_check(
    f: MapGerm,
    perturbations: Sequence[MapGerm],
    r: int,
    delta: float,
    spec: HornSpec,
    radii: Sequence[float] | None = None,
    samples: int = 2000,
    seed: int = 0,
    th: Thresholds = Thresholds(),
    restarts: int = 5,
    threads: int | None = None,
) -> list[KuoReport]:
    """kappa(grad f) >= C |x|^(r - delta) on H_{r+1}(g; w), one report per perturbation g.

    Only the listed perturbations are tested; nothing is claimed about other g.
    """
    if not 0 < delta < r:
        raise ValueError("delta must lie in (0, r)")
    for g in perturbations:
        bad = jet_mismatches(f, g, r + 1)
        if bad:
            raise JetMismatchError(r + 1, bad)
    radii = shell_radii() if radii is None else radii
    horn = HornSpec(r + 1, spec.width, spec.radius_cap)
    reports = []
    for g in perturbations:
        rep = _estimate("kuo2", f, g, horn, r - delta, radii, samples, seed, th, restarts, threads)
        rep.params["perturbation"] = g.to_json()
        rep.params["delta"] = delta
        reports.append(rep)
    return reports
