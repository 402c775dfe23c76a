"""Sampled checks of the quantitative inequalities behind the (c_d) argument.

All verifiers sample horn points shell by shell, evaluate the quantities on a
t-grid, and record one measurement row per (radius, t). A shell passes when
every sample satisfies the inequality; the verdict holds when every non-empty
shell at or below ``rho_eval`` passes. The largest radius below which all shells
pass is reported as ``searched_radius``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..horn import HornSpec, map_ordered, sample_shell, shell_radii, shell_seed
from ..poly import MapGerm, jet
from ..subspace import (
    elimination_basis_batch,
    gap_batch,
    kuo_distance_batch,
    kuo_projection_batch,
    orthogonal_projection_batch,
)
from .family import DeformationFamily, t_grid
from .kuo import AllShellsEmptyError, kuo_check
from .report import INCONCLUSIVE, VACUOUS, RegularityReport, Thresholds, tail_verdict

CHAIN_TOL = 1e-12
COLLAPSE_TOL = 1e-12


def _shells(germ: MapGerm, spec: HornSpec, radii, samples: int, seed: int):
    def work(item):
        k, rho = item
        return float(rho), sample_shell(germ, spec, float(rho), samples, shell_seed(seed, k)).points

    return map_ordered(work, list(enumerate(radii)))


def _kuo_gate(f: MapGerm, r: int, spec: HornSpec, radii, samples, seed, th, kuo_holds) -> tuple[bool, str]:
    if kuo_holds is None:
        try:
            kuo_holds = kuo_check(f, r, spec, radii, samples, seed, th).holds
        except AllShellsEmptyError:
            kuo_holds = False
    note = "" if kuo_holds else "Kuo condition not established for f: measurements reported, claim not asserted"
    return bool(kuo_holds), note


def _run(
    name: str,
    horn_germ: MapGerm,
    spec: HornSpec,
    radii,
    samples: int,
    seed: int,
    ts: Sequence[float],
    measure: Callable[[np.ndarray, float], dict],
    primary: str,
    sense: str,
    bound: float,
    th: Thresholds,
    columns: Sequence[str],
    gated: bool = True,
    gate_note: str = "",
) -> RegularityReport:
    """Shared scan loop. ``measure`` returns per-point arrays plus a boolean ``defined`` mask."""
    rows, wits = [], []
    shell_radius, shell_ok = [], []
    for rho, pts in _shells(horn_germ, spec, radii, samples, seed):
        if len(pts) == 0:
            rows.append({"radius": rho, "n_points": 0})
            continue
        ok_all = True
        for t in ts:
            q = measure(pts, float(t))
            defined = q.pop("defined")
            row = {"radius": rho, "t": float(t), "n_points": len(pts), "n_undefined": int((~defined).sum())}
            for key, vals in q.items():
                vd = vals[defined]
                if vd.size:
                    row[f"min_{key}"] = float(vd.min())
                    row[f"max_{key}"] = float(vd.max())
            if (~defined).any():
                k = int(np.flatnonzero(~defined)[0])
                wits.append({"radius": rho, "t": float(t), "point": pts[k], "reason": "basis undefined (rank collapse)"})
                ok_all = False
            vals = q[primary][defined]
            if vals.size:
                bad = vals < bound if sense == "min" else vals > bound
                if bad.any():
                    k = int(np.argmin(vals) if sense == "min" else np.argmax(vals))
                    wits.append({"radius": rho, "t": float(t), "point": pts[defined][k], primary: float(vals[k])})
                    ok_all = False
            rows.append(row)
        shell_radius.append(rho)
        shell_ok.append(ok_all)
    if not shell_radius:
        verdict, rho_star = INCONCLUSIVE, None
    else:
        verdict, rho_star = tail_verdict(shell_radius, shell_ok, th)
    notes = []
    if verdict == INCONCLUSIVE:
        notes.append("no non-empty shell at or below rho_eval")
    if not gated:
        notes.append(gate_note)
        verdict = VACUOUS
    extra = {"searched_radius": rho_star, "bound": bound, "quantity": primary, "horn": spec.to_json(),
             "t_grid": [float(t) for t in ts]}
    return RegularityReport(name, verdict, rows, wits, th.to_json(), notes, extra, tuple(columns))


def _defaults(radii, ts, fam_J=None):
    radii = shell_radii() if radii is None else radii
    if ts is None:
        ts = t_grid(11, fam_J) if fam_J is not None else [0.0]
    return radii, ts


def claim_I_verify(
    f: MapGerm, r: int, spec: HornSpec, eps1: float,
    radii=None, samples: int = 500, seed: int = 0, th: Thresholds = Thresholds(),
) -> RegularityReport:
    """d(x, V_x) >= (1 - eps1)|x| on H_r(z; w), V_x spanned by the gradients of z = j^r f."""
    radii, ts = _defaults(radii, None)
    z = jet(f, r)
    horn = HornSpec(r, spec.width, spec.radius_cap)

    def measure(x, _t):
        v = z.jacobian(x)
        scale = np.linalg.norm(v, axis=-1).max(axis=-1)
        defined = kuo_distance_batch(v) > COLLAPSE_TOL * scale
        proj = orthogonal_projection_batch(x, v)
        nx = np.linalg.norm(x, axis=-1)
        return {"dist_ratio": np.linalg.norm(x - proj, axis=-1) / nx, "defined": defined}

    return _run("claimI", z, horn, radii, samples, seed, ts, measure, "dist_ratio", "min", 1 - eps1, th,
                ("radius", "t", "n_points", "n_undefined", "min_dist_ratio", "max_dist_ratio"))


def claim_IV_verify(
    fam: DeformationFamily, r: int, spec: HornSpec, eps2: float,
    radii=None, samples: int = 500, seed: int = 0, ts=None, th: Thresholds = Thresholds(),
) -> RegularityReport:
    """(1 - eps2)|N_j| <= |N_{t,j}| <= (1 + eps2)|N_j| for the elimination bases of grad z and grad f_t."""
    radii, ts = _defaults(radii, ts, fam.J)
    z = jet(fam.f, r)
    horn = HornSpec(r, spec.width, spec.radius_cap)

    def measure(x, t):
        nz, okz = elimination_basis_batch(z.jacobian(x))
        nt, okt = elimination_basis_batch(fam.grad_ft(x, t))
        defined = okz & okt
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.linalg.norm(nt, axis=-1) / np.linalg.norm(nz, axis=-1)
        dev = np.abs(ratio - 1.0).max(axis=-1)
        return {"ratio_dev": dev, "ratio_lo": ratio.min(axis=-1), "ratio_hi": ratio.max(axis=-1), "defined": defined}

    rep = _run("claimIV", fam.f, horn, radii, samples, seed, ts, measure, "ratio_dev", "max", eps2, th,
               ("radius", "t", "n_points", "n_undefined", "min_ratio_lo", "max_ratio_hi", "max_ratio_dev"))
    return rep


def claim_II_and_III_verify(
    fam: DeformationFamily, r: int, spec: HornSpec, eps5: float,
    radii=None, samples: int = 500, seed: int = 0, ts=None, th: Thresholds = Thresholds(),
    kuo_holds: bool | None = None,
) -> RegularityReport:
    """d(x, V_{t,x}) >= |x|/2 along the deformation, plus the perturbation chain

    |d(x,V_{t,x}) - d(x,V_x)| <= |v_t - v| <= |v_t| + |v| <= eps5 |x|

    where v, v_t are projections of x computed from the elimination bases. The
    chain verdict and the projection cross-check go in ``extra``.
    """
    radii, ts = _defaults(radii, ts, fam.J)
    z = jet(fam.f, r)
    horn = HornSpec(r, spec.width, spec.radius_cap)
    gated, note = _kuo_gate(fam.f, r, horn, radii, samples, seed, th, kuo_holds)
    stats = {"max_proj_dev": 0.0, "chain_violations": 0}

    def measure(x, t):
        vz = z.jacobian(x)
        vt = fam.grad_ft(x, t)
        nz, okz = elimination_basis_batch(vz)
        nt, okt = elimination_basis_batch(vt)
        defined = okz & okt
        nx = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = kuo_projection_batch(x, vz, nz)
            v_t = kuo_projection_batch(x, vt, nt)
            bound_v = (np.abs(np.einsum("nm,npm->np", x, vz)) / np.linalg.norm(nz, axis=-1)).sum(axis=-1)
        dev = np.maximum(np.linalg.norm(v - orthogonal_projection_batch(x, vz), axis=-1),
                         np.linalg.norm(v_t - orthogonal_projection_batch(x, vt), axis=-1)) / nx
        d = np.linalg.norm(x - v, axis=-1)
        d_t = np.linalg.norm(x - v_t, axis=-1)
        diff = np.abs(d_t - d) / nx
        vdiff = np.linalg.norm(v_t - v, axis=-1) / nx
        vr = np.linalg.norm(v, axis=-1) / nx
        vtr = np.linalg.norm(v_t, axis=-1) / nx
        chain = (diff <= vdiff + CHAIN_TOL) & (vdiff <= vr + vtr + CHAIN_TOL) & (vr <= bound_v / nx + CHAIN_TOL)
        if defined.any():
            stats["max_proj_dev"] = max(stats["max_proj_dev"], float(dev[defined].max()))
            stats["chain_violations"] += int((~chain[defined]).sum())
        return {
            "dt_ratio": d_t / nx, "d_ratio": d / nx, "v_ratio": vr, "vt_ratio": vtr,
            "diff_ratio": diff, "vdiff_ratio": vdiff, "sum_ratio": vr + vtr, "defined": defined,
        }

    rep = _run("claimII", fam.f, horn, radii, samples, seed, ts, measure, "dt_ratio", "min", 0.5 - th.claim_slack,
               th, ("radius", "t", "n_points", "n_undefined", "min_dt_ratio", "min_d_ratio", "max_v_ratio",
                    "max_vt_ratio", "max_diff_ratio", "max_vdiff_ratio", "max_sum_ratio"), gated, note)
    # chain bound: |v_t| + |v| <= eps5 |x| on every shell at or below rho_eval
    by_radius: dict[float, bool] = {}
    for row in rep.measurements:
        if "max_sum_ratio" in row:
            by_radius[row["radius"]] = by_radius.get(row["radius"], True) and row["max_sum_ratio"] <= eps5
    if by_radius:
        v3, rho3 = tail_verdict(list(by_radius), list(by_radius.values()), th)
    else:
        v3, rho3 = INCONCLUSIVE, None
    rep.extra.update(
        claimIII_verdict=v3 if gated else VACUOUS,
        claimIII_searched_radius=rho3,
        eps5=eps5,
        max_projection_deviation=stats["max_proj_dev"],
        chain_violations=stats["chain_violations"],
    )
    return rep


def _lemma_quantities(fam: DeformationFamily, x: np.ndarray, t: float) -> dict:
    xo = np.concatenate([x, np.zeros((len(x), 1))], axis=1)
    gf = fam.grad_ft(x, t)
    a = np.concatenate([gf, np.zeros(gf.shape[:-1] + (1,))], axis=-1)
    b = fam.grad_F(x, t)
    m_basis, okm = elimination_basis_batch(a)
    l_basis, okl = elimination_basis_batch(b)
    nt, _ = elimination_basis_batch(gf)
    defined = okm & okl
    nx = np.linalg.norm(x, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = kuo_projection_batch(xo, a, m_basis)
        w = kuo_projection_batch(xo, b, l_basis)
        est = np.linalg.norm(l_basis, axis=-1) / np.linalg.norm(m_basis, axis=-1)
    dev = np.maximum(np.linalg.norm(u - orthogonal_projection_batch(xo, a), axis=-1),
                     np.linalg.norm(w - orthogonal_projection_batch(xo, b), axis=-1)) / nx
    m_vs_nt = np.abs(np.linalg.norm(m_basis, axis=-1) - np.linalg.norm(nt, axis=-1)).max(axis=-1)
    return {
        "dW_ratio": np.linalg.norm(xo - w, axis=-1) / nx,
        "dU_ratio": np.linalg.norm(xo - u, axis=-1) / nx,
        "u_ratio": np.linalg.norm(u, axis=-1) / nx,
        "omega_ratio": np.linalg.norm(w, axis=-1) / nx,
        "est_dev": np.abs(est - 1.0).max(axis=-1),
        "proj_dev": dev,
        "M_vs_Nt": m_vs_nt / np.linalg.norm(nt, axis=-1).max(axis=-1),
        "defined": defined,
    }


def lemma_cd_verify(
    fam: DeformationFamily, r: int, spec: HornSpec,
    radii=None, samples: int = 500, seed: int = 0, ts=None, th: Thresholds = Thresholds(),
    kuo_holds: bool | None = None,
) -> RegularityReport:
    """d((x,0), W_(x,t)) >= |x|/4 on H_r(f; w) for t in the grid.

    Also records d((x,0), U), |u|, |omega|, the ratios |L_j|/|M_j| and the
    deviation of the elimination-basis projections from orthogonal ones.
    """
    radii, ts = _defaults(radii, ts, fam.J)
    horn = HornSpec(r, spec.width, spec.radius_cap)
    gated, note = _kuo_gate(fam.f, r, horn, radii, samples, seed, th, kuo_holds)

    def measure(x, t):
        return _lemma_quantities(fam, x, t)

    return _run("lemma_cd", fam.f, horn, radii, samples, seed, ts, measure, "dW_ratio", "min",
                0.25 - th.claim_slack, th,
                ("radius", "t", "n_points", "n_undefined", "min_dW_ratio", "min_dU_ratio", "max_u_ratio",
                 "max_omega_ratio", "max_est_dev", "max_proj_dev", "max_M_vs_Nt"), gated, note)


def key_estimation_verify(
    fam: DeformationFamily, r: int, spec: HornSpec,
    radii=None, samples: int = 500, seed: int = 0, ts=None, th: Thresholds = Thresholds(),
    kuo_holds: bool | None = None,
) -> RegularityReport:
    """gap(l, W) >= 1/4 with l = span grad rho_hat(x, t) and W = span grad F_j(x, t)."""
    radii, ts = _defaults(radii, ts, fam.J)
    horn = HornSpec(r, spec.width, spec.radius_cap)
    gated, note = _kuo_gate(fam.f, r, horn, radii, samples, seed, th, kuo_holds)
    p = fam.p

    def measure(x, t):
        grho = np.concatenate([2.0 * x, np.zeros((len(x), 1))], axis=1)
        ell = (grho / np.linalg.norm(grho, axis=1, keepdims=True))[:, None, :]
        b = fam.grad_F(x, t)
        _, s, vh = np.linalg.svd(b, full_matrices=False)
        defined = s[:, -1] > COLLAPSE_TOL * s[:, 0]
        return {"gap": gap_batch(ell, vh[:, :p, :]), "defined": defined}

    return _run("key_estimation", fam.f, horn, radii, samples, seed, ts, measure, "gap", "min",
                0.25 - th.claim_slack, th, ("radius", "t", "n_points", "n_undefined", "min_gap", "max_gap"),
                gated, note)
