"""Command-line front end: kuo, kuo2, regularity, gap and sample-horn.

Every run writes its reports atomically into ``--out``. Report files are
deterministic for a fixed config and seed; wall-clock timings go to a separate
``timing.json`` so the reports themselves can be compared byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .horn import HornSpec, sample_shell, shell_radii
from .poly import JetMismatchError, MapGerm, ParseError
from .regularity import (
    FAILS,
    HOLDS,
    DeformationFamily,
    PipelineConfig,
    Thresholds,
    claim_II_and_III_verify,
    full_pipeline,
    jsonable,
    key_estimation_verify,
    kuo_check,
    lemma_cd_verify,
    second_kuo_check,
    t_grid,
)
from .subspace import Subspace, gap, intersection_dim, principal_angles

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_FAILS = 2
EXIT_INCONCLUSIVE = 3
EXIT_IMPLICATION = 4

PIPELINE_CONDITIONS = ("kuo", "a", "m", "c_d", "c")
CLAIM_CONDITIONS = ("claimII", "lemma_cd", "key_estimation")


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a run depends on. Written back into every report with defaults filled in."""

    f: dict | None = None
    g: dict | None = None
    perturbations: list = field(default_factory=list)
    r: int = 2
    width: float = 1.0
    radius_cap: float = 1.0
    rho0: float = 0.1
    gamma: float = 10 ** (-0.25)
    shells: int = 17
    samples: int = 2000
    restarts: int = 5
    seed: int = 0
    t_grid: int = 11
    branches: int = 4
    delta: float = 0.5
    claims: bool = False
    claim_width: float = 0.25
    require: list = field(default_factory=lambda: list(PIPELINE_CONDITIONS))
    thresholds: dict = field(default_factory=lambda: Thresholds().to_json())

    def validate(self) -> None:
        if self.r < 1:
            raise InputError("r must be >= 1")
        for name in ("width", "radius_cap", "rho0", "samples", "shells", "restarts", "branches", "t_grid",
                     "claim_width", "delta"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if not 0 < self.gamma < 1:
            raise InputError("gamma must lie in (0, 1) so the shell radii decrease")
        if self.rho0 >= self.radius_cap:
            raise InputError("rho0 must be below radius_cap")
        if self.seed < 0:
            raise InputError("seed must be a non-negative integer")
        known = set(PIPELINE_CONDITIONS + CLAIM_CONDITIONS)
        bad = [c for c in self.require if c not in known]
        if bad:
            raise InputError(f"unknown condition(s) in require: {', '.join(bad)}")

    @property
    def th(self) -> Thresholds:
        return Thresholds().replace(**self.thresholds)

    @property
    def radii(self) -> np.ndarray:
        return shell_radii(self.rho0, self.gamma, self.shells)

    @property
    def horn(self) -> HornSpec:
        return HornSpec(self.r, self.width, self.radius_cap)

    def to_json(self) -> dict:
        d = asdict(self)
        d["thresholds"] = self.th.to_json()
        return jsonable(d)


def load_json_arg(value: str):
    """Inline JSON, or a path to a JSON file."""
    text = value.strip()
    if not text.startswith(("{", "[")):
        path = Path(value)
        if not path.is_file():
            raise InputError(f"{value}: not a file and not inline JSON")
        text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {value[:40]!r}: {exc}") from None


def load_germ(data) -> MapGerm:
    if isinstance(data, str):
        data = load_json_arg(data)
    if not isinstance(data, dict):
        raise InputError("a germ is a JSON object with 'nvars' and 'components'")
    try:
        return MapGerm.from_json(data)
    except ParseError as exc:
        raise InputError(f"cannot parse germ: {exc}") from None


def _resolve_germ(value, base: Path):
    if isinstance(value, str) and not value.strip().startswith("{"):
        path = base / value
        return load_json_arg(str(path) if path.is_file() else value)
    if isinstance(value, str):
        return load_json_arg(value)
    return value


def _parse_threshold(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep:
        raise InputError(f"--threshold expects name=value, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise InputError(f"--threshold {name}: {value!r} is not a number") from None


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        data = load_json_arg(args.config)
        if not isinstance(data, dict):
            raise InputError("the config file must hold a JSON object")
        names = {f.name for f in fields(RunConfig)}
        unknown = set(data) - names
        if unknown:
            raise InputError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        # germ paths inside a config file are relative to that file
        base = Path(args.config).parent if Path(args.config).is_file() else Path(".")
        for k, v in data.items():
            if k == "thresholds":
                cfg.thresholds = {**cfg.thresholds, **v}
            elif k in ("f", "g"):
                setattr(cfg, k, _resolve_germ(v, base))
            elif k == "perturbations":
                cfg.perturbations = [_resolve_germ(e, base) for e in v]
            else:
                setattr(cfg, k, v)
    flag_map = {"seed": "seed", "r": "r", "width": "width", "shells": "shells", "samples": "samples",
                "t_grid": "t_grid", "delta": "delta"}
    for attr, key in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "f", None):
        cfg.f = load_json_arg(args.f) if isinstance(args.f, str) else args.f
    if getattr(args, "g", None):
        vals = args.g
        if args.command == "kuo2":
            cfg.perturbations = [load_json_arg(v) for v in vals]
        else:
            cfg.g = load_json_arg(vals[0])
    if getattr(args, "claims", False):
        cfg.claims = True
    if getattr(args, "require", None):
        cfg.require = [c.strip() for c in args.require.split(",") if c.strip()]
    for item in args.threshold or []:
        name, value = _parse_threshold(item)
        cfg.thresholds = {**cfg.thresholds, name: value}
    try:
        cfg.th
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    cfg.validate()
    return cfg


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _header(command: str, cfg: RunConfig) -> dict:
    return {"tool": "stratcheck", "version": __version__, "command": command, "config": cfg.to_json()}


def _verdict_exit(verdicts) -> int:
    verdicts = list(verdicts)
    if all(v == HOLDS for v in verdicts):
        return EXIT_OK
    if FAILS in verdicts:
        return EXIT_FAILS
    return EXIT_INCONCLUSIVE


def cmd_kuo(cfg: RunConfig, out: Path) -> int:
    if cfg.f is None:
        raise InputError("kuo needs a germ f")
    f = load_germ(cfg.f)
    t0 = time.perf_counter()
    rep = kuo_check(f, cfg.r, cfg.horn, cfg.radii, cfg.samples, cfg.seed, cfg.th, cfg.restarts)
    elapsed = time.perf_counter() - t0
    write_atomic(out / "kuo.json", dump({**_header("kuo", cfg), "report": rep.to_json()}))
    write_atomic(out / "kuo_shells.csv", rep.to_csv())
    write_atomic(out / "timing.json", dump({"kuo": elapsed}))
    print(f"kuo: {rep.verdict}  C_est={rep.C_est:.6g}  slope={rep.slope:.6g}")
    return _verdict_exit([rep.verdict])


def cmd_kuo2(cfg: RunConfig, out: Path) -> int:
    if cfg.f is None or not cfg.perturbations:
        raise InputError("kuo2 needs a germ f and at least one perturbation g")
    f = load_germ(cfg.f)
    gs = [load_germ(g) for g in cfg.perturbations]
    t0 = time.perf_counter()
    reps = second_kuo_check(f, gs, cfg.r, cfg.delta, cfg.horn, cfg.radii, cfg.samples, cfg.seed, cfg.th,
                            cfg.restarts)
    elapsed = time.perf_counter() - t0
    write_atomic(out / "kuo2.json", dump({**_header("kuo2", cfg), "reports": [r.to_json() for r in reps]}))
    for i, rep in enumerate(reps):
        write_atomic(out / f"kuo2_shells_{i}.csv", rep.to_csv())
        print(f"kuo2[{i}]: {rep.verdict}  C_est={rep.C_est:.6g}  slope={rep.slope:.6g}")
    write_atomic(out / "timing.json", dump({"kuo2": elapsed}))
    return _verdict_exit(r.verdict for r in reps)


def run_regularity(cfg: RunConfig):
    """The pipeline plus, if requested, the quantitative claims on a narrower horn."""
    if cfg.f is None or cfg.g is None:
        raise InputError("regularity needs germs f and g")
    f, g = load_germ(cfg.f), load_germ(cfg.g)
    if f.nvars != g.nvars or f.ncomps != g.ncomps:
        raise InputError("f and g must have the same number of variables and components")
    fam = DeformationFamily(f, g, cfg.r)
    ts = t_grid(cfg.t_grid, fam.J)
    pc = PipelineConfig(width=cfg.width, radius_cap=cfg.radius_cap, rho0=cfg.rho0, gamma=cfg.gamma,
                        shells=cfg.shells, samples=cfg.samples, restarts=cfg.restarts, seed=cfg.seed,
                        t0s=tuple(float(t) for t in ts), branches=cfg.branches, thresholds=cfg.th)
    res = full_pipeline(fam, pc)
    reports = dict(res.reports)
    timings = dict(res.timings)
    if cfg.claims:
        spec = HornSpec(cfg.r, cfg.claim_width, cfg.radius_cap)
        kuo_ok = res.kuo.verdict == HOLDS
        for name, fn in (("claimII", claim_II_and_III_verify), ("lemma_cd", lemma_cd_verify),
                         ("key_estimation", key_estimation_verify)):
            t0 = time.perf_counter()
            kw = {"eps5": 0.5} if name == "claimII" else {}
            reports[name] = fn(fam, cfg.r, spec, radii=cfg.radii, samples=min(cfg.samples, 500),
                               seed=cfg.seed, ts=ts, th=cfg.th, kuo_holds=kuo_ok, **kw)
            timings[name] = time.perf_counter() - t0
    return res, reports, timings


def cmd_regularity(cfg: RunConfig, out: Path) -> int:
    res, reports, timings = run_regularity(cfg)
    verdicts = {"kuo": res.kuo.verdict, **{k: r.verdict for k, r in reports.items()}}
    body = {
        **_header("regularity", cfg),
        "verdicts": verdicts,
        "kuo": res.kuo.to_json(),
        "reports": {k: r.to_json() for k, r in reports.items()},
        "stratification": {
            "empty_Y": res.stratification.empty_Y,
            "dim_Y": res.stratification.dim_Y,
            "labels": list(res.stratification.labels),
            "sequences": [s.to_json() for s in res.stratification.sequences],
        },
        "implication_consistent": res.implication_consistent,
        "implication_counterexamples": res.implication_counterexamples,
        "theorem_consistent": res.theorem_consistent,
    }
    write_atomic(out / "regularity.json", dump(body))
    write_atomic(out / "kuo_shells.csv", res.kuo.to_csv())
    for k, r in reports.items():
        write_atomic(out / f"regularity_{k}.csv", r.to_csv())
    write_atomic(out / "timing.json", dump(timings))
    for k, v in verdicts.items():
        print(f"{k}: {v}")
    if not res.implication_consistent:
        print("implication check FAILED: (a), (m), (c_d) hold but (c) does not", file=sys.stderr)
        return EXIT_IMPLICATION
    return _verdict_exit(verdicts.get(k, "inconclusive") for k in cfg.require)


def load_subspace(value: str) -> Subspace:
    data = load_json_arg(value)
    if isinstance(data, dict):
        data = data.get("basis")
    try:
        rows = np.array(data, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{value}: expected a JSON array of basis vectors") from None
    if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] == 0:
        raise InputError(f"{value}: expected a non-empty list of equal-length vectors")
    if not np.all(np.isfinite(rows)):
        raise InputError(f"{value}: non-finite entries")
    try:
        return Subspace.span(rows)
    except ValueError as exc:
        raise InputError(f"{value}: {exc}") from None


def cmd_gap(args) -> int:
    a, b = load_subspace(args.first), load_subspace(args.second)
    if a.ambient != b.ambient:
        raise InputError(f"ambient dimensions differ: {a.ambient} vs {b.ambient}")
    if a.dim > b.dim:
        raise InputError(f"first subspace has dimension {a.dim} > {b.dim}; the gap is defined for dim l <= dim W")
    res = gap(a, b)
    angles = principal_angles(a, b)
    idim = intersection_dim(a, b, args.angle_tol)
    print(f"gap: {res.gap!r}")
    print("angles: " + " ".join(repr(float(x)) for x in angles))
    print(f"intersection_dim: {idim}")
    return EXIT_OK


def cmd_sample_horn(cfg: RunConfig, out: Path) -> int:
    if cfg.f is None:
        raise InputError("sample-horn needs a germ f")
    f = load_germ(cfg.f)
    lines = ["radius," + ",".join(f"x{i + 1}" for i in range(f.nvars)) + ",abs_f"]
    total = 0
    for k, rho in enumerate(cfg.radii):
        shell = sample_shell(f, cfg.horn, float(rho), cfg.samples, cfg.seed + k)
        vals = np.linalg.norm(f(shell.points), axis=-1) if len(shell.points) else []
        for x, v in zip(shell.points, vals):
            lines.append(",".join(repr(float(c)) for c in (rho, *x, v)))
        total += len(shell.points)
        print(f"radius {rho:.6g}: {len(shell.points)} point(s)")
    write_atomic(out / "horn_samples.csv", "\n".join(lines) + "\n")
    print(f"{total} horn point(s) written")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; exit code 2 means "fails"
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stratcheck", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"stratcheck {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, germs):
        sp.add_argument("--config", help="JSON config file (or inline JSON)")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--r", type=int, help="jet order r")
        sp.add_argument("--width", type=float, help="horn width")
        sp.add_argument("--shells", type=int, help="number of shells")
        sp.add_argument("--samples", type=int, help="samples per shell")
        sp.add_argument("--t-grid", dest="t_grid", type=int, help="points of the t-grid in [0, 1]")
        sp.add_argument("--threshold", action="append", metavar="NAME=VALUE", help="override a threshold")
        if germs >= 1:
            sp.add_argument("--f", help="germ f: JSON file or inline JSON")
        if germs >= 2:
            sp.add_argument("--g", action="append", help="germ g: JSON file or inline JSON")

    common(sub.add_parser("kuo", help="estimate the Kuo constant of f"), 1)
    sp = sub.add_parser("kuo2", help="second Kuo condition against given perturbations")
    common(sp, 2)
    sp.add_argument("--delta", type=float)
    sp = sub.add_parser("regularity", help="(a), (m), (c_d), (c) for the deformation from f to g")
    common(sp, 2)
    sp.add_argument("--claims", action="store_true", help="also run the 1/2 and 1/4 distance bounds")
    sp.add_argument("--require", help="comma-separated conditions that must hold for exit 0")
    sp = sub.add_parser("gap", help="gap, principal angles and intersection dimension of two subspaces")
    sp.add_argument("first", help="JSON array of basis vectors (file or inline)")
    sp.add_argument("second", help="JSON array of basis vectors (file or inline)")
    sp.add_argument("--angle-tol", type=float, default=1e-7)
    common(sub.add_parser("sample-horn", help="write horn points on each shell to CSV"), 1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "gap":
            if not 0 < args.angle_tol < np.pi / 4:
                raise InputError("--angle-tol must lie in (0, pi/4)")
            return cmd_gap(args)
        cfg = build_config(args)
        out = Path(args.out)
        handler = {"kuo": cmd_kuo, "kuo2": cmd_kuo2, "regularity": cmd_regularity,
                   "sample-horn": cmd_sample_horn}[args.command]
        return handler(cfg, out)
    except JetMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
