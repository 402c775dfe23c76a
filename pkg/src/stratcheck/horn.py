"""Horn-neighbourhoods {x : |f(x)| <= w |x|^r} sampled on shrinking spheres.

Every shell is an independent unit of work seeded from ``(seed, shell index)``,
so scans are reproducible whatever order the shells are computed in.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .poly import MapGerm

MEMBERSHIP_RTOL = 1e-12
MAX_ITER = 200
STEP_TOL = 1e-12

PointFunctional = Callable[[np.ndarray], np.ndarray]


class EmptyShellError(ValueError):
    pass


class NonFiniteValueError(ValueError):
    def __init__(self, point: np.ndarray):
        self.point = np.asarray(point)
        super().__init__(f"functional is not finite at {self.point.tolist()}")


@dataclass(frozen=True)
class HornSpec:
    degree_r: int
    width: float
    radius_cap: float = 1.0

    def __post_init__(self):
        if self.degree_r < 1:
            raise ValueError("horn degree must be >= 1")
        if not self.width > 0:
            raise ValueError("horn width must be positive")
        if not self.radius_cap > 0:
            raise ValueError("radius cap must be positive")

    def to_json(self) -> dict:
        return {"degree_r": self.degree_r, "width": self.width, "radius_cap": self.radius_cap}


@dataclass
class Shell:
    radius: float
    points: np.ndarray
    seed: int
    germ: MapGerm
    spec: HornSpec
    n_seeded: int = 0
    n_descended: int = 0

    @property
    def empty(self) -> bool:
        return len(self.points) == 0


@dataclass
class ShellMin:
    radius: float
    value: float
    argmin: np.ndarray | None
    n_points: int
    seed: int

    @property
    def empty(self) -> bool:
        return self.argmin is None


@dataclass
class ShellScan:
    minima: list[ShellMin] = field(default_factory=list)

    @property
    def radii(self) -> np.ndarray:
        return np.array([m.radius for m in self.minima])

    def nonempty(self) -> list[ShellMin]:
        return [m for m in self.minima if not m.empty]

    def to_csv(self, value_name: str = "min_value") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = max((len(m.argmin) for m in self.nonempty()), default=0)
        w.writerow(["radius", value_name] + [f"argmin_{i + 1}" for i in range(n)])
        for m in self.minima:
            coords = [repr(float(c)) for c in m.argmin] if m.argmin is not None else [""] * n
            w.writerow([repr(m.radius), repr(m.value) if not m.empty else ""] + coords)
        return buf.getvalue()


def shell_radii(rho0: float = 0.1, gamma: float = 10 ** (-0.25), count: int = 17) -> np.ndarray:
    """Geometric schedule rho0 * gamma^k, k = 0..count-1 (default 1e-1 down to 1e-5)."""
    if not (rho0 > 0 and 0 < gamma < 1 and count >= 1):
        raise ValueError("need rho0 > 0, 0 < gamma < 1, count >= 1")
    return rho0 * gamma ** np.arange(count)


def shell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def thread_count() -> int:
    env = os.environ.get("STRATCHECK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def map_ordered(func, items: Sequence, threads: int | None = None) -> list:
    """Apply ``func`` to every item, possibly in parallel; results keep item order."""
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


# membership


def horn_mask(f: MapGerm, spec: HornSpec, x, rtol: float = MEMBERSHIP_RTOL) -> np.ndarray:
    """Membership |f(x)| <= w |x|^r for a batch of points (shape (N, n))."""
    x = np.asarray(x, dtype=float)
    fx = np.linalg.norm(f(x), axis=-1)
    bound = spec.width * np.linalg.norm(x, axis=-1) ** spec.degree_r
    return fx <= bound * (1.0 + rtol)


def horn_contains(f: MapGerm, spec: HornSpec, x, rtol: float = MEMBERSHIP_RTOL) -> bool:
    """Whether ``x`` lies in the horn of ``f``.

    ``rtol`` absorbs round-off in the comparison only, so that e.g.
    ``|x1^2 + x2^2| <= 1 * |x|^2`` is not decided by the last bit.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ValueError("the germ point x = 0 is excluded from horn membership")
    if np.linalg.norm(x) >= spec.radius_cap:
        raise ValueError(f"|x| = {np.linalg.norm(x)} is not below the radius cap {spec.radius_cap}")
    return bool(horn_mask(f, spec, x[None], rtol)[0])


# descent on the sphere


def sphere_points(rng: np.random.Generator, count: int, n: int, rho: float) -> np.ndarray:
    g = rng.standard_normal((count, n))
    return rho * g / np.linalg.norm(g, axis=1, keepdims=True)


def _to_sphere(x: np.ndarray, rho: float) -> np.ndarray:
    return x * (rho / np.linalg.norm(x, axis=-1, keepdims=True))


def sphere_descent(
    value: PointFunctional,
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x0: np.ndarray,
    rho: float,
    feasible: Callable[[np.ndarray], np.ndarray] | None = None,
    done: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    max_iter: int = MAX_ITER,
    step_tol: float = STEP_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched projected-gradient descent on the sphere |x| = rho with backtracking.

    Each point moves by an arc of length ``step`` against its tangential gradient.
    Steps grow by 1.5 after a success and halve after a failure; a point stops
    when ``done`` says so, its step falls below ``step_tol * rho``, or after
    ``max_iter`` iterations. ``grad(x, step)`` gets the current step lengths so
    finite-difference gradients can shrink with them. Only strict decreases that
    stay ``feasible`` are accepted, so values never increase.
    """
    x = _to_sphere(np.array(x0, dtype=float), rho)
    val = value(x)
    step = np.full(len(x), 0.25 * rho)
    active = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        if done is not None:
            active &= ~done(x, val)
        active &= step > step_tol * rho
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa = x[idx]
        g = grad(xa, step[idx])
        g = g - (np.sum(g * xa, axis=1) / rho**2)[:, None] * xa
        gn = np.linalg.norm(g, axis=1)
        stalled = ~(gn > 0) | ~np.isfinite(gn)
        active[idx[stalled]] = False
        keep = ~stalled
        idx, xa, g, gn = idx[keep], xa[keep], g[keep], gn[keep]
        if idx.size == 0:
            break
        trial = _to_sphere(xa - (step[idx] / gn)[:, None] * g, rho)
        tv = value(trial)
        ok = tv < val[idx]
        if feasible is not None:
            ok &= feasible(trial)
        good, bad = idx[ok], idx[~ok]
        x[good] = trial[ok]
        val[good] = tv[ok]
        step[good] = np.minimum(step[good] * 1.5, rho)
        step[bad] *= 0.5
    return x, val


def fd_gradient(fn: PointFunctional, rho: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Central differences with a step tied to the current descent step length."""

    def grad(x: np.ndarray, step: np.ndarray) -> np.ndarray:
        h = np.clip(step / 4.0, 1e-14 * rho, 1e-6 * rho)
        n = x.shape[1]
        out = np.empty_like(x)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            hp = h[:, None] * e
            out[:, i] = (fn(x + hp) - fn(x - hp)) / (2.0 * h)
        return out

    return grad


# shells


def sample_shell(f: MapGerm, spec: HornSpec, rho: float, count: int, seed: int) -> Shell:
    """Up to ``count`` points of the horn on the sphere |x| = rho.

    Gaussian directions are kept if they lie in the horn; the rejected ones are
    pushed toward f^{-1}(0) by minimising |f|^2 on the sphere and kept if they
    get inside. An empty shell is returned (not raised) when nothing lands.
    """
    if not 0 < rho < spec.radius_cap:
        raise ValueError(f"shell radius {rho} must lie in (0, {spec.radius_cap})")
    rng = make_rng(seed)
    x = sphere_points(rng, count, f.nvars, rho)
    inside = horn_mask(f, spec, x)
    n_seeded = int(inside.sum())
    rejected = np.flatnonzero(~inside)
    if rejected.size:
        bound = spec.width * rho**spec.degree_r

        def value(y):
            return np.sum(f(y) ** 2, axis=-1)

        def grad(y, _step):
            return 2.0 * np.einsum("npm,np->nm", f.jacobian(y), f(y))

        def done(y, v):
            return np.sqrt(v) <= bound

        moved, _ = sphere_descent(value, grad, x[rejected], rho, done=done)
        x[rejected] = moved
        inside = horn_mask(f, spec, x)
    pts = x[inside]
    return Shell(rho, pts, seed, f, spec, n_seeded=n_seeded, n_descended=int(inside.sum()) - n_seeded)


def shell_min(fn: PointFunctional, shell: Shell, restarts: int = 5) -> tuple[float, np.ndarray]:
    """Minimum of a vectorised functional over a shell, refined by local descent.

    The ``restarts`` best sample points are improved by descent on the sphere,
    staying inside the shell's horn.
    """
    if shell.empty:
        raise EmptyShellError(f"shell at radius {shell.radius} has no points")
    vals = np.asarray(fn(shell.points), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise NonFiniteValueError(shell.points[np.flatnonzero(bad)[0]])
    order = np.argsort(vals, kind="stable")
    best = int(order[0])
    best_val, best_x = float(vals[best]), shell.points[best].copy()
    if restarts > 0:
        starts = shell.points[order[:restarts]]
        rho = shell.radius

        def safe(y):
            v = np.asarray(fn(y), dtype=float)
            return np.where(np.isfinite(v), v, np.inf)

        def feasible(y):
            return horn_mask(shell.germ, shell.spec, y)

        xs, vs = sphere_descent(safe, fd_gradient(safe, rho), starts, rho, feasible=feasible)
        k = int(np.argmin(vs))
        if vs[k] < best_val:
            best_val, best_x = float(vs[k]), xs[k]
    return best_val, best_x


def scan_shells(
    fn_for_shell: Callable[[Shell], PointFunctional] | PointFunctional,
    f: MapGerm,
    spec: HornSpec,
    radii: Sequence[float],
    count: int,
    seed: int,
    restarts: int = 5,
    threads: int | None = None,
) -> ShellScan:
    """Per-shell minima of a functional over the horn, one shell per radius.

    ``fn_for_shell`` is either a functional or a factory taking the shell.
    """

    def work(item):
        k, rho = item
        s = shell_seed(seed, k)
        shell = sample_shell(f, spec, float(rho), count, s)
        if shell.empty:
            return ShellMin(float(rho), float("nan"), None, 0, s)
        fn = fn_for_shell(shell) if _is_factory(fn_for_shell) else fn_for_shell
        v, x = shell_min(fn, shell, restarts)
        return ShellMin(float(rho), v, x, len(shell.points), s)

    return ShellScan(map_ordered(work, list(enumerate(radii)), threads))


def _is_factory(obj) -> bool:
    return getattr(obj, "shell_factory", False)


def shell_factory(func):
    """Mark a callable as taking a Shell and returning a functional."""
    func.shell_factory = True
    return func


def loglog_slope(radii, values) -> float:
    """Least-squares slope of log(value) against log(radius).

    Non-positive values mean the quantity vanished on that shell; the decay is
    then faster than any power and the slope is reported as +inf.
    """
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float("nan")
    if np.any(values <= 0):
        return float("inf")
    return float(np.polyfit(np.log(radii), np.log(values), 1)[0])


@dataclass
class InclusionResult:
    holds: bool
    witness: np.ndarray | None
    checked: int


def horn_inclusion_check(
    f: MapGerm,
    ft: MapGerm,
    r: int,
    b: float,
    a: float,
    beta: float,
    samples: int,
    seed: int,
    shells: int = 12,
) -> InclusionResult:
    """Empirical test of H_r(f; b) ∩ {|x| < beta} ⊂ H_r(ft; a).

    Points of the smaller horn are sampled on ``shells`` radii spread
    geometrically below ``beta`` and each is checked against the larger horn.
    """
    if not (0 < b <= a and beta > 0):
        raise ValueError("need 0 < b <= a and beta > 0")
    inner = HornSpec(r, b, beta)
    outer = HornSpec(r, a, beta)
    radii = shell_radii(0.9 * beta, 10 ** (-0.25), shells)
    checked = 0
    for k, rho in enumerate(radii):
        shell = sample_shell(f, inner, float(rho), samples, shell_seed(seed, k))
        if shell.empty:
            continue
        ok = horn_mask(ft, outer, shell.points)
        checked += len(ok)
        if not ok.all():
            return InclusionResult(False, shell.points[np.flatnonzero(~ok)[0]], checked)
    return InclusionResult(True, None, checked)
