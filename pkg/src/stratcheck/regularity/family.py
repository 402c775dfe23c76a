"""The deformation F(x, t) = f(x) + t (g(x) - f(x)), its strata, and points on Y = F^{-1}(0) minus the t-axis."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..horn import make_rng, shell_seed, sphere_descent, sphere_points
from ..poly import JetMismatchError, MapGerm, PolyArray, Polynomial, gradient, jet_mismatches
from ..subspace import Subspace, kuo_distance_batch, null_space
from .report import Thresholds

DEFAULT_J = (-0.1, 1.1)


class NotOnSmoothStratum(ValueError):
    """dF has rank < p at the point, so it is not a smooth point of Y."""


@dataclass(frozen=True)
class DeformationFamily:
    f: MapGerm
    g: MapGerm
    r: int
    J: tuple[float, float] = DEFAULT_J

    def __post_init__(self):
        bad = jet_mismatches(self.f, self.g, self.r)
        if bad:
            raise JetMismatchError(self.r, bad)
        lo, hi = self.J
        if not (lo < 0 and hi > 1):
            raise ValueError("the parameter interval J must contain [0, 1]")

    @property
    def n(self) -> int:
        return self.f.nvars

    @property
    def p(self) -> int:
        return self.f.ncomps

    @cached_property
    def components(self) -> tuple[Polynomial, ...]:
        """F_j as polynomials in (x1..xn, t)."""
        m = self.n + 1
        t = Polynomial.variable(self.n, m)
        return tuple(
            fj.extend(m) + t * (gj.extend(m) - fj.extend(m))
            for fj, gj in zip(self.f.components, self.g.components)
        )

    @cached_property
    def _values(self) -> PolyArray:
        return PolyArray(self.components)

    @cached_property
    def _grad(self) -> PolyArray:
        polys = [d for c in self.components for d in gradient(c)]
        return PolyArray(polys, shape=(self.p, self.n + 1))

    @property
    def t_independent(self) -> bool:
        return self.f == self.g

    @staticmethod
    def _xt(x, t) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
        return np.concatenate([x, t[..., None]], axis=-1)

    def F(self, x, t) -> np.ndarray:
        """Values F(x, t), shape (..., p)."""
        return self._values(self._xt(x, t))

    def grad_F(self, x, t) -> np.ndarray:
        """Full gradients grad F_j(x, t) in R^{n+1} as rows, shape (..., p, n+1)."""
        return self._grad(self._xt(x, t))

    def grad_ft(self, x, t) -> np.ndarray:
        """grad f_{t,j}(x) (x-part of grad F_j), shape (..., p, n)."""
        return self.grad_F(x, t)[..., : self.n]

    def f_t(self, t: float) -> MapGerm:
        """The germ x -> F(x, t) for a fixed t."""
        comps = []
        for fj, gj in zip(self.f.components, self.g.components):
            comps.append(fj + (gj - fj) * float(t))
        return MapGerm(tuple(comps), self.n)

    def to_json(self) -> dict:
        return {"f": self.f.to_json(), "g": self.g.to_json(), "r": self.r, "J": list(self.J)}


def build_family(f: MapGerm, g: MapGerm, r: int, J: tuple[float, float] = DEFAULT_J) -> DeformationFamily:
    return DeformationFamily(f, g, r, J)


def t_grid(size: int = 11, J: tuple[float, float] = DEFAULT_J, include_J_ends: bool = True) -> np.ndarray:
    """``size`` equispaced values in [0, 1], plus the endpoints of J."""
    ts = list(np.linspace(0.0, 1.0, size)) if size > 1 else [0.0]
    if include_J_ends:
        ts = [J[0]] + ts + [J[1]]
    return np.array(ts)


def control_function(xt) -> tuple[float, np.ndarray]:
    """Squared distance to the t-axis, sum x_i^2, and its gradient (2x, 0)."""
    xt = np.asarray(xt, dtype=float)
    x = xt[..., :-1]
    grad = np.concatenate([2.0 * x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
    value = np.sum(x * x, axis=-1)
    return (float(value) if np.ndim(value) == 0 else value), grad


def tangent_plane_Y(fam: DeformationFamily, xt, tol: float = 1e-14) -> Subspace:
    """Kernel of dF at (x, t): the tangent plane of the smooth stratum Y, of dimension n + 1 - p."""
    xt = np.asarray(xt, dtype=float)
    rows = fam.grad_F(xt[:-1], xt[-1])
    if kuo_distance_batch(rows[None])[0] <= tol:
        raise NotOnSmoothStratum(f"dF has rank < {fam.p} at {xt.tolist()}")
    plane = null_space(rows)
    if plane.dim != fam.n + 1 - fam.p:
        raise NotOnSmoothStratum(f"tangent plane has dimension {plane.dim} at {xt.tolist()}")
    return plane


# points of Y approaching the t-axis


@dataclass
class SequenceSpec:
    """Points (x_i, t_i) of Y with |x_i| following the shell radii toward (0, t0)."""

    t0: float
    branch: int
    radii: list[float] = field(default_factory=list)
    points: list[np.ndarray] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def to_json(self) -> dict:
        return {
            "t0": self.t0,
            "branch": self.branch,
            "radii": self.radii,
            "points": [p.tolist() for p in self.points],
            "residuals": self.residuals,
        }


@dataclass
class StratificationSpec:
    """Strata X, Y, Z of R^n x J near the t-axis; ``empty_Y`` selects the two-stratum variant."""

    empty_Y: bool
    dim_Y: int
    sequences: list[SequenceSpec] = field(default_factory=list)

    @property
    def labels(self) -> tuple[str, ...]:
        if self.empty_Y:
            return ("R^n x J \\ {0} x J", "{0} x J")
        return ("R^n x J \\ F^-1(0)", "F^-1(0) \\ {0} x J", "{0} x J")


def newton_on_sphere(
    fam: DeformationFamily, x0, t: float, rho: float, feas_tol: float, max_iter: int = 80
) -> tuple[np.ndarray, float, bool]:
    """Solve F(x, t) = 0 with |x| = rho by minimum-norm Gauss-Newton steps in x."""
    x = np.array(x0, dtype=float)
    x *= rho / np.linalg.norm(x)
    res = float(np.linalg.norm(fam.F(x, t)))
    best, stalled = res, 0
    for _ in range(max_iter):
        if res <= feas_tol or stalled >= 6:
            break
        J = np.vstack([fam.grad_ft(x, t), x[None] / rho])
        R = np.concatenate([fam.F(x, t), [(x @ x - rho**2) / (2 * rho)]])
        dx = np.linalg.lstsq(J, -R, rcond=None)[0]
        if not np.all(np.isfinite(dx)) or np.linalg.norm(dx) < 1e-17 * rho:
            break
        x = x + dx
        x *= rho / np.linalg.norm(x)
        res = float(np.linalg.norm(fam.F(x, t)))
        # away from a zero the iteration wanders without progress
        if res < 0.5 * best:
            best, stalled = res, 0
        else:
            stalled += 1
    return x, res, res <= feas_tol


def _zeros_on_sphere(fam, rho, t, rng, n_starts, feas_tol):
    starts = sphere_points(rng, n_starts, fam.n, rho)

    def value(y):
        return np.sum(fam.F(y, t) ** 2, axis=-1)

    def grad(y, _step):
        return 2.0 * np.einsum("npm,np->nm", fam.grad_ft(y, t), fam.F(y, t))

    moved, _ = sphere_descent(value, grad, starts, rho)
    found = []
    for y in moved:
        x, res, ok = newton_on_sphere(fam, y, t, rho, feas_tol)
        if ok:
            found.append((x, res))
    return found


def _distinct(found, limit, min_angle=0.1):
    picked = []
    for x, res in sorted(found, key=lambda item: tuple(np.round(item[0] / np.linalg.norm(item[0]), 6))):
        u = x / np.linalg.norm(x)
        if all(np.arccos(np.clip(u @ (y / np.linalg.norm(y)), -1, 1)) > min_angle for y, _ in picked):
            picked.append((x, res))
        if len(picked) >= limit:
            break
    return picked


def build_sequences(
    fam: DeformationFamily,
    radii,
    t0: float,
    branches: int = 4,
    seed: int = 0,
    th: Thresholds = Thresholds(),
    n_starts: int = 64,
) -> list[SequenceSpec]:
    """Ray-like sequences on Y tending to (0, t0), continued shell by shell.

    At each radius rho the parameter is t0 + rho * u with u uniform in [-1, 1],
    so the t-window shrinks with rho. The first shell carrying zeros of F fixes
    up to ``branches`` distinct directions; later shells continue each branch by
    Newton from the rescaled previous point, re-seeding by descent if needed.
    """
    radii = [float(r) for r in radii]
    rng = make_rng(shell_seed(seed, (int(round(1e6 * t0)) + 7919) % 2**32))
    lo, hi = fam.J
    seqs: list[SequenceSpec] = []
    for k, rho in enumerate(radii):
        t = float(np.clip(t0 + rho * rng.uniform(-1, 1), lo, hi))
        feas = th.feas_tol(rho, fam.r)
        if not seqs:
            found = _zeros_on_sphere(fam, rho, t, rng, n_starts, feas)
            for b, (x, res) in enumerate(_distinct(found, branches)):
                seqs.append(SequenceSpec(t0, b, [rho], [np.append(x, t)], [res]))
            continue
        for s in seqs:
            if s.radii[-1] != radii[k - 1]:
                continue
            prev = s.points[-1][:-1]
            x, res, ok = newton_on_sphere(fam, prev * (rho / s.radii[-1]), t, rho, feas)
            if not ok:
                def value(y):
                    return np.sum(fam.F(y, t) ** 2, axis=-1)

                def grad(y, _step):
                    return 2.0 * np.einsum("npm,np->nm", fam.grad_ft(y, t), fam.F(y, t))

                y, _ = sphere_descent(value, grad, (prev * (rho / s.radii[-1]))[None], rho)
                x, res, ok = newton_on_sphere(fam, y[0], t, rho, feas)
                u_prev = prev / np.linalg.norm(prev)
                if ok and np.arccos(np.clip(u_prev @ (x / rho), -1, 1)) > 0.5:
                    ok = False  # jumped to another branch
            if ok:
                s.radii.append(rho)
                s.points.append(np.append(x, t))
                s.residuals.append(res)
    return seqs


def stratify(
    fam: DeformationFamily,
    radii,
    t0s=(0.0, 0.5, 1.0),
    branches: int = 4,
    seed: int = 0,
    th: Thresholds = Thresholds(),
) -> StratificationSpec:
    """Sample Y near each (0, t0); no zeros on any shell for any t0 means F^{-1}(0) = {0} x J (heuristic)."""
    seqs = []
    for t0 in t0s:
        seqs.extend(build_sequences(fam, radii, float(t0), branches, seed, th))
    return StratificationSpec(empty_Y=not seqs, dim_Y=fam.n + 1 - fam.p, sequences=seqs)
