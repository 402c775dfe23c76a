"""Euclidean subspace geometry used by the regularity checks.

Vectors are rows of numpy arrays. A *frame* is any (p, m) array of spanning
vectors (possibly dependent); a :class:`Subspace` carries an orthonormal basis.
Most kernels also accept stacks of frames with shape (..., p, m) so the
horn scans can evaluate thousands of points at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-10
DEFAULT_ANGLE_TOL = 1e-7
ELIMINATION_TOL = 1e-12


class RankDeficientError(ValueError):
    """A frame is (numerically) linearly dependent where independence is required."""


@dataclass(frozen=True)
class Subspace:
    """Linear subspace of R^m given by orthonormal rows of ``basis`` (shape (k, m))."""

    basis: np.ndarray
    ambient: int

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float).reshape(-1, self.ambient)
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)
        if b.shape[0]:
            err = np.abs(b @ b.T - np.eye(b.shape[0])).max()
            if err > 1e-12:
                raise ValueError(f"basis is not orthonormal (max deviation {err:.3e})")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def span(cls, vectors, tol: float = DEFAULT_RANK_TOL) -> "Subspace":
        return orthonormalize(vectors, tol)

    @classmethod
    def zero(cls, ambient: int) -> "Subspace":
        return cls(np.zeros((0, ambient)), ambient)

    def projector(self) -> np.ndarray:
        return self.basis.T @ self.basis

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x @ self.basis.T) @ self.basis

    def complement(self) -> "Subspace":
        return orthogonal_complement(self)

    def to_list(self) -> list[list[float]]:
        return self.basis.tolist()


@dataclass(frozen=True)
class GapResult:
    gap: float
    attaining_vector: np.ndarray


def _as_frame(vectors) -> np.ndarray:
    fr = np.atleast_2d(np.asarray(vectors, dtype=float))
    if not np.all(np.isfinite(fr)):
        raise ValueError("frame has non-finite entries")
    return fr


def orthonormalize(vectors, tol: float = DEFAULT_RANK_TOL) -> Subspace:
    """Orthonormal basis of the span, by Gram-Schmidt with one re-orthogonalisation pass.

    A vector whose residual norm is at most ``tol`` times the largest input norm
    is treated as dependent and dropped.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    fr = _as_frame(vectors)
    if fr.size == 0:
        raise ValueError("empty frame")
    m = fr.shape[1]
    scale = np.linalg.norm(fr, axis=1).max()
    basis: list[np.ndarray] = []
    if scale == 0.0:
        return Subspace.zero(m)
    for v in fr:
        w = v.copy()
        for _ in range(2):
            for q in basis:
                w -= (q @ w) * q
        nw = np.linalg.norm(w)
        if nw > tol * scale:
            basis.append(w / nw)
    return Subspace(np.array(basis).reshape(len(basis), m), m)


def orthogonal_complement(s: Subspace) -> Subspace:
    m = s.ambient
    if s.dim == 0:
        return Subspace(np.eye(m), m)
    _, _, vh = np.linalg.svd(s.basis, full_matrices=True)
    return Subspace(vh[s.dim:], m)


def null_space(rows, tol: float = DEFAULT_RANK_TOL) -> Subspace:
    """Orthogonal complement of the span of ``rows`` (relative rank tolerance)."""
    fr = _as_frame(rows)
    m = fr.shape[1]
    _, s, vh = np.linalg.svd(fr, full_matrices=True)
    scale = np.linalg.norm(fr, axis=1).max(initial=0.0)
    rank = int(np.sum(s > tol * scale)) if scale > 0 else 0
    return Subspace(vh[rank:], m)


# distances and the Kuo distance


def _span_projection(others: np.ndarray, v: np.ndarray, tol: float, scale: np.ndarray) -> np.ndarray:
    """Projection of v onto the row span of ``others``; stacked shapes (..., k, m) and (..., m)."""
    if others.shape[-2] == 0:
        return np.zeros_like(v)
    _, s, vh = np.linalg.svd(others, full_matrices=False)
    keep = s > tol * scale[..., None]
    coeff = np.einsum("...km,...m->...k", vh, v) * keep
    return np.einsum("...k,...km->...m", coeff, vh)


def residuals_to_others(frames, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """For each vector v_i of each frame, v_i minus its projection onto the span of the others.

    ``frames`` has shape (..., p, m); the result has the same shape.
    """
    fr = np.asarray(frames, dtype=float)
    p = fr.shape[-2]
    scale = np.linalg.norm(fr, axis=-1).max(axis=-1)
    out = np.empty_like(fr)
    for i in range(p):
        others = np.delete(fr, i, axis=-2)
        out[..., i, :] = fr[..., i, :] - _span_projection(others, fr[..., i, :], tol, scale)
    return out


def dist_to_span(v, vectors, tol: float = DEFAULT_RANK_TOL) -> float:
    """Euclidean distance from ``v`` to the span of ``vectors``."""
    v = np.asarray(v, dtype=float)
    fr = _as_frame(vectors)
    if fr.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: vector in R^{v.shape[0]}, frame in R^{fr.shape[1]}")
    scale = np.asarray(np.linalg.norm(fr, axis=1).max(initial=0.0))
    return float(np.linalg.norm(v - _span_projection(fr, v, tol, scale)))


def kuo_distance_batch(frames, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Kuo distance of every frame in a (..., p, m) stack."""
    fr = np.asarray(frames, dtype=float)
    if fr.shape[-2] == 1:
        return np.linalg.norm(fr[..., 0, :], axis=-1)
    return np.linalg.norm(residuals_to_others(fr, tol), axis=-1).min(axis=-1)


def kuo_distance(vectors, tol: float = DEFAULT_RANK_TOL) -> float:
    """Smallest distance from one vector to the span of the remaining ones.

    For a single vector this is its norm.
    """
    fr = _as_frame(vectors)
    return float(kuo_distance_batch(fr[None], tol)[0])


def elimination_basis_batch(frames, tol: float = ELIMINATION_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Stacked version of :func:`elimination_basis`.

    Returns ``(basis, ok)`` where ``ok`` flags the frames whose Kuo distance
    clears ``tol`` times the largest vector norm.
    """
    fr = np.asarray(frames, dtype=float)
    nb = residuals_to_others(fr) if fr.shape[-2] > 1 else fr.copy()
    scale = np.linalg.norm(fr, axis=-1).max(axis=-1)
    ok = (np.linalg.norm(nb, axis=-1).min(axis=-1) > tol * scale) & (scale > 0)
    return nb, ok


def elimination_basis(vectors, tol: float = ELIMINATION_TOL) -> np.ndarray:
    """Basis N_j = v_j minus its projection onto the span of the other v_k.

    Each N_j is orthogonal to every v_k with k != j. Raises
    :class:`RankDeficientError` if the frame's Kuo distance is below ``tol``
    times its largest norm, since the projection formula divides by |N_j|^2.
    """
    fr = _as_frame(vectors)
    nb, ok = elimination_basis_batch(fr[None], tol)
    if not ok[0]:
        raise RankDeficientError("frame is rank-deficient; elimination basis undefined")
    return nb[0]


def kuo_projection_batch(x, frames, nbasis) -> np.ndarray:
    """sum_j <x, v_j> N_j / |N_j|^2 over stacks; x has shape (..., m)."""
    x = np.asarray(x, dtype=float)
    fr = np.asarray(frames, dtype=float)
    nb = np.asarray(nbasis, dtype=float)
    inner = np.einsum("...m,...pm->...p", x, fr)
    nn = np.einsum("...pm,...pm->...p", nb, nb)
    return np.einsum("...p,...pm->...m", inner / nn, nb)


def kuo_projection(x, vectors, nbasis) -> np.ndarray:
    """Projection of ``x`` onto the span of ``vectors`` via the elimination basis."""
    nb = np.asarray(nbasis, dtype=float)
    if np.any(np.linalg.norm(nb, axis=-1) == 0.0):
        raise RankDeficientError("zero vector in elimination basis")
    return kuo_projection_batch(x, _as_frame(vectors), nb)


def orthogonal_projection_batch(x, frames, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Projection of x onto the span of each frame, through an SVD basis."""
    x = np.asarray(x, dtype=float)
    fr = np.asarray(frames, dtype=float)
    scale = np.linalg.norm(fr, axis=-1).max(axis=-1)
    return _span_projection(fr, x, tol, scale)


# subspace comparisons


def gap(l: Subspace, w: Subspace) -> GapResult:
    """Largest distance from a unit vector of ``l`` to ``w`` (sine of the largest principal angle)."""
    if l.ambient != w.ambient:
        raise ValueError("subspaces live in different ambient spaces")
    if l.dim > w.dim:
        raise ValueError(f"gap needs dim l <= dim w, got {l.dim} > {w.dim}")
    if l.dim == 0:
        return GapResult(0.0, np.zeros(l.ambient))
    resid = l.basis - (l.basis @ w.basis.T) @ w.basis
    u, s, _ = np.linalg.svd(resid, full_matrices=False)
    vec = u[:, 0] @ l.basis
    vec /= np.linalg.norm(vec)
    return GapResult(float(min(s[0], 1.0)), vec)


def gap_batch(lbases, wbases) -> np.ndarray:
    """Gaps for stacks of orthonormal bases, shapes (..., k, m) and (..., q, m)."""
    lb = np.asarray(lbases, dtype=float)
    wb = np.asarray(wbases, dtype=float)
    if lb.shape[-2] == 0:
        return np.zeros(lb.shape[:-2])
    resid = lb - np.einsum("...kq,...qm->...km", np.einsum("...km,...qm->...kq", lb, wb), wb)
    return np.minimum(np.linalg.svd(resid, compute_uv=False)[..., 0], 1.0)


def principal_angles(a: Subspace, b: Subspace) -> np.ndarray:
    """Principal angles in non-decreasing order, ``min(dim a, dim b)`` of them.

    Cosines come from the singular values of the cross inner-product matrix;
    small angles are taken from sines of the residual instead, which keeps
    them accurate down to round-off.
    """
    if a.ambient != b.ambient:
        raise ValueError("subspaces live in different ambient spaces")
    x, y = (a, b) if a.dim <= b.dim else (b, a)
    k = x.dim
    if k == 0:
        return np.zeros(0)
    cos = np.clip(np.linalg.svd(x.basis @ y.basis.T, compute_uv=False), 0.0, 1.0)
    resid = x.basis - (x.basis @ y.basis.T) @ y.basis
    sin = np.clip(np.sort(np.linalg.svd(resid, compute_uv=False)), 0.0, 1.0)
    cos = np.sort(cos)[::-1]
    return np.where(sin**2 < 0.5, np.arcsin(sin), np.arccos(cos))


def intersection_dim(a: Subspace, b: Subspace, angle_tol: float = DEFAULT_ANGLE_TOL) -> int:
    """Number of principal angles not exceeding ``angle_tol``."""
    if not 0 < angle_tol < np.pi / 4:
        raise ValueError("angle_tol must lie in (0, pi/4)")
    return int(np.sum(principal_angles(a, b) <= angle_tol))
