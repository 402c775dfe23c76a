import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stratcheck.subspace import (
    RankDeficientError,
    Subspace,
    dist_to_span,
    elimination_basis,
    elimination_basis_batch,
    gap,
    gap_batch,
    intersection_dim,
    kuo_distance,
    kuo_distance_batch,
    kuo_projection,
    null_space,
    orthogonal_complement,
    orthogonal_projection_batch,
    orthonormalize,
    principal_angles,
)


def random_subspace(rng, k, m):
    return Subspace.span(rng.standard_normal((k, m)))


@st.composite
def frames(draw, max_p=3, max_m=6):
    m = draw(st.integers(1, max_m))
    p = draw(st.integers(1, min(max_p, m)))
    fr = draw(arrays(np.float64, (p, m), elements=st.floats(-10, 10, allow_nan=False)))
    return fr


# subspaces


def test_subspace_rejects_non_orthonormal_basis():
    with pytest.raises(ValueError, match="orthonormal"):
        Subspace(np.array([[1.0, 1.0]]), 2)


def test_basis_is_read_only():
    s = Subspace.span([[1.0, 2.0, 0.0]])
    with pytest.raises(ValueError):
        s.basis[0, 0] = 3.0


def test_orthonormalize_drops_dependent_vectors():
    s = orthonormalize([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1e-13, 0.0, 1e-13]])
    assert s.dim == 2
    assert np.allclose(s.basis @ s.basis.T, np.eye(2), atol=1e-14)
    with pytest.raises(ValueError):
        orthonormalize(np.zeros((0, 3)))
    assert orthonormalize(np.zeros((2, 3))).dim == 0


@settings(max_examples=80, deadline=None)
@given(frames(max_p=4, max_m=6))
def test_span_matches_rank_oracle(fr):
    s = Subspace.span(fr)
    scale = np.linalg.norm(fr, axis=1).max()
    sv = np.linalg.svd(fr, compute_uv=False)
    clear = sv[(sv > 1e-6 * scale) | (sv < 1e-14 * scale)] if scale > 0 else sv
    if scale > 0 and len(clear) == len(sv):
        # away from the tolerance the rank is unambiguous
        assert s.dim == int(np.sum(sv > 1e-10 * scale))
    if s.dim:
        # every input vector lies in the span
        resid = fr - fr @ s.projector()
        assert np.linalg.norm(resid) <= 1e-8 * max(scale, 1.0)


def test_null_space_and_complement():
    rng = np.random.default_rng(3)
    rows = rng.standard_normal((2, 5))
    ns = null_space(rows)
    assert ns.dim == 3
    assert np.abs(rows @ ns.basis.T).max() < 1e-12
    comp = orthogonal_complement(ns)
    assert comp.dim == 2
    assert gap(Subspace.span(rows), comp).gap < 1e-12
    assert orthogonal_complement(Subspace.zero(4)).dim == 4


def test_projector_eigenvalues_are_zero_or_one():
    s = random_subspace(np.random.default_rng(4), 3, 7)
    ev = np.sort(np.linalg.eigvalsh(s.projector()))
    assert np.allclose(ev, [0, 0, 0, 0, 1, 1, 1], atol=1e-12)


# Kuo distance


def test_kuo_distance_examples():
    assert kuo_distance([[3.0, 4.0]]) == 5.0
    assert kuo_distance([[1.0, 0.0], [0.0, 2.0]]) == pytest.approx(1.0)
    # nearly parallel pair: the smaller distance is |v1 x v2| / |v2|
    assert kuo_distance([[1.0, 0.0, 0.0], [1.0, 1e-3, 0.0]]) == pytest.approx(1e-3 / np.sqrt(1 + 1e-6), rel=1e-9)
    assert kuo_distance([[1.0, 2.0], [2.0, 4.0]]) == pytest.approx(0.0, abs=1e-14)


@settings(max_examples=80, deadline=None)
@given(frames(), st.floats(0.01, 100), st.randoms(use_true_random=False))
def test_kuo_distance_invariances(fr, c, rnd):
    k = kuo_distance(fr)
    scale = np.linalg.norm(fr, axis=1).max()
    assert k <= np.linalg.norm(fr, axis=1).min() + 1e-12 * max(scale, 1.0)
    assert kuo_distance(c * fr) == pytest.approx(c * k, rel=1e-7, abs=1e-9 * c * max(scale, 1.0))
    perm = list(range(len(fr)))
    rnd.shuffle(perm)
    assert kuo_distance(fr[perm]) == pytest.approx(k, rel=1e-9, abs=1e-12 * max(scale, 1.0))
    q, _ = np.linalg.qr(np.random.default_rng(rnd.randint(0, 2**31)).standard_normal((fr.shape[1],) * 2))
    assert kuo_distance(fr @ q.T) == pytest.approx(k, rel=1e-7, abs=1e-9 * max(scale, 1.0))


def test_kuo_distance_batch_shape():
    rng = np.random.default_rng(5)
    fr = rng.standard_normal((4, 3, 2, 5))
    out = kuo_distance_batch(fr)
    assert out.shape == (4, 3)
    assert out[2, 1] == pytest.approx(kuo_distance(fr[2, 1]))


def test_dist_to_span():
    assert dist_to_span([1.0, 1.0, 1.0], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="dimension mismatch"):
        dist_to_span([1.0, 1.0], [[1.0, 0.0, 0.0]])


# elimination basis and projection


def test_elimination_basis_orthogonality():
    rng = np.random.default_rng(6)
    for _ in range(50):
        fr = rng.standard_normal((3, 6))
        nb = elimination_basis(fr)
        g = nb @ fr.T
        off = g - np.diag(np.diag(g))
        assert np.abs(off).max() < 1e-12 * np.abs(g).max()
        assert np.allclose(np.diag(g), np.sum(nb * nb, axis=1))


def test_elimination_basis_rank_deficient():
    with pytest.raises(RankDeficientError):
        elimination_basis([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]])
    _, ok = elimination_basis_batch(np.array([[[1.0, 0.0], [0.0, 1.0]], [[1.0, 1.0], [1.0, 1.0]]]))
    assert ok.tolist() == [True, False]


@settings(max_examples=80, deadline=None)
@given(frames(), st.data())
def test_kuo_projection_equals_orthogonal_projection(fr, data):
    scale = np.linalg.norm(fr, axis=1).max()
    if scale == 0 or kuo_distance(fr) < 1e-3 * scale:
        return
    x = data.draw(arrays(np.float64, fr.shape[1], elements=st.floats(-5, 5, allow_nan=False)))
    got = kuo_projection(x, fr, elimination_basis(fr))
    q, _ = np.linalg.qr(fr.T)
    want = q @ (q.T @ x)
    assert np.linalg.norm(got - want) <= 1e-9 * max(np.linalg.norm(x), 1e-300)
    assert np.allclose(orthogonal_projection_batch(x, fr), want, atol=1e-12 * max(np.linalg.norm(x), 1.0))


# gap, angles, intersection


def sphere_max_distance(l: Subspace, w: Subspace, count=20000, seed=0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((count, l.dim))
    u = (c / np.linalg.norm(c, axis=1, keepdims=True)) @ l.basis
    return np.max(np.linalg.norm(u - u @ w.projector(), axis=1))


def test_gap_examples():
    e1 = Subspace.span([[1.0, 0.0]])
    e2 = Subspace.span([[0.0, 1.0]])
    diag = Subspace.span([[1.0, 1.0]])
    assert gap(e1, e1).gap == 0.0
    assert gap(e1, e2).gap == pytest.approx(1.0)
    assert gap(e1, diag).gap == pytest.approx(np.sqrt(2) / 2)


def test_gap_against_sphere_maximisation_and_eigen_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        m = int(rng.integers(3, 7))
        k = int(rng.integers(1, 3))
        q = int(rng.integers(k, m))
        l, w = random_subspace(rng, k, m), random_subspace(rng, q, m)
        g = gap(l, w)
        sampled = sphere_max_distance(l, w)
        assert sampled <= g.gap + 1e-12
        assert g.gap - sampled < 2e-2
        # projector route: largest eigenvalue of B (I - P_W) B^T
        b = l.basis
        lam = np.linalg.eigvalsh(b @ (np.eye(m) - w.projector()) @ b.T).max()
        assert g.gap == pytest.approx(np.sqrt(max(lam, 0.0)), abs=1e-12)
        # the attaining vector realises the gap
        v = g.attaining_vector
        assert np.linalg.norm(v - w.project(v)) == pytest.approx(g.gap, abs=1e-12)


def test_gap_dimension_errors():
    with pytest.raises(ValueError):
        gap(random_subspace(np.random.default_rng(0), 2, 4), Subspace.span([[1.0, 0, 0, 0]]))
    with pytest.raises(ValueError):
        gap(Subspace.span([[1.0, 0]]), Subspace.span([[1.0, 0, 0]]))


def test_gap_batch_matches_gap():
    rng = np.random.default_rng(8)
    ls = [random_subspace(rng, 1, 4) for _ in range(6)]
    ws = [random_subspace(rng, 2, 4) for _ in range(6)]
    out = gap_batch(np.stack([s.basis for s in ls]), np.stack([s.basis for s in ws]))
    assert np.allclose(out, [gap(a, b).gap for a, b in zip(ls, ws)], atol=1e-14)


def test_principal_angles_match_scipy():
    rng = np.random.default_rng(9)
    for _ in range(50):
        m = int(rng.integers(2, 8))
        a = random_subspace(rng, int(rng.integers(1, m + 1)), m)
        b = random_subspace(rng, int(rng.integers(1, m + 1)), m)
        want = np.sort(scipy.linalg.subspace_angles(a.basis.T, b.basis.T))
        assert np.allclose(principal_angles(a, b), want, atol=1e-10)


def test_small_angles_are_resolved():
    for angle in (1e-4, 1e-8, 1e-12):
        a = Subspace.span([[1.0, 0.0]])
        b = Subspace.span([[np.cos(angle), np.sin(angle)]])
        assert principal_angles(a, b)[0] == pytest.approx(angle, rel=1e-6)


def test_intersection_dim_matches_rank_oracle():
    rng = np.random.default_rng(10)
    for _ in range(100):
        m = int(rng.integers(2, 7))
        common = rng.standard_normal((int(rng.integers(0, m)), m))
        ka, kb = int(rng.integers(0, m - len(common) + 1)), int(rng.integers(0, m - len(common) + 1))
        a_rows = np.vstack([common, rng.standard_normal((ka, m))])
        b_rows = np.vstack([common, rng.standard_normal((kb, m))])
        if len(a_rows) == 0 or len(b_rows) == 0:
            continue
        a, b = Subspace.span(a_rows), Subspace.span(b_rows)
        want = a.dim + b.dim - np.linalg.matrix_rank(np.vstack([a.basis, b.basis]), tol=1e-8)
        assert intersection_dim(a, b) == want
    with pytest.raises(ValueError):
        intersection_dim(a, b, angle_tol=1.0)
