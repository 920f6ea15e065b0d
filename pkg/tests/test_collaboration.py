import json
from dataclasses import fields

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcqe.collaboration import (
    ENVELOPE_FIELDS,
    SHARE_FIELDS,
    CollaborationError,
    CollaborationMaps,
    IntermediateShare,
    build_collaborative_dataset,
    fit_collaboration,
    generate_anchor,
    make_intermediate_share,
    pooled_bounds,
)
from dcqe.reduction import LinearReducer, fit_pca
from dcqe.tabular import PartitionSpec, gaussian_config, generate_synthetic, partition


def test_anchor_uniform_box():
    a = generate_anchor([(0.0, 1.0)] * 4, 1000, seed=1)
    assert a.r == 1000 and a.X_anc.min() >= 0 and a.X_anc.max() <= 1
    assert np.all(np.abs(a.X_anc.mean(axis=0) - 0.5) <= 0.05)


def test_anchor_constant_column_and_determinism():
    a = generate_anchor([(2.0, 2.0), (-1.0, 3.0)], 50, seed=3)
    assert np.all(a.X_anc[:, 0] == 2.0)
    np.testing.assert_array_equal(a.X_anc, generate_anchor([(2.0, 2.0), (-1.0, 3.0)], 50, seed=3).X_anc)


def test_anchor_inverted_bounds():
    with pytest.raises(CollaborationError, match="inverted"):
        generate_anchor([(0, 1), (3, 2)], 5, 0)


@pytest.fixture(scope="module")
def parties():
    pop = generate_synthetic(gaussian_config(n=600, m=5, seed=2))
    return pop, partition(pop, PartitionSpec("iid", parts=3, seed=0))


def test_pooled_bounds(parties):
    pop, ps = parties
    b = np.array(pooled_bounds(ps))
    np.testing.assert_array_equal(b[:, 0], pop.X.min(axis=0))
    np.testing.assert_array_equal(b[:, 1], pop.X.max(axis=0))


def _identity(m):
    return LinearReducer(np.eye(m), np.zeros(m), "pca")


def test_share_identity_and_shapes(parties):
    pop, ps = parties
    anchor = generate_anchor(pooled_bounds(ps), 40, 0)
    s0 = make_intermediate_share(ps[0], _identity(5), anchor)
    s1 = make_intermediate_share(ps[1], fit_pca(ps[1].population.X, 3), anchor)
    np.testing.assert_array_equal(s0.X_tilde, ps[0].population.X)
    assert s0.r == s1.r == 40 and s1.m_k == 3


def test_share_dimension_mismatch(parties):
    _, ps = parties
    with pytest.raises(CollaborationError):
        make_intermediate_share(ps[0], _identity(5), generate_anchor([(0, 1)] * 4, 10, 0))


def test_share_type_has_no_reducer_slot():
    assert set(SHARE_FIELDS) == {"party_id", "X_tilde", "X_anc_tilde", "z", "y", "ids"}
    s = IntermediateShare(0, np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1), np.zeros(1), np.zeros(1))
    with pytest.raises((AttributeError, TypeError)):
        s.reducer = _identity(1)
    assert not hasattr(s, "__dict__")


def test_envelope_round_trip(parties):
    _, ps = parties
    anchor = generate_anchor(pooled_bounds(ps), 30, 0)
    s = make_intermediate_share(ps[2], fit_pca(ps[2].population.X, 4), anchor)
    raw = s.to_envelope()
    assert set(json.loads(raw)) == set(ENVELOPE_FIELDS)
    back = IntermediateShare.from_envelope(raw)
    for f in fields(IntermediateShare):
        np.testing.assert_array_equal(getattr(back, f.name), getattr(s, f.name))


def test_envelope_rejects_extra_field(parties):
    _, ps = parties
    anchor = generate_anchor(pooled_bounds(ps), 10, 0)
    d = json.loads(make_intermediate_share(ps[0], _identity(5), anchor).to_envelope())
    d["projection"] = [[1.0]]
    with pytest.raises(CollaborationError, match="projection"):
        IntermediateShare.from_envelope(json.dumps(d).encode())


def _shared_setup(parties, T=None, seed=0):
    pop, ps = parties
    m = pop.m
    if T is None:
        T = np.random.default_rng(seed).standard_normal((m, m)) + 3 * np.eye(m)
    red = LinearReducer(T, np.zeros(m), "pca")
    anchor = generate_anchor(pooled_bounds(ps), 100, seed)
    return [make_intermediate_share(p, red, anchor) for p in ps], T


def test_exact_recovery_residuals_and_agreement(parties):
    shares, _ = _shared_setup(parties)
    maps = fit_collaboration(shares, 5)
    assert max(maps.anchor_residuals.values()) <= 1e-9
    imgs = [s.X_anc_tilde @ maps.G[s.party_id] for s in shares]
    for img in imgs[1:]:
        np.testing.assert_allclose(img, imgs[0], atol=1e-9)


def test_exact_recovery_single_T(parties):
    pop, ps = parties
    shares, _ = _shared_setup(parties, seed=4)
    ds = build_collaborative_dataset(shares, fit_collaboration(shares, 5))
    order = np.argsort(ds.ids)
    Xc = ds.X_check[order]
    X = pop.sorted_by_id().X
    # solve for T from the first party's rows and check every row
    first = np.sort(ps[0].population.ids)
    T = np.linalg.lstsq(X[first], Xc[first], rcond=None)[0]
    np.testing.assert_allclose(X @ T, Xc, atol=1e-8)


def test_identical_shares_give_identical_maps(parties):
    _, ps = parties
    anchor = generate_anchor(pooled_bounds(ps), 60, 1)
    red = fit_pca(ps[0].population.X, 4)
    a = make_intermediate_share(ps[0], red, anchor)
    b = IntermediateShare(7, a.X_tilde, a.X_anc_tilde, a.z, a.y, a.ids + 10_000)
    maps = fit_collaboration([a, b], 3)
    np.testing.assert_allclose(maps.G[a.party_id], maps.G[7], atol=1e-10)


def _random_shares(seed, dims=(3, 4, 2), r=50):
    rng = np.random.default_rng(seed)
    out, start = [], 0
    for k, d in enumerate(dims):
        n = 20
        out.append(
            IntermediateShare(k, rng.standard_normal((n, d)), rng.standard_normal((r, d)), rng.integers(0, 2, n), rng.standard_normal(n), np.arange(start, start + n))
        )
        start += n
    return out


def test_target_orthonormal_and_matches_svd_oracle():
    shares = _random_shares(0)
    maps = fit_collaboration(shares, 4)
    Z = maps.target
    np.testing.assert_allclose(Z.T @ Z, np.eye(4), atol=1e-10)
    A = np.hstack([s.X_anc_tilde for s in shares])
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    U = U[:, :4]
    U = U * np.sign(U[np.argmax(np.abs(U), axis=0), np.arange(4)])
    np.testing.assert_allclose(Z, U, atol=1e-10)
    np.testing.assert_allclose(maps.singular_values, s[:4], rtol=1e-10)


def test_scaled_target():
    shares = _random_shares(1)
    a = fit_collaboration(shares, 3)
    b = fit_collaboration(shares, 3, target="scaled")
    np.testing.assert_allclose(b.target, a.target * a.singular_values, atol=1e-12)


def test_rank_error_names_rank():
    rng = np.random.default_rng(2)
    base = rng.standard_normal((30, 2))
    shares = [IntermediateShare(k, np.zeros((1, 2)), base @ rng.standard_normal((2, 2)), [0], [0.0], [k]) for k in range(2)]
    with pytest.raises(CollaborationError, match="rank is 2"):
        fit_collaboration(shares, 3)


def test_mismatched_anchor_sizes():
    a, b, _ = _random_shares(3)
    b = IntermediateShare(1, b.X_tilde, b.X_anc_tilde[:10], b.z, b.y, b.ids)
    with pytest.raises(CollaborationError):
        fit_collaboration([a, b], 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5))
def test_anchor_agreement_triangle(seed, m_tilde):
    shares = _random_shares(seed)
    maps = fit_collaboration(shares, m_tilde)
    zn = np.linalg.norm(maps.target)
    imgs = {s.party_id: s.X_anc_tilde @ maps.G[s.party_id] for s in shares}
    for i in imgs:
        for j in imgs:
            lhs = np.linalg.norm(imgs[i] - imgs[j])
            rhs = (maps.anchor_residuals[i] + maps.anchor_residuals[j]) * zn
            assert lhs <= rhs + 1e-9 * zn


def test_deterministic_maps():
    a = fit_collaboration(_random_shares(5), 3)
    b = fit_collaboration(_random_shares(5), 3)
    for k in a.G:
        np.testing.assert_array_equal(a.G[k], b.G[k])


def test_build_single_party_and_rows():
    (s,) = _random_shares(6, dims=(3,))
    G = np.random.default_rng(0).standard_normal((3, 3))
    ds = build_collaborative_dataset([s], CollaborationMaps({0: G}, 3, {0: 0.0}, np.ones(3), np.eye(3)))
    np.testing.assert_array_equal(ds.X_check, s.X_tilde @ G)
    shares = _random_shares(7)
    ds = build_collaborative_dataset(shares, fit_collaboration(shares, 2))
    assert ds.X_check.shape == (60, 2)
    np.testing.assert_array_equal(ds.party_of_row, np.repeat([0, 1, 2], 20))


def test_build_missing_party():
    shares = _random_shares(8)
    maps = fit_collaboration(shares[:2], 2)
    with pytest.raises(CollaborationError):
        build_collaborative_dataset(shares, maps)


def _rows(ds):
    return {int(i): (tuple(x), int(z), float(y)) for i, x, z, y in zip(ds.ids, ds.X_check, ds.z, ds.y)}


def test_party_order_does_not_change_rows():
    shares = _random_shares(9)
    maps = fit_collaboration(shares, 3)
    fwd = build_collaborative_dataset(shares, maps)
    rev = build_collaborative_dataset(shares[::-1], maps)
    assert _rows(fwd) == _rows(rev)
    # refitting on the permuted order gives the same rows up to rounding
    refit = build_collaborative_dataset(shares[::-1], fit_collaboration(shares[::-1], 3))
    a, b = _rows(fwd), _rows(refit)
    for k in a:
        np.testing.assert_allclose(a[k][0], b[k][0], atol=1e-10)
