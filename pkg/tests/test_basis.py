import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import esnfi.basis as basis_mod
from esnfi.basis import BasisError, fit_pca, project, reconstruct, reconstruct_values

from conftest import make_field


def gram_oracle(values):
    """Singular values and left vectors from eigh of the N x N Gram matrix."""
    c = values - values.mean(axis=1, keepdims=True)
    evals, evecs = np.linalg.eigh(c @ c.T)
    order = np.argsort(evals)[::-1]
    return np.sqrt(np.clip(evals[order], 0, None)), evecs[:, order]


def test_rank_one_exact(rng):
    u = rng.normal(size=12)
    u /= np.linalg.norm(u)
    v = rng.normal(size=9)
    v -= v.mean()
    f = make_field(np.outer(u, v) + 3.0)
    d = fit_pca(f, 1)
    np.testing.assert_allclose(reconstruct_values(d, d.coefficients), f.values, atol=1e-10)


def test_full_rank_identity(rng):
    f = make_field(rng.normal(size=(6, 8)))
    d = fit_pca(f, 6)
    np.testing.assert_allclose(reconstruct(d, d.coefficients).values, f.values, atol=1e-8)


def test_eckart_young_against_gram_oracle(rng):
    f = make_field(rng.normal(size=(100, 70)) @ np.diag(np.linspace(3, 0.1, 70)))
    d = fit_pca(f, 5)
    s_oracle, _ = gram_oracle(f.values)
    sse = np.sum((reconstruct_values(d, d.coefficients) - f.values) ** 2)
    discarded = np.sum(s_oracle[5:70] ** 2)
    assert abs(sse - discarded) <= 1e-6 * discarded
    np.testing.assert_allclose(d.singular_values, s_oracle[:70], rtol=1e-8, atol=1e-6)


def test_basis_spans_oracle_subspace(rng):
    f = make_field(rng.normal(size=(30, 20)) * np.linspace(4, 1, 20))
    d = fit_pca(f, 4)
    _, vecs = gram_oracle(f.values)
    # same subspace: projector difference vanishes
    P1 = d.basis @ d.basis.T
    P2 = vecs[:, :4] @ vecs[:, :4].T
    assert np.max(np.abs(P1 - P2)) < 1e-8


def test_orthonormal_and_sorted(rng):
    d = fit_pca(make_field(rng.normal(size=(40, 25))), 7)
    assert np.max(np.abs(d.basis.T @ d.basis - np.eye(7))) < 1e-10
    assert np.all(np.diff(d.singular_values) <= 0) and np.all(d.singular_values >= 0)
    assert len(d.singular_values) == 25


def test_sign_convention(rng):
    d = fit_pca(make_field(rng.normal(size=(15, 10))), 4)
    pivots = np.argmax(np.abs(d.basis), axis=0)
    assert np.all(d.basis[pivots, np.arange(4)] > 0)


def test_gram_route_matches_direct(rng, monkeypatch):
    for shape in ((30, 12), (12, 30)):
        f = make_field(rng.normal(size=shape))
        direct = fit_pca(f, 5)
        monkeypatch.setattr(basis_mod, "_DIRECT_SVD_LIMIT", 0)
        gram = fit_pca(f, 5)
        monkeypatch.undo()
        np.testing.assert_allclose(gram.basis, direct.basis, atol=1e-8)
        np.testing.assert_allclose(gram.singular_values, direct.singular_values, rtol=1e-8, atol=1e-8)


def test_retained_out_of_range(rng):
    f = make_field(rng.normal(size=(4, 6)))
    for r in (0, 5):
        with pytest.raises(BasisError):
            fit_pca(f, r)


def test_project_examples(rng):
    f = make_field(rng.normal(size=(10, 12)))
    d = fit_pca(f, 3)
    np.testing.assert_array_equal(project(d, f), d.coefficients)
    flat = make_field(np.repeat(d.column_mean[:, None], 12, axis=1))
    assert np.max(np.abs(project(d, flat))) < 1e-14
    with pytest.raises(BasisError):
        project(d, make_field(np.zeros((3, 12))))


def test_reconstruct_examples(rng):
    f = make_field(rng.normal(size=(10, 12)))
    d = fit_pca(f, 3)
    np.testing.assert_array_equal(reconstruct(d, np.zeros((3, 4))).values,
                                  np.repeat(d.column_mean[:, None], 4, axis=1))
    e1 = reconstruct(d, np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(e1.values[:, 0], d.basis[:, 0] + d.column_mean, atol=1e-15)
    like = reconstruct(d, d.coefficients, like=f)
    assert like.times == f.times and like.variable_name == f.variable_name
    with pytest.raises(BasisError):
        reconstruct(d, np.zeros((2, 4)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_project_reconstruct_identity(seed, p):
    r = np.random.default_rng(seed)
    d = fit_pca(make_field(r.normal(size=(12, 9))), p)
    c = r.normal(size=(p, 5))
    np.testing.assert_allclose(project(d, reconstruct_values(d, c)), c, atol=1e-10)
    # projecting twice changes nothing on the span
    z = reconstruct_values(d, project(d, r.normal(size=(12, 4))))
    np.testing.assert_allclose(reconstruct_values(d, project(d, z)), z, atol=1e-10)
