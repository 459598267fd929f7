import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetinterp.errors import NumericOverflow
from jetinterp.flow_atlas import (FlowWord, OvershearField, PolynomialField, ShearField, build_spanning_basis,
                                  decompose_field, decompose_monomial_field, field_coefficients, flow_eval, lift_at,
                                  push_coeffs)
from jetinterp.jet_core import JetTuple, dim_Y, index_set
from oracles import random_jet_coeffs


def random_field(rng, n=2, deg=2, over=None):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    v /= np.linalg.norm(v)
    lam = 0.5 * (rng.normal(size=n) + 1j * rng.normal(size=n))
    lam -= (lam @ v) * np.conj(v)
    profile = [(d, complex(*(0.2 * rng.normal(size=2)))) for d in range(deg + 1)]
    center = 0.2 * rng.normal(size=n)
    over = rng.uniform() < 0.5 if over is None else over
    if over:
        return OvershearField(v, lam, profile, center)
    return ShearField(v, lam, profile, center)


def random_tuple(rng, n=2, k=2, N=1):
    bp = np.array([[0.0] * n, [1.0] + [0.0] * (n - 1)])[:N]
    return JetTuple.from_coeffs(bp, np.stack([random_jet_coeffs(rng, n, k, image=b, scale=0.2) for b in bp]))


def test_translation_word():
    f = ShearField([1, 0], [0, 1], [(0, 1.0)])
    z = np.array([[0.3, -1.0]])
    assert np.allclose(flow_eval(FlowWord.from_fields([f], [2.5]), z), z + [2.5, 0])


def test_empty_word_is_identity(rng):
    z = rng.normal(size=(5, 2))
    assert np.array_equal(flow_eval(FlowWord(), z), z)


def test_shear_rejects_non_orthogonal_covector():
    with pytest.raises(ValueError):
        ShearField([1, 0], [1, 0], [(0, 1.0)])


def test_overshear_needs_normalized_mu():
    with pytest.raises(ValueError):
        OvershearField([1, 0], [0, 1], [(0, 1.0)], mu=[2, 0])


def test_inverse_word(rng):
    for _ in range(10):
        word = FlowWord.from_fields([random_field(rng) for _ in range(6)], 0.5 * rng.normal(size=6))
        z = 0.5 * (rng.normal(size=(20, 2)) + 1j * rng.normal(size=(20, 2)))
        assert np.abs(flow_eval(word.inverse(), flow_eval(word, z)) - z).max() < 1e-10


def test_overflow_is_reported():
    f = OvershearField([1, 0], [0, 1], [(2, 1.0)])
    with pytest.raises(NumericOverflow):
        flow_eval(FlowWord.from_fields([f], [1e4]), np.array([[1.0, 10.0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.booleans())
def test_flow_group_law(seed, over):
    rng = np.random.default_rng(seed)
    f = random_field(rng, over=over)
    z = 0.5 * (rng.normal(size=(8, 2)) + 1j * rng.normal(size=(8, 2)))
    s, t = 0.5 * (rng.normal(size=2) + 1j * rng.normal(size=2))
    two = flow_eval(FlowWord.from_fields([f, f], [s, t]), z)
    one = flow_eval(FlowWord.from_fields([f], [s + t]), z)
    assert np.abs(two - one).max() <= 1e-11 * max(1.0, np.abs(one).max())


DECOMPOSED = [f for e in index_set(2, 2).exponents for j in range(2) for f in decompose_monomial_field(tuple(e), j)]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(range(len(DECOMPOSED))))
def test_completeness_witness(seed, which):
    rng = np.random.default_rng(seed)
    f = DECOMPOSED[which]
    z = 0.5 * (rng.normal(size=(8, 2)) + 1j * rng.normal(size=(8, 2)))
    t = 10 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
    mid = flow_eval(FlowWord.from_fields([f], [t]), z)
    back = flow_eval(FlowWord.from_fields([f], [-t]), mid)
    # rounding in the intermediate image scales the absolute error
    assert np.abs(back - z).max() < 1e-11 * max(1.0, np.abs(mid).max())


def test_lift_at_identity_is_taylor_coefficients(rng):
    idx = index_set(2, 2)
    c = rng.normal(size=(2, idx.size))
    V = PolynomialField(c, idx)
    ident = JetTuple.identity(np.zeros((1, 2)), 2)
    assert np.allclose(lift_at(V, ident), c.reshape(-1))


def test_lift_of_zero_field(rng):
    V = PolynomialField(np.zeros((2, 6)), index_set(2, 2))
    assert not np.any(lift_at(V, random_tuple(rng)))


def test_lift_matches_finite_difference(rng):
    h = 1e-6
    for _ in range(10):
        V, gamma = random_field(rng), random_tuple(rng, N=2)
        fd = (push_coeffs([V], [h], gamma.coeffs, gamma.idx) - gamma.coeffs).reshape(-1) / h
        assert np.abs(fd - lift_at(V, gamma)).max() < 1e-5


def test_lift_flow_commutation(rng):
    # integrate the lifted field on jet space with RK4 and compare with the exact flow
    for _ in range(3):
        V, gamma = random_field(rng), random_tuple(rng)
        T, steps = 0.05, 50
        dt = T / steps
        y = gamma.coeffs

        def rhs(c):
            return lift_at(V, gamma.with_coeffs(c, check=False)).reshape(c.shape)

        for _ in range(steps):
            k1 = rhs(y)
            k2 = rhs(y + dt / 2 * k1)
            k3 = rhs(y + dt / 2 * k2)
            k4 = rhs(y + dt * k3)
            y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        exact = push_coeffs([V], [T], gamma.coeffs, gamma.idx)
        assert np.abs(exact - y).max() < 1e-6


def test_decomposition_examples():
    (f,) = decompose_monomial_field((0, 2), 0)
    assert isinstance(f, ShearField)
    (f,) = decompose_monomial_field((1, 0), 0)
    assert isinstance(f, OvershearField)
    fields = decompose_monomial_field((2, 0), 0)
    assert len(fields) > 1
    got = field_coefficients(fields, 2, 2)
    want = PolynomialField.monomial((2, 0), 0, 2).coeffs
    assert np.abs(got - want).max() < 1e-10
    for g in fields:
        assert abs(g.lam @ g.v).max() < 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_decompose_random_polynomial_field(n, rng):
    idx = index_set(n, 3)
    V = PolynomialField(rng.normal(size=(n, idx.size)), idx)
    fields = decompose_field(V)
    assert np.abs(field_coefficients(fields, n, 3) - V.coeffs).max() < 1e-10


@pytest.mark.parametrize("n,k,N", [(2, 1, 1), (2, 2, 1), (3, 1, 1), (2, 1, 2), (2, 2, 2), (2, 0, 3)])
def test_spanning_basis_rank(n, k, N):
    bp = np.zeros((N, n))
    bp[:, 0] = 3.0 * np.arange(N)
    basis = build_spanning_basis(JetTuple.identity(bp, k))
    assert basis.rank == dim_Y(n, k, N) == basis.M
    assert basis.singular_values[-1] >= 1e-8 * basis.singular_values[0]


def test_spanning_basis_at_nonidentity_anchor(rng):
    gamma = random_tuple(rng, N=2)
    basis = build_spanning_basis(gamma)
    assert basis.rank == dim_Y(2, 2, 2)
    # reanchoring keeps the fields and recomputes the lifted coordinates
    again = basis.reanchor(gamma)
    assert np.allclose(again.chart_jacobian, basis.chart_jacobian)
