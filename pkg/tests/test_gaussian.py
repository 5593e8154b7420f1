import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waverg.errors import DomainError
from waverg.gaussian import (
    GaussianState,
    WeylDescriptor,
    coherent_distance,
    coherent_overlap,
    symplectic_form,
    two_point,
    weyl_expectation,
    wick_correlator,
    wick_from_two_point,
)
from waverg.lattice import HarmonicModel, LatticeSpec, ground_state

from .oracles import brute_wick, coupling_matrix, expm_hermitian, fock_ground_state, wick_pairings


@pytest.fixture(scope="module")
def two_site():
    """Package ground state and truncated-Fock ground vector of the 2-site chain."""
    spec = LatticeSpec(1, 1.0, 1.0, 0)
    model = HarmonicModel.on_trajectory(spec, 1.0)
    vec, _, Q, P = fock_ground_state(coupling_matrix(2, 1, model.mu), spec.eps, n_max=30)
    return ground_state(model), vec, Q, P


def _op(Q, P, item):
    (site,), fld = item
    return Q[site] if fld == "phi" else P[site]


def _weyl_op(Q, P, w):
    X = sum(w.f[x] * Q[x] + w.g[x] * P[x] for x in range(len(Q)))
    return expm_hermitian(X)


def test_wick_pairing_count():
    assert len(list(wick_pairings(6))) == 15
    assert len(list(wick_pairings(8))) == 105
    assert list(wick_pairings(3)) == []


@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 6), seed=st.integers(0, 2**31 - 1))
def test_wick_recursion_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    T = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    got = wick_from_two_point(n, lambda i, j: T[i, j], lambda i: 0.0)
    ref = brute_wick(lambda i, j: T[i, j], n) if n % 2 == 0 else 0.0
    assert abs(got - ref) <= 1e-12 * max(1.0, abs(ref))


def test_wick_with_means():
    # <(a + X)(b + Y)> = ab + <XY>
    got = wick_from_two_point(2, lambda i, j: 0.7 + 0.1j, lambda i: [2.0, -3.0][i])
    assert got == pytest.approx(-6.0 + 0.7 + 0.1j)


@pytest.mark.parametrize("monomial", [
    [((0,), "phi"), ((1,), "phi")],
    [((0,), "phi"), ((0,), "pi")],
    [((0,), "pi"), ((0,), "phi")],
    [((0,), "phi"), ((1,), "pi"), ((1,), "pi"), ((0,), "phi")],
    [((0,), "pi"), ((1,), "phi"), ((0,), "phi"), ((1,), "pi")],
    [((0,), "phi")] * 4,
])
def test_ordered_correlators_match_fock(two_site, monomial):
    gs, vec, Q, P = two_site
    op = np.eye(len(vec))
    for item in monomial:
        op = op @ _op(Q, P, item)
    ref = np.vdot(vec, op @ vec)
    assert abs(wick_correlator(gs, monomial) - ref) <= 1e-9


def test_commutator_is_canonical(two_site):
    gs = two_site[0]
    assert two_point(gs, 0, 0, "phi", "pi") - two_point(gs, 0, 0, "pi", "phi") == pytest.approx(1j)
    assert two_point(gs, 0, 1, "phi", "pi") - two_point(gs, 1, 0, "pi", "phi") == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("f,g", [([0.4, 0.0], [0.0, 0.0]), ([0.3, -0.2], [0.1, 0.5]), ([0.0, 0.0], [0.0, 0.6])])
def test_weyl_expectation_matches_fock(two_site, f, g):
    gs, vec, Q, P = two_site
    w = WeylDescriptor(gs.spec, f, g)
    ref = np.vdot(vec, _weyl_op(Q, P, w) @ vec)
    assert abs(weyl_expectation(gs, w) - ref) <= 1e-9


def test_coherent_overlap_matches_fock(two_site):
    gs, vec, Q, P = two_site
    w1 = WeylDescriptor(gs.spec, [0.3, 0.1], [-0.2, 0.0])
    w2 = WeylDescriptor(gs.spec, [0.0, -0.25], [0.15, 0.35])
    u, v = _weyl_op(Q, P, w1) @ vec, _weyl_op(Q, P, w2) @ vec
    assert abs(coherent_overlap(gs, w1, w2) - np.vdot(u, v)) <= 1e-9
    assert coherent_distance(gs, w1, w2) == pytest.approx(np.linalg.norm(u - v), abs=1e-8)
    assert coherent_distance(gs, w1, w1) == 0.0


def test_weyl_relation_matches_fock(two_site):
    # W(w1) W(w2) = exp(-i sigma / 2) W(w1 + w2)
    gs, vec, Q, P = two_site
    w1 = WeylDescriptor(gs.spec, [0.3, 0.0], [0.0, 0.2])
    w2 = WeylDescriptor(gs.spec, [0.0, 0.1], [0.4, 0.0])
    lhs = _weyl_op(Q, P, w1) @ _weyl_op(Q, P, w2)
    rhs = np.exp(-0.5j * symplectic_form(w1, w2)) * _weyl_op(Q, P, w1 + w2)
    assert abs(np.vdot(vec, lhs @ vec) - np.vdot(vec, rhs @ vec)) <= 1e-9


def test_displaced_means_match_fock(two_site):
    gs, vec, Q, P = two_site
    p = WeylDescriptor(gs.spec, [0.3, -0.1], [0.2, 0.45])
    u = _weyl_op(Q, P, p) @ vec
    disp = gs.displaced(p)
    mphi, mpi = disp.means
    for x in range(2):
        assert mphi[x] == pytest.approx(np.vdot(u, Q[x] @ u).real, abs=1e-9)
        assert mpi[x] == pytest.approx(np.vdot(u, P[x] @ u).real, abs=1e-9)
    np.testing.assert_allclose(mphi, -p.g, atol=1e-15)
    np.testing.assert_allclose(mpi, p.f, atol=1e-15)
    # second moments in the coherent vector
    ref = np.vdot(u, Q[0] @ P[1] @ Q[1] @ u)
    got = wick_correlator(disp, [((0,), "phi"), ((1,), "pi"), ((1,), "phi")])
    assert abs(got - ref) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_symplectic_form_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    spec = LatticeSpec(2, 1.0, 0.5, 0)
    gs = ground_state(HarmonicModel.on_trajectory(spec, 1.3))
    w1 = WeylDescriptor(spec, rng.normal(size=spec.shape), rng.normal(size=spec.shape))
    w2 = WeylDescriptor(spec, rng.normal(size=spec.shape), rng.normal(size=spec.shape))
    s12 = symplectic_form(w1, w2)
    assert s12 == pytest.approx(-symplectic_form(w2, w1), abs=1e-12)
    assert gs.symplectic(w1, w2) == pytest.approx(s12, abs=1e-10)
    assert symplectic_form(w1, w1) == pytest.approx(0.0, abs=1e-12)
    # Robertson-Schroedinger: positivity of the state's two-point form
    assert gs.quadratic_form(w1) * gs.quadratic_form(w2) >= 0.25 * s12**2 - 1e-10


def test_uncertainty_of_mixed_state():
    spec = LatticeSpec(1, 1.0, 1.0, 1)
    gs = GaussianState(spec, np.full(spec.shape, 1.0), np.full(spec.shape, 0.5))
    np.testing.assert_allclose(gs.uncertainty_product(), 0.5)
    np.testing.assert_allclose(gs.purity(), 1 / (2 * math.sqrt(0.5)))


def test_state_validation():
    spec = LatticeSpec(1, 1.0, 1.0, 0)
    with pytest.raises(DomainError):
        GaussianState(spec, np.array([1.0, 1.0j]), np.ones(2))
    with pytest.raises(DomainError):
        GaussianState(spec, np.ones(2), np.ones(2), means=(np.zeros(2), np.zeros(2)), mean_hat=(np.zeros(2), np.zeros(2)))
    with pytest.raises(DomainError):
        WeylDescriptor.delta(spec, 0, "chi")
    with pytest.raises(DomainError):
        WeylDescriptor.delta(spec, (0, 0), "phi")
    other = LatticeSpec(1, 1.0, 1.0, 1)
    with pytest.raises(DomainError):
        WeylDescriptor.zero(spec) + WeylDescriptor.zero(other)


def test_translation_of_spectral_descriptor():
    spec = LatticeSpec(1, 2.0, 1.0, 1)
    gs = ground_state(HarmonicModel.on_trajectory(spec, 1.0))
    a = WeylDescriptor.delta(spec, 0).spectral()
    b = WeylDescriptor.delta(spec, 3).spectral()
    assert gs.bilinear(a.translated(3 * spec.eps), b) == pytest.approx(gs.bilinear(a, a), rel=1e-13)
