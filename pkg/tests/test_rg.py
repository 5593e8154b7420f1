import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waverg.errors import CutoffError, DomainError, SobolevError
from waverg.gaussian import GaussianState, WeylDescriptor, wick_correlator
from waverg.lattice import HarmonicModel, LatticeSpec, ground_state
from waverg.rg import (
    build_map,
    coarse_graining_stability,
    flow_report,
    fold,
    map_symbol,
    map_symbol_power,
    momentum_fast_path,
    pi_block_partial_sums,
    push_spectral,
    renormalize_state,
    richardson,
    scaling_limit_state,
    tile_to,
    trajectory_flow,
)
from waverg.wavelets import cascade_evaluate, daubechies_filter

from .oracles import aitken, cascade_limit_kernels

# N=2, L=1, eps0=1, K=2, m=1; cross-checked by the cascade quadrature below
PHIPHI0 = 0.541787714140182
PIPI0 = 1.00525067358


@pytest.mark.parametrize("d,K,M", [(1, 1, 1), (1, 2, 4), (1, 3, 6), (2, 1, 2), (2, 2, 3), (2, 3, 2)])
def test_map_preserves_ccr(d, K, M):
    src = LatticeSpec(d, 1.0, 0.5 if d == 1 else 1.0, 0)
    omap = build_map(src, src.refine(M), daubechies_filter(K))
    assert omap.ccr_residual() <= 1e-12


@pytest.mark.parametrize("d", [1, 2])
def test_map_semigroup(d):
    bank = daubechies_filter(2)
    a = LatticeSpec(d, 1.0, 1.0, 0)
    b, c = a.refine(1), a.refine(3)
    composed = build_map(a, b, bank).compose(build_map(b, c, bank))
    direct = build_map(a, c, bank)
    np.testing.assert_allclose(composed.A_phi, direct.A_phi, atol=1e-14)
    np.testing.assert_allclose(composed.A_pi, direct.A_pi, atol=1e-13)


def test_one_step_matrix_entries():
    bank = daubechies_filter(2)
    src = LatticeSpec(1, 2.0, 1.0, 0)
    omap = build_map(src, src.refine(1), bank)
    # coarse site 1 sits on fine site 2; taps run forward with wrap-around
    row = np.zeros(8)
    for n, h in enumerate(bank.h):
        row[(2 + n) % 8] = h
    np.testing.assert_allclose(omap.A_phi[1], row / math.sqrt(2), atol=1e-16)
    np.testing.assert_allclose(omap.A_pi[1], row * math.sqrt(2), atol=1e-16)


def test_map_domain_errors():
    bank = daubechies_filter(2)
    a = LatticeSpec(1, 1.0, 1.0, 2)
    with pytest.raises(DomainError):
        build_map(a, LatticeSpec(1, 1.0, 1.0, 1), bank)
    with pytest.raises(DomainError):
        build_map(a, LatticeSpec(1, 2.0, 1.0, 3), bank)
    with pytest.raises(DomainError):
        build_map(a, a.refine(1), bank).compose(build_map(a, a.refine(1), bank))
    with pytest.raises(DomainError):
        build_map(a, a.refine(1), bank).push(WeylDescriptor.zero(a.refine(1)))
    with pytest.raises(DomainError):
        momentum_fast_path(ground_state(HarmonicModel.on_trajectory(a, 1.0)), 3, bank)


def _random_state(spec, rng, means):
    """Random translation-invariant positive state (random pure per-mode data made symmetric)."""
    phi = rng.uniform(0.2, 2.0, spec.shape)
    pi = rng.uniform(0.2, 2.0, spec.shape)
    # symmetrise under k -> -k so the kernels are real
    flip = tuple(slice(None, None, -1) for _ in range(spec.d))
    phi = 0.5 * (phi + np.roll(phi[flip], 1, axis=tuple(range(spec.d))))
    pi = 0.5 * (pi + np.roll(pi[flip], 1, axis=tuple(range(spec.d))))
    m = None
    if means:
        m = (rng.normal(size=spec.shape), rng.normal(size=spec.shape))
    return GaussianState(spec, phi, pi, means=m)


@pytest.mark.parametrize("seed", range(50))
def test_fast_path_matches_real_space(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 3))
    K = int(rng.integers(1, 4))
    M = int(rng.integers(1, 4 if d == 1 else 3))
    N0 = int(rng.integers(0, 2))
    src = LatticeSpec(d, float(rng.choice([1.0, 2.0])), 1.0, N0)
    bank = daubechies_filter(K)
    omap = build_map(src, src.refine(M), bank)
    if seed % 2:
        state = ground_state(HarmonicModel.on_trajectory(src.refine(M), float(rng.uniform(0.3, 3.0))))
    else:
        state = _random_state(src.refine(M), rng, means=seed % 4 == 0)
    fast = momentum_fast_path(state, omap)
    slow = renormalize_state(state, omap)
    for name in ("phiphi", "pipi", "phipi"):
        np.testing.assert_allclose(fast.position_kernel(name), slow.position_kernel(name), atol=1e-10)
    if state.means is not None:
        for a, b in zip(fast.means, slow.means):
            np.testing.assert_allclose(a, b, atol=1e-10)


def test_pullback_equals_pushed_descriptors():
    # omega(alpha(W)) computed on the fine lattice equals the pulled-back state on W
    bank = daubechies_filter(3)
    src = LatticeSpec(1, 1.0, 1.0, 1)
    omap = build_map(src, src.refine(2), bank)
    fine = ground_state(HarmonicModel.on_trajectory(src.refine(2), 1.4))
    coarse = momentum_fast_path(fine, omap)
    rng = np.random.default_rng(3)
    w = WeylDescriptor(src, rng.normal(size=src.shape), rng.normal(size=src.shape))
    assert coarse.quadratic_form(w) == pytest.approx(fine.quadratic_form(omap.push(w)), rel=1e-12)
    ps = push_spectral(w, 2, bank)
    pushed = omap.push(w).spectral()
    np.testing.assert_allclose(ps.fhat, pushed.fhat, atol=1e-12)
    np.testing.assert_allclose(ps.ghat, pushed.ghat, atol=1e-12)


def test_wick_correlators_pull_back():
    bank = daubechies_filter(2)
    src = LatticeSpec(1, 1.0, 1.0, 1)
    omap = build_map(src, src.refine(2), bank)
    fine = ground_state(HarmonicModel.on_trajectory(src.refine(2), 1.0))
    coarse = momentum_fast_path(fine, omap)
    items = [WeylDescriptor.delta(src, 0, "phi"), WeylDescriptor.delta(src, 1, "pi"),
             WeylDescriptor.delta(src, 2, "phi"), WeylDescriptor.delta(src, 0, "pi")]
    got = wick_correlator(coarse, items)
    ref = wick_correlator(fine, [omap.push(w) for w in items])
    assert abs(got - ref) <= 1e-12


@pytest.mark.parametrize("K", [1, 2, 4])
def test_map_symbol_power_is_modulus(K):
    bank = daubechies_filter(K)
    src = LatticeSpec(2, 1.0, 1.0, 0)
    np.testing.assert_allclose(map_symbol_power(src, 3, bank), np.abs(map_symbol(src, 3, bank)) ** 2, atol=1e-13)


def test_fold_and_tile():
    x = np.arange(16.0).reshape(4, 4)
    np.testing.assert_array_equal(fold(x, 2, 2), [[0 + 2 + 8 + 10, 1 + 3 + 9 + 11], [4 + 6 + 12 + 14, 5 + 7 + 13 + 15]])
    a, b = LatticeSpec(1, 1.0, 1.0, 0), LatticeSpec(1, 1.0, 1.0, 2)
    np.testing.assert_array_equal(tile_to(a, b, np.array([1.0, 2.0])), [1, 2] * 4)
    with pytest.raises(DomainError):
        tile_to(b, a, np.zeros(8))


def test_richardson_exact_on_geometric_sequences():
    limit, rho = 3.0, 0.37
    seq = [limit + 2.0 * rho**j for j in range(5)]
    est, r = richardson(seq)
    assert r == pytest.approx(rho, rel=1e-12) and est == pytest.approx(limit, rel=1e-13)
    est, r = richardson(seq[-2:], ratio=rho)
    assert est == pytest.approx(limit, rel=1e-13)
    with pytest.raises(DomainError):
        richardson(seq[:2])
    est, r = richardson([1.0, 1.0, 1.0])
    assert est == 1.0 and r == 0.0


@pytest.fixture(scope="module")
def d4_limit():
    return scaling_limit_state(LatticeSpec(1, 1.0, 1.0, 2), 1.0, daubechies_filter(2))


def test_limit_frozen_values(d4_limit):
    lim = d4_limit
    assert lim.state.position_kernel("phiphi")[0] == pytest.approx(PHIPHI0, abs=1e-10)
    assert lim.state.position_kernel("pipi")[0] == pytest.approx(PIPI0, abs=1e-8)
    assert lim.extrapolated and max(lim.tail_error.values()) < 1e-8
    assert np.all(lim.state.phipi == 0)


def test_limit_frozen_values_by_cascade_quadrature():
    bank = daubechies_filter(2)
    runs = [cascade_limit_kernels(bank, 1.0, 0.25, 1.0, J, cascade_evaluate) for J in (12, 13, 14)]
    assert runs[-1][0][0] == pytest.approx(PHIPHI0, abs=1e-8)
    assert aitken(*[r[1][0] for r in runs]) == pytest.approx(PIPI0, abs=5e-8)


def test_limit_zero_mode_sum():
    # at q = 0 the aliases sit on zeros of s_hat, so only k = 0 contributes
    spec = LatticeSpec(1, 2.0, 1.0, 0)
    lim = scaling_limit_state(spec, 0.5, daubechies_filter(6))
    tail = lim.state.phiphi[0] - 1 / (2 * spec.eps * 0.5)
    assert abs(tail) < 1e-6


def test_flow_converges_to_limit(d4_limit):
    spec = LatticeSpec(1, 1.0, 1.0, 2)
    rep = flow_report(spec, daubechies_filter(2), 10, m=1.0, limit=d4_limit)
    for name in ("phiphi", "pipi"):
        res = rep.column(f"residual_{name}")
        assert np.all(np.diff(res[2:]) < 0)
        est, _ = rep.extrapolated[name]
        assert np.max(np.abs(est - d4_limit.state.position_kernel(name))) <= 1e-6


@pytest.mark.parametrize("K,d", [(2, 1), (3, 1), (2, 2)])
def test_coarse_graining_stability(K, d):
    spec = LatticeSpec(d, 1.0, 1.0, 1)
    dev = coarse_graining_stability(spec, 1.0, daubechies_filter(K), 6 if d == 1 else 3)
    assert max(dev.values()) <= 1e-8


def test_haar_limit_requires_opt_in():
    spec = LatticeSpec(1, 1.0, 1.0, 1)
    with pytest.raises(SobolevError):
        scaling_limit_state(spec, 1.0, daubechies_filter(1))
    lim = scaling_limit_state(spec, 1.0, daubechies_filter(1), allow_divergent=True)
    assert lim.divergent and math.isinf(lim.tail_error["pipi"])
    assert lim.tail_error["phiphi"] < 1e-8


def test_limit_cutoff_errors():
    spec = LatticeSpec(1, 1.0, 1.0, 2)
    bank = daubechies_filter(2)
    with pytest.raises(CutoffError):
        scaling_limit_state(spec, 1.0, bank, cutoff_level=2)
    with pytest.raises(CutoffError):
        scaling_limit_state(spec, 1.0, bank, cutoff_level=40)
    with pytest.raises(CutoffError):
        scaling_limit_state(spec, 1.0, bank, tol=1e-30)
    with pytest.raises(DomainError):
        scaling_limit_state(spec, 0.0, bank)


def test_fixed_mu_flow_goes_ultralocal():
    spec = LatticeSpec(1, 2.0, 1.0, 1)
    rep = flow_report(spec, daubechies_filter(2), 6, mu=2.0)
    loc = rep.column("locality_phiphi")
    assert loc[-1] < loc[0] and rep.limit is None and rep.extrapolated is None


def test_trajectory_flow_argument_check():
    spec = LatticeSpec(1, 1.0, 1.0, 0)
    with pytest.raises(DomainError):
        trajectory_flow(spec, daubechies_filter(2), 2)
    with pytest.raises(DomainError):
        trajectory_flow(spec, daubechies_filter(2), 2, m=1.0, mu=2.0)
    with pytest.raises(DomainError):
        flow_report(spec, daubechies_filter(2), 1, m=1.0)


@settings(max_examples=25, deadline=None)
@given(m=st.floats(0.3, 4.0), K=st.integers(2, 5))
def test_limit_state_is_positive(m, K):
    lim = scaling_limit_state(LatticeSpec(1, 1.0, 1.0, 1), m, daubechies_filter(K), tol=1e-7)
    u = lim.state.uncertainty_product()
    # restricting the continuum vacuum to smeared fields leaves a mixed but positive state
    assert np.all(u >= 0.25 - 1e-9)


def test_pi_block_partial_sums_haar_closed_form():
    # |s_hat(q)|**2 = sinc(q/2)**2 for Haar; direct adaptive quadrature
    f = lambda q: mpmath.sqrt(1 + q * q) * mpmath.sin(q / 2) ** 2 / (q / 2) ** 2
    ref = 2 * mpmath.quad(f, mpmath.linspace(0, 100, 64)) / (4 * mpmath.pi)
    assert pi_block_partial_sums(daubechies_filter(1), [100.0])[0] == pytest.approx(float(ref), abs=1e-9)


def test_pi_block_partial_sums_match_large_torus_limit():
    lim = scaling_limit_state(LatticeSpec(1, 16.0, 1.0, 0), 1.0, daubechies_filter(2))
    tail = lim.state.position_kernel("pipi")[0] - pi_block_partial_sums(daubechies_filter(2), [1e5])[0]
    # remaining tail beyond q = 1e5 is of order 1e-5
    assert 0 < tail < 3e-5
