"""Acceptance criteria, each at its stated tolerance, one pass/fail line per criterion."""

import math
from pathlib import Path

import numpy as np

from waverg.cli import main
from waverg.dynamics import correlator_convergence, dynamics_error, lightcone_fit, commutator_profile
from waverg.experiments import CORRELATOR_CASES, dynamics_probes
from waverg.gaussian import GaussianState
from waverg.lattice import HarmonicModel, LatticeSpec, ground_state
from waverg.mera import verify_layer
from waverg.rg import (
    build_map,
    coarse_graining_stability,
    flow_report,
    momentum_fast_path,
    pi_block_partial_sums,
    renormalize_state,
    scaling_limit_state,
)
from waverg.wavelets import cascade_evaluate, daubechies_filter

from .oracles import aitken, cascade_limit_kernels

ACCEPTANCE_INI = Path(__file__).resolve().parent.parent / "configs" / "acceptance.ini"
SQ3 = math.sqrt(3.0)
D4 = np.array([1 + SQ3, 3 + SQ3, 3 - SQ3, 1 - SQ3]) / (4 * math.sqrt(2.0))


def test_criterion_01_filter_identities(acceptance):
    worst = max(max(daubechies_filter(K).residuals().values()) for K in range(1, 11))
    d4 = float(np.max(np.abs(daubechies_filter(2).h - D4)))
    acceptance(1, worst <= 1e-12 and d4 <= 1e-12,
               f"max filter residual K=1..10 {worst:.2e}, D4 closed form {d4:.2e} (tol 1e-12)")


def test_criterion_02_ccr_and_semigroup(acceptance):
    ccr, semi = 0.0, 0.0
    for d in (1, 2):
        src = LatticeSpec(d, 1.0, 1.0, 0)
        for K in (1, 2, 3):
            bank = daubechies_filter(K)
            for M in range(1, 7):
                ccr = max(ccr, build_map(src, src.refine(M), bank).ccr_residual())
            mid = src.refine(2)
            two = build_map(src, mid, bank).compose(build_map(mid, src.refine(5), bank))
            direct = build_map(src, src.refine(5), bank)
            semi = max(semi, float(np.max(np.abs(two.A_phi - direct.A_phi))),
                       float(np.max(np.abs(two.A_pi - direct.A_pi))))
    acceptance(2, ccr <= 1e-10 and semi <= 1e-12,
               f"CCR residual {ccr:.2e} (tol 1e-10), semigroup {semi:.2e} (roundoff, tol 1e-12)")


def _random_instance(seed):
    rng = np.random.default_rng(1000 + seed)
    d = int(rng.integers(1, 3))
    K = int(rng.integers(1, 5))
    M = int(rng.integers(1, 5 if d == 1 else 3))
    src = LatticeSpec(d, float(rng.choice([1.0, 2.0])), 1.0, int(rng.integers(0, 2)))
    fine = src.refine(M)
    if rng.random() < 0.5:
        state = ground_state(HarmonicModel.on_trajectory(fine, float(rng.uniform(0.2, 3.0))))
    else:
        # random symmetric positive spectra with random means
        flip = tuple(slice(None, None, -1) for _ in range(d))
        axes = tuple(range(d))
        a, b = rng.uniform(0.1, 3.0, fine.shape), rng.uniform(0.1, 3.0, fine.shape)
        a = 0.5 * (a + np.roll(a[flip], 1, axis=axes))
        b = 0.5 * (b + np.roll(b[flip], 1, axis=axes))
        state = GaussianState(fine, a, b, means=(rng.normal(size=fine.shape), rng.normal(size=fine.shape)))
    return build_map(src, fine, daubechies_filter(K)), state


def test_criterion_03_fast_path_oracle(acceptance):
    worst = 0.0
    for seed in range(60):
        omap, state = _random_instance(seed)
        fast, slow = momentum_fast_path(state, omap), renormalize_state(state, omap)
        for name in ("phiphi", "pipi", "phipi"):
            worst = max(worst, float(np.max(np.abs(fast.position_kernel(name) - slow.position_kernel(name)))))
        if state.means is not None:
            worst = max(worst, *(float(np.max(np.abs(a - b))) for a, b in zip(fast.means, slow.means)))
    acceptance(3, worst <= 1e-10, f"60 random instances, max deviation {worst:.2e} (tol 1e-10)")


def test_criterion_04_limit_cross_validation(acceptance):
    spec, bank = LatticeSpec(1, 1.0, 1.0, 2), daubechies_filter(2)
    lim = scaling_limit_state(spec, 1.0, bank)
    rep = flow_report(spec, bank, 10, m=1.0, limit=lim)
    dev = {name: float(np.max(np.abs(rep.extrapolated[name][0] - lim.state.position_kernel(name))))
           for name in ("phiphi", "pipi")}
    stab = max(coarse_graining_stability(spec, 1.0, bank, lim.cutoff_level).values())
    ok = max(dev.values()) <= 1e-6 and stab <= 1e-8
    acceptance(4, ok, f"extrapolated flow vs limit phiphi {dev['phiphi']:.2e} pipi {dev['pipi']:.2e} "
                      f"(tol 1e-6); stability {stab:.2e} (tol 1e-8)")


def test_criterion_05_continuum_identification(acceptance):
    spec = LatticeSpec(1, 1.0, 1.0, 2)
    parts = []
    worst = 0.0
    for K in (2, 3):
        bank = daubechies_filter(K)
        lim = scaling_limit_state(spec, 1.0, bank, tol=1e-10)
        runs = [cascade_limit_kernels(bank, spec.L, spec.eps, 1.0, J, cascade_evaluate) for J in (12, 13, 14)]
        phi = runs[-1][0]
        pi = aitken(*[r[1] for r in runs])
        dphi = float(np.max(np.abs(phi - lim.state.position_kernel("phiphi"))))
        dpi = float(np.max(np.abs(pi - lim.state.position_kernel("pipi"))))
        worst = max(worst, dphi, dpi)
        parts.append(f"K={K} phiphi {dphi:.1e} pipi {dpi:.1e}")
    acceptance(5, worst <= 1e-6, "limit vs cascade quadrature: " + ", ".join(parts) + " (tol 1e-6)")


def test_criterion_06_sobolev_dichotomy(acceptance):
    cut = [1e2, 1e4, 1e6]
    haar = pi_block_partial_sums(daubechies_filter(1), cut)
    d4 = pi_block_partial_sums(daubechies_filter(2), cut)
    hinc, dinc = np.diff(haar), np.diff(d4)
    haar_ok = bool(np.all(hinc > 0) and hinc[1] >= hinc[0])
    d4_ok = bool(np.all(np.abs(dinc) < 1e-4))
    acceptance(6, haar_ok and d4_ok,
               f"Haar increments {hinc[0]:.5f}, {hinc[1]:.5f} ({'ok' if haar_ok else 'fail'}); "
               f"K=2 increments {dinc[0]:.3e}, {dinc[1]:.3e} vs 1e-4 ({'ok' if d4_ok else 'fail'})")


def test_criterion_07_light_cone(acceptance):
    spec = LatticeSpec(1, 8.0, 1.0, 6)
    assert spec.n == 1024
    model = HarmonicModel.on_trajectory(spec, 1.0)
    r = spec.separations().ravel()
    t_grid = np.linspace(0.05, 1.0, 20)
    exterior = 0.0
    for t in t_grid:
        c = np.abs(commutator_profile(model, t)).ravel()
        exterior = max(exterior, float(np.max(c[r > 3 * t + 0.1])))
    fit = lightcone_fit(model, t_grid)
    ok = exterior < 1e-8 and fit.decay_rate > 0 and fit.r_squared >= 0.95
    acceptance(7, ok, f"1024 sites: exterior max {exterior:.2e} (tol 1e-8), decay rate {fit.decay_rate:.1f}, "
                      f"R^2 {fit.r_squared:.3f} (>= 0.95), fitted velocity {fit.velocity:.3f}")


def test_criterion_08_dynamics_convergence(acceptance):
    spec = LatticeSpec(1, 1.0, 1.0, 0)
    bank = daubechies_filter(10)
    ws, psi = dynamics_probes(spec)
    t_grid = (0.0, 0.25, 0.5, 0.75, 1.0)
    deltas = (0.0, 0.5, 1.0)
    finest, monotone, ratio = 0.0, True, dict.fromkeys(deltas, 0.0)
    for w in ws.values():
        for t in t_grid:
            errs = [dynamics_error(w, psi, spec.N + M, bank, 1.0, t, deltas=deltas) for M in range(1, 7)]
            lhs = np.array([e.lhs for e in errs])
            finest = max(finest, lhs[-1])
            if t == 0.0:
                monotone &= bool(np.all(lhs <= 1e-12))
            else:
                monotone &= bool(np.all(np.diff(lhs) < 0))
            for dl in deltas:
                ratio[dl] = max(ratio[dl], max(e.lhs / e.rhs[dl] for e in errs))
    finite = all(math.isfinite(v) for v in ratio.values())
    # filter K=2 at N=2 for information only
    spec2 = LatticeSpec(1, 1.0, 1.0, 2)
    w2, psi2 = dynamics_probes(spec2)
    info = dynamics_error(w2["phi0+pi0"], psi2, spec2.N + 6, daubechies_filter(2), 1.0, 1.0).lhs
    ratios = ", ".join(f"delta={dl:g}: {v:.2e}" for dl, v in ratio.items())
    acceptance(8, finest < 1e-3 and monotone and finite,
               f"K=10 N=0, 3 descriptors x 5 times: finest lhs {finest:.2e} (tol 1e-3), decreasing {monotone}; "
               f"sup lhs/rhs {ratios}; info K=2 N=2 lhs(N+6, t=1) {info:.2e}")


def test_criterion_09_correlator_convergence(acceptance):
    spec = LatticeSpec(1, 2.0, 1.0, 0)
    bank = daubechies_filter(6)
    x = [spec.eps]
    finest, monotone = 0.0, True
    for A, B in CORRELATOR_CASES.values():
        A = [((s,), f) for s, f in A]
        B = [((s,), f) for s, f in B]
        for t in (0.3, 0.7):
            diffs = np.array([correlator_convergence(spec, spec.N + M, bank, 1.0, A, B, t, x).difference
                              for M in range(5, 9)])
            monotone &= bool(np.all(np.diff(diffs) < 0))
            finest = max(finest, diffs[-1])
    acceptance(9, monotone and finest < 1e-3,
               f"5 cases (2- and 4-point) x t in (0.3, 0.7), x = eps_N, N'=N+5..N+8: decreasing {monotone}, "
               f"finest {finest:.2e} (tol 1e-3)")


def test_criterion_10_mera_layer(acceptance):
    spec = LatticeSpec(1, 1.0, 1.0, 2)
    parts, ok = [], True
    for K in (1, 2):
        rep = verify_layer(spec, daubechies_filter(K), 1.0, cutoff_level=8)
        fac = max(rep.factorization_phi, rep.dwt_factorization_phi, rep.dwt_factorization_pi)
        ok &= rep.orthogonality <= 1e-12 and fac <= 1e-12 and rep.gram <= 1e-6
        parts.append(f"K={K} orth {rep.orthogonality:.1e} fact {fac:.1e} gram {rep.gram:.1e} "
                     f"(circulant Pi partner {rep.factorization_pi:.2f}, info)")
    acceptance(10, ok, "; ".join(parts))


def test_criterion_11_determinism(acceptance, tmp_path):
    codes = [main(["run", str(ACCEPTANCE_INI), "--out", str(tmp_path / name)]) for name in ("a", "b")]
    a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*.csv"))
    same = a == b and all((tmp_path / "a" / p).read_bytes() == (tmp_path / "b" / p).read_bytes() for p in a)
    acceptance(11, same and codes == [0, 0] and len(a) > 0,
               f"{len(a)} CSV files byte-identical across two runs: {same}; exit codes {codes}")
