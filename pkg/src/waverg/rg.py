"""Wavelet renormalisation group for free lattice fields.

One RG step sends a scale-``N`` field to filter-weighted fields one scale
finer::

    Phi_N(x) -> 2**-0.5 * sum_n h_n Phi_{N+1}(x + n eps_{N+1})
    Pi_N(x)  -> 2**+0.5 * sum_n h_n Pi_{N+1}(x + n eps_{N+1})

with the separable d-dimensional filter ``h_n = prod_j h_{n_j}``.  The
prefactors are the same in every dimension; they make the step compatible
with the continuum embedding ``Phi_N(x) -> eps_N**-0.5 Phi(s_x)`` and
``Pi_N(x) -> eps_N**0.5 Pi(s_x)`` and preserve the CCR.

Matrices ``A[x, u]`` hold the coefficient of the fine field at ``u`` in
the image of the coarse field at ``x``; composition is ``A1 @ A2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CutoffError, DomainError, SobolevError
from .gaussian import GaussianState, WeylDescriptor
from .lattice import HarmonicModel, LatticeSpec, continuum_dispersion, ground_state
from .wavelets import m0, m0_power, scaling_power, weighted_power_integrals

# largest number of momenta in a truncated limit-state sum
MAX_LIMIT_POINTS = 1 << 22


def _step_matrix_1d(n, h):
    """Unscaled one-step matrix from ``n`` coarse to ``2n`` fine sites (periodic)."""
    B = np.zeros((n, 2 * n))
    rows = np.arange(n)
    for t, ht in enumerate(h):
        np.add.at(B, (rows, (2 * rows + t) % (2 * n)), ht)
    return B


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


@dataclass(frozen=True, eq=False)
class OneParticleMap:
    """Linear action of the scaling map from scale ``source.N`` to ``target.N``.

    Attributes
    ----------
    A_phi, A_pi : ndarray, shape (|Lambda_N|, |Lambda_N'|)
        Field and momentum branches, sites numbered in C order.
    """

    source: LatticeSpec
    target: LatticeSpec
    bank: object
    A_phi: np.ndarray
    A_pi: np.ndarray

    @property
    def M(self):
        return self.target.N - self.source.N

    def ccr_residual(self):
        """``max |A_phi A_pi^T - 1|``."""
        return float(np.max(np.abs(self.A_phi @ self.A_pi.T - np.eye(self.source.volume))))

    def compose(self, other):
        """The map ``source -> other.target`` obtained by applying ``other`` after ``self``."""
        if other.source != self.target:
            raise DomainError("maps are not composable")
        return OneParticleMap(self.source, other.target, self.bank,
                              self.A_phi @ other.A_phi, self.A_pi @ other.A_pi)

    def push(self, w):
        """Image of a source-scale descriptor as a target-scale descriptor."""
        if w.spec != self.source:
            raise DomainError("descriptor does not live on the source lattice")
        f = (self.A_phi.T @ w.f.ravel()).reshape(self.target.shape)
        g = (self.A_pi.T @ w.g.ravel()).reshape(self.target.shape)
        return WeylDescriptor(self.target, f, g)


def _check_pair(source, target):
    if not source.same_torus(target) or not math.isclose(source.eps0, target.eps0):
        raise DomainError("source and target lattices are not nested on the same torus")
    if target.N < source.N:
        raise DomainError("coarse graining runs from fine to coarse only: need target.N >= source.N")


def build_map(source, target, bank):
    """Scaling map ``alpha^N_{N'}`` as a pair of dense matrices.

    Raises
    ------
    DomainError
        If the lattices do not live on the same torus or ``target.N < source.N``.
    """
    _check_pair(source, target)
    M = target.N - source.N
    if M == 0:
        eye = np.eye(source.volume)
        return OneParticleMap(source, target, bank, eye, eye.copy())
    n = source.n
    B = np.eye(n)
    for j in range(M):
        B = B @ _step_matrix_1d(n * 2**j, bank.h)
    core = _kron_all([B] * source.d)
    return OneParticleMap(source, target, bank, 2.0 ** (-M / 2) * core, 2.0 ** (M / 2) * core)


def map_symbol_power(source, M, bank, k=None):
    """``|a_hat(k)|**2`` of the M-step map on the target momentum grid.

    ``a_hat(k) = prod_{j=1..M} 2**-0.5 prod_c sum_n h_n exp(-i k_c n eps_{N+j})``.
    Returns the 1-d factors per axis combined into a ``d``-dimensional array.
    """
    target = source.refine(M)
    k1 = target.momenta() if k is None else np.asarray(k, dtype=float)
    p = np.ones_like(k1)
    for j in range(1, M + 1):
        p = p * m0_power(bank, k1 * source.eps * 2.0**-j)
    out = p
    for _ in range(source.d - 1):
        out = np.multiply.outer(out, p)
    return out * 2.0 ** (M * (source.d - 1))


def map_symbol(source, M, bank):
    """Complex symbol ``a_hat(k)`` of the M-step Phi branch on the target grid."""
    target = source.refine(M)
    k1 = target.momenta()
    a = np.ones(k1.shape, dtype=complex)
    for j in range(1, M + 1):
        a = a * m0(bank, k1 * source.eps * 2.0**-j)
    out = a
    for _ in range(source.d - 1):
        out = np.multiply.outer(out, a)
    return out * 2.0 ** (M * (source.d - 1) / 2)


def fold(x, n, d):
    """Sum a fine-grid array onto the coarse grid with ``n`` points per axis."""
    r = x.shape[0] // n
    shape = []
    for _ in range(d):
        shape += [r, n]
    return x.reshape(shape).sum(axis=tuple(range(0, 2 * d, 2)))


def renormalize_state(state, omap):
    """Pull a scale-``N'`` state back to scale ``N`` by real-space matrix products.

    ``C_N = A C_{N'} A^T`` per block; this is the brute-force reference for
    :func:`momentum_fast_path`.
    """
    if state.spec != omap.target:
        raise DomainError("state does not live on the map's target lattice")
    if omap.M == 0:
        return state
    src = omap.source
    Ap, Aq = omap.A_phi, omap.A_pi
    blocks = {
        "phiphi": Ap @ state.covariance_matrix("phiphi") @ Ap.T,
        "pipi": Aq @ state.covariance_matrix("pipi") @ Aq.T,
        "phipi": Ap @ state.covariance_matrix("phipi") @ Aq.T,
    }
    # translation invariance: column 0 is C(r) at r = x - 0
    spectra = {k: np.fft.fftn(v[:, 0].reshape(src.shape)) for k, v in blocks.items()}
    means = None
    if state.means is not None:
        mphi, mpi = state.means
        means = ((Ap @ mphi.ravel()).reshape(src.shape), (Aq @ mpi.ravel()).reshape(src.shape))
    return GaussianState(src, spectra["phiphi"].real, spectra["pipi"].real, spectra["phipi"],
                         means=means)


def momentum_fast_path(state, omap_or_M, bank=None):
    """Pull a state back ``M`` scales by folding momentum data.

    Parameters
    ----------
    state : GaussianState
        State at scale ``N + M``.
    omap_or_M : OneParticleMap or int
        Either the map (only its scales and bank are used) or ``M``.
    bank : FilterBank, optional
        Required when ``M`` is given as an integer.
    """
    if isinstance(omap_or_M, OneParticleMap):
        if state.spec != omap_or_M.target:
            raise DomainError("state does not live on the map's target lattice")
        M, bank = omap_or_M.M, omap_or_M.bank
    else:
        M = int(omap_or_M)
    if M < 0 or state.spec.N < M:
        raise DomainError("cannot coarse grain below scale 0")
    if M == 0:
        return state
    fine = state.spec
    src = LatticeSpec(fine.d, fine.L, fine.eps0, fine.N - M)
    d, n = src.d, src.n
    a2 = map_symbol_power(src, M, bank)
    vol = 2.0 ** (-d * M)
    phiphi = vol * fold(a2 * state.phiphi, n, d)
    pipi = vol * 4.0**M * fold(a2 * state.pipi, n, d)
    phipi = vol * 2.0**M * fold(a2 * state.phipi, n, d)
    mean_hat = None
    if state._mean_hat is not None:
        a = np.conj(map_symbol(src, M, bank))
        mphi, mpi = state._mean_hat
        mean_hat = (vol * fold(a * mphi, n, d), vol * 2.0**M * fold(a * mpi, n, d))
    return GaussianState(src, phiphi, pipi, phipi, mean_hat=mean_hat)


def richardson(values, ratio=None):
    """Geometric extrapolation of the last entries of a convergent sequence.

    Parameters
    ----------
    values : sequence of arrays
        At least two entries (three when ``ratio`` is estimated).
    ratio : float, optional
        Known contraction of successive differences.  Estimated by least
        squares from the last two differences when omitted.

    Returns
    -------
    estimate : ndarray
    ratio : float
    """
    vals = [np.asarray(v, dtype=float) for v in values]
    d2 = vals[-1] - vals[-2]
    if ratio is None:
        if len(vals) < 3:
            raise DomainError("ratio estimation needs three values")
        d1 = vals[-2] - vals[-3]
        den = float(np.sum(d1 * d1))
        scale = float(np.max(np.abs(vals[-1]))) or 1.0
        if den <= (1e-15 * scale) ** 2 * d1.size:
            return vals[-1], 0.0
        ratio = float(np.sum(d1 * d2)) / den
    ratio = min(max(ratio, 0.0), 0.95)
    return vals[-1] + d2 * ratio / (1.0 - ratio), ratio


def _limit_blocks(spec, m, bank, level):
    """Truncated limit sums on ``Gamma_{N+level}`` folded onto ``Gamma_N``."""
    fine = spec.refine(level)
    k1 = fine.momenta()
    p1 = scaling_power(bank, spec.eps * k1)
    P = p1
    for _ in range(spec.d - 1):
        P = np.multiply.outer(P, p1)
    gamma = continuum_dispersion(m, fine.momentum_grid(), spec.d)
    eps = spec.eps
    return fold(P / (2 * eps * gamma), spec.n, spec.d), fold(P * eps * gamma / 2, spec.n, spec.d)


@dataclass(frozen=True, eq=False)
class LimitState:
    """Scaling-limit state at scale ``N`` with its truncation record.

    Attributes
    ----------
    state : GaussianState
    m : float
    bank : FilterBank
    cutoff_level : int
        Momenta up to ``|k_j| <= pi / eps_{N + cutoff_level}`` are summed.
    kmax : float
    tail_error : dict
        Per-block estimate of the remaining error after extrapolation.
    tail_size : dict
        Per-block size of the extrapolated tail beyond the cutoff.
    extrapolated : bool
    divergent : bool
        True when the momentum block is a raw partial sum of a divergent series.
    """

    state: GaussianState
    m: float
    bank: object
    cutoff_level: int
    kmax: float
    tail_error: dict
    tail_size: dict
    extrapolated: bool
    divergent: bool = False
    ratios: dict = field(default_factory=dict)


def scaling_limit_state(spec, m, bank, tol=1e-8, cutoff_level=None, extrapolate=True,
                        allow_divergent=False, start_level=4):
    """Massive scaling-limit state at scale ``N``.

    ``<Phi Phi>(q) = sum_{k = q mod Gamma_N} |s_hat(eps k)|**2 / (2 eps gamma_m(k))``
    and ``<Pi Pi>(q)`` with weight ``eps gamma_m(k) / 2``; the cross block
    is the canonical ``(i/2) delta``.

    The sum over ``Gamma_infinity`` is truncated to ``Gamma_{N + level}``.
    With ``extrapolate`` the truncations at three consecutive levels are
    extrapolated geometrically and the level is raised until two
    successive extrapolations agree to ``tol``.

    Parameters
    ----------
    spec : LatticeSpec
    m : float
    bank : FilterBank
    tol : float
    cutoff_level : int, optional
        Fix the level instead of choosing it adaptively.
    extrapolate : bool
        When False the raw truncated sums are returned (matched-cutoff checks).
    allow_divergent : bool
        Permit ``K = 1``, whose momentum block diverges; it is then reported
        as a raw partial sum with ``divergent=True``.

    Raises
    ------
    SobolevError
        ``K = 1`` without ``allow_divergent``.
    CutoffError
        The tolerance is not met below the point budget.
    """
    if not m > 0:
        raise DomainError("continuum mass must be positive")
    divergent = bank.K == 1
    if divergent and not allow_divergent:
        raise SobolevError("the Haar scaling function is not in H^1/2: the Pi block of the limit diverges")
    max_level = int(math.floor(math.log2(MAX_LIMIT_POINTS) / spec.d - math.log2(spec.n)))

    def finish(level, phi, pi, err, size, ratios, extrap):
        state = GaussianState(spec, phi, pi)
        kmax = math.pi / spec.refine(level).eps
        return LimitState(state, m, bank, level, kmax, err, size, extrap, divergent, ratios)

    if not extrapolate:
        level = start_level if cutoff_level is None else cutoff_level
        if level > max_level:
            raise CutoffError(f"cutoff level {level} exceeds the point budget (max {max_level})")
        phi, pi = _limit_blocks(spec, m, bank, level)
        return finish(level, phi, pi, {"phiphi": math.nan, "pipi": math.nan}, {}, {}, False)

    levels = [cutoff_level - 3, cutoff_level - 2, cutoff_level - 1, cutoff_level] if cutoff_level else None
    if levels is not None and (levels[0] < 0 or cutoff_level > max_level):
        raise CutoffError(f"cutoff level {cutoff_level} outside 3..{max_level}")
    lvl = levels[0] if levels else start_level
    raw = []
    while True:
        if lvl > max_level:
            raise CutoffError(f"limit state did not reach tol={tol:g} within the point budget")
        raw.append(_limit_blocks(spec, m, bank, lvl))
        if len(raw) >= 4:
            out, errs, sizes, ratios = [], {}, {}, {}
            for b, name in enumerate(("phiphi", "pipi")):
                seq = [r[b] for r in raw[-4:]]
                if name == "pipi" and divergent:
                    out.append(seq[-1])
                    errs[name], sizes[name], ratios[name] = math.inf, math.inf, 1.0
                    continue
                est, rho = richardson(seq[1:])
                prev, _ = richardson(seq[:3])
                out.append(est)
                errs[name] = float(np.max(np.abs(est - prev)))
                sizes[name] = float(np.max(np.abs(est - seq[-1])))
                ratios[name] = rho
            finite = [e for e in errs.values() if math.isfinite(e)]
            if levels is not None or max(finite) < tol:
                return finish(lvl, out[0], out[1], errs, sizes, ratios, True)
        lvl += 1


def pi_block_partial_sums(bank, cutoffs, m=1.0, eps=1.0):
    """Zero-separation Pi block of the d=1 limit truncated at ``|q| <= c``.

    ``(4 pi)**-1 int_{|q|<=c} |s_hat(q)|**2 sqrt(eps**2 m**2 + q**2) dq``
    with ``q = eps k``; the infinite-volume value of ``<Pi_N(0) Pi_N(0)>``
    as the cutoff goes to infinity.  Finite for ``K >= 2``, logarithmically
    divergent for Haar.
    """
    em2 = (eps * m) ** 2
    vals = weighted_power_integrals(bank, cutoffs, lambda q: np.sqrt(em2 + q * q))
    return vals / (4 * math.pi)


def coarse_graining_stability(spec, m, bank, cutoff_level, allow_divergent=False):
    """One RG step applied to the raw limit at ``N+1`` versus the raw limit at ``N``.

    Both sides sum exactly the momenta of ``Gamma_{N+1+cutoff_level}``, so
    the identity holds to roundoff.

    Returns
    -------
    dict
        Max spectral deviation per block.
    """
    fine = scaling_limit_state(spec.refine(1), m, bank, cutoff_level=cutoff_level,
                               extrapolate=False, allow_divergent=allow_divergent)
    coarse = scaling_limit_state(spec, m, bank, cutoff_level=cutoff_level + 1,
                                 extrapolate=False, allow_divergent=allow_divergent)
    pulled = momentum_fast_path(fine.state, 1, bank)
    return {
        "phiphi": float(np.max(np.abs(pulled.phiphi - coarse.state.phiphi))),
        "pipi": float(np.max(np.abs(pulled.pipi - coarse.state.pipi))),
    }


def trajectory_flow(spec, bank, M_max, m=None, mu=None):
    """Renormalised states ``omega^(N)_M``, ``M = 0..M_max``, via the fast path.

    Exactly one of ``m`` (renormalisation trajectory) or ``mu`` (fixed
    mass parameter at every scale) must be given.
    """
    if (m is None) == (mu is None):
        raise DomainError("give exactly one of m (trajectory) or mu (fixed mass parameter)")
    states = []
    for M in range(M_max + 1):
        fine = spec.refine(M)
        model = HarmonicModel.on_trajectory(fine, m) if m is not None else HarmonicModel(fine, mu)
        states.append(momentum_fast_path(ground_state(model), M, bank))
    return states


def _sup_kernel_diff(a, b, name):
    return float(np.max(np.abs(a.position_kernel(name) - b.position_kernel(name))))


@dataclass
class FlowReport:
    """Convergence table of a renormalisation flow.

    ``rows[M]`` holds ``M``, the sup-norm distances of the position-space
    kernels to step ``M+1`` and, on the trajectory, to the limit state.
    For fixed ``mu`` the column ``locality_*`` reports
    ``max_{r != 0} |C(r)| / C(0)`` (zero at the ultralocal fixed point).
    """

    rows: list
    states: list
    limit: LimitState | None
    extrapolated: dict | None

    def column(self, key):
        return np.array([r[key] for r in self.rows], dtype=float)


def flow_report(spec, bank, M_max, m=None, mu=None, limit=None, tol=1e-8):
    """Run the flow and tabulate distances and residuals.

    Parameters
    ----------
    spec : LatticeSpec
        Coarse scale ``N``.
    bank : FilterBank
    M_max : int
        ``>= 2``.
    m, mu : float
        Trajectory mass or fixed mass parameter (exactly one).
    limit : LimitState, optional
        Reference limit; computed with ``tol`` on the trajectory when omitted.
    """
    if M_max < 2:
        raise DomainError("M_max must be at least 2")
    states = trajectory_flow(spec, bank, M_max, m=m, mu=mu)
    if m is not None and limit is None:
        limit = scaling_limit_state(spec, m, bank, tol=tol, allow_divergent=bank.K == 1)
    rows = []
    origin = (0,) * spec.d
    for M, st in enumerate(states):
        row = {"M": M}
        for name in ("phiphi", "pipi"):
            nxt = states[M + 1] if M < M_max else None
            row[f"step_{name}"] = _sup_kernel_diff(st, nxt, name) if nxt is not None else math.nan
            if limit is not None:
                row[f"residual_{name}"] = _sup_kernel_diff(st, limit.state, name)
            kern = st.position_kernel(name)
            off = np.abs(kern).copy()
            off[origin] = 0.0
            row[f"locality_{name}"] = float(np.max(off) / abs(kern[origin]))
        rows.append(row)
    extrap = None
    if m is not None:
        extrap = {name: richardson([s.position_kernel(name) for s in states[-3:]])
                  for name in ("phiphi", "pipi")}
    return FlowReport(rows, states, limit, extrap)


def tile_to(spec_from, spec_to, arr):
    """Periodically extend momentum data of ``spec_from`` onto the finer grid of ``spec_to``."""
    r = spec_to.n // spec_from.n
    if r * spec_from.n != spec_to.n or not spec_from.same_torus(spec_to):
        raise DomainError("target grid is not a dyadic refinement of the source grid")
    return np.tile(arr, (r,) * spec_from.d)


def push_spectral(w, M, bank):
    """Image of a descriptor under ``alpha^N_{N+M}`` in momentum space.

    ``F'(k) = a_hat(k) F(k)`` and ``G'(k) = 2**M a_hat(k) G(k)`` with the
    coarse data extended periodically to the fine grid.
    """
    from .gaussian import SpectralDescriptor

    w = w.spectral()
    src = w.spec
    if M == 0:
        return w
    target = src.refine(M)
    a = map_symbol(src, M, bank)
    return SpectralDescriptor(target, tile_to(src, target, w.fhat) * a,
                              2.0**M * tile_to(src, target, w.ghat) * a)
