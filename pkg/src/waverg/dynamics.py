"""Lattice and continuum time evolution, light cones and convergence of dynamics.

Linear elements ``Phi(F) + Pi(G)`` evolve mode by mode under the
Heisenberg dynamics ``A -> exp(itH) A exp(-itH)``::

    F_t = cos(gamma t) F - kappa sin(gamma t) G
    G_t = sin(gamma t) / kappa F + cos(gamma t) G

with stiffness ``kappa = eps_N gamma`` on the lattice (dimensionless
lattice fields) and ``kappa = gamma_m`` in the continuum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CutoffError, DomainError, FitError, InfraredError
from .gaussian import SpectralDescriptor, WeylDescriptor, _QuasiFree, coherent_distance, wick_correlator
from .lattice import HarmonicModel, continuum_dispersion, dispersion, ground_state, lattice_dispersion
from .rg import push_spectral, tile_to
from .wavelets import fourier_scaling


@dataclass(frozen=True, eq=False)
class EvolutionKernel:
    """Per-mode rotation data of a quadratic Hamiltonian on a momentum grid.

    Attributes
    ----------
    spec : LatticeSpec
        Grid the descriptors live on.
    gamma : ndarray
        Mode frequencies.
    stiffness : ndarray
        ``kappa`` in the rotation formulas.
    excluded : ndarray of bool
        Modes left untouched (zero-mode exclusion).
    kind : str
        ``"lattice"`` or ``"continuum"``.
    """

    spec: object
    gamma: np.ndarray
    stiffness: np.ndarray
    excluded: np.ndarray
    kind: str

    def rotation(self, t):
        """``(cos, sin/kappa, kappa sin)`` at time ``t``; ``sin(gamma t)/gamma -> t`` at ``gamma = 0``."""
        c = np.cos(self.gamma * t)
        # kappa = scale * gamma, so sin(gamma t) / kappa = (t / scale) sinc(gamma t / pi)
        s_over = t * np.sinc(self.gamma * t / math.pi) / self.stiffness_scale
        s_times = self.stiffness * np.sin(self.gamma * t)
        c = np.where(self.excluded, 1.0, c)
        s_over = np.where(self.excluded, 0.0, s_over)
        s_times = np.where(self.excluded, 0.0, s_times)
        return c, s_over, s_times

    @property
    def stiffness_scale(self):
        return self.spec.eps if self.kind == "lattice" else 1.0

    def energy(self, w):
        """Conserved form ``sum |F|**2 / kappa + kappa |G|**2`` over modes with ``gamma > 0``."""
        w = w.spectral()
        live = (self.gamma > 0) & ~self.excluded
        k = np.where(live, self.stiffness, 1.0)
        return float(np.sum(np.where(live, np.abs(w.fhat) ** 2 / k + k * np.abs(w.ghat) ** 2, 0.0)))


def lattice_kernel(model):
    """Evolution kernel of the harmonic lattice Hamiltonian."""
    gamma = dispersion(model)
    return EvolutionKernel(model.spec, gamma, model.spec.eps * gamma, model.zero_mode_mask(), "lattice")


def evolve_weyl(kernel, w, t):
    """Heisenberg-evolved descriptor ``sigma_t(W(w)) = W(w_t)``.

    Accepts position-space or spectral descriptors and returns the same kind.

    Raises
    ------
    InfraredError
        A retained zero-frequency mode carries momentum smearing.
    """
    spec_w = w.spectral()
    if spec_w.spec != kernel.spec:
        raise DomainError("descriptor does not live on the kernel's grid")
    zero = (kernel.gamma == 0) & ~kernel.excluded
    if np.any(zero & (np.abs(spec_w.ghat) > 0)):
        raise InfraredError("zero-frequency mode with momentum smearing and no zero-mode exclusion")
    c, s_over, s_times = kernel.rotation(t)
    F = c * spec_w.fhat - s_times * spec_w.ghat
    G = s_over * spec_w.fhat + c * spec_w.ghat
    out = SpectralDescriptor(spec_w.spec, F, G)
    if isinstance(w, WeylDescriptor):
        return WeylDescriptor(w.spec, np.fft.ifftn(F).real, np.fft.ifftn(G).real)
    return out


def commutator_profile(model, t):
    """``[Phi(x, t), Phi(0, 0)]`` for every site ``x`` (purely imaginary array).

    Equals ``-i V**-1 sum_k sin(gamma t) / (eps gamma) exp(i k x)``.
    """
    spec = model.spec
    gamma = dispersion(model)
    w = t * np.sinc(gamma * t / math.pi) / spec.eps
    w = np.where(model.zero_mode_mask(), 0.0, w)
    return -1j * np.fft.ifftn(w).real


def commutator_function(model, x, y, t):
    """``[Phi(x, t), Phi(y, 0)]`` for site labels ``x`` and ``y`` (a c-number)."""
    spec = model.spec
    x = (x,) if np.isscalar(x) else tuple(x)
    y = (y,) if np.isscalar(y) else tuple(y)
    if len(x) != spec.d or len(y) != spec.d:
        raise DomainError(f"sites need {spec.d} labels")
    prof = commutator_profile(model, t)
    return complex(prof[tuple((a - b) % spec.n for a, b in zip(x, y))])


def max_group_velocity(model, samples=4097):
    """``max_k |d gamma / d k_1|`` along one axis, evaluated analytically."""
    spec = model.spec
    k = np.linspace(-math.pi / spec.eps, math.pi / spec.eps, samples)
    comps = (k,) + tuple(np.zeros_like(k) for _ in range(spec.d - 1))
    gamma = lattice_dispersion(spec.eps, model.mu, spec.d, comps, gap=model.gap)
    return float(np.max(np.abs(np.sin(spec.eps * k) / (spec.eps * gamma))))


@dataclass
class LightconeFit:
    """Least-squares fit ``log|[Phi(x,t), Phi(0,0)]| = a - lam * r + beta * t`` outside the cone.

    ``velocity = beta / lam``.
    """

    velocity: float
    decay_rate: float
    intercept: float
    r_squared: float
    n_points: int
    residuals: np.ndarray
    v0: float
    times_used: list
    times_skipped: list
    history: list = field(default_factory=list)


def _fit_exterior(data, eps, v0, floor):
    rows = []
    for t, r, c in data:
        sel = (r > v0 * t + 3 * eps) & (c > floor)
        rows.append(np.column_stack([np.full(sel.sum(), t), r[sel], np.log(c[sel])]))
    X = np.vstack(rows) if rows else np.empty((0, 3))
    if len(X) < 8:
        raise FitError(f"only {len(X)} exterior samples above the floor")
    A = np.column_stack([np.ones(len(X)), -X[:, 1], X[:, 0]])
    coef, *_ = np.linalg.lstsq(A, X[:, 2], rcond=None)
    res = X[:, 2] - A @ coef
    tot = float(np.sum((X[:, 2] - X[:, 2].mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / tot if tot > 0 else 0.0
    lam, beta = float(coef[1]), float(coef[2])
    v = beta / lam if lam != 0 else math.nan
    return LightconeFit(v, lam, float(coef[0]), r2, len(X), res, v0, [], [])


def lightcone_fit(model, t_grid, r_grid=None, v0=1.2, floor=1e-13, resolve_cells=16, revisit=True):
    """Fit the exponential decay of the field commutator outside the light cone.

    Parameters
    ----------
    model : HarmonicModel
    t_grid : sequence of float
    r_grid : sequence of float, optional
        Separations to sample; all lattice separations when omitted.
    v0 : float
        Exterior region is ``r > v0 t + 3 eps``.
    floor : float
        Samples below this magnitude are roundoff and are dropped.
    resolve_cells : int
        Times whose cone radius ``v0 t`` spans fewer lattice cells are
        skipped; the cone is not resolved there.
    revisit : bool
        Refit once with ``v0`` replaced by ``max(fitted v, 1)``.

    Raises
    ------
    FitError
        Fewer than two resolved times or eight exterior samples.
    """
    spec = model.spec
    r_all = spec.separations().ravel()
    keep = np.ones(r_all.shape, bool)
    if r_grid is not None:
        r_grid = np.asarray(r_grid, dtype=float)
        keep = np.min(np.abs(r_all[:, None] - r_grid[None, :]), axis=1) <= spec.eps / 2
    used, skipped, data = [], [], []
    for t in t_grid:
        if v0 * t < resolve_cells * spec.eps:
            skipped.append(float(t))
            continue
        used.append(float(t))
        c = np.abs(commutator_profile(model, t)).ravel()
        data.append((t, r_all[keep], c[keep]))
    if len(used) < 2:
        raise FitError("fewer than two times resolve the light cone")
    fit = _fit_exterior(data, spec.eps, v0, floor)
    history = [(v0, fit.velocity, fit.decay_rate, fit.r_squared)]
    if revisit and math.isfinite(fit.velocity):
        fit = _fit_exterior(data, spec.eps, max(fit.velocity, 1.0), floor)
        history.append((fit.v0, fit.velocity, fit.decay_rate, fit.r_squared))
    fit.times_used, fit.times_skipped, fit.history = used, skipped, history
    return fit


class ContinuumVacuum(_QuasiFree):
    """Free massive vacuum on the torus, truncated to the momentum grid ``Gamma_{N+level}``.

    Continuum smearing functions are stored as torus Fourier coefficients;
    ``<Phi(F) Phi(F)> = (2L)**-d sum_k |F(k)|**2 / (2 gamma_m(k))``.

    Parameters
    ----------
    spec : LatticeSpec
        Scale whose descriptors are embedded.
    m : float
    bank : FilterBank
    level : int
        Momentum cutoff ``|k_j| <= pi / eps_{N + level}``.
    """

    def __init__(self, spec, m, bank, level, mean_hat=None):
        if not m > 0:
            raise DomainError("continuum mass must be positive")
        self.base = spec
        self.m = m
        self.bank = bank
        self.level = level
        self.spec = spec.refine(level)
        self.norm = (2.0 * spec.L) ** -spec.d
        self.gamma = continuum_dispersion(m, self.spec.momentum_grid(), spec.d)
        self._phiphi = 1.0 / (2.0 * self.gamma)
        self._pipi = self.gamma / 2.0
        self._phipi = np.zeros(self.spec.shape)
        self._mean_hat = mean_hat
        self._symbols = {}

    @property
    def kmax(self):
        return math.pi / self.spec.eps

    def displaced(self, p):
        """Vacuum seen from the coherent vector ``W(p) Omega``."""
        return ContinuumVacuum(self.base, self.m, self.bank, self.level, self._displacement_means(p))

    def kernel(self):
        return EvolutionKernel(self.spec, self.gamma, self.gamma, np.zeros(self.spec.shape, bool), "continuum")

    def _symbol(self, spec):
        # prod_j s_hat(eps k_j) for the scale of ``spec`` on the cutoff grid
        key = spec.N
        if key not in self._symbols:
            s1 = fourier_scaling(self.bank, spec.eps * self.spec.momenta())
            out = s1
            for _ in range(spec.d - 1):
                out = np.multiply.outer(out, s1)
            self._symbols[key] = out
        return self._symbols[key]

    def embed(self, w):
        """Continuum image ``Phi_N(x) -> eps**-1/2 Phi(s_x)``, ``Pi_N(x) -> eps**1/2 Pi(s_x)``."""
        w = w.spectral()
        src = w.spec
        if src.N > self.spec.N:
            raise CutoffError("descriptor scale is finer than the continuum momentum cutoff")
        s = self._symbol(src)
        d, eps = src.d, src.eps
        F = eps ** ((d - 1) / 2) * s * tile_to(src, self.spec, w.fhat)
        G = eps ** ((d + 1) / 2) * s * tile_to(src, self.spec, w.ghat)
        return SpectralDescriptor(self.spec, F, G)


@dataclass
class DynamicsError:
    """One evaluation of the dynamics approximation error.

    Attributes
    ----------
    lhs : float
        ``||(sigma^(N')_t - sigma_t)(A) psi||``.
    rhs : dict
        ``sup_k gamma_m**1/2 |gamma_mu_N'(k) - gamma_m(k)| / (1 + eps_N |k|)**delta``
        per ``delta`` over ``|k_j| <= cutoff``.
    cutoff : float
    level : int
        Continuum momentum grid ``Gamma_{N + level}``.
    """

    lhs: float
    rhs: dict
    cutoff: float
    level: int


def dispersion_envelope(spec_N, Nprime, m, delta, cutoff):
    """``sup_{|k_j|<=cutoff} gamma_m(k)**1/2 |gamma_lat(k) - gamma_m(k)| / (1 + eps_N |k|)**delta``.

    Evaluated on the torus momenta ``(pi/L) Z^d`` inside the cutoff box.
    """
    if cutoff < math.pi / spec_N.eps:
        raise CutoffError("rhs cutoff must cover at least the scale-N Brillouin zone")
    j = np.arange(0, int(math.floor(cutoff * spec_N.L / math.pi)) + 1)
    k1 = math.pi / spec_N.L * j
    comps = np.meshgrid(*([k1] * spec_N.d), indexing="ij")
    fine = spec_N.refine(Nprime - spec_N.N)
    gl = lattice_dispersion(fine.eps, None, spec_N.d, comps, gap=m * m)
    gm = continuum_dispersion(m, comps, spec_N.d)
    knorm = np.sqrt(sum(c * c for c in comps))
    return float(np.max(np.sqrt(gm) * np.abs(gl - gm) / (1.0 + spec_N.eps * knorm) ** delta))


def _lattice_side(w, Nprime, bank, m, t):
    M = Nprime - w.spec.N
    pushed = push_spectral(w, M, bank)
    model = HarmonicModel.on_trajectory(pushed.spec, m)
    return evolve_weyl(lattice_kernel(model), pushed, t), model


def dynamics_error(w, psi, Nprime, bank, m, t, level=None, deltas=(0.0, 0.5, 1.0), cutoff=None):
    """Distance between lattice-evolved and continuum-evolved Weyl operators on a coherent state.

    Parameters
    ----------
    w : WeylDescriptor
        Scale-``N`` descriptor of ``A = alpha^N_infinity(W(w))``.
    psi : WeylDescriptor
        Scale-``N`` descriptor of the coherent vector ``psi = W(embed(psi)) Omega``.
    Nprime : int
        Lattice scale of the approximating dynamics, ``> N``.
    bank : FilterBank
    m : float
    t : float
    level : int, optional
        Continuum cutoff ``Gamma_{N + level}``; defaults to ``Nprime - N + 6``.
    deltas : sequence of float
    cutoff : float, optional
        Momentum box for ``rhs``; defaults to ``8 pi / eps_N``.
    """
    spec = w.spec
    if psi.spec != spec:
        raise DomainError("w and psi must live on the same lattice")
    if Nprime <= spec.N:
        raise DomainError("need N' > N")
    M = Nprime - spec.N
    level = M + 6 if level is None else level
    if level <= M:
        raise CutoffError("continuum cutoff must lie above the lattice scale N'")
    vac = ContinuumVacuum(spec, m, bank, level)
    a2 = evolve_weyl(vac.kernel(), vac.embed(w), t)
    lat, _ = _lattice_side(w, Nprime, bank, m, t)
    a1 = vac.embed(lat)
    lhs = coherent_distance(vac.displaced(vac.embed(psi)), a1, a2)
    cutoff = 8 * math.pi / spec.eps if cutoff is None else cutoff
    rhs = {float(dl): dispersion_envelope(spec, Nprime, m, dl, cutoff) for dl in deltas}
    return DynamicsError(lhs, rhs, cutoff, level)


@dataclass
class CorrelatorComparison:
    lattice: complex
    continuum: complex
    difference: float
    level: int


def _items(spec, insertions):
    out = []
    for it in insertions:
        if isinstance(it, (WeylDescriptor, SpectralDescriptor)):
            out.append(it.spectral())
        else:
            site, fld = it
            out.append(WeylDescriptor.delta(spec, site, fld).spectral())
    return out


def correlator_convergence(spec, Nprime, bank, m, A, B, t, x, level=None):
    """Compare ``omega_0^(N')(A sigma^(N')_(t,x)(B))`` with the continuum correlator.

    Parameters
    ----------
    spec : LatticeSpec
        Scale ``N`` of the insertions.
    Nprime : int
        ``>= N``.
    A, B : sequence
        Insertions ``(site_labels, 'phi' | 'pi')`` or descriptors at scale ``N``.
    t : float
    x : array_like, shape (d,)
        Spatial translation; must be a point of ``Lambda_{N'}``.
    level : int, optional
        Continuum cutoff ``Gamma_{N + level}``; defaults to ``Nprime - N + 6``.
    """
    if Nprime < spec.N:
        raise DomainError("need N' >= N")
    M = Nprime - spec.N
    fine = spec.refine(M)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    fine.site_index(x)
    level = M + 6 if level is None else level
    a_items, b_items = _items(spec, A), _items(spec, B)

    model = HarmonicModel.on_trajectory(fine, m)
    gs = ground_state(model)
    kern = lattice_kernel(model)
    lat_a = [push_spectral(w, M, bank) for w in a_items]
    lat_b = [evolve_weyl(kern, push_spectral(w, M, bank), t).translated(x) for w in b_items]
    lattice = wick_correlator(gs, lat_a + lat_b)

    vac = ContinuumVacuum(spec, m, bank, level)
    ck = vac.kernel()
    con_a = [vac.embed(w) for w in a_items]
    con_b = [evolve_weyl(ck, vac.embed(w), t).translated(x) for w in b_items]
    continuum = wick_correlator(vac, con_a + con_b)
    return CorrelatorComparison(lattice, continuum, abs(lattice - continuum), level)
