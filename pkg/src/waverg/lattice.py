"""Dyadic torus lattices, the harmonic lattice Hamiltonian and its ground state."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfraredError, InstabilityError

# relative slack when comparing mu^2 with the stability bound 2d
_STABILITY_SLACK = 1e-14


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic lattice ``Lambda_N`` of spacing ``eps * 2**-N`` on the torus ``[-L, L)^d``.

    Sites carry integer labels ``i = 0..n-1`` per direction with
    ``n = 2 L_N``; label ``i`` sits at ``eps_N * (((i + L_N) mod n) - L_N)``.
    Momenta are stored in FFT order, ``k = (pi/L) * j`` with
    ``j = fftfreq(n) * n``.
    """

    d: int
    L: float
    eps0: float
    N: int = 0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise DomainError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not (self.L > 0 and self.eps0 > 0):
            raise DomainError("L and eps0 must be positive")
        ratio = self.L / self.eps0
        if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0) or round(ratio) < 1:
            raise DomainError(f"L/eps0 = {ratio} is not a positive integer")
        if self.N < 0 or int(self.N) != self.N:
            raise DomainError("scale index N must be a non-negative integer")

    @property
    def L0(self):
        return int(round(self.L / self.eps0))

    @property
    def LN(self):
        return self.L0 * 2**self.N

    @property
    def eps(self):
        return self.eps0 * 2.0**-self.N

    @property
    def n(self):
        """Sites per direction."""
        return 2 * self.LN

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def volume(self):
        """Number of sites ``(2 L_N)**d``."""
        return self.n**self.d

    def refine(self, M=1):
        """The same torus at scale ``N + M``."""
        return LatticeSpec(self.d, self.L, self.eps0, self.N + M)

    def same_torus(self, other):
        return (self.d, self.L0) == (other.d, other.L0) and math.isclose(self.L, other.L)

    def momenta(self):
        """1-d momentum grid in FFT order."""
        return math.pi / self.L * np.fft.fftfreq(self.n, 1.0 / self.n)

    def momentum_grid(self):
        """Tuple of ``d`` arrays with the momentum components on the full grid."""
        k = self.momenta()
        return np.meshgrid(*([k] * self.d), indexing="ij")

    def coordinates(self):
        """1-d physical site coordinates in label order."""
        i = np.arange(self.n)
        return self.eps * (((i + self.LN) % self.n) - self.LN)

    def site_index(self, x):
        """Integer labels of the physical point ``x`` (shape ``(d,)``)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.d,):
            raise DomainError(f"site must have {self.d} coordinates")
        j = x / self.eps
        if np.max(np.abs(j - np.round(j))) > 1e-9:
            raise DomainError(f"{x} is not a point of the lattice with spacing {self.eps}")
        return tuple(int(v) % self.n for v in np.round(j))

    def separations(self):
        """Euclidean torus distance of every site from the origin, shape ``self.shape``."""
        c = np.abs(self.coordinates())
        grids = np.meshgrid(*([c] * self.d), indexing="ij")
        return np.sqrt(sum(g**2 for g in grids))


def _components(k, d):
    if d == 1 and not isinstance(k, (tuple, list)):
        return (np.asarray(k, dtype=float),)
    k = tuple(np.asarray(c, dtype=float) for c in k)
    if len(k) != d:
        raise DomainError(f"expected {d} momentum components")
    return k


def lattice_dispersion(eps, mu, d, k, gap=None):
    """``sqrt(eps**-2 (mu**2 - 2d) + (2/eps)**2 sum_j sin(eps k_j / 2)**2)``.

    The half-angle form is algebraically equal to the ``1 - cos`` form but
    keeps full relative accuracy for ``eps k -> 0``.  ``gap`` overrides
    ``eps**-2 (mu**2 - 2d)``; on the renormalisation trajectory it equals
    ``m**2`` and forming it from ``mu`` would cancel catastrophically on
    fine lattices.
    """
    k = _components(k, d)
    if gap is None:
        gap = (mu * mu - 2 * d) / eps**2
    if gap < -_STABILITY_SLACK * 2 * d / eps**2:
        raise InstabilityError(f"mu^2 = {mu * mu} below the stability bound 2d = {2 * d}")
    acc = np.full(np.broadcast(*k).shape, max(gap, 0.0))
    for c in k:
        acc = acc + (2.0 / eps * np.sin(eps * c / 2.0)) ** 2
    return np.sqrt(acc)


def continuum_dispersion(m, k, d=1):
    """Relativistic dispersion ``sqrt(m**2 + |k|**2)``."""
    k = _components(k, d)
    return np.sqrt(m * m + sum(c * c for c in k))


def mass_parameter(spec, m):
    """Mass parameter on the renormalisation trajectory, ``sqrt(2d + eps_N**2 m**2)``."""
    if not m > 0:
        raise DomainError(f"continuum mass must be positive, got {m}")
    return math.sqrt(2 * spec.d + (spec.eps * m) ** 2)


@dataclass(frozen=True)
class HarmonicModel:
    """Harmonic lattice Hamiltonian at one scale.

    ``H = eps**-1 * (1/2 sum_x (Pi_x**2 + mu**2 Phi_x**2) - sum_<x,y> Phi_x Phi_y)``
    with the nearest-neighbour sum running over forward bonds with
    periodic wrap-around.

    Parameters
    ----------
    spec : LatticeSpec
    mu : float
        Dimensionless mass parameter, ``mu**2 >= 2d``.
    m : float, optional
        Continuum mass when the model sits on the renormalisation trajectory.
    exclude_zero_mode : bool
        Drop ``k = 0`` from all mode sums (needed when ``mu**2 == 2d``).
    """

    spec: LatticeSpec
    mu: float
    m: float | None = None
    exclude_zero_mode: bool = False

    def __post_init__(self):
        if not self.mu * self.mu >= 2 * self.spec.d * (1 - _STABILITY_SLACK):
            raise InstabilityError(f"mu^2 = {self.mu ** 2} below the stability bound 2d = {2 * self.spec.d}")
        if self.m is not None and not math.isclose(self.mu, mass_parameter(self.spec, self.m), rel_tol=1e-12):
            raise DomainError("mu is not on the renormalisation trajectory of m")

    @classmethod
    def on_trajectory(cls, spec, m):
        """Model with ``mu_N`` fixed by ``eps_N**-2 (mu_N**2 - 2d) = m**2``."""
        return cls(spec, mass_parameter(spec, m), m)

    def at_scale(self, N):
        """Same trajectory (or the same fixed ``mu``) at another scale."""
        spec = LatticeSpec(self.spec.d, self.spec.L, self.spec.eps0, N)
        if self.m is not None:
            return HarmonicModel.on_trajectory(spec, self.m)
        return HarmonicModel(spec, self.mu, None, self.exclude_zero_mode)

    @property
    def gap(self):
        """``eps**-2 (mu**2 - 2d)``, exactly ``m**2`` on the trajectory."""
        if self.m is not None:
            return self.m * self.m
        excess = self.mu * self.mu - 2 * self.spec.d
        # mu**2 within roundoff of 2d is the massless point
        if excess <= 2 * self.spec.d * _STABILITY_SLACK:
            return 0.0
        return excess / self.spec.eps**2

    @property
    def massless(self):
        return self.gap <= 0.0

    def zero_mode_mask(self):
        """Boolean array marking modes dropped from mode sums."""
        mask = np.zeros(self.spec.shape, dtype=bool)
        if self.exclude_zero_mode:
            mask[(0,) * self.spec.d] = True
        return mask


def dispersion(model, k=None):
    """Mode frequency ``gamma_mu(k)`` of ``model``.

    Parameters
    ----------
    model : HarmonicModel
    k : array_like or tuple of arrays, optional
        Momentum components (any real values).  Defaults to the full
        momentum grid of ``model.spec``.
    """
    spec = model.spec
    if k is None:
        k = spec.momentum_grid()
    return lattice_dispersion(spec.eps, model.mu, spec.d, k, gap=model.gap)


def ground_state(model):
    """Exact ground state of ``model`` as per-mode covariance data.

    Returns
    -------
    GaussianState
        ``<Phi Phi>(k) = 1/(2 eps gamma)``, ``<Pi Pi>(k) = eps gamma / 2``
        and vanishing symmetrised cross term.

    Raises
    ------
    InfraredError
        A mode with ``gamma = 0`` is present and not excluded.
    """
    from .gaussian import GaussianState

    spec = model.spec
    gamma = dispersion(model)
    excluded = model.zero_mode_mask()
    if np.any((gamma == 0) & ~excluded) or (model.massless and not model.exclude_zero_mode):
        raise InfraredError("zero-frequency mode without zero-mode exclusion")
    safe = np.where(excluded, 1.0, gamma)
    phiphi = np.where(excluded, 0.0, 1.0 / (2.0 * spec.eps * safe))
    pipi = np.where(excluded, 0.0, spec.eps * safe / 2.0)
    return GaussianState(spec, phiphi, pipi, excluded=excluded)


def ground_energy(model):
    """``(1/2) sum_k gamma(k)`` over the retained modes."""
    gamma = dispersion(model)
    return 0.5 * float(np.sum(np.where(model.zero_mode_mask(), 0.0, gamma)))


def energy(model, state):
    """Expectation of the Hamiltonian in a translation-invariant state.

    Evaluated in position space from the coincident and nearest-neighbour
    two-point functions, independently of the mode decomposition.
    """
    spec = model.spec
    phi = state.position_kernel("phiphi")
    pi = state.position_kernel("pipi")
    origin = (0,) * spec.d
    onsite = 0.5 * spec.volume * (pi[origin] + model.mu**2 * phi[origin])
    bonds = 0.0
    for j in range(spec.d):
        e = [0] * spec.d
        e[j] = 1 % spec.n
        bonds += spec.volume * phi[tuple(e)]
    total = onsite - bonds
    if state.means is not None:
        mphi, mpi = state.means
        shifted = sum(np.roll(mphi, -1, axis=j) for j in range(spec.d))
        total += 0.5 * float(np.sum(mpi**2 + model.mu**2 * mphi**2)) - float(np.sum(mphi * shifted))
    return float(total) / spec.eps
