"""Translation-invariant quasi-free states and their Weyl/Wick calculus.

Linear field elements ``Phi(f) + Pi(g)`` are handled in momentum space.
For a lattice with ``V`` sites and real smearing functions,
``f_hat = fftn(f)`` and inner products are ``V**-1 * sum_q``.  The
covariance blocks are stored per momentum; the position-space two-point
function is ``C(x - y) = ifftn(c_hat)``.

Conventions
-----------
* ``[Phi(x), Pi(y)] = i delta_xy``, so ``[X(w1), X(w2)] = i sigma(w1, w2)``
  with ``sigma = sum f1 g2 - g1 f2``.
* ``W(w) = exp(i X(w))`` and ``W(w1) W(w2) = exp(-i sigma(w1, w2) / 2) W(w1 + w2)``.
* Coherent vectors are ``c(w) = W(w) Omega``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .lattice import LatticeSpec

_FIELDS = ("phi", "pi")


def _as_array(a, shape, dtype):
    a = np.asarray(a, dtype=dtype)
    if a.shape != shape:
        raise DomainError(f"expected array of shape {shape}, got {a.shape}")
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralDescriptor:
    """Linear element ``Phi(F) + Pi(G)`` given by Fourier data on the grid of ``spec``."""

    spec: LatticeSpec
    fhat: np.ndarray
    ghat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "fhat", _as_array(self.fhat, self.spec.shape, complex))
        object.__setattr__(self, "ghat", _as_array(self.ghat, self.spec.shape, complex))

    def _check(self, other):
        if other.spec != self.spec:
            raise DomainError("descriptors live on different lattices")

    def __add__(self, other):
        self._check(other)
        return SpectralDescriptor(self.spec, self.fhat + other.fhat, self.ghat + other.ghat)

    def __sub__(self, other):
        self._check(other)
        return SpectralDescriptor(self.spec, self.fhat - other.fhat, self.ghat - other.ghat)

    def __neg__(self):
        return SpectralDescriptor(self.spec, -self.fhat, -self.ghat)

    def __mul__(self, c):
        return SpectralDescriptor(self.spec, c * self.fhat, c * self.ghat)

    __rmul__ = __mul__

    def spectral(self):
        return self

    def translated(self, a):
        """Shift by the physical vector ``a``: ``F(y) -> F(y - a)``."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        phase = np.exp(-1j * sum(k * c for k, c in zip(self.spec.momentum_grid(), a)))
        return SpectralDescriptor(self.spec, self.fhat * phase, self.ghat * phase)


@dataclass(frozen=True, eq=False)
class WeylDescriptor:
    """Real phase-space pair ``(f, g)`` labelling ``exp(i(Phi(f) + Pi(g)))`` on a lattice."""

    spec: LatticeSpec
    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "f", _as_array(self.f, self.spec.shape, float))
        object.__setattr__(self, "g", _as_array(self.g, self.spec.shape, float))

    @classmethod
    def zero(cls, spec):
        return cls(spec, np.zeros(spec.shape), np.zeros(spec.shape))

    @classmethod
    def delta(cls, spec, site, field="phi", amplitude=1.0):
        """Single-site descriptor; ``site`` is a tuple of integer labels."""
        if field not in _FIELDS:
            raise DomainError(f"field must be one of {_FIELDS}")
        a = np.zeros(spec.shape)
        a[_site(spec, site)] = amplitude
        z = np.zeros(spec.shape)
        return cls(spec, a, z) if field == "phi" else cls(spec, z, a)

    def _check(self, other):
        if other.spec != self.spec:
            raise DomainError("descriptors live on different lattices")

    def __add__(self, other):
        self._check(other)
        return WeylDescriptor(self.spec, self.f + other.f, self.g + other.g)

    def __sub__(self, other):
        self._check(other)
        return WeylDescriptor(self.spec, self.f - other.f, self.g - other.g)

    def __neg__(self):
        return WeylDescriptor(self.spec, -self.f, -self.g)

    def __mul__(self, c):
        return WeylDescriptor(self.spec, c * self.f, c * self.g)

    __rmul__ = __mul__

    def spectral(self):
        return SpectralDescriptor(self.spec, np.fft.fftn(self.f), np.fft.fftn(self.g))


def _site(spec, site):
    site = (site,) if np.isscalar(site) else tuple(site)
    if len(site) != spec.d:
        raise DomainError(f"site needs {spec.d} integer labels")
    return tuple(int(s) % spec.n for s in site)


def as_descriptor(spec, item):
    """Convert ``(site, 'phi' | 'pi')`` or a descriptor into a spectral descriptor."""
    if isinstance(item, (WeylDescriptor, SpectralDescriptor)):
        if item.spec != spec:
            raise DomainError("descriptor lattice does not match the state lattice")
        return item.spectral()
    site, field = item
    return WeylDescriptor.delta(spec, site, field).spectral()


class _QuasiFree:
    """Shared Weyl/Wick calculus for momentum-diagonal quasi-free states.

    Subclasses provide ``spec``, ``norm`` (weight of one momentum in the
    Parseval sum) and the arrays ``_phiphi``, ``_pipi``, ``_phipi`` and
    ``_mean_hat``.
    """

    def bilinear(self, w1, w2):
        """Symmetrised truncated two-point function ``Re <X(w1) X(w2)>_T``."""
        a, b = as_descriptor(self.spec, w1), as_descriptor(self.spec, w2)
        s = (self._phiphi * np.conj(a.fhat) * b.fhat
             + self._pipi * np.conj(a.ghat) * b.ghat
             + self._phipi * np.conj(a.fhat) * b.ghat
             + self._phipi * a.ghat * np.conj(b.fhat))
        return self.norm * float(np.sum(s).real)

    def quadratic_form(self, w):
        return self.bilinear(w, w)

    def symplectic(self, w1, w2):
        """``sigma(w1, w2)`` with ``[X(w1), X(w2)] = i sigma``."""
        a, b = as_descriptor(self.spec, w1), as_descriptor(self.spec, w2)
        s = np.conj(a.fhat) * b.ghat - np.conj(a.ghat) * b.fhat
        return self.norm * float(np.sum(s).real)

    def mean(self, w):
        """``<X(w)>``."""
        if self._mean_hat is None:
            return 0.0
        a = as_descriptor(self.spec, w)
        mphi, mpi = self._mean_hat
        return self.norm * float(np.sum(np.conj(a.fhat) * mphi + np.conj(a.ghat) * mpi).real)

    def two_point(self, w1, w2):
        """Ordered truncated two-point function ``<X(w1) X(w2)>_T``."""
        return self.bilinear(w1, w2) + 0.5j * self.symplectic(w1, w2)

    def _displacement_means(self, p):
        """Mean data of ``omega(W(p)* . W(p))``: ``<Phi> = -p_g``, ``<Pi> = p_f``."""
        p = as_descriptor(self.spec, p)
        if self._mean_hat is None:
            return -p.ghat, p.fhat
        mphi, mpi = self._mean_hat
        return mphi - p.ghat, mpi + p.fhat


class GaussianState(_QuasiFree):
    """Translation-invariant quasi-free state on a lattice.

    Parameters
    ----------
    spec : LatticeSpec
    phiphi, pipi : array_like
        Real per-momentum variances (FFT order, shape ``spec.shape``).
    phipi : array_like, optional
        Symmetrised cross spectrum ``<{Phi, Pi}>/2``; zero by default.
    means : tuple of array_like, optional
        Position-space mean field and mean momentum.
    excluded : array_like of bool, optional
        Modes dropped from all sums (zero-mode exclusion).
    """

    def __init__(self, spec, phiphi, pipi, phipi=None, means=None, excluded=None, mean_hat=None):
        self.spec = spec
        shape = spec.shape
        phiphi = np.asarray(phiphi)
        pipi = np.asarray(pipi)
        if np.iscomplexobj(phiphi) or np.iscomplexobj(pipi):
            scale = max(np.max(np.abs(phiphi)), np.max(np.abs(pipi)), 1.0)
            if max(np.max(np.abs(np.imag(phiphi))), np.max(np.abs(np.imag(pipi)))) > 1e-12 * scale:
                raise DomainError("variance spectra must be real")
            phiphi, pipi = phiphi.real, pipi.real
        self._phiphi = _as_array(phiphi, shape, float)
        self._pipi = _as_array(pipi, shape, float)
        self._phipi = _as_array(np.zeros(shape) if phipi is None else phipi, shape, complex)
        self.excluded = _as_array(np.zeros(shape, bool) if excluded is None else excluded, shape, bool)
        if means is not None and mean_hat is not None:
            raise DomainError("give means either in position or in momentum space")
        if means is not None:
            mphi, mpi = (np.asarray(m, dtype=float) for m in means)
            mean_hat = (np.fft.fftn(mphi), np.fft.fftn(mpi))
        self._mean_hat = None if mean_hat is None else tuple(_as_array(m, shape, complex) for m in mean_hat)
        self.norm = 1.0 / spec.volume

    @property
    def phiphi(self):
        return self._phiphi

    @property
    def pipi(self):
        return self._pipi

    @property
    def phipi(self):
        return self._phipi

    @property
    def means(self):
        """Position-space ``(<Phi(x)>, <Pi(x)>)`` or None."""
        if self._mean_hat is None:
            return None
        return tuple(np.fft.ifftn(m).real for m in self._mean_hat)

    def with_means(self, mean_hat):
        return GaussianState(self.spec, self._phiphi, self._pipi, self._phipi,
                             excluded=self.excluded, mean_hat=mean_hat)

    def displaced(self, p):
        """The state ``omega(W(p)* A W(p))`` of the coherent vector ``W(p) Omega``."""
        return self.with_means(self._displacement_means(p))

    def block(self, name):
        return {"phiphi": self._phiphi, "pipi": self._pipi, "phipi": self._phipi}[name]

    def position_kernel(self, name):
        """``C(r)`` on the lattice labels (symmetrised part, real)."""
        return np.fft.ifftn(self.block(name)).real

    def covariance_matrix(self, name):
        """Dense ``V x V`` matrix ``C(x - y)`` in C-order site numbering."""
        kern = self.position_kernel(name)
        idx = np.indices(self.spec.shape).reshape(self.spec.d, -1)
        diff = (idx[:, :, None] - idx[:, None, :]) % self.spec.n
        return kern[tuple(diff)]

    def uncertainty_product(self):
        """``<PhiPhi><PiPi> - |<PhiPi>_sym|**2 - |Im <PhiPi>_sym|`` per mode.

        Positivity of the state is equivalent to this being ``>= 1/4`` on
        every retained mode; equality marks a pure mode.
        """
        c = self._phipi
        return self._phiphi * self._pipi - np.abs(c) ** 2 - np.abs(c.imag)

    def purity(self):
        """Per-mode purity ``1 / (2 sqrt(uncertainty_product))``; excluded modes report 1."""
        u = np.where(self.excluded, 0.25, self.uncertainty_product())
        return 0.5 / np.sqrt(np.maximum(u, 1e-300))

    def min_uncertainty(self):
        u = self.uncertainty_product()
        return float(np.min(u[~self.excluded])) if np.any(~self.excluded) else 0.25


def two_point(state, x, y, a="phi", b="phi"):
    """``omega(A(x) B(y))`` for single-site fields including means and commutator parts."""
    wx = WeylDescriptor.delta(state.spec, x, a).spectral()
    wy = WeylDescriptor.delta(state.spec, y, b).spectral()
    return state.two_point(wx, wy) + state.mean(wx) * state.mean(wy)


def symplectic_form(w1, w2):
    """``sum_x f1 g2 - g1 f2`` for position-space descriptors."""
    w1._check(w2)
    return float(np.sum(w1.f * w2.g - w1.g * w2.f))


def weyl_expectation(state, w):
    """``omega(exp(i(Phi(f) + Pi(g))))`` of a quasi-free state."""
    w = as_descriptor(state.spec, w)
    return complex(np.exp(1j * state.mean(w) - 0.5 * state.quadratic_form(w)))


def coherent_overlap(state, w1, w2):
    """Inner product ``<W(w1) Omega, W(w2) Omega>`` in the GNS space of ``state``."""
    a, b = as_descriptor(state.spec, w1), as_descriptor(state.spec, w2)
    return complex(np.exp(0.5j * state.symplectic(a, b))) * weyl_expectation(state, b - a)


def coherent_distance(state, w1, w2):
    """``||W(w1) Omega - W(w2) Omega||`` without cancellation for nearby vectors.

    Uses ``||u - v||**2 = 2 - 2 Re <u, v>`` with
    ``<u, v> = exp(z)``, rewritten as
    ``-2 expm1(Re z) cos(Im z) + 4 sin(Im z / 2)**2``.
    """
    a, b = as_descriptor(state.spec, w1), as_descriptor(state.spec, w2)
    d = b - a
    z = 0.5j * state.symplectic(a, b) + 1j * state.mean(d) - 0.5 * state.quadratic_form(d)
    sq = -2.0 * np.expm1(z.real) * np.cos(z.imag) + 4.0 * np.sin(z.imag / 2.0) ** 2
    return float(np.sqrt(max(sq, 0.0)))


def wick_from_two_point(n, truncated, mean):
    """Expectation of an ordered product of ``n`` linear elements of a quasi-free state.

    Parameters
    ----------
    n : int
    truncated : callable
        ``truncated(i, j)`` for ``i < j`` is the ordered truncated two-point function.
    mean : callable
        ``mean(i)`` is the one-point function.
    """

    @functools.lru_cache(maxsize=None)
    def expect(rest):
        if not rest:
            return 1.0 + 0j
        first, tail = rest[0], rest[1:]
        total = mean(first) * expect(tail)
        for pos, j in enumerate(tail):
            total += truncated(first, j) * expect(tail[:pos] + tail[pos + 1:])
        return total

    return complex(expect(tuple(range(n))))


def wick_correlator(state, monomial):
    """Ordered correlator ``omega(X_1 ... X_n)`` by Wick's theorem.

    Parameters
    ----------
    state : GaussianState or any object with the same quasi-free interface
    monomial : sequence
        Items ``(site, 'phi' | 'pi')`` or descriptors on ``state.spec``.
    """
    items = [as_descriptor(state.spec, it) for it in monomial]
    means = [state.mean(w) for w in items]
    pairs = {}

    def truncated(i, j):
        if (i, j) not in pairs:
            pairs[(i, j)] = state.two_point(items[i], items[j])
        return pairs[(i, j)]

    return wick_from_two_point(len(items), truncated, lambda i: means[i])
