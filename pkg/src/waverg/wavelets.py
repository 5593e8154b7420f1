"""Daubechies filter banks, scaling-function samples and Fourier symbols.

Conventions
-----------
* Low-pass taps ``h`` are indexed ``n = 0..2K-1`` and normalised so that
  ``sum(h) = sqrt(2)``.
* High-pass taps are ``g[n] = (-1)**n * h[2K-1-n]``.
* The filter symbol is ``m0(theta) = 2**-0.5 * sum_n h[n] exp(-1j*n*theta)``
  and the scaling function transform is the infinite product
  ``s_hat(k) = prod_{j>=1} m0(k / 2**j)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import ConvergenceError, DomainError, InvalidFilterError, UnsupportedFamilyError

SQRT2 = math.sqrt(2.0)
FILTER_TOL = 1e-12
MAX_K = 10

# the dyadic product is cut once |k| / 2**j drops below this value; the
# remainder is summed analytically from the first four cumulants of h
_TAIL_SWITCH = 2.0**-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _shifted_dot(a, b, shift):
    """Return ``sum_n a[n] * b[n + shift]`` for finite sequences."""
    if shift >= 0:
        m = min(len(a), len(b) - shift)
        return float(np.dot(a[:m], b[shift:shift + m])) if m > 0 else 0.0
    return _shifted_dot(b, a, -shift)


def filter_residuals(h, g, K):
    """Largest violation of each orthonormal filter identity.

    Vanishing moments are tested on the rescaled monomials
    ``t = (2n - (2K-1)) / (2K-1)`` in ``[-1, 1]``.  They span the same
    polynomial space as ``n**p`` for ``p < K`` but keep the sums O(1), so
    the check is meaningful at double precision even for K = 10.

    Returns
    -------
    dict
        Keys ``normalization``, ``orthonormality``, ``highpass_orthogonality``,
        ``highpass_orthonormality`` and ``vanishing_moments``.
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    span = max(len(h), len(g))
    shifts = range(-span, span + 1, 2)
    qmf = max(abs(_shifted_dot(h, h, s) - (s == 0)) for s in shifts)
    gh = max(abs(_shifted_dot(g, h, s)) for s in shifts)
    gg = max(abs(_shifted_dot(g, g, s) - (s == 0)) for s in shifts)
    n = np.arange(len(h))
    width = max(len(h) - 1, 1)
    t = (2.0 * n - width) / width
    sign = (-1.0) ** n
    moments = max(abs(float(np.sum(sign * t**p * h))) for p in range(K))
    return {
        "normalization": abs(float(np.sum(h)) - SQRT2),
        "orthonormality": qmf,
        "highpass_orthogonality": gh,
        "highpass_orthonormality": gg,
        "vanishing_moments": moments,
    }


def highpass_from_lowpass(h, tol=FILTER_TOL):
    """High-pass completion ``g[n] = (-1)**n h[L-1-n]`` of a low-pass filter.

    Parameters
    ----------
    h : array_like
        Low-pass taps with an even number of entries.
    tol : float
        Tolerance for the low-pass identities checked first.

    Raises
    ------
    InvalidFilterError
        If ``h`` is not an orthonormal low-pass filter.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or len(h) == 0:
        raise InvalidFilterError("filter must be a non-empty 1-d sequence")
    if len(h) % 2:
        h = np.append(h, 0.0)
    res = filter_residuals(h, np.zeros(1), 1)
    if res["normalization"] > tol or res["orthonormality"] > tol:
        raise InvalidFilterError(
            f"not an orthonormal low-pass filter (normalization {res['normalization']:.3g}, "
            f"orthonormality {res['orthonormality']:.3g})"
        )
    n = np.arange(len(h))
    return (-1.0) ** n * h[::-1]


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Low-pass/high-pass pair of a compactly supported orthonormal MRA.

    Parameters
    ----------
    K : int
        Number of vanishing moments.
    h, g : ndarray
        Low-pass and high-pass taps, both of length ``2K``.
    """

    K: int
    h: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", _frozen(self.h))
        object.__setattr__(self, "g", _frozen(self.g))
        if self.h.ndim != 1 or self.h.shape != self.g.shape or len(self.h) % 2:
            raise InvalidFilterError("h and g must be 1-d with the same even length")
        if not 1 <= self.K <= len(self.h) // 2:
            raise InvalidFilterError(f"K={self.K} incompatible with {len(self.h)} taps")
        worst = max(self.residuals().values())
        if worst > FILTER_TOL:
            raise InvalidFilterError(f"filter identities violated by {worst:.3g}")

    @classmethod
    def from_lowpass(cls, h, K=1):
        """Build a bank from low-pass taps, completing the high-pass side."""
        h = np.asarray(h, dtype=float)
        g = highpass_from_lowpass(h)
        if len(h) % 2:
            h = np.append(h, 0.0)
        return cls(K, h, g)

    @property
    def support_length(self):
        return len(self.h) - 1

    @property
    def taps(self):
        return len(self.h)

    def residuals(self):
        return filter_residuals(self.h, self.g, self.K)

    def __repr__(self):
        return f"FilterBank(K={self.K}, taps={self.taps})"


def _daubechies_mp(K, dps=60):
    """Minimal-phase D2K taps by spectral factorisation at ``dps`` digits."""
    with mpmath.workdps(dps):
        # P(y) = sum_k C(K-1+k, k) y^k with y = sin^2(theta/2)
        coeffs = [mpmath.mpf(math.comb(K - 1 + k, k)) for k in range(K)]
        yroots = mpmath.polyroots(coeffs[::-1], maxsteps=400, extraprec=4 * dps) if K > 1 else []
        poly = [mpmath.mpc(1)]
        factors = [[mpmath.mpc(1), mpmath.mpc(1)]] * K
        for y in yroots:
            b = 2 - 4 * y
            disc = mpmath.sqrt(b * b - 4)
            z = (b + disc) / 2
            if abs(z) >= 1:
                z = (b - disc) / 2
            factors.append([-z, mpmath.mpc(1)])
        for f in factors:
            out = [mpmath.mpc(0)] * (len(poly) + 1)
            for i, a in enumerate(poly):
                out[i] += a * f[0]
                out[i + 1] += a * f[1]
            poly = out
        total = mpmath.fsum(poly)
        taps = [mpmath.re(c) * mpmath.sqrt(2) / mpmath.re(total) for c in poly]
        # ascending powers of w come out in reversed (maximal-phase) order
        return taps[::-1]


@functools.lru_cache(maxsize=None)
def daubechies_filter(K):
    """Daubechies D2K filter bank with ``K`` vanishing moments.

    Parameters
    ----------
    K : int
        ``1 <= K <= 10``; ``K = 1`` is the Haar filter.

    Returns
    -------
    FilterBank

    Raises
    ------
    UnsupportedFamilyError
        If ``K`` is not an integer in ``1..10``.
    """
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)) or not 1 <= K <= MAX_K:
        raise UnsupportedFamilyError(f"Daubechies family index must be an integer in 1..{MAX_K}, got {K!r}")
    K = int(K)
    if K == 1:
        h = np.array([1.0, 1.0]) / SQRT2
    else:
        h = np.array([float(c) for c in _daubechies_mp(K)])
    return FilterBank(K, h, highpass_from_lowpass(h))


def m0(bank, theta):
    """Filter symbol ``2**-0.5 * sum_n h[n] exp(-i n theta)``."""
    z = np.exp(-1j * np.asarray(theta, dtype=float))
    return np.polyval(bank.h[::-1], z) / SQRT2


@functools.lru_cache(maxsize=None)
def _autocorrelation_odd(bank):
    h = bank.h
    lags = np.arange(1, len(h), 2)
    return lags, np.array([_shifted_dot(h, h, int(n)) for n in lags])


def m0_power(bank, theta):
    """``|m0(theta)|**2`` evaluated as ``1/2 + sum_{n odd} r_n cos(n theta)``."""
    theta = np.asarray(theta, dtype=float)
    lags, r = _autocorrelation_odd(bank)
    out = np.full(theta.shape, 0.5)
    for n, rn in zip(lags, r):
        out += rn * np.cos(n * theta)
    return np.maximum(out, 0.0)


@functools.lru_cache(maxsize=None)
def _cumulants(bank):
    """First four cumulants of the signed weights ``h[n] / sqrt(2)``."""
    w = bank.h / SQRT2
    n = np.arange(len(w), dtype=float)
    mean = float(np.sum(n * w))
    c = n - mean
    m2, m3, m4 = (float(np.sum(c**p * w)) for p in (2, 3, 4))
    return mean, m2, m3, m4 - 3.0 * m2 * m2


def _levels(kmax, j_max):
    if j_max is None:
        if kmax <= _TAIL_SWITCH:
            return 0
        return int(math.ceil(math.log2(kmax / _TAIL_SWITCH)))
    if j_max < 0 or kmax * 2.0**-j_max >= 0.1:
        raise DomainError(f"j_max={j_max} too small for |k|={kmax:.3g}; need |k| 2^-j_max < 0.1")
    return int(j_max)


def fourier_scaling(bank, k, j_max=None):
    """Fourier transform ``s_hat(k)`` of the scaling function.

    Parameters
    ----------
    bank : FilterBank
    k : array_like
        Real wavenumbers.
    j_max : int, optional
        Number of explicit factors in the dyadic product.  Chosen
        adaptively when omitted; otherwise ``|k| 2**-j_max < 0.1`` is
        required.  The remaining factors are resummed from cumulants.

    Returns
    -------
    complex ndarray
        Same shape as ``k``; exactly 1 where ``k == 0``.
    """
    k = np.asarray(k, dtype=float)
    kmax = float(np.max(np.abs(k))) if k.size else 0.0
    J = _levels(kmax, j_max)
    out = np.ones(k.shape, dtype=complex)
    for j in range(1, J + 1):
        out *= m0(bank, k * 2.0**-j)
    v = k * 2.0**-J
    mean, k2, k3, k4 = _cumulants(bank)
    # sum_{i>=1} log m0(v / 2^i) = sum_p kappa_p (-iv)^p / (p! (2^p - 1))
    log_tail = -1j * mean * v - k2 * v**2 / 6.0 + 1j * k3 * v**3 / 42.0 + k4 * v**4 / 360.0
    out *= np.exp(log_tail)
    return np.where(k == 0, 1.0 + 0j, out)


def scaling_power(bank, k, j_max=None):
    """``|s_hat(k)|**2`` from the real product of ``|m0|**2`` factors."""
    k = np.asarray(k, dtype=float)
    kmax = float(np.max(np.abs(k))) if k.size else 0.0
    J = _levels(kmax, j_max)
    out = np.ones(k.shape)
    for j in range(1, J + 1):
        out *= m0_power(bank, k * 2.0**-j)
    v = k * 2.0**-J
    _, k2, _, k4 = _cumulants(bank)
    out *= np.exp(-k2 * v**2 / 3.0 + k4 * v**4 / 180.0)
    return np.where(k == 0, 1.0, out)


@dataclass(frozen=True, eq=False)
class ScalingSamples:
    """Scaling function sampled on the dyadic grid ``x = i / 2**J``.

    Attributes
    ----------
    K : int
    J : int
    x, values : ndarray
        Grid over ``[0, 2K-1]`` (inclusive) and the sampled values.
    residual : float
        Sup-norm change in the last cascade iteration.
    iterations : int
    """

    K: int
    J: int
    x: np.ndarray
    values: np.ndarray
    residual: float
    iterations: int

    @property
    def step(self):
        return 2.0**-self.J

    def partition_of_unity_error(self):
        """``max_x |sum_n s(x - n) - 1|`` over the grid points in ``[0, 1)``."""
        R = 2**self.J
        total = np.zeros(R)
        for n in range(0, len(self.values) // R + 1):
            seg = self.values[n * R:(n + 1) * R]
            total[:len(seg)] += seg
        return float(np.max(np.abs(total - 1.0)))

    def restrict(self, J):
        """Samples on the coarser grid ``2**-J``."""
        if J > self.J:
            raise DomainError("cannot restrict to a finer grid")
        stride = 2 ** (self.J - J)
        return self.values[::stride]

    def fourier(self, k):
        """Riemann-sum Fourier transform of the samples."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        out = np.empty(k.shape, dtype=complex)
        for i, kk in enumerate(k.ravel()):
            out.flat[i] = np.sum(self.values * np.exp(-1j * kk * self.x)) * self.step
        return out

    def gram(self, shifts):
        """Quadrature inner products ``<s, s(. - n)>`` for integer ``n``."""
        R = 2**self.J
        v = self.values
        out = []
        for n in shifts:
            off = abs(int(n)) * R
            out.append(float(np.dot(v[off:], v[:len(v) - off])) * self.step if off < len(v) else 0.0)
        return np.array(out)


def cascade_evaluate(bank, J, tol=1e-10, max_iter=200):
    """Evaluate the scaling function by fixed-point iteration of the refinement equation.

    Starts from the Haar indicator on the grid ``x = i / 2**J`` and
    iterates ``s(x) <- sqrt(2) sum_n h[n] s(2x - n)`` until the sup-norm
    change drops below ``tol``.

    Raises
    ------
    DomainError
        If ``J < 1``.
    ConvergenceError
        If ``max_iter`` iterations do not reach ``tol``.
    """
    if J < 1:
        raise DomainError("cascade resolution J must be >= 1")
    R = 2**J
    size = bank.support_length * R + 1
    i = np.arange(size)
    v = (i < R).astype(float)
    idx = 2 * i[None, :] - (np.arange(bank.taps) * R)[:, None]
    valid = (idx >= 0) & (idx < size)
    idx = np.where(valid, idx, 0)
    weights = SQRT2 * bank.h[:, None] * valid
    residual = np.inf
    for it in range(1, max_iter + 1):
        new = np.sum(weights * v[idx], axis=0)
        residual = float(np.max(np.abs(new - v)))
        v = new
        if residual < tol:
            return ScalingSamples(bank.K, J, i / R, _frozen(v), residual, it)
    raise ConvergenceError(
        f"cascade did not converge in {max_iter} iterations (residual {residual:.3g})",
        residual=residual, iterations=max_iter,
    )


def weighted_power_integrals(bank, cutoffs, weight, nodes_per_panel=None, chunk=1 << 20):
    """Truncated integrals ``int_{|k|<=c} weight(|k|) |s_hat(k)|**2 dk``.

    The half line is split into panels of width pi integrated with
    Gauss-Legendre rules, so successive cutoffs reuse the earlier panels.

    Parameters
    ----------
    bank : FilterBank
    cutoffs : sequence of float
        Strictly increasing positive cutoffs.
    weight : callable
        Even weight evaluated on ``|k|`` (vectorised).
    nodes_per_panel : int, optional
        Defaults to ``8 + 2 * (2K - 1)``, enough for the oscillation of the
        outermost ``|m0|**2`` factor.

    Returns
    -------
    ndarray
        One estimate per cutoff.
    """
    cutoffs = np.asarray(cutoffs, dtype=float)
    if cutoffs.ndim != 1 or np.any(cutoffs <= 0) or np.any(np.diff(cutoffs) <= 0):
        raise DomainError("cutoffs must be positive and strictly increasing")
    q = nodes_per_panel or 8 + 2 * bank.support_length
    nodes, weights = np.polynomial.legendre.leggauss(q)
    step = max(chunk // q, 1)

    def integrate(a, b):
        # panels [a + j*pi, ...] up to b, the last one possibly shorter
        edges = np.append(np.arange(a, b, math.pi), b)
        total = 0.0
        for start in range(0, len(edges) - 1, step):
            lo = edges[start:start + step]
            hi = edges[start + 1:start + 1 + len(lo)]
            lo = lo[:len(hi)]
            half = 0.5 * (hi - lo)
            k = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
            f = weight(k) * scaling_power(bank, k)
            total += float(np.sum(half * (f @ weights)))
        return total

    out = []
    acc = 0.0
    prev = 0.0
    for c in cutoffs:
        acc += 2.0 * integrate(prev, c)
        prev = c
        out.append(acc)
    return np.array(out)


def sobolev_halforder_diagnostic(bank, cutoffs, nodes_per_panel=None, chunk=1 << 20):
    """Truncated integrals ``int_{|k|<=c} (1+|k|) |s_hat(k)|**2 dk``.

    See :func:`weighted_power_integrals` for the quadrature.
    """
    return weighted_power_integrals(bank, cutoffs, lambda k: 1.0 + k, nodes_per_panel, chunk)


def periodized_symbol(bank, spec, x, k):
    """Torus Fourier coefficient of the normalised scaling function at site ``x``.

    Returns ``eps_N**(d/2) * exp(-i k.x) * prod_j s_hat(eps_N k_j)`` so
    that translates by lattice vectors are orthonormal on the torus.

    Parameters
    ----------
    bank : FilterBank
    spec : LatticeSpec
    x : array_like, shape (d,)
        Physical lattice point of ``spec``.
    k : array_like, shape (..., d) or (...) when d == 1
        Points of the dual lattice ``(pi/L) Z^d``.
    """
    d = spec.d
    eps = spec.eps
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise DomainError(f"x must have shape ({d},)")
    if np.max(np.abs(x / eps - np.round(x / eps))) > 1e-9:
        raise DomainError("x is not a lattice point")
    k = np.asarray(k, dtype=float)
    if d == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    if k.shape[-1] != d:
        raise DomainError(f"k must have trailing dimension {d}")
    j = k * spec.L / math.pi
    if k.size and np.max(np.abs(j - np.round(j))) > 1e-9:
        raise DomainError("k is not on the dual lattice (pi/L) Z^d")
    out = eps ** (d / 2) * np.exp(-1j * (k @ x))
    for c in range(d):
        out = out * fourier_scaling(bank, eps * k[..., c])
    return out
