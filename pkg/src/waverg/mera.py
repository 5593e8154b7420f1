"""One MERA layer of the wavelet renormalisation group at the one-particle level.

A scaling step ``alpha^N_{N+1}`` factors into a filter redistribution on
``Lambda_{N+1}`` followed by the inclusion of ``Lambda_N`` as the even
sublattice.  Two factorisations are provided:

* the circulant ``U_Phi[u, u + n] = h_n``, whose symbol ``sqrt(2) m0``
  vanishes at the Brillouin edge, so the pairing ``U_Pi = U_Phi^-T`` only
  exists on the nonsingular modes;
* the orthogonal periodic DWT ``O`` (low-pass and high-pass rows
  interleaved), which acts identically on both branches and is therefore
  a genuine point transformation of the CCR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .gaussian import WeylDescriptor, coherent_overlap
from .rg import OneParticleMap, _check_pair, _kron_all, _step_matrix_1d, build_map, scaling_limit_state

# modes with |symbol| below this are flagged as singular
SINGULAR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DwtLayer:
    """Periodic orthogonal wavelet transform on ``Lambda_{N+1}``.

    Attributes
    ----------
    W : ndarray, shape (V, V)
        The first ``V / 2**d`` rows are the all-low-pass outputs (coarse
        sites of ``Lambda_N`` in C order); the remaining rows are the
        ancilla (any high-pass factor) outputs.
    """

    spec: object
    bank: object
    W: np.ndarray

    @property
    def n_low(self):
        return self.W.shape[0] // 2**self.spec.d

    @property
    def low(self):
        return self.W[: self.n_low]

    @property
    def high(self):
        return self.W[self.n_low:]

    def orthogonality_residual(self):
        return float(np.max(np.abs(self.W @ self.W.T - np.eye(self.W.shape[0]))))

    def coarse_coordinates(self, u):
        """Low-pass part of ``W u`` reshaped onto ``Lambda_N``."""
        shape = (self.spec.n // 2,) * self.spec.d
        return (self.low @ np.asarray(u, dtype=float).ravel()).reshape(shape)


def _dwt_1d(n, bank):
    """Stacked ``[low; high]`` periodic DWT on ``n`` sites (``n`` even)."""
    return np.vstack([_step_matrix_1d(n // 2, bank.h), _step_matrix_1d(n // 2, bank.g)])


def _interleaved_1d(n, bank):
    W = _dwt_1d(n, bank)
    order = np.empty(n, dtype=int)
    order[0::2] = np.arange(n // 2)
    order[1::2] = np.arange(n // 2, n)
    return W[order]


def dwt_layer(spec, bank):
    """DWT layer on the lattice ``spec`` (playing ``Lambda_{N+1}``).

    Raises
    ------
    DomainError
        Odd number of sites per direction.
    """
    n = spec.n
    if n % 2:
        raise DomainError("the DWT needs an even number of sites per direction")
    W1 = _dwt_1d(n, bank)
    Wd = _kron_all([W1] * spec.d)
    # rows of the d-fold product whose every factor is low-pass go first
    idx = np.indices((n,) * spec.d).reshape(spec.d, -1)
    low = np.all(idx < n // 2, axis=0)
    order = np.concatenate([np.flatnonzero(low), np.flatnonzero(~low)])
    return DwtLayer(spec, bank, Wd[order])


def interleaved_dwt(spec, bank):
    """Orthogonal DWT with output ``2x`` low-pass and ``2x + 1`` high-pass per direction."""
    if spec.n % 2:
        raise DomainError("the DWT needs an even number of sites per direction")
    return _kron_all([_interleaved_1d(spec.n, bank)] * spec.d)


def sublattice_embedding(coarse, fine):
    """Inclusion ``I^N_{N+1}`` of ``Lambda_N`` as the even sublattice of ``Lambda_{N+1}``.

    ``Phi_N(x) -> 2**-0.5 Phi_{N+1}(x)`` and ``Pi_N(x) -> 2**0.5 Pi_{N+1}(x)``.
    """
    _check_pair(coarse, fine)
    if fine.N != coarse.N + 1:
        raise DomainError("the sublattice embedding connects consecutive scales")
    S1 = np.zeros((coarse.n, fine.n))
    S1[np.arange(coarse.n), 2 * np.arange(coarse.n)] = 1.0
    S = _kron_all([S1] * coarse.d)
    return OneParticleMap(coarse, fine, None, 2.0**-0.5 * S, 2.0**0.5 * S)


@dataclass(frozen=True, eq=False)
class Disentangler:
    """Circulant filter redistribution on ``Lambda_{N+1}`` and its symplectic partner.

    Attributes
    ----------
    U_phi : ndarray
        ``U_phi[u, u + n] = h_n`` (product over directions).
    U_pi : ndarray
        Inverse transpose of ``U_phi`` on the nonsingular modes, zero on the rest.
    symbol : ndarray
        ``prod_j sqrt(2) m0(eps_{N+1} k_j)`` on the momentum grid (FFT order).
    singular : ndarray of bool
        Modes where the symbol vanishes.
    projector : ndarray
        Real orthogonal projector onto the nonsingular modes.
    """

    spec: object
    bank: object
    U_phi: np.ndarray
    U_pi: np.ndarray
    symbol: np.ndarray
    singular: np.ndarray
    projector: np.ndarray

    @property
    def singular_count(self):
        return int(np.count_nonzero(self.singular))

    def pairing_residual(self):
        """``max |U_phi U_pi^T - P|`` with ``P`` the nonsingular projector."""
        return float(np.max(np.abs(self.U_phi @ self.U_pi.T - self.projector)))


def _fourier_matrix(spec):
    n = spec.n
    F1 = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    return _kron_all([F1] * spec.d)


def disentangler_action(spec, bank):
    """Circulant pair ``(U_Phi, U_Pi)`` on ``spec`` (playing ``Lambda_{N+1}``).

    Singular Brillouin-edge modes are flagged rather than inverted.
    """
    n = spec.n
    C1 = np.zeros((n, n))
    rows = np.arange(n)
    for t, ht in enumerate(bank.h):
        np.add.at(C1, (rows, (rows + t) % n), ht)
    U = _kron_all([C1] * spec.d)
    k = spec.momenta()
    s1 = np.polyval(bank.h[::-1], np.exp(-1j * spec.eps * k))
    symbol = s1
    for _ in range(spec.d - 1):
        symbol = np.multiply.outer(symbol, s1)
    singular = np.abs(symbol) < SINGULAR_TOL

    # U acts on exp(i k u) with eigenvalue conj(symbol(k)); F diagonalises it
    F = _fourier_matrix(spec)
    V = spec.volume
    lam = np.conj(symbol).ravel()
    keep = ~singular.ravel()
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    # U = F^-1 diag(lam) F with F^-1 = F^H / V, so U^-T on the kept modes is
    # F^T diag(1/lam) conj(F) / V
    U_pi = (F.T @ np.diag(inv) @ np.conj(F)).real / V
    P = (np.conj(F).T @ np.diag(keep.astype(float)) @ F).real / V
    return Disentangler(spec, bank, U, U_pi, symbol, singular, P)


@dataclass
class LayerCheckReport:
    """Residuals of one verified layer.

    All residuals are max-abs entrywise deviations.

    Attributes
    ----------
    factorization_phi : float
        ``|(A_Phi - I_Phi U_Phi) P|`` on the nonsingular modes.
    factorization_pi : float
        ``|(A_Pi - I_Pi U_Pi) P|``; informational, the inverse-transpose
        partner does not reproduce the Pi branch of the step.
    dwt_factorization_phi, dwt_factorization_pi : float
        ``|A - I O|`` for the interleaved orthogonal DWT ``O``, all modes.
    orthogonality : float
        ``|W W^T - 1|``.
    low_pass : float
        ``|W_low - sqrt(2) A_Phi|``.
    pairing : float
        ``|U_Phi U_Pi^T - P|``.
    gram : float
        Coherent-state Gram matrices at scales ``N`` and ``N+1``.
    channel : float
        DWT coarse graining of the finer limit state versus the coarser one
        (position-space covariances).
    singular_modes : int
    cutoff_level : int
    """

    factorization_phi: float
    factorization_pi: float
    dwt_factorization_phi: float
    dwt_factorization_pi: float
    orthogonality: float
    low_pass: float
    pairing: float
    gram: float
    channel: float
    singular_modes: int
    cutoff_level: int
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "extra"}
        out.update(self.extra)
        return out


def default_descriptors(spec):
    """Five fixed single- and two-site descriptors at scale ``N``."""
    o = (0,) * spec.d
    e = (1,) + (0,) * (spec.d - 1)
    D = WeylDescriptor.delta
    return [
        D(spec, o, "phi"),
        D(spec, o, "pi"),
        D(spec, e, "phi", 0.5),
        D(spec, o, "phi") + D(spec, e, "pi"),
        D(spec, e, "pi", -0.7) + D(spec, o, "phi", 0.3),
    ]


def _dense(limit, name):
    return limit.state.covariance_matrix(name)


def verify_layer(spec, bank, m, descriptors=None, cutoff_level=8, coarse=None, fine=None):
    """Check the MERA decomposition of ``alpha^N_{N+1}`` and the layer isometry.

    Parameters
    ----------
    spec : LatticeSpec
        Coarse scale ``N``.
    bank : FilterBank
    m : float
    descriptors : list of WeylDescriptor, optional
        Probes for the Gram check; :func:`default_descriptors` when omitted.
    cutoff_level : int
        The finer limit state sums ``Gamma_{N+1+cutoff_level}``; the coarser
        one the same momenta, so both are raw sums at matched cutoffs.
    coarse, fine : LimitState, optional
        Precomputed limit states at ``N`` and ``N+1``.

    Raises
    ------
    DomainError
        Limit states built with another mass, filter or lattice.
    """
    spec1 = spec.refine(1)
    if fine is None:
        fine = scaling_limit_state(spec1, m, bank, cutoff_level=cutoff_level, extrapolate=False,
                                   allow_divergent=True)
    if coarse is None:
        coarse = scaling_limit_state(spec, m, bank, cutoff_level=fine.cutoff_level + 1,
                                     extrapolate=False, allow_divergent=True)
    for lim, sp in ((coarse, spec), (fine, spec1)):
        if lim.state.spec != sp or lim.m != m or lim.bank is not bank:
            raise DomainError("limit states do not match the layer parameters")
    if coarse.kmax != fine.kmax:
        raise DomainError("limit states are not at matched cutoffs")

    step = build_map(spec, spec1, bank)
    emb = sublattice_embedding(spec, spec1)
    dis = disentangler_action(spec1, bank)
    P = dis.projector
    layer = dwt_layer(spec1, bank)
    O = interleaved_dwt(spec1, bank)

    fac_phi = float(np.max(np.abs((step.A_phi - emb.A_phi @ dis.U_phi) @ P)))
    fac_pi = float(np.max(np.abs((step.A_pi - emb.A_pi @ dis.U_pi) @ P)))
    dwt_phi = float(np.max(np.abs(step.A_phi - emb.A_phi @ O)))
    dwt_pi = float(np.max(np.abs(step.A_pi - emb.A_pi @ O)))
    low_pass = float(np.max(np.abs(layer.low - np.sqrt(2.0) * step.A_phi)))

    ws = default_descriptors(spec) if descriptors is None else list(descriptors)
    pushed = [step.push(w) for w in ws]
    G0 = np.array([[coherent_overlap(coarse.state, a, b) for b in ws] for a in ws])
    G1 = np.array([[coherent_overlap(fine.state, a, b) for b in pushed] for a in pushed])
    gram = float(np.max(np.abs(G0 - G1)))

    # channel: transform the finer covariance with O, keep the even sublattice
    S = emb.A_phi * np.sqrt(2.0)
    channel = 0.0
    for name, scale in (("phiphi", 0.5), ("pipi", 2.0)):
        C1 = O @ _dense(fine, name) @ O.T
        pulled = scale * (S @ C1 @ S.T)
        channel = max(channel, float(np.max(np.abs(pulled - _dense(coarse, name)))))

    return LayerCheckReport(
        factorization_phi=fac_phi,
        factorization_pi=fac_pi,
        dwt_factorization_phi=dwt_phi,
        dwt_factorization_pi=dwt_pi,
        orthogonality=layer.orthogonality_residual(),
        low_pass=low_pass,
        pairing=dis.pairing_residual(),
        gram=gram,
        channel=channel,
        singular_modes=dis.singular_count,
        cutoff_level=fine.cutoff_level,
    )
