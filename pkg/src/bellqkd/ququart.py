"""Orthonormal ququart frame spanned by the four single-photon states
{|0_f>, |1_f>, |0_t>, |1_t>} and channels expressed in it.

Vectors of a two-photon state are ordered photon M first, photon N second
(``np.kron(m, n)``); the inconclusive level is appended as index 16.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import LossSpec, TransformedOverlapSet, leaky_apply
from .spectral import EncodingParams, OverlapSet

__all__ = [
    "DegenerateEncodingError",
    "ContractionError",
    "QuquartBasis",
    "QuquartChannel",
    "LogicalKets",
    "gram_matrix",
    "build_basis",
    "n3_printed",
    "channel_matrix",
    "row0_closed_form",
    "identity_overlaps",
    "two_photon_apply",
    "embed_logical",
    "ququart_loss_operator",
]

DIM = 16


class DegenerateEncodingError(ValueError):
    """The four single-photon states do not span a usable 4-dim space."""


class ContractionError(ValueError):
    """A channel matrix with singular values above one."""


def gram_matrix(ov: OverlapSet) -> np.ndarray:
    """G[q, p] = <q|p> in the frame (0f, 1f, 0t, 1t)."""
    g = np.eye(4, dtype=complex)
    g[0, 1] = g[1, 0] = ov.beta_f
    g[2, 3] = g[3, 2] = ov.beta_t
    g[:2, 2:] = ov.alpha
    g[2:, :2] = ov.alpha.conj().T
    return g


@dataclass(frozen=True)
class QuquartBasis:
    """``coeffs[:, k]`` expresses ququart state |k> in the physical frame."""

    coeffs: np.ndarray
    gram_source: OverlapSet
    N2: complex
    N3: complex
    A: complex
    B: complex
    C: complex
    D: complex

    @property
    def K(self) -> complex:
        """Projection coefficient of |1_t> on |2> (times N2)."""
        al = self.gram_source.alpha
        return abs(self.N2) ** 2 * (self.gram_source.beta_t - np.conj(self.A) * al[0, 1]
                                    - np.conj(self.B) * al[1, 1])

    def physical_in_ququart(self) -> np.ndarray:
        """Columns: |0_f>, |1_f>, |0_t>, |1_t> as ququart coordinate vectors."""
        return np.linalg.inv(self.coeffs)


def build_basis(ov: OverlapSet) -> QuquartBasis:
    """Gram-Schmidt in the fixed order (0f+1f), (0f-1f), 0t, 1t."""
    bf = ov.beta_f.real
    bt = ov.beta_t.real
    if 1 - abs(bf) ** 2 < 1e-10:
        raise DegenerateEncodingError("frequency bins coincide (|beta_f| -> 1)")
    al = ov.alpha
    den = 1 - bf**2
    A = (al[0, 0] - al[1, 0] * bf) / den
    B = (al[1, 0] - al[0, 0] * bf) / den
    C = (al[0, 1] - al[1, 1] * bf) / den
    D = (al[1, 1] - al[0, 1] * bf) / den
    n2sq = 1 - (abs(al[0, 0]) ** 2 + abs(al[1, 0]) ** 2
                - 2 * (al[0, 0] * np.conj(al[1, 0])).real * bf) / den
    if n2sq < 1e-12:
        raise DegenerateEncodingError("|0_t> lies in the frequency-bin span")
    N2 = n2sq**-0.5
    K = N2**2 * (bt - np.conj(A) * al[0, 1] - np.conj(B) * al[1, 1])
    v3 = np.array([K * A - C, K * B - D, -K, 1.0], dtype=complex)
    G = gram_matrix(ov)
    n3sq = (v3.conj() @ G @ v3).real
    if n3sq < 1e-12:
        raise DegenerateEncodingError("|1_t> lies in the span of the other three states")
    N3 = n3sq**-0.5
    coeffs = np.zeros((4, 4), dtype=complex)
    coeffs[:2, 0] = np.array([1, 1]) / np.sqrt(2 * (1 + bf))
    coeffs[:2, 1] = np.array([1, -1]) / np.sqrt(2 * (1 - bf))
    coeffs[:, 2] = N2 * np.array([-A, -B, 1, 0])
    coeffs[:, 3] = N3 * v3
    err = np.max(np.abs(coeffs.conj().T @ G @ coeffs - np.eye(4)))
    if not err < 1e-8:
        raise DegenerateEncodingError(f"basis not orthonormal (error {err:.2e})")
    coeffs.setflags(write=False)
    return QuquartBasis(coeffs, ov, complex(N2), complex(N3), complex(A), complex(B),
                        complex(C), complex(D))


def n3_printed(basis: QuquartBasis) -> float:
    """The long-hand normalisation of |3>, term by term as typeset.

    The cross term between the two frequency-bin coefficients is written
    without a complex conjugate; for complex overlaps this differs from the
    exact norm, which is what :func:`build_basis` uses.
    """
    ov = basis.gram_source
    al, bf, bt = ov.alpha, ov.beta_f.real, ov.beta_t.real
    A, B, C, D, N2 = basis.A, basis.B, basis.C, basis.D, basis.N2
    n2 = abs(N2) ** 2
    k = n2 * (bt - np.conj(A) * al[0, 1] - np.conj(B) * al[1, 1])
    kc = n2 * (bt - A * np.conj(al[0, 1]) - B * np.conj(al[1, 1]))
    p, q = k * A - C, k * B - D
    total = (1 - 2 * bt * n2 * (bt - (np.conj(A) * al[0, 1] + np.conj(B) * al[1, 1]).real)
             + 2 * (p * np.conj(al[0, 1])).real + 2 * (q * np.conj(al[1, 1])).real
             - 2 * (kc * p * np.conj(al[0, 0])).real - 2 * (kc * q * np.conj(al[1, 0])).real
             + 2 * bf * (p * q).real
             + n2**2 * abs(bt - np.conj(A) * al[0, 1] - np.conj(B) * al[1, 1]) ** 2
             + abs(p) ** 2 + abs(q) ** 2)
    return float(total.real**-0.5)


@dataclass(frozen=True)
class QuquartChannel:
    """F[i, j] = a_ij = <j|i'>; row i is the image of basis state i."""

    F: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=complex)
        if F.shape != (4, 4):
            raise ValueError("F must be 4x4")
        smax = np.linalg.norm(F, 2)
        if smax > 1 + 1e-10:
            raise ContractionError(f"channel matrix is not a contraction (|F| = {smax:.12f})")
        F.setflags(write=False)
        object.__setattr__(self, "F", F)

    @property
    def transfer(self) -> np.ndarray:
        """Matrix acting on column coordinate vectors (the transpose of F)."""
        return self.F.T

    @property
    def leak(self) -> np.ndarray:
        return 1 - np.sum(np.abs(self.F) ** 2, axis=1)


def identity_overlaps(ov: OverlapSet) -> TransformedOverlapSet:
    """Transformed overlaps of the identity channel."""
    g = gram_matrix(ov)
    return TransformedOverlapSet(g[:2, :2].copy(), g[2:, 2:].copy(), g[:2, 2:].copy(),
                                 g[2:, :2].copy())


def channel_matrix(ov: OverlapSet, tov: TransformedOverlapSet,
                   basis: QuquartBasis) -> QuquartChannel:
    """In-subspace channel amplitudes from transformed one-photon overlaps."""
    C = basis.coeffs
    M = C.conj().T @ tov.transfer() @ C
    return QuquartChannel(M.T)


def row0_closed_form(ov: OverlapSet, tov: TransformedOverlapSet, basis: QuquartBasis) -> np.ndarray:
    """a_00 .. a_03 written out from the overlap coefficients."""
    bf = ov.beta_f.real
    k, d = tov.kappa, tov.delta
    s0 = k[0, 0] + k[0, 1]
    s1 = k[1, 0] + k[1, 1]
    kc = np.conj(basis.K)
    a00 = (s0 + s1) / (2 * (1 + bf))
    a01 = (s0 - s1) / (2 * np.sqrt(1 - bf**2))
    a02 = np.conj(basis.N2) / np.sqrt(2 * (1 + bf)) * (
        d[0, 0] + d[0, 1] - np.conj(basis.A) * s0 - np.conj(basis.B) * s1)
    a03 = np.conj(basis.N3) / np.sqrt(2 * (1 + bf)) * (
        d[1, 0] + d[1, 1] - kc * (d[0, 0] + d[0, 1])
        + (kc * np.conj(basis.A) - np.conj(basis.C)) * s0
        + (kc * np.conj(basis.B) - np.conj(basis.D)) * s1)
    return np.array([a00, a01, a02, a03])


def two_photon_apply(rho: np.ndarray, chanM: QuquartChannel,
                     chanN: QuquartChannel | None = None) -> np.ndarray:
    """Apply per-photon channels to a 17-dim two-ququart density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (DIM + 1, DIM + 1):
        raise ValueError(f"two-photon state must be {DIM + 1}x{DIM + 1}")
    chanN = chanM if chanN is None else chanN
    return leaky_apply(rho, np.kron(chanM.transfer, chanN.transfer))


@dataclass(frozen=True)
class LogicalKets:
    ket0L: np.ndarray
    ket1L: np.ndarray
    ketPlusL: np.ndarray
    ketMinusL: np.ndarray
    psi_f: np.ndarray
    psi_t: np.ndarray
    a: complex


def _singlet(u: np.ndarray, v: np.ndarray, norm: float) -> np.ndarray:
    return norm * (np.kron(u, v) - np.kron(v, u))


def embed_logical(enc: EncodingParams, basis: QuquartBasis) -> LogicalKets:
    """Logical states as 16-dim two-ququart coordinate vectors."""
    ov = basis.gram_source
    phys = basis.physical_in_ququart()
    psi_f = _singlet(phys[:, 0], phys[:, 1], ov.norm_f)
    psi_t = _singlet(phys[:, 2], phys[:, 3], ov.norm_t)
    a = complex(np.vdot(psi_f, psi_t))
    if abs(a) >= 1 - 1e-12:
        raise DegenerateEncodingError("frequency- and time-bin singlets coincide")
    one = (psi_t - a * psi_f) / np.sqrt(1 - abs(a) ** 2)
    return LogicalKets(psi_f, one, (psi_f + one) / np.sqrt(2), (psi_f - one) / np.sqrt(2),
                       psi_f, psi_t, a)


def ququart_loss_operator(loss: LossSpec) -> np.ndarray:
    """Per-photon survival amplitudes in the ququart frame: states |0>, |1>
    (frequency bins) survive with the frequency-bin probability, |2>, |3>
    with the time-bin (carrier) probability."""
    return np.diag(np.sqrt([loss.p_freq, loss.p_freq, loss.p_time, loss.p_time])).astype(complex)
