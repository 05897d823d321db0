"""Asymptotic key rates from simulated statistics.

The rate is ``min_rho D(G(rho) || Z(G(rho))) - p_concl * h2(qber)`` where the
minimum runs over all states compatible with the observed statistics.  The
map ``G`` is written per announcement block ``(a~, b~)``: Bob's outcome
register holds ``b-bar`` for the accepted outcomes and ``Z`` dephases it
between groups of outcomes that give different key bits (reverse
reconciliation, the key bit is a function of Bob's data).  Alice's secret
register is a copy of her basis label and is dropped, which leaves the
divergence unchanged.

Two evaluation modes are offered.  ``full_tomography`` evaluates the
divergence at the simulated state.  ``frank_wolfe`` minimises it over the
feasible set and returns a certified lower bound from the dual of the
linearised problem.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .channels import (
    ChannelSequence,
    DispersionChannel,
    FbsChannel,
    LogicalAmpDamp,
    LossSpec,
    MixedChannel,
    QubitUnitary,
    dispersion_delta,
    fbs_overlaps,
)
from .numerics import eig_hermitian
from .protocols import ProtocolSpec, purify_source

__all__ = [
    "Mode",
    "SolverNonConvergence",
    "InfeasibleConstraintsError",
    "Constraint",
    "Statistics",
    "GZMaps",
    "KeyRateResult",
    "channel_kraus",
    "simulate_statistics",
    "build_gz",
    "objective",
    "gradient",
    "leak_ec",
    "binary_entropy",
    "key_rate",
    "reduce_problem",
    "perturbation_penalty",
]

log = logging.getLogger(__name__)

XI = 1e-10
SMALL_RATE = 1e-7


class Mode(str, enum.Enum):
    FULL_TOMOGRAPHY = "full_tomography"
    FRANK_WOLFE = "frank_wolfe"


class SolverNonConvergence(RuntimeError):
    """Frank-Wolfe stopped before reaching the requested gap."""

    def __init__(self, msg: str, result: "KeyRateResult | None" = None):
        super().__init__(msg)
        self.result = result


class InfeasibleConstraintsError(ValueError):
    """The statistics admit no density matrix."""


@dataclass(frozen=True)
class Constraint:
    observable: np.ndarray
    value: float


# ---------------------------------------------------------------------------
# channels as contractions on Bob's signal space


def _kron_all(ms: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


def _logical_projectors(spec: ProtocolSpec) -> tuple[np.ndarray, np.ndarray]:
    """Signal-space kets spanning the Z-type logical states (ã, ā) = (0, 0), (0, 1)."""
    d = spec.signal_dim
    if spec.kept_dim != 1:
        raise ValueError("logical channels need a protocol without a kept register")
    kets = {(s.announcement, s.secret): s.vector[:d] for s in spec.states}
    return kets[(0, 0)], kets[(0, 1)]


def _ququart_transfer(spec: ProtocolSpec, tovs) -> np.ndarray:
    from .ququart import channel_matrix

    enc = spec.meta["encoding"]
    basis = spec.meta["basis"]
    ov = basis.gram_source
    del enc
    chans = [channel_matrix(ov, t, basis) for t in tovs]
    return np.kron(chans[0].transfer, chans[1].transfer)


def channel_kraus(spec: ProtocolSpec, channel) -> list[tuple[float, np.ndarray]]:
    """The channel as a mixture of contractions on Bob's signal space.

    Each entry ``(w, K)`` acts as ``rho -> K rho K^dagger`` with the lost
    weight moved to the inconclusive level; the mixture weights sum to one.
    """
    d = spec.signal_dim
    ours = spec.name == "ours"
    n = spec.photons_per_logical
    n_sent = int(round(np.log2(d))) if not ours else 2

    if isinstance(channel, MixedChannel):
        out = []
        for w, ch in channel.components:
            out += [(w * v, K) for v, K in channel_kraus(spec, ch)]
        return out
    if isinstance(channel, ChannelSequence):
        acc = [(1.0, np.eye(d, dtype=complex))]
        for step in channel.steps:
            nxt = channel_kraus(spec, step)
            acc = [(w1 * w2, K2 @ K1) for w1, K1 in acc for w2, K2 in nxt]
        return acc
    if isinstance(channel, LossSpec):
        if ours:
            from .ququart import ququart_loss_operator

            k = ququart_loss_operator(channel)
            return [(1.0, np.kron(k, k))]
        # frequency-bin qubits: mean of the two bin survival probabilities
        return [(1.0, np.sqrt(channel.p_freq**n) * np.eye(d, dtype=complex))]
    if isinstance(channel, LogicalAmpDamp):
        z0, z1 = _logical_projectors(spec)
        P1 = np.outer(z1, z1.conj())
        K = np.eye(d, dtype=complex) + (np.sqrt(channel.eta0) * np.exp(1j * channel.Delta) - 1) * P1
        return [(1.0, K)]
    if isinstance(channel, QubitUnitary):
        if ours:
            raise ValueError("qubit unitaries act on the discrete protocols only")
        return [(1.0, _kron_all([channel.matrix()] * n_sent))]
    if isinstance(channel, FbsChannel):
        if ours:
            enc = spec.meta["encoding"]
            tovs = [fbs_overlaps(enc, channel.pairs_for_photon(k)) for k in (0, 1)]
            return [(1.0, _ququart_transfer(spec, tovs))]
        # discrete protocols see the beamsplitter as a collective qubit unitary
        us = []
        for j in range(n_sent):
            p = channel.pairs_for_photon(0 if j == 0 else 1)[0]
            us.append(QubitUnitary(p.theta, p.phi).matrix())
        return [(1.0, _kron_all(us))]
    if isinstance(channel, DispersionChannel):
        if not ours:
            raise ValueError("dispersion is modelled for the logical encoding only")
        enc = spec.meta["encoding"]
        tovs = dispersion_delta(enc, channel, channel.delta_alpha)
        return [(1.0, _ququart_transfer(spec, tovs))]
    raise TypeError(f"unsupported channel type {type(channel).__name__}")


# ---------------------------------------------------------------------------
# statistics


@dataclass
class Statistics:
    rho_AB: np.ndarray
    constraints: list[Constraint]
    p_concl: float
    qber: float
    probabilities: np.ndarray  # [state index, povm index]
    dims: tuple[int, int]
    sifted: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)


def _apply_contractions(psi: np.ndarray, dA: int, dB: int, kraus) -> np.ndarray:
    Psi = psi.reshape(dA, dB)
    d = dB - 1
    rho = np.zeros((dA * dB, dA * dB), dtype=complex)
    for w, K in kraus:
        Kt = np.eye(dB, dtype=complex)
        Kt[:d, :d] = K
        out = Psi @ Kt.T
        v = out.reshape(-1)
        rho += w * np.outer(v, v.conj())
        lossop = np.eye(dB) - Kt.conj().T @ Kt
        lost = Psi @ lossop.T @ Psi.conj().T
        # lost weight lands on the inconclusive level
        idx = np.arange(dA) * dB + d
        rho[np.ix_(idx, idx)] += w * lost
    return 0.5 * (rho + rho.conj().T)


def _alice_projector(spec: ProtocolSpec, i: int) -> np.ndarray:
    k = spec.kept_dim
    P = np.zeros((spec.alice_dim, spec.alice_dim), dtype=complex)
    P[i * k:(i + 1) * k, i * k:(i + 1) * k] = np.eye(k)
    return P


def _hermitian_basis(n: int) -> list[np.ndarray]:
    out = []
    for j in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[j, j] = 1
        out.append(E)
        for k in range(j + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[j, k] = E[k, j] = 1
            out.append(E)
            E = np.zeros((n, n), dtype=complex)
            E[j, k], E[k, j] = -1j, 1j
            out.append(E)
    return out


def _constraint_ops(spec: ProtocolSpec, povm_ops: Sequence[np.ndarray], dB: int) -> list[np.ndarray]:
    dA = spec.alice_dim
    ops = [np.kron(E, np.eye(dB)) for E in _hermitian_basis(dA)]
    for i in range(len(spec.states)):
        PA = _alice_projector(spec, i)
        ops += [np.kron(PA, P) for P in povm_ops]
    return ops


def _sifted_blocks(spec: ProtocolSpec, probs: np.ndarray) -> dict[tuple[int, int], tuple[float, float]]:
    """(conclusive probability, error rate) per accepted announcement pair."""
    acc: dict[tuple[int, int], list[float]] = {}
    for i, s in enumerate(spec.states):
        for j, el in enumerate(spec.povm):
            r = spec.keymap(s.announcement, el.announcement, el.secret)
            if r is None:
                continue
            c = acc.setdefault((s.announcement, el.announcement), [0.0, 0.0])
            c[0] += probs[i, j]
            if r != s.secret:
                c[1] += probs[i, j]
    return {k: (float(p), float(min(max(e / p, 0.0), 1.0)) if p > 0 else 0.0)
            for k, (p, e) in sorted(acc.items())}


def _conclusive_and_errors(blocks: dict[tuple[int, int], tuple[float, float]]) -> tuple[float, float]:
    p_c = sum(p for p, _ in blocks.values())
    p_e = sum(p * e for p, e in blocks.values())
    qber = p_e / p_c if p_c > 0 else 0.0
    return float(p_c), float(min(max(qber, 0.0), 1.0))


def simulate_statistics(spec: ProtocolSpec, channel) -> Statistics:
    """Joint state and all observable statistics after the channel."""
    kraus = channel_kraus(spec, channel)
    src = purify_source(spec)
    dA, dB = spec.alice_dim, spec.bob_dim
    rho = _apply_contractions(src["psi_AA'"], dA, dB, kraus)
    povm_ops = [el.operator for el in spec.povm]
    probs = np.zeros((len(spec.states), len(spec.povm)))
    for i in range(len(spec.states)):
        PA = _alice_projector(spec, i)
        for j, P in enumerate(povm_ops):
            probs[i, j] = np.real(np.trace(rho @ np.kron(PA, P)))
    ops = _constraint_ops(spec, povm_ops, dB)
    cons = [Constraint(O, float(np.real(np.trace(rho @ O)))) for O in ops]
    blocks = _sifted_blocks(spec, probs)
    p_c, qber = _conclusive_and_errors(blocks)
    return Statistics(rho, cons, p_c, qber, probs, (dA, dB), blocks)


# ---------------------------------------------------------------------------
# G and Z


@dataclass(frozen=True)
class _Block:
    a_ann: int
    b_ann: int
    K: np.ndarray  # (n_out * d, d), stacked over accepted Bob outcomes
    groups: tuple[np.ndarray, ...]  # row indices of each key value


@dataclass(frozen=True)
class GZMaps:
    """Announcement-resolved Kraus operators and key-register structure.

    ``kraus_A[ã]`` and ``kraus_B[b~]`` are the measurement Kraus operators of
    each party, mapping into (system x announcement x secret); ``postselect``
    is the diagonal projector onto the accepted (ã, b~, b-bar) tuples;
    ``keymap_isometry`` maps each accepted tuple to (key bit x tuple);
    ``pinching_basis`` are the two key-register projectors.
    """

    kraus_A: dict[int, np.ndarray]
    kraus_B: dict[int, np.ndarray]
    postselect: np.ndarray
    tuples: tuple[tuple[int, int, int], ...]
    keymap_isometry: np.ndarray
    pinching_basis: tuple[np.ndarray, np.ndarray]
    blocks: tuple[_Block, ...]
    dims: tuple[int, int]


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = eig_hermitian(m, atol=1e-10)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.conj().T


def _build_blocks(spec: ProtocolSpec, povm_ops: Sequence[np.ndarray], alice_proj) -> list[_Block]:
    dA = alice_proj[0].shape[0]
    dB = povm_ops[0].shape[0]
    blocks = []
    a_anns = sorted({s.announcement for s in spec.states})
    b_anns = sorted({el.announcement for el in spec.povm})
    for a in a_anns:
        PA = sum(alice_proj[i] for i, s in enumerate(spec.states) if s.announcement == a)
        for b in b_anns:
            rows, groups = [], {0: [], 1: []}
            for j, el in enumerate(spec.povm):
                if el.announcement != b:
                    continue
                r = spec.keymap(a, b, el.secret)
                if r is None:
                    continue
                start = len(rows) * dA * dB
                rows.append(np.kron(PA, _psd_sqrt(povm_ops[j])))
                groups[r].extend(range(start, start + dA * dB))
            if rows:
                K = np.vstack(rows)
                blocks.append(_Block(a, b, K, (np.array(groups[0], int), np.array(groups[1], int))))
    return blocks


def build_gz(spec: ProtocolSpec) -> GZMaps:
    """Kraus description of the post-processing for ``spec``."""
    dA, dB = spec.alice_dim, spec.bob_dim
    alice_proj = [_alice_projector(spec, i) for i in range(len(spec.states))]
    a_labels = sorted({(s.announcement, s.secret) for s in spec.states})
    b_labels = sorted({(e.announcement, e.secret) for e in spec.povm})
    a_anns = sorted({a for a, _ in a_labels})
    b_anns = sorted({b for b, _ in b_labels})
    for (a, b, bs) in spec.keymap.entries:
        if a not in a_anns or (b, bs) not in b_labels:
            raise ValueError(f"key map tuple {(a, b, bs)} refers to absent labels")
    # Alice: K_a = sum_abar sqrt(P^{a abar}) (x) |a>|abar>
    kraus_A = {}
    for a in a_anns:
        cols = []
        for (aa, ab) in a_labels:
            P = sum((alice_proj[i] for i, s in enumerate(spec.states)
                     if (s.announcement, s.secret) == (aa, ab)), np.zeros((dA, dA)))
            reg = np.zeros((len(a_labels), 1))
            if aa == a:
                reg[a_labels.index((aa, ab)), 0] = 1
            cols.append(np.kron(P, reg))
        kraus_A[a] = sum(cols)
    kraus_B = {}
    for b in b_anns:
        parts = []
        for (bb, bs) in b_labels:
            reg = np.zeros((len(b_labels), 1))
            if bb == b:
                reg[b_labels.index((bb, bs)), 0] = 1
            op = sum((el.operator for el in spec.povm if (el.announcement, el.secret) == (bb, bs)),
                     np.zeros((dB, dB)))
            parts.append(np.kron(_psd_sqrt(op), reg))
        kraus_B[b] = sum(parts)
    tuple(sorted(spec.keymap.entries))
    all_t = [(a, b, bs) for a in a_anns for (b, bs) in b_labels]
    post = np.diag([1.0 if t in spec.keymap.entries else 0.0 for t in all_t])
    V = np.zeros((2 * len(all_t), len(all_t)))
    for k, t in enumerate(all_t):
        V[2 * k + (spec.keymap.entries.get(t, 0)), k] = 1.0
    Z0 = np.kron(np.eye(len(all_t)), np.diag([1.0, 0.0]))
    Z1 = np.kron(np.eye(len(all_t)), np.diag([0.0, 1.0]))
    blocks = _build_blocks(spec, [el.operator for el in spec.povm], alice_proj)
    return GZMaps(kraus_A, kraus_B, post, tuple(all_t), V, (Z0, Z1), tuple(blocks), (dA, dB))


# ---------------------------------------------------------------------------
# objective


def _xlogx_sum(vals: np.ndarray) -> float:
    v = vals[vals > 0]
    return float(np.sum(v * np.log(v)))


def _perturb(rho: np.ndarray, xi: float = XI) -> np.ndarray:
    d = rho.shape[0]
    return (1 - xi) * rho + xi * np.trace(rho).real * np.eye(d) / d


def _block_parts(rho: np.ndarray, blk: _Block):
    sigma = blk.K @ rho @ blk.K.conj().T
    sigma = 0.5 * (sigma + sigma.conj().T)
    parts = [sigma[np.ix_(g, g)] for g in blk.groups if len(g)]
    return sigma, parts


def objective(rho_AB: np.ndarray, gz: GZMaps, xi: float = XI) -> float:
    """D(G(rho) || Z(G(rho))) in bits."""
    rho = _perturb(np.asarray(rho_AB, dtype=complex), xi)
    total = 0.0
    for blk in gz.blocks:
        sigma, parts = _block_parts(rho, blk)
        total += _xlogx_sum(np.linalg.eigvalsh(sigma))
        for p in parts:
            total -= _xlogx_sum(np.linalg.eigvalsh(p))
    return max(total / np.log(2), 0.0)


def _log_on_support(m: np.ndarray, rel: float = 1e-14) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    cut = rel * max(vals.max(), 1e-300)
    logs = np.where(vals > cut, np.log(np.where(vals > cut, vals, 1.0)), 0.0)
    return (vecs * logs) @ vecs.conj().T


def gradient(rho_AB: np.ndarray, gz: GZMaps, xi: float = XI) -> np.ndarray:
    """Gradient of :func:`objective` (bits) with respect to rho."""
    rho = _perturb(np.asarray(rho_AB, dtype=complex), xi)
    d = rho.shape[0]
    g = np.zeros((d, d), dtype=complex)
    for blk in gz.blocks:
        sigma, _ = _block_parts(rho, blk)
        L = _log_on_support(sigma)
        for grp in blk.groups:
            if len(grp):
                L[np.ix_(grp, grp)] -= _log_on_support(sigma[np.ix_(grp, grp)])
        g += blk.K.conj().T @ L @ blk.K
    g = 0.5 * (g + g.conj().T) / np.log(2)
    return (1 - xi) * g


def perturbation_penalty(gz: GZMaps, xi: float = XI) -> float:
    """Upper bound on |f(rho) - f((1-xi) rho + xi I/d)| in bits.

    The mixing moves G(rho) and Z(G(rho)) by at most xi in trace distance;
    the continuity bound for the von Neumann entropy is applied to both.
    """
    d_out = sum(blk.K.shape[0] for blk in gz.blocks)
    return 2 * (xi * np.log2(max(d_out, 2)) + binary_entropy(xi))


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def leak_ec(stats: Statistics) -> float:
    """Error-correction cost at the Shannon limit.

    Error correction runs separately on each publicly announced basis pair,
    so the cost is the sum of p * h2(e) over the sifted blocks.  With equal
    error rates in every block this is p_concl * h2(qber).
    """
    if not stats.sifted:
        return stats.p_concl * binary_entropy(stats.qber)
    return float(sum(p * binary_entropy(e) for p, e in stats.sifted.values()))


# ---------------------------------------------------------------------------
# dimension reduction on Bob's side


@dataclass(frozen=True)
class _Reduced:
    spec: ProtocolSpec
    maps: tuple[np.ndarray, ...]  # Kraus operators of the reduction map on Bob's space
    dB: int


def reduce_problem(spec: ProtocolSpec) -> _Reduced:
    """Replace every flag block on Bob's side by a single level.

    Statistics are preserved exactly; the minimal divergence is unchanged
    because block-phase twirls commute with the measurement and the flag
    blocks carry the identity of each POVM element.
    """
    dims = [1 if b.flag else b.basis.shape[1] for b in spec.blocks]
    dB = sum(dims)
    maps = []
    off = 0
    for blk, n in zip(spec.blocks, dims):
        if blk.flag:
            for v in blk.basis.T:
                R = np.zeros((dB, spec.bob_dim), dtype=complex)
                R[off, :] = v.conj()
                maps.append(R)
        else:
            R = np.zeros((dB, spec.bob_dim), dtype=complex)
            R[off:off + n, :] = blk.basis.conj().T
            maps.append(R)
        off += n
    return _Reduced(spec, tuple(maps), dB)


def _reduce_bob_op(red: _Reduced, op: np.ndarray) -> np.ndarray:
    """Image of a POVM element in the reduced space (blocks are invariant)."""
    out = np.zeros((red.dB, red.dB), dtype=complex)
    off = 0
    for blk in red.spec.blocks:
        sub = blk.basis.conj().T @ op @ blk.basis
        if blk.flag:
            out[off, off] = np.trace(sub) / sub.shape[0]
            off += 1
        else:
            n = sub.shape[0]
            out[off:off + n, off:off + n] = sub
            off += n
    return out


def _reduce_state(red: _Reduced, rho: np.ndarray, dA: int) -> np.ndarray:
    out = np.zeros((dA * red.dB, dA * red.dB), dtype=complex)
    for R in red.maps:
        M = np.kron(np.eye(dA), R)
        out += M @ rho @ M.conj().T
    return 0.5 * (out + out.conj().T)


# ---------------------------------------------------------------------------
# key rate


@dataclass
class KeyRateResult:
    lower_bound: float
    primal: float
    gap: float
    p_concl: float
    qber: float
    leak_ec: float
    mode: str
    iterations: int = 0
    converged: bool = True
    below_floor: bool = False
    extras: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        return {
            "lower_bound": float(self.lower_bound),
            "primal": float(self.primal),
            "gap": float(self.gap),
            "p_concl": float(self.p_concl),
            "qber": float(self.qber),
            "leak_ec": float(self.leak_ec),
            "mode": str(self.mode),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "below_floor": bool(self.below_floor),
        }


def _clip_rate(x: float) -> tuple[float, bool]:
    if x < SMALL_RATE:
        return 0.0, x > 0
    return float(x), False


def _orthonormal_constraints(ops: Sequence[np.ndarray], rho: np.ndarray):
    """Orthonormal (Hilbert-Schmidt) basis of span(ops), with values at rho."""
    vecs = np.array([np.concatenate([o.real.ravel(), o.imag.ravel()]) for o in ops])
    _, s, vt = np.linalg.svd(vecs, full_matrices=False)
    keep = s > 1e-10 * s.max()
    d = ops[0].shape[0]
    basis = []
    for row in vt[keep]:
        re, im = row[: d * d].reshape(d, d), row[d * d:].reshape(d, d)
        O = re + 1j * im
        basis.append(0.5 * (O + O.conj().T))
    vals = np.array([np.real(np.trace(O @ rho)) for O in basis])
    return basis, vals


def _herm(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def _embed(m: np.ndarray) -> np.ndarray:
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


class _DualSdp:
    """max gamma.y  s.t.  S(y) = G - sum_k y_k Gamma_k >= 0, for many G.

    Hermitian n x n matrices are embedded as real symmetric 2n x 2n ones,
    ``M -> [[Re M, -Im M], [Im M, Re M]]``, and the problem is handed to a
    dense primal-dual interior-point solver (CVXOPT by default, Clarabel
    through cvxpy as an alternative).  The multiplier of the matrix
    inequality is the minimiser of Tr(sigma G) over the feasible set.
    """

    feas_tol = 1e-7

    def __init__(self, basis: Sequence[np.ndarray], values: np.ndarray, backend: str = "cvxopt"):
        self.last_violation = 0.0
        if backend not in ("cvxopt", "cvxpy"):
            raise ValueError(f"unknown SDP backend {backend!r}")
        self.A = np.array([_herm(O) for O in basis])
        self.values = np.asarray(values, float)
        self.n = self.A.shape[1]
        self.backend = backend
        # coefficients of the identity in the (orthonormal) constraint basis
        self.identity_coeffs = np.real(np.einsum("kii->k", self.A))
        self._emb = np.array([_embed(O) for O in self.A])

    def _slack(self, G: np.ndarray, y: np.ndarray) -> np.ndarray:
        return G - np.tensordot(y, self.A, axes=1)

    def _unembed(self, Z: np.ndarray) -> np.ndarray:
        # Z = emb(sigma) / 2 at the optimum, since Tr(emb(X) emb(Y)) = 2 Re Tr(XY)
        n = self.n
        P, Q, R = Z[:n, :n], Z[:n, n:], Z[n:, n:]
        return _herm((P + R) + 1j * (Q.T - Q))

    def _cvxopt(self, G: np.ndarray):
        import cvxopt
        from cvxopt import solvers

        m = len(self.values)
        Gs = cvxopt.matrix(self._emb.reshape(m, -1).T.copy())
        hs = cvxopt.matrix(_embed(G))
        c = cvxopt.matrix(-self.values)
        sol = None
        # tight tolerances first; the solver can break down close to the
        # boundary, in which case the next looser setting is tried
        for tol in (1e-10, 1e-9, 1e-8, None):
            opts = {"show_progress": False, "maxiters": 200}
            if tol is not None:
                opts.update(abstol=tol, reltol=tol, feastol=tol)
            try:
                sol = solvers.sdp(c, Gs=[Gs], hs=[hs], options=opts)
            except (ArithmeticError, ValueError) as exc:
                log.debug("linear SDP failed at tolerance %s: %s", tol, exc)
                continue
            if sol["x"] is not None and sol["zs"][0] is not None:
                break
        if sol is None or sol["x"] is None:
            raise SolverNonConvergence("linear SDP failed")
        return np.array(sol["x"]).ravel(), self._unembed(np.array(sol["zs"][0]))

    def _cvxpy(self, G: np.ndarray):
        import cvxpy as cp

        m = len(self.values)
        y_var = cp.Variable(m)
        lmi = _embed(G) - sum(y_var[k] * self._emb[k] for k in range(m))
        con = 0.5 * (lmi + lmi.T) >> 0
        prob = cp.Problem(cp.Maximize(self.values @ y_var), [con])
        with warnings.catch_warnings():
            # inaccurate solutions are caught by the violation check in solve()
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver="CLARABEL")
        log.debug("clarabel status %s", prob.status)
        if y_var.value is None:
            raise SolverNonConvergence(f"linear SDP failed ({prob.status})")
        return np.array(y_var.value, float), self._unembed(np.asarray(con.dual_value))

    def solve(self, G: np.ndarray) -> tuple[np.ndarray, float]:
        """Approximate minimiser of Tr(sigma G) and a certified lower bound on it."""
        G = _herm(np.asarray(G, dtype=complex))
        # centre and scale G; the identity lies in the constraint span, so the
        # shift only moves y along identity_coeffs
        ev = np.linalg.eigvalsh(G)
        shift = 0.5 * (ev[0] + ev[-1])
        scale = max(0.5 * (ev[-1] - ev[0]), 1e-12)
        Gn = (G - shift * np.eye(self.n)) / scale
        order = [self.backend] + [b for b in ("cvxopt", "cvxpy") if b != self.backend]
        best = None
        for backend in order:
            try:
                y, sigma = self._cvxopt(Gn) if backend == "cvxopt" else self._cvxpy(Gn)
            except SolverNonConvergence:
                continue
            except ImportError:
                if backend == self.backend:
                    raise
                continue
            sigma = self._clean(sigma)
            viol = self.violation(sigma)
            if best is None or viol < best[2]:
                best = (y, sigma, viol)
            if viol < self.feas_tol:
                break
        if best is None:
            raise SolverNonConvergence("linear SDP failed with every backend")
        y, sigma, self.last_violation = best
        y = scale * y + shift * self.identity_coeffs
        # repair dual feasibility along the identity direction
        lam = np.linalg.eigvalsh(self._slack(G, y)).min()
        if lam < 0:
            y = y + lam * self.identity_coeffs
        return sigma, float(self.values @ y)

    @staticmethod
    def _clean(sigma: np.ndarray) -> np.ndarray:
        vals, vecs = np.linalg.eigh(_herm(sigma))
        sigma = (vecs * np.clip(vals, 0, None)) @ vecs.conj().T
        tr = np.trace(sigma).real
        return sigma / tr if tr > 0 else sigma

    def violation(self, sigma: np.ndarray) -> float:
        """Largest constraint residual |Tr(sigma Gamma_k) - gamma_k|."""
        got = np.real(np.einsum("kij,ji->k", self.A, sigma))
        return float(np.max(np.abs(got - self.values)))


def _frank_wolfe(rho0, gz, basis, values, maxiter, tol, solver):
    sdp = _DualSdp(basis, values, solver)
    rho = rho0.copy()
    best = -np.inf
    f = objective(rho, gz)
    it = 0
    converged = False
    for it in range(1, maxiter + 1):
        g = gradient(rho, gz)
        sigma, dual_val = sdp.solve(g)
        lin = float(np.real(np.trace(rho @ g)))
        best = max(best, f - lin + dual_val)
        if f - best < tol:
            converged = True
            break
        if sdp.last_violation > 1e-5:
            log.info("linear SDP minimiser violates the constraints by %.1e; stopping",
                     sdp.last_violation)
            break
        direction = sigma - rho

        def along(t):
            return objective(rho + t * direction, gz)

        res = optimize.minimize_scalar(along, bounds=(0.0, 1.0), method="bounded",
                                       options={"xatol": 1e-8})
        t = float(res.x)
        f_new = float(res.fun)
        if f_new >= f:
            t, f_new = 0.0, f
        rho = rho + t * direction
        rho = 0.5 * (rho + rho.conj().T)
        if t == 0.0 and f - best >= tol:
            # no progress along the linearised direction; stop with the bound so far
            break
        f = f_new
    return rho, f, best, it, converged


def key_rate(spec: ProtocolSpec, channel, mode: str | Mode = Mode.FULL_TOMOGRAPHY, *,
             maxiter: int = 300, tol: float = 1e-6, solver: str = "cvxopt",
             stats: Statistics | None = None, raise_on_nonconvergence: bool = False) -> KeyRateResult:
    """Asymptotic key rate in bits per sent logical state."""
    mode = Mode(mode)
    stats = simulate_statistics(spec, channel) if stats is None else stats
    leak = leak_ec(stats)
    gz_full = build_gz(spec)
    f_sim = objective(stats.rho_AB, gz_full)
    if mode is Mode.FULL_TOMOGRAPHY:
        val, small = _clip_rate(f_sim - leak)
        return KeyRateResult(val, max(f_sim - leak, 0.0), 0.0, stats.p_concl, stats.qber, leak,
                             mode.value, below_floor=small)

    red = reduce_problem(spec)
    dA = spec.alice_dim
    rho_r = _reduce_state(red, stats.rho_AB, dA)
    povm_r = [_reduce_bob_op(red, el.operator) for el in spec.povm]
    alice_proj = [_alice_projector(spec, i) for i in range(len(spec.states))]
    blocks = _build_blocks(spec, povm_r, alice_proj)
    gz_r = GZMaps({}, {}, np.zeros((0, 0)), (), np.zeros((0, 0)), (np.zeros(0), np.zeros(0)),
                  tuple(blocks), (dA, red.dB))
    ops = [np.kron(E, np.eye(red.dB)) for E in _hermitian_basis(dA)]
    for P_A in alice_proj:
        ops += [np.kron(P_A, P) for P in povm_r]
    basis, values = _orthonormal_constraints(ops, rho_r)
    rho, f, best, it, conv = _frank_wolfe(rho_r, gz_r, basis, values, maxiter, tol, solver)
    # the iterate may violate the constraints at solver precision; lowering a
    # valid bound keeps it valid, so cap it by the best primal value
    best = min(best - perturbation_penalty(gz_r), f)
    primal = f - leak
    bound = best - leak
    val, small = _clip_rate(bound)
    res = KeyRateResult(val, max(primal, 0.0), f - best, stats.p_concl, stats.qber, leak,
                        mode.value, iterations=it, converged=conv, below_floor=small,
                        extras={"objective_at_simulated": f_sim, "raw_bound": bound,
                                "raw_primal": primal})
    if not conv:
        log.info("frank-wolfe stopped after %d iterations with gap %.3e", it, f - best)
        if raise_on_nonconvergence:
            raise SolverNonConvergence("Frank-Wolfe did not reach the requested gap", res)
    return res
