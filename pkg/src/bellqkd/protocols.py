"""Prepare-and-measure protocol descriptions: signal ensembles, receiver POVMs
and key maps.

Announcement labels follow one convention throughout: 0 Z-type, 1 X-type,
2 conclusive-in-principle but outside the logical space ("rest"), 3 no click.
Every Bob-side operator acts on the signal space with one inconclusive
level appended last.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .spectral import EncodingParams, overlap_set

__all__ = [
    "ProtocolName",
    "MissingEncodingError",
    "SignalState",
    "PovmElement",
    "KeyMap",
    "BobBlock",
    "ProtocolSpec",
    "syndrome_state",
    "syndrome_basis_state",
    "make_protocol",
    "purify_source",
    "protocol_to_json",
]

SQ2 = np.sqrt(0.5)


class ProtocolName(str, enum.Enum):
    BB84 = "bb84"
    OURS = "ours"
    WANG = "wang"
    BOILEAU3 = "boileau3"
    BOILEAU4 = "boileau4"
    LI_DEPHASING = "li_dephasing"
    LI_ROTATION = "li_rotation"


class MissingEncodingError(ValueError):
    """The logical-encoding protocol needs encoding parameters."""


@dataclass(frozen=True)
class SignalState:
    """One prepared state.  ``vector`` lives on (signal + inconclusive) x kept,
    where ``kept`` is a register that stays with the sender (dimension 1 for
    all protocols except the three-photon one)."""

    announcement: int
    secret: int
    probability: float
    vector: np.ndarray


@dataclass(frozen=True)
class PovmElement:
    announcement: int
    secret: int
    operator: np.ndarray


@dataclass(frozen=True)
class KeyMap:
    entries: dict[tuple[int, int, int], int]

    def __post_init__(self):
        for k, v in self.entries.items():
            if v not in (0, 1) or len(k) != 3:
                raise ValueError(f"bad key-map entry {k} -> {v}")

    def __call__(self, a_ann: int, b_ann: int, b_sec: int) -> int | None:
        return self.entries.get((a_ann, b_ann, b_sec))

    @classmethod
    def from_lists(cls, zeros: Sequence[tuple[int, int, int]], ones: Sequence[tuple[int, int, int]]):
        overlap = set(zeros) & set(ones)
        if overlap:
            raise ValueError(f"tuples mapped to both key values: {sorted(overlap)}")
        return cls({**{t: 0 for t in zeros}, **{t: 1 for t in ones}})


@dataclass(frozen=True)
class BobBlock:
    """An invariant subspace of every POVM element.  On a ``flag`` block each
    element acts as a multiple of the identity, so the block can be replaced
    by a single level without changing any statistic or the key rate."""

    basis: np.ndarray  # columns: orthonormal vectors spanning the block
    flag: bool


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    signal_dim: int
    states: tuple[SignalState, ...]
    povm: tuple[PovmElement, ...]
    keymap: KeyMap
    photons_per_logical: int
    blocks: tuple[BobBlock, ...]
    kept_dim: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def bob_dim(self) -> int:
        return self.signal_dim + 1

    @property
    def alice_dim(self) -> int:
        return len(self.states) * self.kept_dim

    def validate(self, atol: float = 1e-10) -> None:
        d = self.bob_dim
        total = np.zeros((d, d), dtype=complex)
        for el in self.povm:
            op = el.operator
            if op.shape != (d, d):
                raise ValueError(f"POVM element ({el.announcement},{el.secret}) has shape {op.shape}")
            if np.max(np.abs(op - op.conj().T)) > atol:
                raise ValueError("POVM element not Hermitian")
            if np.linalg.eigvalsh(op).min() < -1e-12:
                raise ValueError("POVM element not PSD")
            total += op
        if np.max(np.abs(total - np.eye(d))) > atol:
            raise ValueError("POVM does not sum to the identity")
        p = np.array([s.probability for s in self.states])
        if abs(p.sum() - 1) > 1e-12 or np.any(p < 0):
            raise ValueError("state probabilities must sum to one")
        for s in self.states:
            if s.vector.shape != (d * self.kept_dim,):
                raise ValueError("state vector has the wrong dimension")
            if abs(np.linalg.norm(s.vector) - 1) > 1e-10:
                raise ValueError("state vectors must be normalised")
        a_ann = {s.announcement for s in self.states}
        b_ann = {e.announcement for e in self.povm}
        b_pairs = {(e.announcement, e.secret) for e in self.povm}
        for (a, b, bs) in self.keymap.entries:
            if a not in a_ann or b not in b_ann or (b, bs) not in b_pairs:
                raise ValueError(f"key map refers to absent labels {(a, b, bs)}")
        if self.photons_per_logical not in (1, 2, 3, 4):
            raise ValueError("photons per logical state must be 1..4")
        dims = sum(b.basis.shape[1] for b in self.blocks)
        if dims != d:
            raise ValueError("Bob blocks do not cover the measured space")
        for blk in self.blocks:
            P = blk.basis @ blk.basis.conj().T
            for el in self.povm:
                if np.max(np.abs(P @ el.operator - el.operator @ P)) > 1e-9:
                    raise ValueError("POVM element mixes Bob blocks")
                if blk.flag:
                    sub = blk.basis.conj().T @ el.operator @ blk.basis
                    c = np.trace(sub).real / sub.shape[0]
                    if np.max(np.abs(sub - c * np.eye(sub.shape[0]))) > 1e-9:
                        raise ValueError("POVM element is not scalar on a flag block")


# ---------------------------------------------------------------------------
# small-qubit helpers


def _ket(bits: Sequence[int]) -> np.ndarray:
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int("".join(str(b) for b in bits), 2) if bits else 0] = 1.0
    return v


def _hadamard_n(n: int) -> np.ndarray:
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    return reduce(np.kron, [h] * n)


def _proj(v: np.ndarray) -> np.ndarray:
    return np.outer(v, v.conj())


def _with_bottom(vec: np.ndarray) -> np.ndarray:
    return np.concatenate([vec, [0.0]]).astype(complex)


def _pad(op: np.ndarray) -> np.ndarray:
    d = op.shape[0]
    out = np.zeros((d + 1, d + 1), dtype=complex)
    out[:d, :d] = op
    return out


def _bottom_proj(d: int) -> np.ndarray:
    out = np.zeros((d + 1, d + 1), dtype=complex)
    out[d, d] = 1.0
    return out


def _syndrome_bits(x: int, s0: int, s1: int, n: int) -> list[int]:
    inner = [x, x ^ s0]
    outer = [x ^ s1, x ^ s1 ^ s0]
    return (inner + outer)[:n]


def syndrome_state(x: int, s: int, basis: str = "Z", n: int = 4) -> np.ndarray:
    """Repetition-code state |x>_s^{(n)} for n in {2, 3, 4}.

    ``s`` is the decimal syndrome 2*s0 + s1 (s0 inner flip, s1 outer flip);
    for n = 2 only s0 is used.  The X version applies a Hadamard to every
    physical qubit.  n = 3 drops the last qubit of the four-qubit pattern.
    """
    if basis not in ("Z", "X"):
        raise ValueError("basis must be 'Z' or 'X'")
    if n not in (2, 3, 4):
        raise ValueError("n must be 2, 3 or 4")
    s0, s1 = (s >> 1) & 1, s & 1
    if n == 2:
        s0, s1 = s & 1, 0
    v = _ket(_syndrome_bits(x, s0, s1, n))
    if basis == "X":
        v = _hadamard_n(n) @ v
    return v


def syndrome_basis_state(s: int, basis: str = "Z") -> np.ndarray:
    """(|0>_s + |1>_s)/sqrt(2) on four qubits in the Z or X version."""
    return SQ2 * (syndrome_state(0, s, basis) + syndrome_state(1, s, basis))


def _syndrome_povm(n: int) -> list[PovmElement]:
    d = 2**n
    out = []
    for b_ann, basis in ((0, "Z"), (1, "X")):
        for s in range(4):
            P = sum(_proj(syndrome_state(x, s, basis, n)) for x in (0, 1))
            out.append(PovmElement(b_ann, s, _pad(0.5 * P)))
    listed = sum(e.operator for e in out)[:d, :d]
    rest = np.eye(d) - listed
    if np.max(np.abs(rest)) > 1e-12:
        if np.linalg.eigvalsh(rest).min() < -1e-12:
            raise ValueError("syndrome measurement over-complete")
        out.append(PovmElement(2, 0, _pad(rest)))
    out.append(PovmElement(3, 0, _bottom_proj(d)))
    return out


def _singlet_pair(n: int, i: int, j: int) -> np.ndarray:
    """Singlet on qubits i, j (0-based) of n, tensored with nothing else."""
    v = np.zeros(2**n, dtype=complex)
    for bi, bj, sign in ((0, 1, 1.0), (1, 0, -1.0)):
        bits = [0] * n
        bits[i], bits[j] = bi, bj
        v += sign * _ket(bits)
    return v * SQ2


def _two_singlets(p: tuple[int, int], q: tuple[int, int]) -> np.ndarray:
    """|Psi->_p |Psi->_q on four qubits (labels 0..3)."""
    v = np.zeros(16, dtype=complex)
    for a, sa in ((0, 1), (1, -1)):
        for b, sb in ((0, 1), (1, -1)):
            bits = [0] * 4
            bits[p[0]], bits[p[1]] = a, 1 - a
            bits[q[0]], bits[q[1]] = b, 1 - b
            v += sa * sb * _ket(bits)
    return 0.5 * v


def boileau_states() -> dict[str, np.ndarray]:
    """psi_1, psi_2, psi_3: the three singlet pairings of four qubits."""
    return {
        "psi1": _two_singlets((0, 1), (2, 3)),
        "psi2": _two_singlets((0, 2), (1, 3)),
        "psi3": _two_singlets((0, 3), (1, 2)),
    }


def _uniform(labels_vectors, kept_dim: int = 1) -> tuple[SignalState, ...]:
    n = len(labels_vectors)
    return tuple(SignalState(a, s, 1.0 / n, v) for (a, s), v in labels_vectors)


def _complete_basis(vectors: Sequence[np.ndarray], dim: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``vectors``."""
    if not vectors:
        return np.eye(dim, dtype=complex)
    m = np.array(vectors).T
    q, _ = np.linalg.qr(m)
    P = np.eye(dim) - q @ q.conj().T
    vals, vecs = np.linalg.eigh(P)
    return vecs[:, vals > 0.5]


# ---------------------------------------------------------------------------
# protocol builders


_STANDARD_KEYMAP = KeyMap.from_lists([(0, 0, 0), (1, 1, 0)], [(0, 0, 1), (1, 1, 1)])


def _four_state(name, kets, d_sig, photons, rest: bool, meta=None) -> ProtocolSpec:
    """Protocols with BB84-like labels: kets = (zero, one, plus, minus) in the signal space."""
    states = _uniform([((0, 0), _with_bottom(kets[0])), ((0, 1), _with_bottom(kets[1])),
                       ((1, 0), _with_bottom(kets[2])), ((1, 1), _with_bottom(kets[3]))])
    povm = [PovmElement(b, s, _pad(0.5 * _proj(k)))
            for (b, s), k in zip(((0, 0), (0, 1), (1, 0), (1, 1)), kets)]
    logical = np.array([kets[0], kets[1]]).T
    q, _ = np.linalg.qr(logical)
    blocks = [BobBlock(np.vstack([q, np.zeros((1, 2))]), flag=False)]
    if rest:
        comp = _complete_basis([kets[0], kets[1]], d_sig)
        P_rest = comp @ comp.conj().T
        povm.append(PovmElement(2, 0, _pad(P_rest)))
        blocks.append(BobBlock(np.vstack([comp, np.zeros((1, comp.shape[1]))]), flag=True))
    povm.append(PovmElement(3, 0, _bottom_proj(d_sig)))
    bottom = np.zeros((d_sig + 1, 1), dtype=complex)
    bottom[-1, 0] = 1
    blocks.append(BobBlock(bottom, flag=True))
    return ProtocolSpec(name, d_sig, states, tuple(povm), _STANDARD_KEYMAP, photons,
                        tuple(blocks), meta=meta or {})


def _syndrome_protocol(name, table, keymap, n_sent: int, photons: int, kept: int = 1) -> ProtocolSpec:
    d_sig = 2**n_sent
    states = []
    for (a, s), vec in table:
        if kept == 1:
            full = _with_bottom(vec)
        else:
            # four-qubit vector -> (sent qubits + inconclusive) x kept qubit
            m = vec.reshape(d_sig, kept)
            full = np.vstack([m, np.zeros((1, kept))]).reshape(-1)
        states.append(SignalState(a, s, 1.0 / len(table), full.astype(complex)))
    povm = _syndrome_povm(n_sent)
    sig = np.vstack([np.eye(d_sig), np.zeros((1, d_sig))]).astype(complex)
    bottom = np.zeros((d_sig + 1, 1), dtype=complex)
    bottom[-1, 0] = 1
    blocks = (BobBlock(sig, flag=False), BobBlock(bottom, flag=True))
    return ProtocolSpec(name, d_sig, tuple(states), tuple(povm), keymap, photons, blocks,
                        kept_dim=kept)


def _bs(s: int, basis: str) -> np.ndarray:
    return syndrome_basis_state(s, basis)


def make_protocol(name: str | ProtocolName, enc: EncodingParams | None = None) -> ProtocolSpec:
    """Build one of the seven protocol descriptions."""
    name = ProtocolName(name)
    if name is ProtocolName.BB84:
        z0, z1 = np.array([1, 0], complex), np.array([0, 1], complex)
        spec = _four_state(name.value, (z0, z1, SQ2 * (z0 + z1), SQ2 * (z0 - z1)), 2, 1, rest=False)
    elif name is ProtocolName.WANG:
        k01, k10 = _ket([0, 1]), _ket([1, 0])
        kets = (k10, k01, SQ2 * (k01 + k10), SQ2 * (k01 - k10))
        spec = _four_state(name.value, kets, 4, 2, rest=True)
    elif name is ProtocolName.OURS:
        if enc is None:
            raise MissingEncodingError("the logical-encoding protocol needs EncodingParams")
        from .ququart import build_basis, embed_logical

        basis = build_basis(overlap_set(enc))
        L = embed_logical(enc, basis)
        spec = _four_state(name.value, (L.ket0L, L.ket1L, L.ketPlusL, L.ketMinusL), 16, 2,
                           rest=True, meta={"encoding": enc, "basis": basis, "logical": L})
    elif name in (ProtocolName.BOILEAU4, ProtocolName.BOILEAU3):
        b = boileau_states()
        table = [((0, 0), b["psi1"]), ((0, 1), b["psi2"]), ((1, 0), b["psi2"]), ((1, 1), b["psi3"])]
        keymap = KeyMap.from_lists([(0, 0, 2), (0, 1, 2), (1, 0, 3), (1, 1, 3)],
                                   [(0, 0, 1), (0, 1, 1), (1, 0, 2), (1, 1, 2)])
        if name is ProtocolName.BOILEAU4:
            spec = _syndrome_protocol(name.value, table, keymap, 4, 4)
        else:
            spec = _syndrome_protocol(name.value, table, keymap, 3, 3, kept=2)
    elif name is ProtocolName.LI_DEPHASING:
        table = [((0, 0), SQ2 * (_bs(0, "X") - _bs(1, "X"))), ((0, 1), SQ2 * (_bs(2, "X") - _bs(3, "X"))),
                 ((1, 0), SQ2 * (_bs(0, "X") - _bs(2, "X"))), ((1, 1), SQ2 * (_bs(1, "X") - _bs(3, "X")))]
        keymap = KeyMap.from_lists([(0, 1, 0), (0, 1, 1), (1, 1, 0), (1, 1, 2)],
                                   [(0, 1, 2), (0, 1, 3), (1, 1, 1), (1, 1, 3)])
        spec = _syndrome_protocol(name.value, table, keymap, 4, 4)
    elif name is ProtocolName.LI_ROTATION:
        table = [((0, 0), SQ2 * (_bs(0, "Z") + _bs(1, "Z"))), ((0, 1), SQ2 * (_bs(2, "Z") - _bs(3, "Z"))),
                 ((1, 0), SQ2 * (_bs(0, "Z") + _bs(2, "Z"))), ((1, 1), SQ2 * (_bs(1, "Z") - _bs(3, "Z")))]
        keymap = KeyMap.from_lists(
            [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 0), (1, 0, 2), (1, 1, 0), (1, 1, 2)],
            [(0, 0, 2), (0, 0, 3), (0, 1, 2), (0, 1, 3), (1, 0, 1), (1, 0, 3), (1, 1, 1), (1, 1, 3)])
        spec = _syndrome_protocol(name.value, table, keymap, 4, 4)
    else:  # pragma: no cover
        raise ValueError(name)
    spec.validate()
    return spec


def purify_source(spec: ProtocolSpec) -> dict[str, np.ndarray]:
    """Source replacement: |psi> = sum_i sqrt(p_i) |i>_A |phi_i>_{A'}.

    The kept register (if any) is grouped with the index register, so the
    returned vector is ordered (index, kept, Bob).  ``rho_A`` is its marginal
    on index x kept.
    """
    n = len(spec.states)
    db, k = spec.bob_dim, spec.kept_dim
    psi = np.zeros((n, k, db), dtype=complex)
    for i, s in enumerate(spec.states):
        psi[i] = np.sqrt(s.probability) * s.vector.reshape(db, k).T
    flat = psi.reshape(n * k, db)
    rho_A = flat @ flat.conj().T
    return {"psi_AA'": psi.reshape(-1), "rho_A": rho_A}


def _interleave(arr: np.ndarray) -> list:
    a = np.asarray(arr, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def protocol_to_json(spec: ProtocolSpec) -> str:
    """JSON with complex arrays as nested [re, im] pairs."""
    doc = {
        "name": spec.name,
        "signal_dim": spec.signal_dim,
        "kept_dim": spec.kept_dim,
        "photons_per_logical": spec.photons_per_logical,
        "states": [{"announcement": s.announcement, "secret": s.secret,
                    "probability": s.probability, "vector": _interleave(s.vector)}
                   for s in spec.states],
        "povm": [{"announcement": e.announcement, "secret": e.secret,
                  "operator": _interleave(e.operator)} for e in spec.povm],
        "keymap": [{"a": a, "b": b, "b_secret": bs, "r": r}
                   for (a, b, bs), r in sorted(spec.keymap.entries.items())],
    }
    return json.dumps(doc)
