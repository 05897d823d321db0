import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellqkd.channels import QubitUnitary
from bellqkd.protocols import (
    KeyMap,
    MissingEncodingError,
    ProtocolName,
    boileau_states,
    make_protocol,
    protocol_to_json,
    purify_source,
    syndrome_state,
)
from conftest import reference_encoding

ALL = [p.value for p in ProtocolName]


def ket(bits: str) -> np.ndarray:
    v = np.zeros(2 ** len(bits), complex)
    v[int(bits, 2)] = 1
    return v


@pytest.fixture(scope="module")
def specs():
    enc = reference_encoding(sigma_w=1.1e-3 * 2 * math.pi)
    return {name: make_protocol(name, enc) for name in ALL}


def test_syndrome_state_examples() -> None:
    assert np.array_equal(syndrome_state(0, 0), ket("0000"))
    assert np.array_equal(syndrome_state(1, 0b01), ket("1100"))
    plus = np.array([1, 1]) / math.sqrt(2)
    pp = syndrome_state(0, 0, "X", n=2)
    assert np.allclose(pp, np.kron(plus, plus))
    logical_plus = (syndrome_state(0, 0, n=2) + syndrome_state(1, 0, n=2)) / math.sqrt(2)
    assert not np.allclose(pp, logical_plus)


def test_syndrome_states_orthonormal() -> None:
    for basis in ("Z", "X"):
        vecs = np.array([syndrome_state(x, s, basis) for s in range(4) for x in (0, 1)])
        assert np.allclose(vecs @ vecs.conj().T, np.eye(8), atol=1e-14)


def test_bb84_spec(specs) -> None:
    bb = specs["bb84"]
    assert bb.signal_dim == 2 and bb.bob_dim == 3 and bb.photons_per_logical == 1
    assert [s.probability for s in bb.states] == [0.25] * 4
    z0, z1 = np.array([1, 0]), np.array([0, 1])
    want = [z0, z1, (z0 + z1) / math.sqrt(2), (z0 - z1) / math.sqrt(2)]
    for s, w in zip(bb.states, want):
        assert np.allclose(s.vector[:2], w) and s.vector[2] == 0
    ops = {(e.announcement, e.secret): e.operator for e in bb.povm}
    assert set(ops) == {(0, 0), (0, 1), (1, 0), (1, 1), (3, 0)}
    for (b, s), w in zip(((0, 0), (0, 1), (1, 0), (1, 1)), want):
        assert np.allclose(ops[(b, s)][:2, :2], 0.5 * np.outer(w, w))
    assert ops[(3, 0)][2, 2] == 1


def test_wang_spec(specs) -> None:
    wang = specs["wang"]
    k01, k10 = ket("01"), ket("10")
    want = [k10, k01, (k01 + k10) / math.sqrt(2), (k01 - k10) / math.sqrt(2)]
    for s, w in zip(wang.states, want):
        assert np.allclose(s.vector[:4], w)
    rest = [e for e in wang.povm if (e.announcement, e.secret) == (2, 0)]
    assert len(rest) == 1
    want_rest = np.outer(ket("00"), ket("00")) + np.outer(ket("11"), ket("11"))
    assert np.allclose(rest[0].operator[:4, :4], want_rest, atol=1e-12)


@pytest.mark.parametrize("name", ALL)
def test_povm_complete(specs, name: str) -> None:
    spec = specs[name]
    total = sum(e.operator for e in spec.povm)
    assert np.max(np.abs(total - np.eye(spec.bob_dim))) < 1e-10
    for e in spec.povm:
        assert np.linalg.eigvalsh(e.operator).min() > -1e-12
    spec.validate()


@pytest.mark.parametrize("name", ALL)
def test_purified_source_marginal(specs, name: str) -> None:
    spec = specs[name]
    src = purify_source(spec)
    assert abs(np.trace(src["rho_A"]) - 1) < 1e-12
    assert abs(np.linalg.norm(src["psi_AA'"]) - 1) < 1e-12


def test_bb84_source_is_gram_matrix(specs) -> None:
    bb = specs["bb84"]
    rho_A = purify_source(bb)["rho_A"]
    V = np.array([s.vector for s in bb.states])
    assert np.allclose(rho_A, (V.conj() @ V.T) / 4, atol=1e-15)


def test_single_state_source_is_pure() -> None:
    bb = make_protocol("bb84")
    one = replace(bb.states[0], probability=1.0)
    spec = replace(bb, states=(one,))
    rho_A = purify_source(spec)["rho_A"]
    assert np.linalg.matrix_rank(rho_A, tol=1e-12) == 1


def test_ours_requires_encoding() -> None:
    with pytest.raises(MissingEncodingError):
        make_protocol("ours")


def test_ours_logical_states(specs) -> None:
    ours = specs["ours"]
    V = np.array([s.vector[:16] for s in ours.states])
    G = V.conj() @ V.T
    assert abs(G[0, 1]) < 1e-12 and abs(G[2, 3]) < 1e-12
    assert np.allclose(np.abs(G[:2, 2:]) ** 2, 0.5, atol=1e-12)


def test_boileau_states_mutually_unbiased() -> None:
    b = boileau_states()
    vs = [b["psi1"], b["psi2"], b["psi3"]]
    for i in range(3):
        assert abs(np.linalg.norm(vs[i]) - 1) < 1e-15
        for j in range(i + 1, 3):
            assert abs(abs(np.vdot(vs[i], vs[j])) - 0.5) < 1e-14


@settings(max_examples=100)
@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_boileau_states_invariant_under_collective_unitary(theta, phi) -> None:
    u = QubitUnitary(theta, phi).matrix()
    U4 = np.kron(np.kron(u, u), np.kron(u, u))
    for v in boileau_states().values():
        assert abs(abs(np.vdot(v, U4 @ v)) ** 2 - 1) < 1e-10


def test_protocol_dimensions(specs) -> None:
    dims = {n: (specs[n].signal_dim, specs[n].photons_per_logical, specs[n].kept_dim) for n in ALL}
    assert dims == {
        "bb84": (2, 1, 1), "wang": (4, 2, 1), "ours": (16, 2, 1), "boileau4": (16, 4, 1),
        "boileau3": (8, 3, 2), "li_dephasing": (16, 4, 1), "li_rotation": (16, 4, 1),
    }


def test_keymap_rejects_conflicts() -> None:
    with pytest.raises(ValueError):
        KeyMap.from_lists([(0, 0, 0)], [(0, 0, 0)])
    with pytest.raises(ValueError):
        KeyMap({(0, 0, 0): 2})
    km = KeyMap.from_lists([(0, 0, 0)], [(0, 0, 1)])
    assert km(0, 0, 0) == 0 and km(0, 0, 1) == 1 and km(1, 0, 0) is None


@pytest.mark.parametrize("name", ["bb84", "wang", "boileau4"])
def test_protocol_json(specs, name: str) -> None:
    doc = json.loads(protocol_to_json(specs[name]))
    spec = specs[name]
    assert doc["name"] == name
    assert len(doc["states"]) == len(spec.states)
    v = np.array(doc["states"][0]["vector"])
    assert np.allclose(v[:, 0] + 1j * v[:, 1], spec.states[0].vector)
    assert len(doc["keymap"]) == len(spec.keymap.entries)
