import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellqkd.channels import (
    DispersionChannel,
    FbsPair,
    dispersion_overlaps,
    fbs_overlaps,
    singlet_overlaps,
)
from bellqkd.ququart import (
    ContractionError,
    DegenerateEncodingError,
    QuquartChannel,
    build_basis,
    channel_matrix,
    embed_logical,
    gram_matrix,
    identity_overlaps,
    n3_printed,
    row0_closed_form,
    two_photon_apply,
)
from bellqkd.spectral import EncodingParams, OverlapSet, SeparationWarning, overlap_set
from conftest import GHZ, THZ, reference_encoding, random_density


def make(*args, **kw) -> EncodingParams:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        return EncodingParams(*args, **kw)


def gram_schmidt(G: np.ndarray, vectors: list[np.ndarray]) -> np.ndarray:
    """Modified Gram-Schmidt under the inner product <u, v> = u^H G v."""
    out: list[np.ndarray] = []
    for v in vectors:
        v = v.astype(complex)
        for q in out:
            v = v - (q.conj() @ G @ v) * q
        out.append(v / math.sqrt((v.conj() @ G @ v).real))
    return np.array(out).T


def mgs_basis(ov: OverlapSet) -> np.ndarray:
    e = np.eye(4)
    return gram_schmidt(gram_matrix(ov), [e[0] + e[1], e[0] - e[1], e[2], e[3]])


encodings = st.builds(
    lambda dom, sw, st_, dtau, om0, tau0: make(om0, om0 + dom * sw, sw, tau0, tau0 + dtau, st_),
    st.floats(1.0, 20.0), st.floats(0.002, 0.05), st.floats(3.0, 40.0),
    st.floats(20.0, 400.0), st.floats(-0.1, 0.1), st.floats(-100.0, 100.0),
)


def test_orthogonal_inputs_give_plain_rotation() -> None:
    ov = OverlapSet(np.zeros((2, 2), complex), 0j, 0j, 0j, 1 / math.sqrt(2), 1 / math.sqrt(2))
    b = build_basis(ov)
    s = 1 / math.sqrt(2)
    want = np.array([[s, s, 0, 0], [s, -s, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    assert np.allclose(b.coeffs, want, atol=1e-15)


def test_reference_basis_matches_gram_schmidt(enc_ref) -> None:
    ov = overlap_set(enc_ref)
    b = build_basis(ov)
    G = gram_matrix(ov)
    assert np.max(np.abs(b.coeffs.conj().T @ G @ b.coeffs - np.eye(4))) < 1e-10
    ref = mgs_basis(ov)
    assert np.max(np.abs(b.coeffs - ref)) < 1e-10
    # N2 is the inverse norm of |0_t> minus its frequency-bin projection
    assert abs(b.N2 - ref[2, 2]) < 1e-10


@settings(max_examples=500)
@given(encodings)
def test_basis_orthonormal_random_encodings(enc) -> None:
    ov = overlap_set(enc)
    b = build_basis(ov)
    err = np.max(np.abs(b.coeffs.conj().T @ gram_matrix(ov) @ b.coeffs - np.eye(4)))
    assert err <= 1e-9
    F = channel_matrix(ov, identity_overlaps(ov), b).F
    assert np.max(np.abs(F - np.eye(4))) <= 1e-10


def test_printed_n3_agrees_for_real_overlaps() -> None:
    # at the orthogonality condition every alpha_ij is real
    sw, st_, tau1 = 1.1 * GHZ, 17.0, 220.0
    om1 = 2 * math.pi * (1 + sw**2 * st_**2) / tau1
    ov = overlap_set(make(0.0, om1, sw, 0.0, tau1, st_))
    assert np.max(np.abs(ov.alpha.imag)) < 1e-15
    b = build_basis(ov)
    assert abs(n3_printed(b) - b.N3.real) < 1e-10


def test_degenerate_encoding_rejected() -> None:
    ov = OverlapSet(np.zeros((2, 2), complex), 1.0 + 0j, 0j, 0j, 1.0, 1.0)
    with pytest.raises(DegenerateEncodingError):
        build_basis(ov)


def test_channel_matrix_must_contract() -> None:
    with pytest.raises(ContractionError):
        QuquartChannel(1.01 * np.eye(4))
    with pytest.raises(ValueError):
        QuquartChannel(np.eye(3))


def test_row0_closed_form_matches_matrix_route(enc_ref) -> None:
    ov = overlap_set(enc_ref)
    b = build_basis(ov)
    for tov in (dispersion_overlaps(enc_ref, DispersionChannel(1, 12.0)),
                dispersion_overlaps(enc_ref, DispersionChannel(2, 300.0)),
                fbs_overlaps(enc_ref, (FbsPair(0.0, 0.019 * THZ, 3 * GHZ, 1.0, 0.4),))):
        F = channel_matrix(ov, tov, b).F
        assert np.max(np.abs(row0_closed_form(ov, tov, b) - F[0])) < 1e-10


def test_linear_dispersion_deviation_is_first_order(enc_ref) -> None:
    ov = overlap_set(enc_ref)
    b = build_basis(ov)

    def dev(alpha):
        tov = dispersion_overlaps(enc_ref, DispersionChannel(1, alpha))
        return np.linalg.norm(channel_matrix(ov, tov, b).F - np.eye(4))

    ratio = dev(0.02) / dev(0.01)
    assert abs(ratio - 2) < 0.05


def _logical_fidelities(enc, tov):
    ov = overlap_set(enc)
    b = build_basis(ov)
    L = embed_logical(enc, b)
    T = channel_matrix(ov, tov, b).transfer
    TT = np.kron(T, T)
    return {
        "ff": np.vdot(L.psi_f, TT @ L.psi_f),
        "tt": np.vdot(L.psi_t, TT @ L.psi_t),
        "ft": np.vdot(L.psi_f, TT @ L.psi_t),
        "tf": np.vdot(L.psi_t, TT @ L.psi_f),
    }


@pytest.mark.parametrize(
    "make_tov",
    [
        lambda e: fbs_overlaps(e, (FbsPair(0.0, 0.019 * THZ, 6.6 * GHZ, math.pi, 0.0),)),
        lambda e: fbs_overlaps(e, (FbsPair(0.0, 0.019 * THZ, 3.0 * GHZ, 2.2, 1.1),)),
        lambda e: dispersion_overlaps(e, DispersionChannel(1, 9.0)),
        lambda e: dispersion_overlaps(e, DispersionChannel(2, 290.0)),
    ],
)
def test_ququart_pipeline_matches_continuous_overlaps(enc_ref, make_tov) -> None:
    tov = make_tov(enc_ref)
    direct = singlet_overlaps(enc_ref, tov)
    via = _logical_fidelities(enc_ref, tov)
    for k in direct:
        assert abs(abs(direct[k]) ** 2 - abs(via[k]) ** 2) < 1e-6


def test_time_rows_leak_under_full_swap(enc_ref) -> None:
    ov = overlap_set(enc_ref)
    b = build_basis(ov)
    tov = fbs_overlaps(enc_ref, (FbsPair(0.0, 0.019 * THZ, 6.6 * GHZ, math.pi, 0.0),))
    chan = channel_matrix(ov, tov, b)
    L = embed_logical(enc_ref, b)
    T = np.kron(chan.transfer, chan.transfer)
    two_photon_leak = 1 - np.linalg.norm(T @ L.psi_t) ** 2
    f_tt = abs(singlet_overlaps(enc_ref, tov)["tt"]) ** 2
    assert np.all(chan.leak >= -1e-12)
    assert np.all(chan.leak[:2] < 1e-3)
    assert two_photon_leak <= 1 - f_tt + abs(ov.a) ** 2


def test_two_photon_apply_examples(enc_ref) -> None:
    rng = np.random.default_rng(11)
    rho = random_density(17, rng)
    ident = QuquartChannel(np.eye(4))
    assert np.allclose(two_photon_apply(rho, ident), rho, atol=1e-14)
    out = two_photon_apply(rho, QuquartChannel(np.zeros((4, 4))))
    assert abs(out[16, 16] - 1) < 1e-12
    assert np.allclose(out[:16, :16], 0)


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.sampled_from([0.6, 3.0, 6.6]))
def test_two_photon_apply_trace_preserving(seed, theta, phi, eps) -> None:
    enc = reference_encoding()
    ov = overlap_set(enc)
    b = build_basis(ov)
    chan = channel_matrix(ov, fbs_overlaps(enc, (FbsPair(0.0, 0.019 * THZ, eps * GHZ, theta, phi),)), b)
    rho = random_density(17, np.random.default_rng(seed))
    out = two_photon_apply(rho, chan)
    assert abs(np.trace(out) - 1) < 1e-12
    assert np.trace(out[:16, :16]).real <= np.trace(rho[:16, :16]).real + 1e-12
    assert np.linalg.eigvalsh(out).min() > -1e-12


def test_frequency_singlet_unaffected_by_matched_fbs(enc_ref) -> None:
    ov = overlap_set(enc_ref)
    b = build_basis(ov)
    L = embed_logical(enc_ref, b)
    for theta, phi in [(0.5, 0.2), (math.pi / 2, math.pi / 2), (math.pi, 1.0)]:
        pair = FbsPair(enc_ref.omega0, enc_ref.omega1 - enc_ref.omega0, 6 * enc_ref.sigma_w, theta, phi)
        chan = channel_matrix(ov, fbs_overlaps(enc_ref, (pair,)), b)
        rho = np.zeros((17, 17), complex)
        rho[:16, :16] = np.outer(L.ket0L, L.ket0L.conj())
        out = two_photon_apply(rho, chan)
        assert np.real(L.ket0L.conj() @ out[:16, :16] @ L.ket0L) >= 1 - 1e-3


def test_embed_logical_examples(enc_ref) -> None:
    ov = overlap_set(enc_ref)
    L = embed_logical(enc_ref, build_basis(ov))
    assert abs(L.a) > 0
    assert abs(np.vdot(L.ket0L, L.ket1L)) < 1e-12
    for v in (L.ket0L, L.ket1L, L.ketPlusL, L.ketMinusL):
        assert abs(np.linalg.norm(v) - 1) < 1e-12
    assert abs(L.a - ov.a) < 1e-10

    sw, st_, tau1 = 1.1 * GHZ, 17.0, 220.0
    enc = make(0.0, 2 * math.pi * (1 + sw**2 * st_**2) / tau1, sw, 0.0, tau1, st_)
    L0 = embed_logical(enc, build_basis(overlap_set(enc)))
    assert abs(L0.a) < 1e-12
    assert np.allclose(L0.ket1L, L0.psi_t, atol=1e-12)
