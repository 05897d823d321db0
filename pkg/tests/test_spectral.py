import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellqkd.numerics import integrate_1d
from bellqkd.spectral import (
    AmplitudeShape,
    EncodingParams,
    SeparationWarning,
    bell_overlap_a,
    freq_amplitude,
    normalization_A,
    overlap_set,
    same_type_overlap,
    single_overlap_ft,
    time_amplitude,
)
from conftest import GHZ, reference_encoding
from oracles import quad_a, quad_ft

LOR = AmplitudeShape.LORENTZIAN


def make(*args, **kw) -> EncodingParams:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        return EncodingParams(*args, **kw)


def test_normalization_examples() -> None:
    assert abs(normalization_A(0.0, 20.0, 1.0) - 0.7071067811865476) < 1e-15
    assert abs(normalization_A(0.0, 1.0, 1.0) - 1 / math.sqrt(2 * (1 - math.exp(-0.5)))) < 1e-15
    assert abs(normalization_A(0.0, 1.0, 1.0) - 1.1272741642) < 1e-10
    assert abs(normalization_A(0.0, 1.0, 1.0, LOR) - 2 / math.sqrt(6)) < 1e-15


@pytest.mark.parametrize("shape", list(AmplitudeShape))
def test_normalization_matches_quadrature(shape) -> None:
    # ||A (f0 f1 - f1 f0)||^2 = 2 A^2 (1 - beta^2) for real beta
    mu0, mu1, sigma = 0.0, 1.3, 1.0
    f0 = lambda w: freq_amplitude(w, mu0, sigma, shape)
    f1 = lambda w: freq_amplitude(w, mu1, sigma, shape)
    beta = integrate_1d(lambda w: f0(w) * f1(w), [mu0, mu1], tol=1e-13).value.real
    assert abs(beta - same_type_overlap(mu0, mu1, sigma, shape)) < 1e-10
    A = normalization_A(mu0, mu1, sigma, shape)
    assert abs(2 * A**2 * (1 - beta**2) - 1) < 1e-9


@pytest.mark.parametrize("shape", list(AmplitudeShape))
def test_single_photon_amplitudes_normalised(shape) -> None:
    n_f = integrate_1d(lambda w: np.abs(freq_amplitude(w, 0.3, 0.02, shape)) ** 2, [0.3], tol=1e-12)
    n_t = integrate_1d(lambda w: np.abs(time_amplitude(w, 40.0, 17.0, shape)) ** 2, [0.0], tol=1e-12)
    assert abs(n_f.value - 1) < 1e-9
    assert abs(n_t.value - 1) < 1e-9


def test_ft_overlap_limits() -> None:
    enc = make(0.0, 1.0, 1e4, 0.0, 200.0, 17.0)
    assert abs(single_overlap_ft(0, 0, enc)) < 0.02
    enc = make(0.0, 1.0, 0.02, 0.0, 200.0, 17.0)
    val = single_overlap_ft(0, 0, enc)
    d = 1 + 0.02**2 * 17.0**2
    assert val.imag == 0 and val.real > 0
    assert abs(val.real - math.sqrt(2 * 0.02 * 17.0 / d)) < 1e-15


@pytest.mark.parametrize("shape", list(AmplitudeShape))
def test_ft_overlap_matches_quadrature_reference(shape) -> None:
    enc = reference_encoding() if shape is AmplitudeShape.GAUSSIAN else make(
        0.0, 0.019 * 2 * math.pi, 1.1 * GHZ, 0.0, 220.0, 17.0, shape=shape)
    for i in (0, 1):
        for j in (0, 1):
            assert abs(single_overlap_ft(i, j, enc) - quad_ft(enc, i, j)) < 1e-8


def test_reference_bell_overlap_matches_nested_quadrature(enc_ref) -> None:
    nf = normalization_A(enc_ref.omega0, enc_ref.omega1, enc_ref.sigma_w)
    nt = normalization_A(enc_ref.tau0, enc_ref.tau1, enc_ref.sigma_t)

    def f(k, w):
        return freq_amplitude(w, enc_ref.omegas[k], enc_ref.sigma_w)

    def F(k, w):
        return time_amplitude(w, enc_ref.taus[k], enc_ref.sigma_t)

    def inner(w1):
        out = np.empty(np.shape(w1), dtype=complex)
        for n, x in enumerate(np.ravel(w1)):
            def g(w2):
                psi_f = nf * (f(0, x) * f(1, w2) - f(1, x) * f(0, w2))
                psi_t = nt * (F(0, x) * F(1, w2) - F(1, x) * F(0, w2))
                return np.conj(psi_f) * psi_t
            out.flat[n] = integrate_1d(g, list(enc_ref.omegas), tol=1e-12).value
        return out

    oracle = integrate_1d(inner, list(enc_ref.omegas), tol=1e-11).value
    a = bell_overlap_a(enc_ref)
    assert abs(abs(a) ** 2 - abs(oracle) ** 2) < 1e-8
    assert abs(a - oracle) < 1e-8


def test_bell_state_exchange_antisymmetry(enc_ref) -> None:
    w = np.linspace(-0.1, 0.25, 41)
    W1, W2 = np.meshgrid(w, w, indexing="ij")
    f0 = lambda x: freq_amplitude(x, enc_ref.omega0, enc_ref.sigma_w)
    f1 = lambda x: freq_amplitude(x, enc_ref.omega1, enc_ref.sigma_w)
    psi = f0(W1) * f1(W2) - f1(W1) * f0(W2)
    assert np.max(np.abs(psi + psi.T)) == 0.0


def test_gaussian_orthogonality_condition() -> None:
    st_, sw, tau1 = 17.0, 1.1 * GHZ, 220.0
    for n in (1, 2, 3):
        om1 = 2 * math.pi * n * (1 + sw**2 * st_**2) / tau1
        enc = make(0.0, om1, sw, 0.0, tau1, st_)
        assert abs(bell_overlap_a(enc)) ** 2 <= 1e-12
        assert abs(quad_a(enc)) ** 2 <= 1e-12


def test_lorentzian_orthogonality_condition() -> None:
    tau1 = 220.0
    for n in (1, 2):
        enc = make(0.0, 2 * math.pi * n / tau1, 0.1 * GHZ, 0.0, tau1, 0.5, shape=LOR)
        assert abs(bell_overlap_a(enc)) ** 2 <= 1e-12
        # the exact overlap only vanishes in the sharp-peak limit
        assert abs(bell_overlap_a(enc, "exact")) ** 2 <= 1e-12


def test_lorentzian_exact_route_matches_quadrature() -> None:
    enc = make(0.0, 0.019 * 2 * math.pi, 1.1 * GHZ, 0.0, 220.0, 17.0, shape=LOR)
    assert abs(bell_overlap_a(enc, "exact") - quad_a(enc)) < 1e-8


def test_orthogonality_zero_brackets_sign_change() -> None:
    # a = |a| e^{i chi} sin(...): the real factor changes sign exactly at the condition
    sw, st_, tau1 = 1.1 * GHZ, 17.0, 220.0
    d = 1 + sw**2 * st_**2
    root = 2 * math.pi * d / tau1

    def signed(om1):
        enc = make(0.0, om1, sw, 0.0, tau1, st_)
        a = quad_a(enc)
        return (a * np.exp(1j * om1 * tau1 / (2 * d)) / -2j).real

    lo, hi = signed(root * 0.999), signed(root * 1.001)
    assert lo * hi < 0
    assert abs(signed(root)) < 1e-7


def test_degenerate_widths_kill_cross_overlaps() -> None:
    prev = np.inf
    for s in (1e1, 1e3, 1e5, 1e7):
        ov = overlap_set(make(0.0, 10 * s, s, 0.0, 10 * s, s))
        peak = np.max(np.abs(ov.alpha))
        assert peak < prev
        prev = peak
    assert prev < 1e-6


def test_encoding_validation() -> None:
    with pytest.raises(ValueError):
        EncodingParams(0.0, 0.0, 0.01, 0.0, 220.0, 17.0)
    with pytest.raises(ValueError):
        EncodingParams(0.0, 0.1, -0.01, 0.0, 220.0, 17.0)
    with pytest.raises(ValueError):
        EncodingParams(0.0, 0.1, 0.01, 5.0, 5.0, 17.0)
    with pytest.warns(SeparationWarning):
        EncodingParams(0.0, 0.05, 0.01, 0.0, 220.0, 17.0)


@settings(max_examples=30)
@given(
    st.floats(0.2, 3.0), st.floats(0.005, 0.05), st.floats(5.0, 40.0),
    st.floats(60.0, 400.0), st.floats(-0.2, 0.2), st.floats(-50.0, 50.0),
)
def test_overlap_set_bounds_and_oracle(dom, sw, st_, dtau, om0, tau0) -> None:
    enc = make(om0, om0 + dom * 6 * sw, sw, tau0, tau0 + dtau, st_)
    ov = overlap_set(enc)
    assert np.all(np.abs(ov.alpha) <= 1 + 1e-12)
    assert abs(ov.a) <= 1 + 1e-12
    assert ov.beta_f.imag == 0 and ov.beta_t.imag == 0
    assert abs(ov.a - bell_overlap_a(enc)) < 1e-12
    for i in (0, 1):
        for j in (0, 1):
            assert abs(ov.alpha[i, j] - quad_ft(enc, i, j)) < 1e-8
