"""Adaptive-quadrature references for the closed-form overlaps."""

import numpy as np

from bellqkd.channels import fbs_transform_timebin_amp
from bellqkd.numerics import integrate_1d
from bellqkd.spectral import EncodingParams, freq_amplitude, normalization_A, time_amplitude


def edges(pairs) -> list[float]:
    return [x for p in pairs for b in p.bins for x in b]


def quad_ft(enc: EncodingParams, i: int, j: int) -> complex:
    """<i_f|j_t> by direct quadrature of the amplitudes."""
    om, tau = enc.omegas[i], enc.taus[j]

    def f(w):
        return np.conj(freq_amplitude(w, om, enc.sigma_w, enc.shape)) * time_amplitude(
            w, tau, enc.sigma_t, enc.shape)

    return integrate_1d(f, [om, 0.0], tol=1e-12).value


def quad_a(enc: EncodingParams) -> complex:
    al = np.array([[quad_ft(enc, i, j) for j in (0, 1)] for i in (0, 1)])
    nf = normalization_A(enc.omega0, enc.omega1, enc.sigma_w, enc.shape)
    nt = normalization_A(enc.tau0, enc.tau1, enc.sigma_t, enc.shape)
    return 2 * nf * nt * (al[0, 0] * al[1, 1] - al[0, 1] * al[1, 0])


def quad_H(tau: float, taup: float, enc: EncodingParams, pair) -> complex:
    """<F_taup| FBS |F_tau>."""
    G = fbs_transform_timebin_amp(tau, enc, pair)
    f = lambda w: np.conj(time_amplitude(w, taup, enc.sigma_t)) * G(w)
    return integrate_1d(f, edges([pair]) + [0.0], tol=1e-12).value


def quad_I(Delta: float, tau: float, enc: EncodingParams, pair) -> complex:
    """<f_Delta| FBS |F_tau>."""
    G = fbs_transform_timebin_amp(tau, enc, pair)
    f = lambda w: np.conj(freq_amplitude(w, Delta, enc.sigma_w)) * G(w)
    return integrate_1d(f, edges([pair]) + [Delta, 0.0], tol=1e-12).value


def quad_dispersion(enc: EncodingParams, order: int, alpha: float, w0: float = 0.0) -> np.ndarray:
    """4x4 matrix <q| exp(i alpha (w - w0)^order) |p> over (f0, f1, t0, t1)."""
    amps = [lambda w, o=o: freq_amplitude(w, o, enc.sigma_w) for o in enc.omegas]
    amps += [lambda w, t=t: time_amplitude(w, t, enc.sigma_t) for t in enc.taus]
    phase = lambda w: np.exp(1j * alpha * (w - w0) ** order)
    T = np.zeros((4, 4), dtype=complex)
    for q in range(4):
        for p in range(4):
            f = lambda w: np.conj(amps[q](w)) * phase(w) * amps[p](w)
            T[q, p] = integrate_1d(f, list(enc.omegas) + [0.0], tol=1e-12).value
    return T
