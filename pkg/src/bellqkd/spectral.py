"""Single-photon amplitudes, two-photon Bell states and their noise-free overlaps.

Conventions: angular frequencies in rad/ps, times in ps, all frequencies
relative to ``carrier`` (the centre of the time-bin spectrum).  Overlaps
conjugate the left argument, ``<g|h> = int conj(g) h dw``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "AmplitudeShape",
    "EncodingParams",
    "OverlapSet",
    "SeparationWarning",
    "freq_amplitude",
    "time_amplitude",
    "normalization_A",
    "same_type_overlap",
    "single_overlap_ft",
    "bell_overlap_a",
    "overlap_set",
]

_QUARTER_PI = np.pi**-0.25


class AmplitudeShape(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LORENTZIAN = "lorentzian"


class SeparationWarning(UserWarning):
    """Bins are closer than six widths, so |<0_x|1_x>| is not negligible."""


@dataclass(frozen=True)
class EncodingParams:
    """Frequency-bin triple (omega0, omega1, sigma_w) and time-bin triple
    (tau0, tau1, sigma_t) defining the logical qubit.

    For Gaussian shapes ``sigma`` is the 1/e half-width parameter of the
    amplitude, for Lorentzian shapes the full width at half maximum.
    """

    omega0: float
    omega1: float
    sigma_w: float
    tau0: float
    tau1: float
    sigma_t: float
    carrier: float = 0.0
    shape: AmplitudeShape = AmplitudeShape.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "shape", AmplitudeShape(self.shape))
        for name in ("omega0", "omega1", "sigma_w", "tau0", "tau1", "sigma_t", "carrier"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.sigma_w <= 0 or self.sigma_t <= 0:
            raise ValueError("sigma_w and sigma_t must be positive")
        if self.omega0 == self.omega1:
            raise ValueError("omega0 and omega1 must differ")
        if self.tau0 == self.tau1:
            raise ValueError("tau0 and tau1 must differ")
        if abs(self.omega1 - self.omega0) < 6 * self.sigma_w:
            warnings.warn(
                "frequency bins separated by less than 6 sigma_w", SeparationWarning, stacklevel=3
            )
        if abs(self.tau1 - self.tau0) < 6 * self.sigma_t:
            warnings.warn(
                "time bins separated by less than 6 sigma_t", SeparationWarning, stacklevel=3
            )

    @property
    def omegas(self) -> tuple[float, float]:
        return (self.omega0, self.omega1)

    @property
    def taus(self) -> tuple[float, float]:
        return (self.tau0, self.tau1)


@dataclass(frozen=True)
class OverlapSet:
    """alpha[i][j] = <i_f|j_t>, beta_x = <0_x|1_x>, a = <Psi-_f|Psi-_t>."""

    alpha: np.ndarray
    beta_f: complex
    beta_t: complex
    a: complex
    norm_f: float
    norm_t: float


# ---------------------------------------------------------------------------
# amplitudes


def freq_amplitude(w, center: float, sigma: float, shape=AmplitudeShape.GAUSSIAN):
    """Frequency-bin amplitude f_{center,sigma}(w)."""
    w = np.asarray(w, dtype=float)
    if AmplitudeShape(shape) is AmplitudeShape.GAUSSIAN:
        return _QUARTER_PI / np.sqrt(sigma) * np.exp(-((w - center) ** 2) / (2 * sigma**2))
    half = sigma / 2
    return np.sqrt(sigma / np.pi) * half / ((w - center) ** 2 + half**2)


def time_amplitude(w, tau: float, sigma: float, shape=AmplitudeShape.GAUSSIAN):
    """Frequency-domain amplitude F_{tau,sigma}(w) of a time-bin state."""
    w = np.asarray(w, dtype=float)
    if AmplitudeShape(shape) is AmplitudeShape.GAUSSIAN:
        return _QUARTER_PI * np.sqrt(sigma) * np.exp(-1j * w * tau - sigma**2 * w**2 / 2)
    return np.sqrt(sigma / 2) * np.exp(-1j * w * tau - sigma * np.abs(w) / 2)


# ---------------------------------------------------------------------------
# overlaps


def same_type_overlap(mu0: float, mu1: float, sigma: float, shape=AmplitudeShape.GAUSSIAN) -> float:
    """<0_x|1_x> for two bins of the same kind (frequency or time)."""
    d2 = (mu1 - mu0) ** 2
    if AmplitudeShape(shape) is AmplitudeShape.GAUSSIAN:
        return float(np.exp(-d2 / (4 * sigma**2)))
    return float(sigma**2 / (d2 + sigma**2))


def normalization_A(mu0: float, mu1: float, sigma: float, shape=AmplitudeShape.GAUSSIAN) -> float:
    """Two-photon singlet normalisation, 1/sqrt(2(1 - <0|1>^2)).

    Tends to 1/sqrt(2) for well separated bins.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if mu0 == mu1:
        raise ValueError("mu0 and mu1 must differ")
    d2 = (mu0 - mu1) ** 2
    if AmplitudeShape(shape) is AmplitudeShape.GAUSSIAN:
        return float(1.0 / np.sqrt(2.0 * -np.expm1(-d2 / (2 * sigma**2))))
    return float((d2 + sigma**2) / np.sqrt(2.0 * (2 * sigma**2 * d2 + d2**2)))


def _laplace_pole(p: complex, c: complex) -> complex:
    """int_0^inf exp(-p w) / (w - c) dw for Re p > 0 and c off the positive axis.

    Rotating the contour onto the ray ``p w > 0`` gives ``exp(-pc) E1(-pc)``;
    a residue is added back when the pole sits between the two rays.
    """
    val = np.exp(-p * c) * special.exp1(-p * c)
    tp, tc = np.angle(p), np.angle(c)
    if tp > 0 and -tp < tc < 0:
        val -= 2j * np.pi * np.exp(-p * c)
    elif tp < 0 and 0 < tc < -tp:
        val += 2j * np.pi * np.exp(-p * c)
    return complex(val)


def _lorentzian_ft(center: float, tau: float, sigma_w: float, sigma_t: float) -> complex:
    half = sigma_w / 2
    pref = np.sqrt(sigma_w / np.pi) * half * np.sqrt(sigma_t / 2)
    p = sigma_t / 2 + 1j * tau
    q = sigma_t / 2 - 1j * tau
    total = 0j
    # partial fractions of 1/((w-c)^2 + half^2) around the poles c +- i*half
    for pole, sign in ((center + 1j * half, 1.0), (center - 1j * half, -1.0)):
        total += sign * (_laplace_pole(p, pole) - _laplace_pole(q, -pole))
    return complex(pref * total / (2j * half))


def single_overlap_ft(i: int, j: int, enc: EncodingParams) -> complex:
    """<i_f|j_t>: frequency bin i against time bin j."""
    om = enc.omegas[i]
    tau = enc.taus[j]
    sw, st = enc.sigma_w, enc.sigma_t
    if enc.shape is AmplitudeShape.GAUSSIAN:
        d = 1.0 + sw**2 * st**2
        mag = np.sqrt(2 * sw * st / d) * np.exp(-(om**2 * st**2 + tau**2 * sw**2) / (2 * d))
        return complex(mag * np.exp(-1j * om * tau / d))
    return _lorentzian_ft(om, tau, sw, st)


def _alpha(enc: EncodingParams) -> np.ndarray:
    return np.array([[single_overlap_ft(i, j, enc) for j in (0, 1)] for i in (0, 1)])


def bell_overlap_a(enc: EncodingParams, method: str = "closed_form") -> complex:
    """Overlap a = <Psi-_f|Psi-_t> of the two singlets.

    For Gaussian amplitudes the closed form is exact.  For Lorentzian
    amplitudes ``"closed_form"`` is the sharp-peak expression, which vanishes
    exactly when (omega1-omega0)(tau1-tau0) is a multiple of 2 pi, while
    ``"exact"`` contracts the exact single-photon overlaps.
    """
    if method not in ("closed_form", "exact"):
        raise ValueError(f"unknown method {method!r}")
    a_f = normalization_A(enc.omega0, enc.omega1, enc.sigma_w, enc.shape)
    a_t = normalization_A(enc.tau0, enc.tau1, enc.sigma_t, enc.shape)
    (o0, o1), (t0, t1) = enc.omegas, enc.taus
    sw, st = enc.sigma_w, enc.sigma_t
    if enc.shape is AmplitudeShape.GAUSSIAN:
        d = 1.0 + sw**2 * st**2
        env = 4 * sw * st / d * np.exp(-((o0**2 + o1**2) * st**2 + (t0**2 + t1**2) * sw**2) / (2 * d))
        # e^{-ix} - e^{-iy} = -2i sin((x-y)/2) e^{-i(x+y)/2}; x - y = (o1-o0)(t1-t0)/d
        x = (o0 * t0 + o1 * t1) / d
        y = (o0 * t1 + o1 * t0) / d
        fringe = -2j * np.sin((x - y) / 2) * np.exp(-1j * (x + y) / 2)
        return complex(a_f * a_t * env * fringe)
    if method == "closed_form":
        env = np.pi * sw * st * np.exp(
            -st * (np.hypot(o0, sw / 2) + np.hypot(o1, sw / 2)) / 2 - sw * (abs(t0) + abs(t1)) / 2
        )
        x = o0 * t0 + o1 * t1
        y = o0 * t1 + o1 * t0
        fringe = -2j * np.sin((x - y) / 2) * np.exp(-1j * (x + y) / 2)
        return complex(a_f * a_t * env * fringe)
    al = _alpha(enc)
    return complex(2 * a_f * a_t * (al[0, 0] * al[1, 1] - al[0, 1] * al[1, 0]))


def overlap_set(enc: EncodingParams) -> OverlapSet:
    """All noise-free single-photon overlaps of the encoding."""
    al = _alpha(enc)
    b_f = same_type_overlap(enc.omega0, enc.omega1, enc.sigma_w, enc.shape)
    b_t = same_type_overlap(enc.tau0, enc.tau1, enc.sigma_t, enc.shape)
    n_f = normalization_A(enc.omega0, enc.omega1, enc.sigma_w, enc.shape)
    n_t = normalization_A(enc.tau0, enc.tau1, enc.sigma_t, enc.shape)
    a = 2 * n_f * n_t * (al[0, 0] * al[1, 1] - al[0, 1] * al[1, 0])
    al.setflags(write=False)
    return OverlapSet(alpha=al, beta_f=complex(b_f), beta_t=complex(b_t), a=complex(a),
                      norm_f=n_f, norm_t=n_t)
