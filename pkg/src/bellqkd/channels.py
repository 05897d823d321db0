"""Noise channels acting on the single-photon spectra and on qubit/logical states.

Spectral channels (frequency beamsplitter, dispersion) are evaluated with a
small piecewise-Gaussian waveform algebra: every amplitude that appears is a
sum of terms ``exp(a w^2 + b w + c)`` restricted to an interval, so all
overlaps reduce to :func:`~bellqkd.numerics.gaussian_window_integral`.  The
explicit erf expressions ``overlap_H`` / ``overlap_I`` and the dispersion
closed forms are kept separately and cross-checked against the algebra in the
tests.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence, Union

import numpy as np

from .numerics import cerf, gaussian_window_integral
from .spectral import (
    AmplitudeShape,
    EncodingParams,
    normalization_A,
    time_amplitude,
)

__all__ = [
    "ShapeUnsupportedError",
    "UnsupportedOrderError",
    "FbsPair",
    "FbsDelta",
    "FbsChannel",
    "DispersionChannel",
    "MixedChannel",
    "ChannelSequence",
    "LossSpec",
    "QubitUnitary",
    "LogicalAmpDamp",
    "TransformedOverlapSet",
    "LogicalEffect",
    "Waveform",
    "freq_waveform",
    "time_waveform",
    "apply_fbs",
    "fbs_transform_timebin_amp",
    "overlap_H",
    "overlap_I",
    "fbs_overlaps",
    "fbs_logical_effect",
    "dispersion_overlaps",
    "dispersion_delta",
    "dispersion_overlaps_numeric",
    "leaky_apply",
    "singlet_overlaps",
    "loss_channel_apply",
    "collective_unitary_apply",
    "amp_damp_logical_apply",
    "alt_encoding_rates",
]


class ShapeUnsupportedError(ValueError):
    """Closed forms exist only for Gaussian amplitudes."""


class UnsupportedOrderError(ValueError):
    """Dispersion order outside {1, 2}."""


def _require_gaussian(enc: EncodingParams) -> None:
    if enc.shape is not AmplitudeShape.GAUSSIAN:
        raise ShapeUnsupportedError("spectral channel closed forms need Gaussian amplitudes")


# ---------------------------------------------------------------------------
# channel parameter types


@dataclass(frozen=True)
class FbsPair:
    """Beamsplitter between the bins ``Omega +- eps/2`` and ``Omega + mu +- eps/2``."""

    Omega: float
    mu: float
    eps: float
    theta: float
    phi: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.mu > self.eps:
            raise ValueError("mu must exceed eps so the two bins are disjoint")

    @property
    def bins(self) -> tuple[tuple[float, float], tuple[float, float]]:
        h = self.eps / 2
        return ((self.Omega - h, self.Omega + h), (self.Omega + self.mu - h, self.Omega + self.mu + h))

    def unitary(self) -> np.ndarray:
        return QubitUnitary(self.theta, self.phi).matrix()


@dataclass(frozen=True)
class FbsDelta:
    """Offsets added to the FBS parameters seen by the second photon."""

    Omega: float = 0.0
    mu: float = 0.0
    eps: float = 0.0
    theta: float = 0.0
    phi: float = 0.0

    def shift(self, pair: FbsPair) -> FbsPair:
        return FbsPair(pair.Omega + self.Omega, pair.mu + self.mu, pair.eps + self.eps,
                       pair.theta + self.theta, pair.phi + self.phi)

    def is_zero(self) -> bool:
        return not any((self.Omega, self.mu, self.eps, self.theta, self.phi))


def _check_disjoint(pairs: Sequence[FbsPair]) -> None:
    ivals = sorted(b for p in pairs for b in p.bins)
    for (_, h0), (l1, _) in zip(ivals[:-1], ivals[1:]):
        if l1 < h0:
            raise ValueError("FBS pairs must act on disjoint frequency intervals")


@dataclass(frozen=True)
class FbsChannel:
    pairs: tuple[FbsPair, ...]
    delta: FbsDelta | None = None

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.pairs:
            raise ValueError("at least one FBS pair is required")
        _check_disjoint(self.pairs)
        if self.delta is not None:
            _check_disjoint(self.pairs_for_photon(1))

    def pairs_for_photon(self, k: int) -> tuple[FbsPair, ...]:
        """Parameters seen by photon ``k`` (0 = M, 1 = N)."""
        if k == 0 or self.delta is None:
            return self.pairs
        return tuple(self.delta.shift(p) for p in self.pairs)


@dataclass(frozen=True)
class DispersionChannel:
    """Spectral phase ``exp(i alpha (w - omega0)^order)``."""

    order: int
    alpha: float
    omega0: float = 0.0
    delta_alpha: float = 0.0

    def __post_init__(self):
        if self.order not in (1, 2):
            raise UnsupportedOrderError(f"dispersion order {self.order} not supported (1 or 2)")


@dataclass(frozen=True)
class LossSpec:
    """Photon survival probabilities.

    ``mode="uniform"`` uses ``p`` for every photon.  ``mode="frequency_dependent"``
    uses the mean of ``p_bin0`` and ``p_bin1`` for frequency-bin states and
    ``p_carrier`` for time-bin states.
    """

    mode: str = "uniform"
    p: float = 1.0
    p_bin0: float = 1.0
    p_bin1: float = 1.0
    p_carrier: float = 1.0

    def __post_init__(self):
        if self.mode not in ("uniform", "frequency_dependent"):
            raise ValueError(f"unknown loss mode {self.mode!r}")
        for name in ("p", "p_bin0", "p_bin1", "p_carrier"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_db(cls, db: float) -> "LossSpec":
        return cls("uniform", p=10.0 ** (-db / 10.0))

    @property
    def p_freq(self) -> float:
        if self.mode == "uniform":
            return self.p
        return 0.5 * (self.p_bin0 + self.p_bin1)

    @property
    def p_time(self) -> float:
        return self.p if self.mode == "uniform" else self.p_carrier


@dataclass(frozen=True)
class QubitUnitary:
    theta: float
    phi: float

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.array([[c, -np.exp(-1j * self.phi) * s], [np.exp(1j * self.phi) * s, c]])


@dataclass(frozen=True)
class LogicalAmpDamp:
    """|1_L> decays into the inconclusive state with probability 1 - eta0 and
    picks up the relative phase Delta."""

    eta0: float
    Delta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta0 <= 1.0:
            raise ValueError("eta0 must lie in [0, 1]")

    def kraus(self) -> list[np.ndarray]:
        e0 = np.zeros((3, 3), dtype=complex)
        e0[2, 1] = np.sqrt(1 - self.eta0)
        e1 = np.diag([1.0, np.sqrt(self.eta0) * np.exp(1j * self.Delta), 1.0]).astype(complex)
        return [e0, e1]


@dataclass(frozen=True)
class MixedChannel:
    components: tuple[tuple[float, "ChannelSpec"], ...]

    def __post_init__(self):
        comps = tuple((float(w), ch) for w, ch in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("mixture needs at least one component")
        w = np.array([c[0] for c in comps])
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be non-negative and sum to 1")

    @classmethod
    def uniform(cls, channels: Sequence["ChannelSpec"]) -> "MixedChannel":
        n = len(channels)
        return cls(tuple((1.0 / n, ch) for ch in channels))


@dataclass(frozen=True)
class ChannelSequence:
    """Channels applied one after the other (first element first)."""

    steps: tuple["ChannelSpec", ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))


ChannelSpec = Union[
    FbsChannel, DispersionChannel, LossSpec, QubitUnitary, LogicalAmpDamp, MixedChannel,
    ChannelSequence,
]


# ---------------------------------------------------------------------------
# piecewise Gaussian waveforms


@dataclass(frozen=True)
class Waveform:
    """Sum of terms ``exp(a w^2 + b w + c)`` each supported on ``(lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @classmethod
    def atom(cls, a, b, c, lo=-np.inf, hi=np.inf) -> "Waveform":
        return cls(np.array([lo], float), np.array([hi], float), np.array([a], complex),
                   np.array([b], complex), np.array([c], complex))

    @classmethod
    def empty(cls) -> "Waveform":
        z = np.zeros(0)
        return cls(z, z.copy(), z.astype(complex), z.astype(complex), z.astype(complex))

    def __len__(self) -> int:
        return len(self.a)

    def __add__(self, other: "Waveform") -> "Waveform":
        return Waveform(*(np.concatenate([getattr(self, k), getattr(other, k)])
                          for k in ("lo", "hi", "a", "b", "c")))

    def scale(self, coef: complex) -> "Waveform":
        if coef == 0:
            return Waveform.empty()
        return replace(self, c=self.c + np.log(complex(coef)))

    def restrict(self, lo: float, hi: float) -> "Waveform":
        nlo = np.maximum(self.lo, lo)
        nhi = np.minimum(self.hi, hi)
        keep = nlo < nhi
        return Waveform(nlo[keep], nhi[keep], self.a[keep], self.b[keep], self.c[keep])

    def exclude(self, lo: float, hi: float) -> "Waveform":
        return self.restrict(-np.inf, lo) + self.restrict(hi, np.inf)

    def shift(self, s: float) -> "Waveform":
        """The waveform ``w -> y(w + s)``."""
        a, b, c = self.a, self.b, self.c
        return Waveform(self.lo - s, self.hi - s, a, 2 * a * s + b, a * s * s + b * s + c)

    def dispersed(self, order: int, alpha: float, omega0: float) -> "Waveform":
        """Multiply by ``exp(i alpha (w - omega0)^order)``."""
        if order == 1:
            return replace(self, b=self.b + 1j * alpha, c=self.c - 1j * alpha * omega0)
        if order == 2:
            return replace(self, a=self.a + 1j * alpha, b=self.b - 2j * alpha * omega0,
                           c=self.c + 1j * alpha * omega0**2)
        raise UnsupportedOrderError(f"dispersion order {order} not supported")

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        x = w[..., None]
        inside = (x > self.lo) & (x <= self.hi)
        with np.errstate(under="ignore", over="ignore", invalid="ignore"):
            vals = np.exp(self.a * x * x + self.b * x + self.c)
        return np.where(inside, vals, 0.0).sum(axis=-1)

    def inner(self, other: "Waveform") -> complex:
        """``<self|other> = int conj(self) * other dw``."""
        if len(self) == 0 or len(other) == 0:
            return 0j
        lo = np.maximum(self.lo[:, None], other.lo[None, :])
        hi = np.minimum(self.hi[:, None], other.hi[None, :])
        ok = lo < hi
        if not np.any(ok):
            return 0j
        a = np.conj(self.a)[:, None] + other.a[None, :]
        b = np.conj(self.b)[:, None] + other.b[None, :]
        c = np.conj(self.c)[:, None] + other.c[None, :]
        return complex(np.sum(gaussian_window_integral(a[ok], b[ok], c[ok], lo[ok], hi[ok])))


def freq_waveform(center: float, sigma: float) -> Waveform:
    """Gaussian frequency-bin amplitude as a waveform."""
    return Waveform.atom(-1 / (2 * sigma**2), center / sigma**2,
                         -center**2 / (2 * sigma**2) + np.log(np.pi**-0.25 * sigma**-0.5))


def time_waveform(tau: float, sigma: float) -> Waveform:
    """Gaussian time-bin amplitude (frequency domain) as a waveform."""
    return Waveform.atom(-(sigma**2) / 2, -1j * tau, np.log(np.pi**-0.25 * sigma**0.5))


def _apply_pair(y: Waveform, pair: FbsPair) -> Waveform:
    (l1, h1), (l2, h2) = pair.bins
    c, s = np.cos(pair.theta), np.sin(pair.theta)
    out = y.restrict(-np.inf, l1) + y.restrict(h1, l2) + y.restrict(h2, np.inf)
    out = out + y.restrict(l1, h1).scale(c)
    out = out + y.shift(pair.mu).restrict(l1, h1).scale(-np.exp(-1j * pair.phi) * s)
    out = out + y.restrict(l2, h2).scale(c)
    out = out + y.shift(-pair.mu).restrict(l2, h2).scale(np.exp(1j * pair.phi) * s)
    return out


def apply_fbs(y: Waveform, pairs: Sequence[FbsPair]) -> Waveform:
    """FBS action on a single-photon amplitude; pairs act on disjoint bins."""
    _check_disjoint(pairs)
    for p in pairs:
        y = _apply_pair(y, p)
    return y


def fbs_transform_timebin_amp(tau: float, enc: EncodingParams, pair: FbsPair) -> Callable:
    """Transformed time-bin amplitude ``G(w)`` of ``|tau_t>`` under one FBS pair."""
    _require_gaussian(enc)
    sigma = enc.sigma_t
    (l1, h1), (l2, h2) = pair.bins
    c, s = np.cos(pair.theta), np.sin(pair.theta)

    def F(w):
        return time_amplitude(w, tau, sigma)

    def G(w):
        w = np.asarray(w, dtype=float)
        out = F(w).astype(complex)
        in1 = (w > l1) & (w <= h1)
        in2 = (w > l2) & (w <= h2)
        out = np.where(in1, c * F(w) - np.exp(-1j * pair.phi) * s * F(w + pair.mu), out)
        out = np.where(in2, c * F(w) + np.exp(1j * pair.phi) * s * F(w - pair.mu), out)
        return out

    return G


# ---------------------------------------------------------------------------
# explicit erf closed forms


def overlap_H(tau: float, tau_prime: float, sigma: float, pair: FbsPair) -> complex:
    """``<F_tau'|G_tau>`` for two Gaussian time-bin amplitudes of width ``sigma``."""
    d = tau - tau_prime
    env = 0.5 * np.exp(-(d**2) / (4 * sigma**2))

    def z(x):
        return sigma * x + 1j * d / (2 * sigma)

    om, mu, h = pair.Omega, pair.mu, pair.eps / 2
    e1 = cerf(z(om + h)) - cerf(z(om - h))
    e2 = cerf(z(om + mu + h)) - cerf(z(om + mu - h))
    es = cerf(z(om + h + mu / 2)) - cerf(z(om - h + mu / 2))
    c, s = np.cos(pair.theta), np.sin(pair.theta)
    damp = np.exp(-(sigma**2) * mu**2 / 4)
    ph = mu * (tau + tau_prime) / 2
    val = env * (2 - e1 - e2) + c * env * (e1 + e2)
    val += -np.exp(-1j * pair.phi) * s * np.exp(-1j * ph) * damp * env * es
    val += np.exp(1j * pair.phi) * s * np.exp(1j * ph) * damp * env * es
    return complex(val)


def overlap_I(Delta: float, tau: float, enc: EncodingParams, pair: FbsPair) -> complex:
    """``<Delta_f|G_tau>``: a frequency bin centred at ``Delta`` (width sigma_w)
    against the FBS-transformed time bin ``tau`` (width sigma_t)."""
    _require_gaussian(enc)
    sw, st = enc.sigma_w, enc.sigma_t
    D = 1 + sw**2 * st**2
    s_ = np.sqrt(D / (2 * sw**2))
    base = np.sqrt(sw * st / (2 * D)) * np.exp(
        -1j * Delta * tau / D - Delta**2 * st**2 / (2 * D) - sw**2 * tau**2 / (2 * D)
    )

    def z(x, shift=0.0):
        return s_ * (x + (1j * sw**2 * tau - Delta) / D + shift)

    om, mu, h = pair.Omega, pair.mu, pair.eps / 2
    e1 = cerf(z(om + h)) - cerf(z(om - h))
    e2 = cerf(z(om + mu + h)) - cerf(z(om + mu - h))
    c, s = np.cos(pair.theta), np.sin(pair.theta)
    val = base * (2 - e1 - e2) + c * base * (e1 + e2)
    k = mu * sw**2 * st**2 / D
    x1 = -Delta * mu * st**2 / D - st**2 * mu**2 / (2 * D) - 1j * mu * tau / D
    b1 = cerf(z(om + h, k)) - cerf(z(om - h, k))
    x2 = Delta * mu * st**2 / D - st**2 * mu**2 / (2 * D) + 1j * mu * tau / D
    b2 = cerf(z(om + mu + h, -k)) - cerf(z(om + mu - h, -k))
    val += -np.exp(-1j * pair.phi) * s * base * np.exp(x1) * b1
    val += np.exp(1j * pair.phi) * s * base * np.exp(x2) * b2
    return complex(val)


# ---------------------------------------------------------------------------
# transformed overlap sets


@dataclass(frozen=True)
class TransformedOverlapSet:
    """One-photon overlaps after a channel, primes marking transformed states.

    kappa[i, j] = <i_f|j_f'>, lam[i, j] = <i_t|j_t'>,
    gamma[i, j] = <i_f|j_t'>, delta[i, j] = <i_t|j_f'>.
    """

    kappa: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray

    def transfer(self) -> np.ndarray:
        """4x4 matrix T[q, p] = <q|p'> in the frame (0f, 1f, 0t, 1t)."""
        return np.block([[self.kappa, self.gamma], [self.delta, self.lam]])


def _basis_waveforms(enc: EncodingParams) -> list[Waveform]:
    return [freq_waveform(o, enc.sigma_w) for o in enc.omegas] + [
        time_waveform(t, enc.sigma_t) for t in enc.taus
    ]


def _overlaps_from_waves(src: list[Waveform], dst: list[Waveform]) -> TransformedOverlapSet:
    T = np.array([[src[q].inner(dst[p]) for p in range(4)] for q in range(4)])
    return TransformedOverlapSet(T[:2, :2], T[2:, 2:], T[:2, 2:], T[2:, :2])


def fbs_overlaps(enc: EncodingParams, pairs: Sequence[FbsPair]) -> TransformedOverlapSet:
    """All one-photon overlaps for an FBS channel with the given pairs."""
    _require_gaussian(enc)
    src = _basis_waveforms(enc)
    return _overlaps_from_waves(src, [apply_fbs(w, pairs) for w in src])


@dataclass(frozen=True)
class LogicalEffect:
    fidelity_tt: float
    phase_tt: float
    fidelity_tf: float


def singlet_overlaps(enc: EncodingParams, tovM: TransformedOverlapSet,
                     tovN: TransformedOverlapSet | None = None) -> dict[str, complex]:
    """Two-photon singlet overlaps <Psi_x|Psi'_y> for per-photon overlap sets.

    Keys ``"ff"``, ``"tt"``, ``"ft"``, ``"tf"``; the first letter is the
    untransformed state.
    """
    tovN = tovM if tovN is None else tovN
    af = normalization_A(enc.omega0, enc.omega1, enc.sigma_w, enc.shape)
    at = normalization_A(enc.tau0, enc.tau1, enc.sigma_t, enc.shape)

    def pair(m, n, c):
        return c * (m[0, 0] * n[1, 1] - m[0, 1] * n[1, 0] - m[1, 0] * n[0, 1] + m[1, 1] * n[0, 0])

    return {
        "ff": complex(pair(tovM.kappa, tovN.kappa, af * af)),
        "tt": complex(pair(tovM.lam, tovN.lam, at * at)),
        "ft": complex(pair(tovM.gamma, tovN.gamma, af * at)),
        "tf": complex(pair(tovM.delta, tovN.delta, af * at)),
    }


def fbs_logical_effect(enc: EncodingParams, chan: FbsChannel) -> LogicalEffect:
    """Fidelity and phase of the time-bin singlet and its leakage onto the
    frequency-bin singlet after the FBS channel."""
    _require_gaussian(enc)
    tovM = _fbs_time_overlaps(enc, chan.pairs_for_photon(0))
    tovN = tovM if chan.delta is None else _fbs_time_overlaps(enc, chan.pairs_for_photon(1))
    at = normalization_A(enc.tau0, enc.tau1, enc.sigma_t)
    af = normalization_A(enc.omega0, enc.omega1, enc.sigma_w)
    lm, ln = tovM["lam"], tovN["lam"]
    gm, gn = tovM["gamma"], tovN["gamma"]
    tt = at * at * (lm[0, 0] * ln[1, 1] - lm[0, 1] * ln[1, 0] - lm[1, 0] * ln[0, 1] + lm[1, 1] * ln[0, 0])
    ft = af * at * (gm[0, 0] * gn[1, 1] - gm[0, 1] * gn[1, 0] - gm[1, 0] * gn[0, 1] + gm[1, 1] * gn[0, 0])
    return LogicalEffect(float(abs(tt) ** 2), float(np.angle(tt)), float(abs(ft) ** 2))


def _fbs_time_overlaps(enc: EncodingParams, pairs: Sequence[FbsPair]) -> dict[str, np.ndarray]:
    # single pair: explicit H and I expressions; several pairs: waveform algebra
    if len(pairs) == 1:
        p = pairs[0]
        lam = np.array([[overlap_H(tj, ti, enc.sigma_t, p) for tj in enc.taus] for ti in enc.taus])
        gam = np.array([[overlap_I(oi, tj, enc, p) for tj in enc.taus] for oi in enc.omegas])
        return {"lam": lam, "gamma": gam}
    tov = fbs_overlaps(enc, pairs)
    return {"lam": tov.lam, "gamma": tov.gamma}


# ---------------------------------------------------------------------------
# dispersion closed forms


def _disp_n1(enc: EncodingParams, alpha: float, w0: float) -> TransformedOverlapSet:
    sw, st = enc.sigma_w, enc.sigma_t
    om, ta = np.array(enc.omegas), np.array(enc.taus)
    g = np.exp(-1j * alpha * w0)
    oi, oj = om[:, None], om[None, :]
    kappa = g * np.exp(-((oj - oi) ** 2) / (4 * sw**2) - alpha**2 * sw**2 / 4
                       + 1j * alpha * (oi + oj) / 2)
    ti, tj = ta[:, None], ta[None, :]
    lam = g * np.exp(-((alpha + ti - tj) ** 2) / (4 * st**2)) + 0j
    D = 1 + sw**2 * st**2
    P = np.sqrt(2 * sw * st / D)
    # delta[i, j] = <i_t|j_f'>: time bin i against frequency bin j
    sh = ti + alpha
    delta = g * P * np.exp(-(st**2 * oj**2 + sw**2 * sh**2) / (2 * D) + 1j * oj * sh / D)
    # gamma[i, j] = <i_f|j_t'>: frequency bin i against time bin j
    sh = tj - alpha
    gamma = g * P * np.exp(-(st**2 * oi**2 + sw**2 * sh**2) / (2 * D) - 1j * oi * sh / D)
    return TransformedOverlapSet(kappa, lam, gamma, delta)


def _n2_tf(tau, om, alpha, w0, sw, st):
    """<tau_t| e^{i alpha (w-w0)^2} |om_f> for n = 2."""
    D2 = 1 + sw**2 * st**2 - 2j * sw**2 * alpha
    out = np.sqrt(2 * sw * st / D2) * np.exp(1j * alpha * w0**2)
    out = out * np.exp(-(st**2 - 2j * alpha) * om**2 / (2 * D2) - sw**2 * tau**2 / (2 * D2)
                       + 1j * om * tau / D2)
    out = out * np.exp(-2j * alpha * w0 * om / D2 + 2 * sw**2 * alpha * w0 * tau / D2
                       - 2 * sw**2 * alpha**2 * w0**2 / D2)
    return out


def _disp_n2(enc: EncodingParams, alpha: float, w0: float) -> TransformedOverlapSet:
    sw, st = enc.sigma_w, enc.sigma_t
    om, ta = np.array(enc.omegas), np.array(enc.taus)
    oi, oj = om[:, None], om[None, :]
    ti, tj = ta[:, None], ta[None, :]
    # frequency bins: complete the square in exp(-(w-oi)^2/2s^2 - (w-oj)^2/2s^2 + i alpha (w-w0)^2)
    A = -1 / sw**2 + 1j * alpha
    B = (oi + oj) / sw**2 - 2j * alpha * w0
    C = -(oi**2 + oj**2) / (2 * sw**2) + 1j * alpha * w0**2
    kappa = np.sqrt(-np.pi / A) / (np.sqrt(np.pi) * sw) * np.exp(C - B**2 / (4 * A))
    q = st**2 - 1j * alpha
    lam = st / np.sqrt(q) * np.exp(1j * alpha * w0**2) * np.exp(-((tj - ti + 2 * alpha * w0) ** 2) / (4 * q))
    delta = _n2_tf(ti, oj, alpha, w0, sw, st)
    gamma = np.conj(_n2_tf(tj, oi, -alpha, w0, sw, st))
    return TransformedOverlapSet(kappa, lam, gamma, delta)


def dispersion_overlaps(enc: EncodingParams, chan: DispersionChannel,
                        alpha: float | None = None) -> TransformedOverlapSet:
    """Closed-form one-photon overlaps under dispersion of order 1 or 2."""
    _require_gaussian(enc)
    a = chan.alpha if alpha is None else alpha
    w0 = chan.omega0
    if chan.order == 1:
        return _disp_n1(enc, a, w0)
    if chan.order == 2:
        return _disp_n2(enc, a, w0)
    raise UnsupportedOrderError(f"dispersion order {chan.order} not supported")


def dispersion_delta(enc: EncodingParams, chan: DispersionChannel,
                     delta_alpha: float) -> tuple[TransformedOverlapSet, TransformedOverlapSet]:
    """Overlap sets for photon M (alpha) and photon N (alpha + delta_alpha)."""
    m = dispersion_overlaps(enc, chan)
    if delta_alpha == 0:
        return m, m
    return m, dispersion_overlaps(enc, chan, chan.alpha + delta_alpha)


def dispersion_overlaps_numeric(enc: EncodingParams, chan: DispersionChannel,
                                alpha: float | None = None) -> TransformedOverlapSet:
    """Same overlaps through the waveform algebra (independent route)."""
    a = chan.alpha if alpha is None else alpha
    src = _basis_waveforms(enc)
    return _overlaps_from_waves(src, [w.dispersed(chan.order, a, chan.omega0) for w in src])


# ---------------------------------------------------------------------------
# density-matrix channels (signal space with one inconclusive level last)


def _check_square(rho: np.ndarray, dim: int | None = None) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if dim is not None and rho.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {rho.shape[0]}")
    return rho


def leaky_apply(rho: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Apply the contraction ``K`` to the signal block; lost weight goes to the
    last (inconclusive) level, which ``K`` leaves untouched."""
    rho = _check_square(rho)
    d = rho.shape[0] - 1
    if K.shape != (d, d):
        raise ValueError(f"operator shape {K.shape} does not match signal dimension {d}")
    out = np.zeros_like(rho)
    sig = rho[:d, :d]
    out[:d, :d] = K @ sig @ K.conj().T
    out[:d, d] = K @ rho[:d, d]
    out[d, :d] = out[:d, d].conj()
    lost = np.trace(sig).real - np.trace(out[:d, :d]).real
    out[d, d] = rho[d, d] + lost
    return out


def loss_channel_apply(rho: np.ndarray, loss: LossSpec, photons: int,
                       freq_projector: np.ndarray | None = None) -> np.ndarray:
    """Photon loss: every photon survives independently.

    For ``frequency_dependent`` loss pass ``freq_projector``, the projector onto
    the frequency-bin encoded part of the signal space; its complement is
    treated as time-bin encoded.
    """
    rho = _check_square(rho)
    d = rho.shape[0] - 1
    if loss.mode == "uniform" or freq_projector is None:
        if loss.mode != "uniform":
            raise ValueError("frequency-dependent loss needs the frequency-bin projector")
        K = np.sqrt(loss.p**photons) * np.eye(d)
    else:
        P = np.asarray(freq_projector, dtype=complex)
        if P.shape != (d, d):
            raise ValueError("projector dimension mismatch")
        K = np.sqrt(loss.p_freq**photons) * P + np.sqrt(loss.p_time**photons) * (np.eye(d) - P)
    return leaky_apply(rho, K)


def collective_unitary_apply(rho: np.ndarray, U: QubitUnitary, photons: int) -> np.ndarray:
    """``(U^{(x)N} (+) 1) rho (.)^dagger`` on N qubits plus the inconclusive level."""
    rho = _check_square(rho, 2**photons + 1)
    u = U.matrix()
    big = np.ones((1, 1), dtype=complex)
    for _ in range(photons):
        big = np.kron(big, u)
    return leaky_apply(rho, big)


def amp_damp_logical_apply(rho: np.ndarray, ad: LogicalAmpDamp) -> np.ndarray:
    rho = _check_square(rho, 3)
    return sum(E @ rho @ E.conj().T for E in ad.kraus())


def alt_encoding_rates(theta1: float, theta2: float, phi1: float, phi2: float) -> dict[str, float]:
    """Loss and error rates when the two photons of a Bell state occupy different
    bin pairs, each seeing its own FBS rotation."""
    c1, c2 = np.cos(theta1) ** 2, np.cos(theta2) ** 2
    s1, s2 = np.sin(theta1) ** 2, np.sin(theta2) ** 2
    lost = 1 - c1 * c2 - s1 * s2
    e_bit = s1 * s2
    e_ph = np.sin(phi1 + phi2) ** 2 * s1 * s2
    return {"l0": float(lost), "l1": float(lost), "e_bit": float(e_bit), "e_ph": float(e_ph)}
