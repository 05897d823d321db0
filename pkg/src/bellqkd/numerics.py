"""Numerical kernels: complex error function, adaptive quadrature and
Hermitian matrix helpers.

The closed-form overlaps used throughout the package reduce to integrals of
``exp(a*w**2 + b*w + c)`` over finite or infinite windows.  Those are
evaluated through :func:`gaussian_window_integral`, which keeps the huge
``exp`` prefactors and the error-function values combined so that neither
overflows on its own.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "CerfOverflowError",
    "QuadratureError",
    "SymmetryError",
    "QuadratureResult",
    "cerf",
    "erf_scaled",
    "gaussian_window_integral",
    "integrate_1d",
    "eig_hermitian",
    "matrix_log_regularized",
    "hermitian_check",
]

_CERF_DOMAIN = 1e6
# log of the largest finite double, with a little headroom
_LOG_MAX = 700.0


class CerfOverflowError(OverflowError):
    """The requested error-function value is not representable."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class SymmetryError(ValueError):
    """A matrix expected to be Hermitian is not."""


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    abs_error_estimate: float
    evaluations: int


# ---------------------------------------------------------------------------
# complex error function


def cerf(z):
    """Error function of a complex argument.

    Small arguments use scipy's Faddeeva-based ``erf``; the scaled relation
    ``erf(z) = 1 - exp(-z**2) w(iz)`` is what it evaluates internally, so the
    result keeps full relative accuracy in both the real-dominated and the
    imaginary-dominated regimes.

    Raises:
        ValueError: if ``|z| >= 1e6``.
        CerfOverflowError: if ``|erf(z)|`` would overflow a double.
    """
    z_arr = np.asarray(z, dtype=complex)
    if np.any(np.abs(z_arr) >= _CERF_DOMAIN):
        raise ValueError("cerf argument outside |z| < 1e6")
    # |erf(x+iy)| grows like exp(y**2 - x**2); check before evaluating
    growth = z_arr.imag**2 - z_arr.real**2
    if np.any(growth > _LOG_MAX):
        raise CerfOverflowError(
            "erf(z) overflows; use erf_scaled with a compensating log-scale"
        )
    out = special.erf(z_arr)
    if not np.all(np.isfinite(out)):
        raise CerfOverflowError("non-finite erf value")
    if np.ndim(z) == 0:
        return complex(out)
    return out


def _scaled_parts(z, log_scale):
    """Return (sign, tail) with exp(log_scale)*erf(z) = sign*exp(log_scale) - tail.

    ``tail = sign * exp(log_scale - z**2) * w(sign * i z)``; choosing the sign
    from ``Re z`` keeps the Faddeeva argument in the upper half plane where
    ``|w| <= 1``.
    """
    sign = np.where(z.real >= 0.0, 1.0, -1.0)
    expo = log_scale - z * z
    with np.errstate(over="ignore", invalid="ignore"):
        tail = sign * np.exp(expo) * special.wofz(sign * 1j * z)
    return sign, tail


def erf_scaled(z, log_scale):
    """``exp(log_scale) * erf(z)`` without forming either factor alone.

    Useful when ``erf(z)`` is astronomically large (big ``|Im z|``) and the
    prefactor correspondingly tiny.
    """
    z_arr = np.asarray(z, dtype=complex)
    ls = np.asarray(log_scale, dtype=complex)
    if np.any(np.abs(z_arr) >= _CERF_DOMAIN):
        raise ValueError("erf argument outside |z| < 1e6")
    sign, tail = _scaled_parts(z_arr, ls)
    with np.errstate(over="ignore", invalid="ignore"):
        out = sign * np.exp(ls) - tail
    if not np.all(np.isfinite(out)):
        raise CerfOverflowError("scaled erf overflows even after rescaling")
    if np.ndim(z) == 0 and np.ndim(log_scale) == 0:
        return complex(out)
    return out


def gaussian_window_integral(a, b, c, lo, hi):
    """Closed form of ``int_lo^hi exp(a w^2 + b w + c) dw`` for ``Re a < 0``.

    ``lo`` and ``hi`` may be ``-inf``/``inf``.  All arguments broadcast.
    The result is assembled as ``sqrt(pi)/(2r) * exp(K) * [erf(z_hi) - erf(z_lo)]``
    with ``r = sqrt(-a)`` and ``K = c - b^2/(4a)``; whenever both end points
    lie on the same side of the saddle the ``exp(K)`` pieces cancel exactly
    and only the bounded boundary terms are formed.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    c = np.asarray(c, dtype=complex)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(a.real >= 0.0):
        raise ValueError("gaussian_window_integral needs Re(a) < 0")
    a, b, c, lo, hi = np.broadcast_arrays(a, b, c, lo, hi)
    r = np.sqrt(-a)
    shift = b / (2.0 * a)
    log_k = c - b * b / (4.0 * a)

    def end_terms(x):
        finite = np.isfinite(x)
        xf = np.where(finite, x, 0.0)
        z = r * (xf + shift)
        # log of the integrand at the end point: always moderate
        log_edge = a * xf * xf + b * xf + c
        sign = np.where(z.real >= 0.0, 1.0, -1.0)
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            tail = sign * np.exp(log_edge) * special.wofz(sign * 1j * z)
        sign = np.where(finite, sign, np.sign(x))
        tail = np.where(finite, tail, 0.0)
        return sign, tail

    s_hi, t_hi = end_terms(hi)
    s_lo, t_lo = end_terms(lo)
    ds = s_hi - s_lo
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        core = np.where(ds != 0.0, ds * np.exp(np.where(ds != 0.0, log_k, 0.0)), 0.0)
    total = np.sqrt(np.pi) / (2.0 * r) * (core - t_hi + t_lo)
    if not np.all(np.isfinite(total)):
        raise CerfOverflowError("Gaussian window integral is not finite")
    if total.ndim == 0:
        return complex(total)
    return total


# ---------------------------------------------------------------------------
# adaptive Gauss-Kronrod (7/15) quadrature

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])  # 15 nodes, ascending
_WK15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG7 = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes (xgk[1], xgk[3], ...)
for _k, _w in zip((1, 3, 5), _WG[:3]):
    _WG7[_k] = _w
    _WG7[14 - _k] = _w
_WG7[7] = _WG[3]


def _kronrod_batch(g, lo, hi):
    """Apply G7/K15 on many intervals at once; returns (K, |K-G|)."""
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    fx = np.asarray(g(x.ravel()), dtype=complex).reshape(x.shape)
    k15 = half * (fx @ _WK15)
    g7 = half * (fx @ _WG7)
    return k15, np.abs(k15 - g7)


def _panel_map(lo, hi):
    """Map a possibly semi-infinite panel onto a finite parameter interval."""
    if np.isfinite(lo) and np.isfinite(hi):
        return (lambda t: t, lambda t: np.ones_like(t)), (lo, hi)
    if np.isfinite(lo):  # [lo, inf): w = lo + t/(1-t)
        return (lambda t: lo + t / (1.0 - t), lambda t: 1.0 / (1.0 - t) ** 2), (0.0, 1.0)
    if np.isfinite(hi):  # (-inf, hi]: w = hi - t/(1-t)
        return (lambda t: hi - t / (1.0 - t), lambda t: 1.0 / (1.0 - t) ** 2), (0.0, 1.0)
    raise ValueError("panels must have at least one finite end")


def integrate_1d(
    f: Callable[[np.ndarray], np.ndarray],
    breakpoints: Sequence[float],
    tol: float = 1e-10,
    lower: float = -np.inf,
    upper: float = np.inf,
    max_evals: int = 2_000_000,
) -> QuadratureResult:
    """Adaptive Gauss-Kronrod integral of a complex function over [lower, upper].

    ``f`` must accept a 1-D float array and return values of the same shape.
    The range is first cut at every breakpoint (discontinuities, peak centres)
    and each panel is then bisected adaptively, always refining the panel with
    the largest error estimate, until the summed estimate is below ``tol``.

    Raises:
        QuadratureError: if ``tol`` is not reached within ``max_evals``.
    """
    pts = sorted(float(p) for p in breakpoints if lower < p < upper)
    edges = [lower, *pts, upper]
    if len(edges) == 2 and not (np.isfinite(lower) or np.isfinite(upper)):
        edges = [lower, 0.0, upper]

    panels = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        (xmap, jac), (t0, t1) = _panel_map(lo, hi)

        def g(t, xmap=xmap, jac=jac):
            return f(xmap(t)) * jac(t)

        panels.append((g, t0, t1))

    evaluations = 0
    value = 0.0 + 0.0j
    error = 0.0
    for g, t0, t1 in panels:
        los = np.array([t0])
        his = np.array([t1])
        vals, errs = _kronrod_batch(g, los, his)
        evaluations += 15
        while True:
            total_err = errs.sum()
            budget = tol / len(panels)
            if total_err <= budget or evaluations > max_evals:
                break
            # bisect every interval carrying a significant share of the error
            cut = errs > max(budget / max(len(errs), 1), 0.05 * errs.max())
            mids = 0.5 * (los[cut] + his[cut])
            new_lo = np.concatenate([los[cut], mids])
            new_hi = np.concatenate([mids, his[cut]])
            nv, ne = _kronrod_batch(g, new_lo, new_hi)
            evaluations += 15 * len(new_lo)
            los = np.concatenate([los[~cut], new_lo])
            his = np.concatenate([his[~cut], new_hi])
            vals = np.concatenate([vals[~cut], nv])
            errs = np.concatenate([errs[~cut], ne])
        value += vals.sum()
        error += errs.sum()
        if evaluations > max_evals and errs.sum() > tol / len(panels):
            raise QuadratureError(
                f"quadrature did not converge: error {error:.3e} > tol {tol:.3e} "
                f"after {evaluations} evaluations"
            )
    if not np.isfinite(value):
        raise QuadratureError("quadrature produced a non-finite value")
    return QuadratureResult(complex(value), float(error), int(evaluations))


# ---------------------------------------------------------------------------
# Hermitian utilities


def hermitian_check(m: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Return ``m`` symmetrised, raising if it is not Hermitian within ``atol``."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SymmetryError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.conj().T), initial=0.0) > atol * scale:
        raise SymmetryError("matrix is not Hermitian within tolerance")
    return 0.5 * (m + m.conj().T)


def eig_hermitian(m: np.ndarray, atol: float = 1e-12):
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending."""
    h = hermitian_check(m, atol)
    vals, vecs = np.linalg.eigh(h)
    return vals, vecs


def matrix_log_regularized(m: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Natural log of a PSD matrix with eigenvalues clamped below at ``floor``."""
    vals, vecs = eig_hermitian(m, atol=1e-10)
    logs = np.log(np.maximum(vals, floor))
    out = (vecs * logs) @ vecs.conj().T
    return 0.5 * (out + out.conj().T)
