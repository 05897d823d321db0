"""Named parameter sweeps, one dataset each.

Every experiment expands its configuration into a list of independent point
tasks (module-level partials, so they can go to a process pool), evaluates
them, and optionally condenses the records into a summary.
"""

from __future__ import annotations

import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import keyrate as kr
from .channels import (DispersionChannel, FbsChannel, FbsDelta, FbsPair, LossSpec, MixedChannel,
                       alt_encoding_rates, dispersion_delta, fbs_logical_effect, singlet_overlaps)
from .config import UNITS, ExperimentConfig, ExperimentName
from .protocols import ProtocolName, make_protocol
from .spectral import EncodingParams

__all__ = ["EXPERIMENTS", "RunResult", "run_experiment", "describe"]

log = logging.getLogger(__name__)

GHZ = UNITS["frequency"]["GHz"]
KEY_FIELDS = ("lower_bound", "primal", "gap", "p_concl", "qber", "leak_ec", "mode",
              "iterations", "converged", "below_floor")


@dataclass
class RunResult:
    records: list[dict]
    summary: dict = field(default_factory=dict)
    nonconverged: int = 0


# ---------------------------------------------------------------------------
# point evaluations (pure functions of their arguments)


def _keyrate_point(protocol: str, enc: EncodingParams, channel, mode: str, solver: str,
                   maxiter: int, tol: float, coords: dict) -> dict:
    rec = {"protocol": protocol, **coords}
    try:
        res = kr.key_rate(make_protocol(protocol, enc), channel, mode, maxiter=maxiter, tol=tol,
                          solver=solver, raise_on_nonconvergence=True)
        rec.update({k: res.as_record()[k] for k in KEY_FIELDS}, error="")
    except kr.SolverNonConvergence as exc:
        rec.update({k: exc.result.as_record()[k] for k in KEY_FIELDS}, error="non-convergence")
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rec.update({k: None for k in KEY_FIELDS}, error=f"{type(exc).__name__}: {exc}")
    return rec


def _fbs_point(enc: EncodingParams, pairs: tuple[FbsPair, ...], delta: FbsDelta | None,
               coords: dict) -> dict:
    rec = dict(coords)
    try:
        eff = fbs_logical_effect(enc, FbsChannel(pairs, delta))
        rec.update(fidelity_tt=eff.fidelity_tt, phase_tt=eff.phase_tt,
                   fidelity_tf=eff.fidelity_tf, error="")
    except ValueError as exc:
        rec.update(fidelity_tt=None, phase_tt=None, fidelity_tf=None, error=str(exc))
    return rec


def _dispersion_fidelity_point(enc: EncodingParams, chan: DispersionChannel, coords: dict) -> dict:
    m, n = dispersion_delta(enc, chan, chan.delta_alpha)
    ov = singlet_overlaps(enc, m, n)
    return {**coords, "fidelity_tt": abs(ov["tt"]) ** 2, "fidelity_ff": abs(ov["ff"]) ** 2,
            "error": ""}


def _alt_point(coords: dict, t1: float, t2: float, p1: float, p2: float) -> dict:
    return {**coords, **alt_encoding_rates(t1, t2, p1, p2), "error": ""}


# ---------------------------------------------------------------------------
# grid expansion


def _ghz_out(x: float) -> float:
    return round(x / GHZ, 12)


def _fbs_encoding(cfg: ExperimentConfig, eps: float, **override) -> EncodingParams:
    return cfg.encoding.build(sigma_omega=eps / 6, **override)


def _kr_task(cfg: ExperimentConfig, protocol: ProtocolName, enc, channel, coords) -> Callable:
    return functools.partial(_keyrate_point, protocol.value, enc, channel, cfg.mode_for(protocol),
                             cfg.solver, cfg.maxiter, cfg.tol, coords)


def _surface_tasks(cfg: ExperimentConfig) -> list[Callable]:
    p = cfg.params
    tasks = []
    for eps in p.eps:
        enc = _fbs_encoding(cfg, eps)
        for th in p.theta:
            for ph in p.phi:
                pair = FbsPair(p.omega, p.mu, eps, th, ph)
                coords = {"eps_GHz": _ghz_out(eps), "theta_rad": float(th), "phi_rad": float(ph)}
                tasks.append(functools.partial(_fbs_point, enc, (pair,), None, coords))
    return tasks


def _fbs_keyrate_tasks(cfg: ExperimentConfig) -> list[Callable]:
    p = cfg.params
    tasks = []
    for eps in p.eps:
        enc = _fbs_encoding(cfg, eps)
        for th in p.theta:
            for ph in p.phi:
                chan = FbsChannel((FbsPair(p.omega, p.mu, eps, th, ph),))
                coords = {"eps_GHz": _ghz_out(eps), "theta_rad": float(th), "phi_rad": float(ph)}
                tasks += [_kr_task(cfg, pr, enc, chan, coords) for pr in cfg.protocols]
    return tasks


def _loss_tasks(cfg: ExperimentConfig) -> list[Callable]:
    enc = cfg.encoding.build()
    tasks = []
    for db in cfg.params.loss:
        coords = {"loss_dB": float(db), "eta": 10.0 ** (-db / 10.0)}
        tasks += [_kr_task(cfg, pr, enc, LossSpec.from_db(db), coords) for pr in cfg.protocols]
    return tasks


def _theta_samples(cfg: ExperimentConfig) -> np.ndarray:
    n = cfg.params.theta_points
    if cfg.params.sampling == "random":
        return np.sort(np.random.default_rng(cfg.seed).uniform(0.0, 2 * math.pi, n))
    return np.arange(n) * (2 * math.pi / n)


def _mixed_tasks(cfg: ExperimentConfig) -> list[Callable]:
    p = cfg.params
    thetas = _theta_samples(cfg)
    tasks = []
    for eps in p.eps:
        enc = _fbs_encoding(cfg, eps)
        chan = MixedChannel.uniform([FbsChannel((FbsPair(p.omega, p.mu, eps, float(t), p.phi),))
                                     for t in thetas])
        coords = {"eps_GHz": _ghz_out(eps), "theta_points": len(thetas)}
        tasks += [_kr_task(cfg, pr, enc, chan, coords) for pr in cfg.protocols]
    return tasks


def _alpha_label(order: int) -> str:
    return "alpha1_ps" if order == 1 else "alpha2_ps2"


def _dispersion_tasks(cfg: ExperimentConfig) -> list[Callable]:
    p = cfg.params
    col = _alpha_label(p.order)
    tasks = []
    for st in p.sigma_t:
        enc = cfg.encoding.build(sigma_t=st)
        for a in p.alpha_grid:
            chan = DispersionChannel(p.order, a, p.omega0_disp)
            coords = {"sigma_t_ps": st, "window": "", col: a}
            tasks.append(_kr_task(cfg, ProtocolName.OURS, enc, chan, coords))
        for lo, hi in p.windows:
            grid = np.linspace(lo, hi, p.window_points)
            chan = MixedChannel.uniform([DispersionChannel(p.order, float(a), p.omega0_disp)
                                         for a in grid])
            coords = {"sigma_t_ps": st, "window": f"{lo:g}-{hi:g}", col: 0.5 * (lo + hi)}
            tasks.append(_kr_task(cfg, ProtocolName.OURS, enc, chan, coords))
    return tasks


def _optimize_tasks(cfg: ExperimentConfig) -> list[Callable]:
    p = cfg.params
    tasks = []
    omega1s = p.omega1 if p.omega1 is not None else (cfg.encoding.omega1,)
    for st in p.sigma_t:
        for w1 in omega1s:
            coords0 = {"sigma_t_ps": st, "omega1_GHz": _ghz_out(w1)}
            if p.target == "fbs":
                for eps in p.eps:
                    enc = _fbs_encoding(cfg, eps, sigma_t=st, omega1=w1)
                    for th in p.theta:
                        pair = FbsPair(0.0, p.mu, eps, th, p.phi)
                        coords = {**coords0, "eps_GHz": _ghz_out(eps), "theta_rad": float(th)}
                        tasks.append(functools.partial(_fbs_point, enc, (pair,), None, coords))
            else:
                enc = cfg.encoding.build(sigma_t=st, omega1=w1)
                for a in p.alpha_grid:
                    coords = {**coords0, _alpha_label(p.order): a}
                    tasks.append(_kr_task(cfg, ProtocolName.OURS, enc,
                                          DispersionChannel(p.order, a), coords))
    return tasks


def _multi_tasks(cfg: ExperimentConfig) -> list[Callable]:
    p = cfg.params
    enc = _fbs_encoding(cfg, p.eps)
    extra = tuple(FbsPair(e.omega, e.mu, e.eps, e.theta, e.phi) for e in p.extra_pairs)
    tasks = []
    for n_extra in range(len(extra) + 1):
        for th in p.theta:
            for ph in p.phi:
                pairs = (FbsPair(p.omega, p.mu, p.eps, th, ph),) + extra[:n_extra]
                coords = {"n_pairs": n_extra + 1, "theta_rad": float(th), "phi_rad": float(ph)}
                tasks.append(functools.partial(_fbs_point, enc, pairs, None, coords))
    return tasks


def _deviation_tasks(cfg: ExperimentConfig) -> list[Callable]:
    p = cfg.params
    tasks = []
    if p.kind == "fbs":
        enc = _fbs_encoding(cfg, p.eps)
        for d in p.values:
            # eps and mu offsets are relative to the first photon's values
            off = {"eps": d * p.eps} if p.param == "eps" else (
                {"mu": d * p.mu} if p.param == "mu" else {p.param: d})
            delta = FbsDelta(**off)
            shown = _ghz_out(d) if p.param == "Omega" else d
            for th in p.theta:
                for ph in p.phi:
                    coords = {"param": p.param, "delta": shown, "theta_rad": float(th),
                              "phi_rad": float(ph)}
                    tasks.append(functools.partial(_fbs_point, enc, (FbsPair(p.omega, p.mu, p.eps,
                                                                             th, ph),), delta, coords))
        return tasks
    enc = cfg.encoding.build()
    col = _alpha_label(p.order)
    for d in p.values:
        for a in p.alpha_grid:
            chan = DispersionChannel(p.order, a, 0.0, d)
            coords = {"delta": d, col: a}
            tasks.append(functools.partial(_dispersion_fidelity_point, enc, chan, coords))
            if p.keyrate:
                tasks.append(_kr_task(cfg, ProtocolName.OURS, enc, chan, coords))
    return tasks


def _alt_tasks(cfg: ExperimentConfig) -> list[Callable]:
    p = cfg.params
    tasks = []
    for t1 in p.theta1:
        for t2 in p.theta2:
            for p1 in p.phi1:
                for p2 in p.phi2:
                    coords = {"theta1_rad": t1, "theta2_rad": t2, "phi1_rad": p1, "phi2_rad": p2}
                    tasks.append(functools.partial(_alt_point, coords, t1, t2, p1, p2))
    return tasks


# ---------------------------------------------------------------------------
# summaries


def _loss_summary(cfg: ExperimentConfig, records: list[dict]) -> dict:
    """Fitted slope of log10(rate) against dB over [0, fit_max_db]; rates
    below the numerical floor are left out of the fit."""
    out = {}
    for pr in cfg.protocols:
        pts = [(r["loss_dB"], r["lower_bound"]) for r in records
               if r["protocol"] == pr.value and r["loss_dB"] <= cfg.params.fit_max_db
               and r["lower_bound"] and r["lower_bound"] >= kr.SMALL_RATE]
        if len(pts) >= 2:
            x, y = np.array(pts).T
            out[pr.value] = {"slope_log10_per_dB": float(np.polyfit(x, np.log10(y), 1)[0]),
                             "points": len(pts)}
    return {"loss_slopes": out}


def _dispersion_summary(cfg: ExperimentConfig, records: list[dict]) -> dict:
    win = [{"sigma_t_ps": r["sigma_t_ps"], "window": r["window"], "rate": r["lower_bound"]}
           for r in records if r["window"]]
    return {"window_rates": win} if win else {}


def _optimize_summary(cfg: ExperimentConfig, records: list[dict]) -> dict:
    """Best encoding: highest worst-case fidelity (fbs) or mean rate (dispersion)."""
    fbs = cfg.params.target == "fbs"
    key = "fidelity_tt" if fbs else "lower_bound"
    groups: dict[tuple, list[float]] = {}
    for r in records:
        if r[key] is not None:
            groups.setdefault((r["sigma_t_ps"], r["omega1_GHz"]), []).append(r[key])
    if not groups:
        return {}
    score = {g: (min(v) if fbs else float(np.mean(v))) for g, v in groups.items()}
    best = max(score, key=score.get)
    return {"criterion": "min fidelity_tt" if fbs else "mean key rate",
            "scores": [{"sigma_t_ps": g[0], "omega1_GHz": g[1], "score": s}
                       for g, s in sorted(score.items())],
            "best": {"sigma_t_ps": best[0], "omega1_GHz": best[1], "score": score[best]}}


@dataclass(frozen=True)
class Experiment:
    name: ExperimentName
    describe: str
    tasks: Callable[[ExperimentConfig], list[Callable]]
    summary: Callable[[ExperimentConfig, list[dict]], dict] | None = None


EXPERIMENTS: dict[ExperimentName, Experiment] = {e.name: e for e in [
    Experiment(ExperimentName.FBS_FIDELITY, "time-bin singlet fidelity over (theta, phi) per FBS width",
               _surface_tasks),
    Experiment(ExperimentName.FBS_KEYRATE, "key rate against FBS rotation for each protocol",
               _fbs_keyrate_tasks),
    Experiment(ExperimentName.LOSS_KEYRATE, "key rate against channel loss with fitted slopes",
               _loss_tasks, _loss_summary),
    Experiment(ExperimentName.MIXED_THETA, "key rate on the FBS channel with theta uniformly mixed",
               _mixed_tasks),
    Experiment(ExperimentName.DISPERSION_KEYRATE, "key rate against dispersion (order 1 or 2)",
               _dispersion_tasks, _dispersion_summary),
    Experiment(ExperimentName.OPTIMIZE_ENCODING, "encoding scan for robustness to a noise range",
               _optimize_tasks, _optimize_summary),
    Experiment(ExperimentName.PHASE_SURFACE, "phase picked up by the time-bin singlet over (theta, phi)",
               _surface_tasks),
    Experiment(ExperimentName.BIT_ERROR_SURFACE, "time-bin to frequency-bin leakage over (theta, phi)",
               _surface_tasks),
    Experiment(ExperimentName.MULTI_FBS, "time-bin fidelity with additional FBS pairs",
               _multi_tasks),
    Experiment(ExperimentName.DEVIATIONS, "fidelity when the two photons see different noise",
               _deviation_tasks),
    Experiment(ExperimentName.ALT_ENCODING, "loss and error rates of the two-pair frequency encoding",
               _alt_tasks),
]}


def describe() -> list[tuple[str, str]]:
    return [(e.value, EXPERIMENTS[e].describe) for e in ExperimentName]


def _call(task: Callable) -> dict:
    return task()


def _sort_key(rec: dict) -> tuple:
    return tuple((0, v) if isinstance(v, (int, float)) else (1, str(v)) for v in rec.values())


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Evaluate every grid point; records come back sorted, whatever the
    completion order of the workers."""
    exp = EXPERIMENTS[cfg.experiment]
    tasks = exp.tasks(cfg)
    log.info("%s: %d grid points", cfg.experiment.value, len(tasks))
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(_call, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    else:
        records = [t() for t in tasks]
    # records of one experiment may mix fidelity and key-rate rows; give them a common header
    keys: list[str] = []
    for r in records:
        keys += [k for k in r if k not in keys]
    keys.remove("error")
    keys.append("error")
    records = sorted(({k: r.get(k) for k in keys} for r in records), key=_sort_key)
    summary = exp.summary(cfg, records) if exp.summary else {}
    nonconv = sum(r["error"] == "non-convergence" for r in records)
    return RunResult(records, summary, nonconv)

