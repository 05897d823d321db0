"""Experiment configuration: unit-suffixed scalars, grids and strict models.

Frequencies are converted to angular units (rad/ps, so 1 THz -> 2*pi rad/ps),
times to ps, angles to rad, dispersion to ps**n, and losses stay in dB with
the transmissivity derived as ``eta = 10**(-dB/10)``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import re
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
import yaml
from pydantic import (BaseModel, BeforeValidator, ConfigDict, Field, ValidationError,
                      model_validator)

from .protocols import ProtocolName
from .spectral import AmplitudeShape, EncodingParams

__all__ = [
    "ConfigError",
    "ExperimentName",
    "UNITS",
    "parse_quantity",
    "parse_grid",
    "to_display",
    "ExperimentConfig",
    "PARAM_MODELS",
    "load_config",
    "config_hash",
    "resolved_dict",
]

TWO_PI = 2.0 * math.pi

# unit tables: factor to the internal unit of each kind
UNITS: dict[str, dict[str, float]] = {
    "frequency": {"THz": TWO_PI, "GHz": TWO_PI * 1e-3, "MHz": TWO_PI * 1e-6, "rad/ps": 1.0},
    "time": {"ps": 1.0, "fs": 1e-3, "ns": 1e3},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0, "pi": math.pi},
    "loss": {"dB": 1.0},
    "disp1": {"ps": 1.0, "fs": 1e-3},
    "disp2": {"ps^2": 1.0, "ps2": 1.0, "fs^2": 1e-6},
}

# unit used when writing values back out (records, resolved-config echo)
DISPLAY = {"frequency": "GHz", "time": "ps", "angle": "rad", "loss": "dB",
           "disp1": "ps", "disp2": "ps^2"}

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z][A-Za-z0-9^/]*)\s*$")


class ConfigError(ValueError):
    """Raised for an invalid configuration; ``str()`` names the field path."""


class ExperimentName(str, enum.Enum):
    FBS_FIDELITY = "fbs_fidelity"
    FBS_KEYRATE = "fbs_keyrate"
    LOSS_KEYRATE = "loss_keyrate"
    MIXED_THETA = "mixed_theta"
    DISPERSION_KEYRATE = "dispersion_keyrate"
    OPTIMIZE_ENCODING = "optimize_encoding"
    PHASE_SURFACE = "phase_surface"
    BIT_ERROR_SURFACE = "bit_error_surface"
    MULTI_FBS = "multi_fbs"
    DEVIATIONS = "deviations"
    ALT_ENCODING = "alt_encoding"


def parse_quantity(value: Any, kind: str) -> float:
    """``"0.019 THz"`` -> 0.1194 rad/ps.  Bare numbers are rejected."""
    if isinstance(value, bool) or not isinstance(value, str):
        raise ValueError(f"expected a quantity with a {kind} unit "
                         f"({', '.join(UNITS[kind])}), got {value!r}")
    m = _QTY.match(value)
    if m is None:
        raise ValueError(f"cannot parse quantity {value!r}")
    num, unit = m.groups()
    table = UNITS[kind]
    if unit not in table:
        raise ValueError(f"unit {unit!r} is not a {kind} unit ({', '.join(table)})")
    return float(num) * table[unit]


def to_display(value: float, kind: str) -> float:
    return value / UNITS[kind][DISPLAY[kind]]


def _fmt(value: float, kind: str) -> str:
    return f"{to_display(value, kind):.15g} {DISPLAY[kind]}"


def parse_grid(value: Any, kind: str) -> tuple[float, ...]:
    """A single quantity, a list of quantities, or ``{start, stop, num[, endpoint]}``."""
    if isinstance(value, (list, tuple)):
        if not value:
            raise ValueError("grid must not be empty")
        return tuple(parse_quantity(v, kind) for v in value)
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "num", "endpoint"}
        if extra:
            raise ValueError(f"unknown grid keys {sorted(extra)}")
        missing = {"start", "stop", "num"} - set(value)
        if missing:
            raise ValueError(f"grid needs keys {sorted(missing)}")
        num = value["num"]
        if isinstance(num, bool) or not isinstance(num, int) or num < 1:
            raise ValueError("grid size 'num' must be a positive integer")
        endpoint = value.get("endpoint", True)
        if not isinstance(endpoint, bool):
            raise ValueError("'endpoint' must be true or false")
        lo, hi = parse_quantity(value["start"], kind), parse_quantity(value["stop"], kind)
        return tuple(float(x) for x in np.linspace(lo, hi, num, endpoint=endpoint))
    return (parse_quantity(value, kind),)


def _qty(kind: str):
    return Annotated[float, BeforeValidator(lambda v: parse_quantity(v, kind))]


def _grid(kind: str):
    return Annotated[tuple[float, ...], BeforeValidator(lambda v: parse_grid(v, kind))]


Freq, Time, Angle = _qty("frequency"), _qty("time"), _qty("angle")
FreqGrid, TimeGrid, AngleGrid = _grid("frequency"), _grid("time"), _grid("angle")
LossGrid = _grid("loss")


def _full_turn(num: int) -> tuple[float, ...]:
    return tuple(float(x) for x in np.linspace(0.0, TWO_PI, num, endpoint=False))


def _ghz(*vals: float) -> tuple[float, ...]:
    return tuple(v * UNITS["frequency"]["GHz"] for v in vals)


MU_DEFAULT = 0.019 * TWO_PI
EPS_DEFAULT = _ghz(0.6, 3.0, 6.6)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EncodingConfig(_Strict):
    """Encoding parameters.  ``sigma_omega`` left unset means eps/6 for FBS
    experiments and 1.1 GHz otherwise."""

    omega0: Freq = 0.0
    omega1: Freq = MU_DEFAULT
    sigma_omega: Freq | None = None
    tau0: Time = 0.0
    tau1: Time = 220.0
    sigma_t: Time = 17.0
    shape: AmplitudeShape = AmplitudeShape.GAUSSIAN

    def build(self, sigma_omega: float | None = None, **override) -> EncodingParams:
        sw = self.sigma_omega if self.sigma_omega is not None else sigma_omega
        if sw is None:
            sw = 1.1 * UNITS["frequency"]["GHz"]
        kw = dict(omega0=self.omega0, omega1=self.omega1, sigma_w=sw, tau0=self.tau0,
                  tau1=self.tau1, sigma_t=self.sigma_t, shape=self.shape)
        kw.update(override)
        return EncodingParams(**kw)


class PairConfig(_Strict):
    omega: Freq
    mu: Freq = MU_DEFAULT
    eps: Freq = _ghz(3.0)[0]
    theta: Angle = math.pi / 2
    phi: Angle = math.pi / 2


class FbsSurfaceParams(_Strict):
    eps: FreqGrid = EPS_DEFAULT
    mu: Freq = MU_DEFAULT
    omega: Freq = 0.0
    theta: AngleGrid = _full_turn(81)
    phi: AngleGrid = _full_turn(81)


class FbsKeyrateParams(_Strict):
    eps: FreqGrid = EPS_DEFAULT
    mu: Freq = MU_DEFAULT
    omega: Freq = 0.0
    theta: AngleGrid = _full_turn(81)
    phi: AngleGrid = (0.0,)


class LossParams(_Strict):
    loss: LossGrid = tuple(float(x) for x in np.arange(0.0, 61.0))
    fit_max_db: float = Field(20.0, gt=0)


class MixedThetaParams(_Strict):
    eps: FreqGrid = EPS_DEFAULT
    mu: Freq = MU_DEFAULT
    omega: Freq = 0.0
    phi: Angle = 0.0
    theta_points: int = Field(64, gt=0)
    sampling: Literal["grid", "random"] = "grid"


def _disp_grid(order: int) -> tuple[float, ...]:
    # about four oscillation periods at the default encoding
    stop = 250.0 if order == 1 else 1000.0
    return tuple(float(x) for x in np.linspace(0.0, stop, 101))


class DispersionParams(_Strict):
    order: Literal[1, 2] = 2
    alpha: tuple[float, ...] | None = None
    sigma_t: TimeGrid = (10.0, 17.0, 30.0)
    omega0_disp: Freq = 0.0
    windows: tuple[tuple[float, float], ...] = ()
    window_points: int = Field(48, gt=1)

    @model_validator(mode="before")
    @classmethod
    def _units(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        kind = "disp1" if data.get("order", 2) == 1 else "disp2"
        if data.get("alpha") is not None:
            data["alpha"] = parse_grid(data["alpha"], kind)
        if "windows" in data:
            ws = data["windows"]
            if not isinstance(ws, list) or not all(isinstance(w, list) and len(w) == 2 for w in ws):
                raise ValueError("windows must be a list of [low, high] pairs")
            data["windows"] = tuple(tuple(parse_quantity(x, kind) for x in w) for w in ws)
        return data

    @property
    def alpha_grid(self) -> tuple[float, ...]:
        return self.alpha if self.alpha is not None else _disp_grid(self.order)


class OptimizeParams(_Strict):
    target: Literal["fbs", "dispersion"] = "fbs"
    sigma_t: TimeGrid = (10.0, 20.0, 30.0, 40.0)
    omega1: FreqGrid | None = None
    eps: FreqGrid = tuple(float(x) for x in np.linspace(*_ghz(0.6, 6.6), 31))
    theta: AngleGrid = tuple(float(x) for x in np.linspace(0.0, TWO_PI, 41))
    mu: Freq = MU_DEFAULT
    phi: Angle = 0.0
    order: Literal[1, 2] = 2
    alpha: tuple[float, ...] | None = None

    @model_validator(mode="before")
    @classmethod
    def _units(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("alpha") is not None:
            data = dict(data)
            data["alpha"] = parse_grid(data["alpha"], "disp1" if data.get("order", 2) == 1 else "disp2")
        return data

    @property
    def alpha_grid(self) -> tuple[float, ...]:
        return self.alpha if self.alpha is not None else _disp_grid(self.order)


class MultiFbsParams(_Strict):
    eps: Freq = _ghz(3.0)[0]
    mu: Freq = MU_DEFAULT
    omega: Freq = 0.0
    extra_pairs: tuple[PairConfig, ...] = (PairConfig(omega="-26 GHz"),)
    theta: AngleGrid = _full_turn(81)
    phi: AngleGrid = _full_turn(81)


DEVIATION_KINDS = {"Omega": "frequency", "theta": "angle", "phi": "angle",
                   "eps": None, "mu": None}


class DeviationsParams(_Strict):
    """``kind: fbs`` sweeps one FBS offset on the second photon (``eps`` and
    ``mu`` offsets are fractions of the first photon's value); ``kind:
    dispersion`` offsets the dispersion parameter of the second photon."""

    kind: Literal["fbs", "dispersion"] = "fbs"
    param: Literal["eps", "Omega", "mu", "theta", "phi"] = "theta"
    values: tuple[float, ...] = (0.0, 0.1, 0.2)
    eps: Freq = _ghz(3.0)[0]
    mu: Freq = MU_DEFAULT
    omega: Freq = 0.0
    theta: AngleGrid = _full_turn(81)
    phi: AngleGrid = _full_turn(81)
    order: Literal[1, 2] = 2
    alpha: tuple[float, ...] | None = None
    keyrate: bool = True

    @model_validator(mode="before")
    @classmethod
    def _units(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        kind = data.get("kind", "fbs")
        disp_kind = "disp1" if data.get("order", 2) == 1 else "disp2"
        if "values" in data:
            vals = data["values"]
            vals = vals if isinstance(vals, list) else [vals]
            if kind == "dispersion":
                data["values"] = tuple(parse_quantity(v, disp_kind) for v in vals)
            else:
                unit_kind = DEVIATION_KINDS.get(data.get("param", "theta"))
                if unit_kind is None:
                    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
                        raise ValueError("eps and mu offsets are plain fractions")
                    data["values"] = tuple(float(v) for v in vals)
                else:
                    data["values"] = tuple(parse_quantity(v, unit_kind) for v in vals)
        elif kind == "dispersion":
            data["values"] = (0.0, 10.0, 20.0)
        if data.get("alpha") is not None:
            data["alpha"] = parse_grid(data["alpha"], disp_kind)
        return data

    @property
    def alpha_grid(self) -> tuple[float, ...]:
        return self.alpha if self.alpha is not None else _disp_grid(self.order)


class AltEncodingParams(_Strict):
    theta1: AngleGrid = tuple(float(x) for x in np.linspace(0.0, math.pi, 41))
    theta2: AngleGrid = tuple(float(x) for x in np.linspace(0.0, math.pi, 41))
    phi1: AngleGrid = (0.0,)
    phi2: AngleGrid = (0.0,)


PARAM_MODELS: dict[ExperimentName, type[_Strict]] = {
    ExperimentName.FBS_FIDELITY: FbsSurfaceParams,
    ExperimentName.PHASE_SURFACE: FbsSurfaceParams,
    ExperimentName.BIT_ERROR_SURFACE: FbsSurfaceParams,
    ExperimentName.FBS_KEYRATE: FbsKeyrateParams,
    ExperimentName.LOSS_KEYRATE: LossParams,
    ExperimentName.MIXED_THETA: MixedThetaParams,
    ExperimentName.DISPERSION_KEYRATE: DispersionParams,
    ExperimentName.OPTIMIZE_ENCODING: OptimizeParams,
    ExperimentName.MULTI_FBS: MultiFbsParams,
    ExperimentName.DEVIATIONS: DeviationsParams,
    ExperimentName.ALT_ENCODING: AltEncodingParams,
}

DEFAULT_PROTOCOLS: dict[ExperimentName, tuple[ProtocolName, ...]] = {
    ExperimentName.FBS_KEYRATE: (ProtocolName.OURS, ProtocolName.BB84, ProtocolName.WANG,
                                 ProtocolName.BOILEAU4),
    ExperimentName.LOSS_KEYRATE: tuple(ProtocolName),
    ExperimentName.MIXED_THETA: (ProtocolName.OURS, ProtocolName.BB84, ProtocolName.WANG),
}

# encoding defaults that differ from the FBS figures
ENCODING_DEFAULTS: dict[ExperimentName, dict[str, str]] = {
    ExperimentName.DISPERSION_KEYRATE: {"sigma_omega": "1.1 GHz", "sigma_t": "30 ps"},
}


class OutputConfig(_Strict):
    dir: str = "out"
    stem: str | None = None


class ExperimentConfig(_Strict):
    experiment: ExperimentName
    seed: int = 0
    encoding: EncodingConfig = EncodingConfig()
    protocols: tuple[ProtocolName, ...] | None = None
    mode: Literal["auto", "full_tomography", "frank_wolfe"] = "auto"
    solver: Literal["cvxopt", "cvxpy"] = "cvxopt"
    maxiter: int = Field(300, gt=0)
    tol: float = Field(1e-6, gt=0)
    workers: int = Field(1, gt=0)
    params: Any = None
    output: OutputConfig = OutputConfig()

    @model_validator(mode="before")
    @classmethod
    def _experiment_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            raise ValueError("configuration must be a mapping")
        data = dict(data)
        try:
            exp = ExperimentName(data.get("experiment"))
        except ValueError:
            return data  # reported by the field validator
        enc = dict(ENCODING_DEFAULTS.get(exp, {}))
        enc.update(data.get("encoding") or {})
        data["encoding"] = enc
        try:
            data["params"] = PARAM_MODELS[exp].model_validate(data.get("params") or {})
        except ValidationError as exc:
            raise ValueError(_error_path(exc, "params")) from None
        if data.get("protocols") is None and exp in DEFAULT_PROTOCOLS:
            data["protocols"] = DEFAULT_PROTOCOLS[exp]
        return data

    @model_validator(mode="after")
    def _protocols_needed(self) -> "ExperimentConfig":
        if self.experiment in DEFAULT_PROTOCOLS and not self.protocols:
            raise ValueError("protocols must list at least one protocol")
        if self.experiment not in DEFAULT_PROTOCOLS and self.protocols:
            raise ValueError(f"experiment {self.experiment.value} takes no protocols")
        return self

    def mode_for(self, protocol: ProtocolName) -> str:
        if self.mode != "auto":
            return self.mode
        # the four-photon protocols' states are fixed points of collective
        # unitary noise and loss, so the simulated state is pinned
        fast = (ProtocolName.BOILEAU3, ProtocolName.BOILEAU4, ProtocolName.LI_DEPHASING,
                ProtocolName.LI_ROTATION)
        return "full_tomography" if protocol in fast else "frank_wolfe"


def _error_path(err: ValidationError, prefix: str = "") -> str:
    lines = []
    for e in err.errors():
        parts = [prefix] if prefix else []
        parts += [str(p) for p in e["loc"] if not str(p).startswith("function-")]
        msg = e["msg"].removeprefix("Value error, ")
        # errors re-raised from the params block already carry their path
        lines.append(f"{'.'.join(parts)}: {msg}" if parts and not msg.startswith("params") else msg)
    return "; ".join(lines)


def load_config(source: str | Path | dict) -> ExperimentConfig:
    """Parse and validate a YAML file (or an already-loaded mapping)."""
    if isinstance(source, dict):
        data = source
    else:
        path = Path(source)
        try:
            data = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_error_path(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


_FIELD_KIND = {
    "omega0": "frequency", "omega1": "frequency", "sigma_omega": "frequency",
    "tau0": "time", "tau1": "time", "sigma_t": "time", "eps": "frequency", "mu": "frequency",
    "omega": "frequency", "omega0_disp": "frequency", "theta": "angle", "phi": "angle",
    "theta1": "angle", "theta2": "angle", "phi1": "angle", "phi2": "angle", "loss": "loss",
}


def _echo(obj: Any, key: str | None, ctx: dict) -> Any:
    if isinstance(obj, BaseModel):
        sub = dict(ctx)
        if "order" in type(obj).model_fields:
            sub["disp"] = "disp1" if obj.order == 1 else "disp2"
        if isinstance(obj, DeviationsParams):
            sub["values"] = sub["disp"] if obj.kind == "dispersion" else DEVIATION_KINDS[obj.param]
        out = {k: _echo(getattr(obj, k), k, sub) for k in type(obj).model_fields}
        if hasattr(obj, "alpha_grid"):
            out["alpha"] = _echo(obj.alpha_grid, "alpha", sub)
        return out
    if isinstance(obj, enum.Enum):
        return obj.value
    kind = _FIELD_KIND.get(key)
    if key in ("alpha", "windows"):
        kind = ctx.get("disp")
    if key == "values":
        kind = ctx.get("values")
    if isinstance(obj, tuple):
        return [_echo(v, key, ctx) for v in obj]
    if isinstance(obj, float) and kind is not None:
        return _fmt(obj, kind)
    return obj


def resolved_dict(cfg: ExperimentConfig) -> dict:
    """The fully resolved configuration in unit-suffixed form; loading it back
    reproduces every value to rounding."""
    return _echo(cfg, None, {})


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the resolved echo, so a rerun from the echo hashes the same."""
    blob = json.dumps(resolved_dict(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
