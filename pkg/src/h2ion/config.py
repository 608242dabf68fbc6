"""Run configuration: TOML document -> validated :class:`RunConfig`.

Grammar (every key optional unless marked)::

    scenario = "dissipative"      # required: unitary | dissipative | influx | anode
    initial_state = "Psi6"        # Psi0 ... Psi7

    [model]                       # physical constants, hbar = 1 units
    omega01_up = 1.0 ...          # any ModelParams field
    cutoff12 = 2                  # photon cap of the Phi1->Phi2 modes
    cutoff01 = 1                  # cap of the Phi0->Phi1 modes and the phonon

    [channels]
    gamma_unit = 1e-8             # internal rate per unit of 10**exponent
    gamma_photon = 7.0            # log10 rates, or "off"
    gamma_phonon = 7.0
    gamma_electron = 7.0
    mu_photon = 0.0               # influx/dissipation ratios in [0, 1)
    mu_phonon = 0.0
    mu_electron = 0.0

    [integration]
    dt = 0.5
    t_end = 6000.0
    stride = 20                   # steps between recorded samples
    M = 20
    taylor_terms = 4
    trace_tol = 1e-4
    threshold = 0.999             # stabilization level of molecule + cation
    engine = "sector"             # sector | dense
    substep = "kraus"             # kraus | euler, form of the dissipative update

    [sweep]
    threads = 1
    [[sweep.axis]]                # one or two axes
    quantity = "gamma_photon"     # any gamma_* or mu_* key of [channels]
    values = [4, 5, 6, 7]         # or start/stop/num for an even grid

    [output]
    prefix = "h2ion"

Rates are given as exponents: ``gamma_photon = 7.5`` means a rate of
``10**7.5 * gamma_unit`` in internal units.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .hilbert import Cutoffs
from .lindblad import SUBSTEPS
from .model import CHANNEL_NAMES, PHOTON_CHANNELS, InitialStateId
from .operators import ModelParams
from .propagator import PtsimConfig

__all__ = [
    "ConfigError",
    "Scenario",
    "ChannelRates",
    "Integration",
    "SweepAxis",
    "RunConfig",
    "parse_config",
    "load_config",
    "resolved_lines",
    "CHANNEL_GROUPS",
]


class ConfigError(ValueError):
    pass


SCENARIOS = ("unitary", "dissipative", "influx", "anode")
Scenario = str

# config-level rate groups and the jump channels each one drives
CHANNEL_GROUPS = {
    "photon": PHOTON_CHANNELS,
    "phonon": ("phonon",),
    "electron": ("electron_up", "electron_dn"),
}
RATE_KEYS = tuple(f"gamma_{g}" for g in CHANNEL_GROUPS) + tuple(f"mu_{g}" for g in CHANNEL_GROUPS)


@dataclass(frozen=True)
class ChannelRates:
    """Rates per group as log10 exponents (``-inf`` switches a channel off)."""

    gamma_unit: float = 1e-8
    gamma_photon: float = 7.0
    gamma_phonon: float = 7.0
    gamma_electron: float = 7.0
    mu_photon: float = 0.0
    mu_phonon: float = 0.0
    mu_electron: float = 0.0

    def rate(self, group: str) -> float:
        x = getattr(self, f"gamma_{group}")
        return 0.0 if x == -math.inf else 10.0**x * self.gamma_unit

    def gammas(self, groups=tuple(CHANNEL_GROUPS)) -> dict[str, float]:
        out = {}
        for g in groups:
            for name in CHANNEL_GROUPS[g]:
                out[name] = self.rate(g)
        return out

    def mus(self, groups=tuple(CHANNEL_GROUPS)) -> dict[str, float]:
        return {name: getattr(self, f"mu_{g}") for g in groups for name in CHANNEL_GROUPS[g]}


@dataclass(frozen=True)
class Integration:
    dt: float = 0.5
    t_end: float = 6000.0
    stride: int = 20
    M: int = 20
    taylor_terms: int = 4
    trace_tol: float = 1e-4
    threshold: float = 0.999
    engine: str = "sector"
    substep: str = "kraus"

    @property
    def ptsim(self) -> PtsimConfig:
        return PtsimConfig(self.M, self.taylor_terms)


@dataclass(frozen=True)
class SweepAxis:
    quantity: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    initial_state: InitialStateId = InitialStateId.Psi6
    params: ModelParams = ModelParams()
    cutoffs: Cutoffs = Cutoffs()
    channels: ChannelRates = ChannelRates()
    integration: Integration = Integration()
    axes: tuple[SweepAxis, ...] = ()
    threads: int = 1
    prefix: str = "h2ion"
    defaulted: tuple[str, ...] = field(default=(), compare=False)

    def with_rates(self, **changes) -> "RunConfig":
        return replace(self, channels=replace(self.channels, **changes))

    def grid(self) -> list[tuple[tuple[int, ...], dict[str, float]]]:
        """Every sweep cell as (index tuple, {quantity: value})."""
        if not self.axes:
            return [((), {})]
        cells = []
        for idx in np.ndindex(*(len(a.values) for a in self.axes)):
            cells.append((tuple(int(i) for i in idx), {a.quantity: a.values[i] for a, i in zip(self.axes, idx)}))
        return cells


_TOP = {"scenario", "initial_state", "model", "channels", "integration", "sweep", "output"}
_MODEL = {f.name for f in fields(ModelParams)} | {"cutoff12", "cutoff01"}
_CHANNELS = {f.name for f in fields(ChannelRates)}
_INTEGRATION = {f.name for f in fields(Integration)}
_SWEEP = {"threads", "axis"}
_AXIS = {"quantity", "values", "start", "stop", "num"}
_OUTPUT = {"prefix"}


def _check_keys(section: str, got: Mapping, allowed: set) -> None:
    unknown = sorted(set(got) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def _table(doc: Mapping, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    return dict(value)


def _exponent(key: str, value: Any) -> float:
    if isinstance(value, str):
        if value.strip().lower() == "off":
            return -math.inf
        raise ConfigError(f"{key}: expected a log10 rate or \"off\", got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    x = float(value)
    if math.isnan(x) or x == math.inf:
        raise ConfigError(f"{key}: rate exponent must be finite or \"off\"")
    return x


def _mu(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    x = float(value)
    if not 0.0 <= x < 1.0:
        raise ConfigError(
            f"{key} = {x}: influx/dissipation ratio must lie in [0, 1) so that the net trend stays dissipative"
        )
    return x


def _axis_value(quantity: str, value: Any) -> float:
    return _mu(quantity, value) if quantity.startswith("mu_") else _exponent(quantity, value)


def _parse_axis(raw: Mapping, n: int) -> SweepAxis:
    where = f"sweep.axis[{n}]"
    _check_keys(where, raw, _AXIS)
    quantity = raw.get("quantity")
    if quantity not in RATE_KEYS:
        raise ConfigError(f"{where}: quantity must be one of {', '.join(RATE_KEYS)}, got {quantity!r}")
    if "values" in raw:
        if {"start", "stop", "num"} & set(raw):
            raise ConfigError(f"{where}: give either values or start/stop/num")
        values = raw["values"]
        if not isinstance(values, list):
            raise ConfigError(f"{where}: values must be a list")
    else:
        try:
            start, stop, num = float(raw["start"]), float(raw["stop"]), int(raw["num"])
        except KeyError as exc:
            raise ConfigError(f"{where}: missing {exc.args[0]}") from None
        if num < 1:
            raise ConfigError(f"{where}: num must be at least 1")
        values = np.linspace(start, stop, num).round(12).tolist()
    if not values:
        raise ConfigError(f"{where}: values list is empty")
    return SweepAxis(quantity, tuple(_axis_value(quantity, v) for v in values))


def parse_config(text: str | Mapping) -> RunConfig:
    """Validate a TOML document (or an already parsed mapping)."""
    if isinstance(text, str):
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from None
    else:
        doc = dict(text)
    _check_keys("top level", doc, _TOP)
    defaulted: list[str] = []

    scenario = doc.get("scenario")
    if scenario is None:
        raise ConfigError("missing required key: scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}, got {scenario!r}")
    if "initial_state" not in doc:
        defaulted.append("initial_state")
    try:
        initial = InitialStateId(doc.get("initial_state", "Psi6"))
    except ValueError:
        raise ConfigError(f"unknown initial_state {doc['initial_state']!r}") from None

    model = _table(doc, "model")
    _check_keys("model", model, _MODEL)
    cut12 = int(model.pop("cutoff12", 2))
    cut01 = int(model.pop("cutoff01", 1))
    if cut12 < 0 or cut01 < 0:
        raise ConfigError("cutoffs must be non-negative")
    defaulted += [f"model.{k}" for k in sorted(_MODEL - set(_table(doc, "model")))]
    try:
        params = ModelParams(**model)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[model]: {exc}") from None

    ch = _table(doc, "channels")
    _check_keys("channels", ch, _CHANNELS)
    defaulted += [f"channels.{k}" for k in sorted(_CHANNELS - set(ch))]
    rates = {}
    for key, value in ch.items():
        if key == "gamma_unit":
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
                raise ConfigError("gamma_unit must be a positive number")
            rates[key] = float(value)
        elif key.startswith("mu_"):
            rates[key] = _mu(key, value)
        else:
            rates[key] = _exponent(key, value)
    channels = ChannelRates(**rates)

    integ = _table(doc, "integration")
    _check_keys("integration", integ, _INTEGRATION)
    defaulted += [f"integration.{k}" for k in sorted(_INTEGRATION - set(integ))]
    try:
        integration = Integration(**integ)
        integration.ptsim
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[integration]: {exc}") from None
    if not integration.dt > 0 or integration.t_end < 0:
        raise ConfigError("[integration]: dt must be positive and t_end non-negative")
    if integration.stride < 1:
        raise ConfigError("[integration]: stride must be at least 1")
    if integration.engine not in ("sector", "dense"):
        raise ConfigError("[integration]: engine must be 'sector' or 'dense'")
    if integration.substep not in SUBSTEPS:
        raise ConfigError("[integration]: substep must be 'kraus' or 'euler'")
    if not 0 < integration.trace_tol < 1 or not 0 < integration.threshold < 1:
        raise ConfigError("[integration]: trace_tol and threshold must lie in (0, 1)")

    sweep = _table(doc, "sweep")
    _check_keys("sweep", sweep, _SWEEP)
    threads = int(sweep.get("threads", 1))
    if threads < 1:
        raise ConfigError("[sweep]: threads must be at least 1")
    raw_axes = sweep.get("axis", [])
    if not isinstance(raw_axes, list):
        raise ConfigError("[sweep]: axis must be an array of tables ([[sweep.axis]])")
    axes = tuple(_parse_axis(a, i) for i, a in enumerate(raw_axes))
    if len(axes) > 2:
        raise ConfigError("[sweep]: at most two axes")
    if len({a.quantity for a in axes}) != len(axes):
        raise ConfigError("[sweep]: axes must sweep distinct quantities")

    out = _table(doc, "output")
    _check_keys("output", out, _OUTPUT)
    prefix = str(out.get("prefix", "h2ion"))

    if scenario != "influx":
        nonzero_mu = [k for k in ("mu_photon", "mu_phonon", "mu_electron") if getattr(channels, k) != 0]
        nonzero_mu += [a.quantity for a in axes if a.quantity.startswith("mu_")]
        if nonzero_mu:
            raise ConfigError(f"influx ratios ({', '.join(nonzero_mu)}) require scenario = \"influx\"")

    return RunConfig(
        scenario=scenario,
        initial_state=initial,
        params=params,
        cutoffs=Cutoffs.uniform(cut12, cut01),
        channels=channels,
        integration=integration,
        axes=axes,
        threads=threads,
        prefix=prefix,
        defaulted=tuple(defaulted),
    )


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: malformed config: {exc}") from None
    return parse_config(doc)


def _fmt(value) -> str:
    if isinstance(value, float):
        return "off" if value == -math.inf else repr(value)
    return str(value.value if hasattr(value, "value") else value)


def resolved_lines(cfg: RunConfig) -> list[str]:
    """Every setting the run uses, one ``key = value`` per line; defaults are marked."""
    dflt = set(cfg.defaulted)
    lines = [f"scenario = {cfg.scenario}", f"initial_state = {cfg.initial_state.value}"]
    if "initial_state" in dflt:
        lines[-1] += "  (default)"

    def add(prefix, mapping):
        for k, v in mapping.items():
            tag = "  (default)" if f"{prefix}.{k}" in dflt else ""
            lines.append(f"{prefix}.{k} = {_fmt(v)}{tag}")

    add("model", {**asdict(cfg.params), "cutoff12": cfg.cutoffs.p1, "cutoff01": cfg.cutoffs.p3})
    add("channels", asdict(cfg.channels))
    add("integration", asdict(cfg.integration))
    lines.append(f"sweep.threads = {cfg.threads}")
    for i, a in enumerate(cfg.axes):
        lines.append(f"sweep.axis[{i}].quantity = {a.quantity}")
        lines.append(f"sweep.axis[{i}].values = {' '.join(_fmt(v) for v in a.values)}")
    lines.append(f"output.prefix = {cfg.prefix}")
    return lines
