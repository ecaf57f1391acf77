"""Experiment definitions stored as YAML, and the bundled presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .errors import InvalidArgumentError, UnknownExperimentError
from .netmodel import Topology, build_fat_tree, make_sfcrs
from .traffic import HourlyTrace, TrafficSeries, linear_ramp, read_trace_csv, synth_week_trace, trace_to_series

RAMP = "ramp"
TRACE = "trace"


@dataclass(frozen=True)
class TrafficSpec:
    """Either a linear ramp or the weekly trace with scale and phase shift.

    ``trace_path`` is an optional CSV of hourly request counts; without it the
    synthetic week generated from ``trace_seed`` is used.
    """

    kind: str = TRACE
    start_rps: float = 1.0
    end_rps: float = 50.0
    duration_s: int = 300
    scale: float = 1.0
    phase_shift: float = 0.0
    seconds_per_hour: int = 5
    trace_seed: int = 0
    trace_path: str | None = None

    def __post_init__(self):
        if self.kind not in (RAMP, TRACE):
            raise InvalidArgumentError(f"traffic kind must be '{RAMP}' or '{TRACE}', got {self.kind!r}")
        if self.kind == RAMP and self.duration_s < 1:
            raise InvalidArgumentError("ramp duration must be at least 1 s")
        if self.kind == TRACE and (self.scale <= 0 or self.seconds_per_hour < 1):
            raise InvalidArgumentError("trace scale must be positive and seconds_per_hour >= 1")

    def trace(self) -> HourlyTrace:
        return read_trace_csv(self.trace_path) if self.trace_path else synth_week_trace(self.trace_seed)

    def series(self) -> TrafficSeries:
        if self.kind == RAMP:
            return linear_ramp(self.start_rps, self.end_rps, self.duration_s)
        return trace_to_series(self.trace(), self.scale, self.phase_shift, self.seconds_per_hour)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    cpus_per_host: float
    link_bandwidth_mbps: float
    memory_gb: float = 5.0
    prop_delay_ms: float = 1.0
    n_sfcrs: int = 32
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    seeds: tuple[int, ...] = (0,)
    fat_tree_k: int = 4

    def __post_init__(self):
        if self.cpus_per_host <= 0 or self.link_bandwidth_mbps <= 0 or self.memory_gb <= 0:
            raise InvalidArgumentError("host and link resources must be positive")
        if self.prop_delay_ms < 0:
            raise InvalidArgumentError("propagation delay must be non-negative")
        if self.n_sfcrs < 4 or self.n_sfcrs % 4:
            raise InvalidArgumentError("n_sfcrs must be a positive multiple of 4")
        if not self.seeds:
            raise InvalidArgumentError("at least one seed is required")

    def topology(self) -> Topology:
        return build_fat_tree(
            self.fat_tree_k, self.cpus_per_host, self.memory_gb * 1024.0, self.link_bandwidth_mbps, self.prop_delay_ms
        )

    def sfcrs(self):
        return make_sfcrs(self.n_sfcrs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise InvalidArgumentError("experiment spec must be a mapping")
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown spec keys: {sorted(unknown)}")
        traffic = d.pop("traffic", None) or {}
        unknown = set(traffic) - set(TrafficSpec.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown traffic keys: {sorted(unknown)}")
        seeds = d.pop("seeds", (0,))
        try:
            return cls(traffic=TrafficSpec(**traffic), seeds=tuple(int(s) for s in seeds), **d)
        except TypeError as exc:
            raise InvalidArgumentError(str(exc)) from None


def dumps(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False)


def loads(text: str) -> ExperimentSpec:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidArgumentError(f"invalid YAML: {exc}") from None
    return ExperimentSpec.from_dict(doc)


def load_spec(path: str | Path) -> ExperimentSpec:
    return loads(Path(path).read_text())


def save_spec(spec: ExperimentSpec, path: str | Path) -> None:
    Path(path).write_text(dumps(spec))


PRESET_NAMES = ("baseline", "cpu", "bandwidth", "sfcrs", "traffic-scale", "traffic-pattern")


def preset(name: str) -> ExperimentSpec:
    if name not in PRESET_NAMES:
        raise UnknownExperimentError(f"unknown experiment {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return loads(resources.files("benns").joinpath("presets").joinpath(f"{name}.yaml").read_text())


def resolve(name_or_path: str) -> ExperimentSpec:
    """A preset name or a path to a YAML spec."""
    if name_or_path in PRESET_NAMES:
        return preset(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise UnknownExperimentError(f"no preset or file named {name_or_path!r}")
    return load_spec(path)
