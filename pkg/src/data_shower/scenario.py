"""
Scenario files: TOML documents describing the channel, the vehicles, and the settings of every experiment.

Parsing never stops at the first problem. Every violated invariant is collected as a diagnostic that
names its config path, and `ScenarioError` carries the whole list.
"""

import copy
import hashlib
import json
import math
import tomllib
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from loguru import logger

from data_shower.channel import CapacityModel, MmWaveParams, ThzParams, read_absorption_table
from data_shower.errors import DataShowerError, ScenarioError
from data_shower.macsim import ProtocolConfig
from data_shower.trajectory import StraightLinePath, TraceTrajectory, Trajectory, read_trace
from data_shower.utils import bundled_path, kmh_to_ms, resolve_path

DEFAULT_SCENARIO = "defaults.toml"
DEFAULT_OVERHEAD_RATIOS = (1.0e-4, 1.0e-3, 1.0e-2, 1.0e-1, 1.0)

type RawScenario = dict[str, Any]

# TOML key -> (dataclass field, conversion)
THZ_KEYS: dict[str, tuple[str, Callable[[Any], Any]]] = {
    "f_c_hz": ("f_c", float),
    "bandwidth_hz": ("bandwidth", float),
    "n_subbands": ("n_subbands", int),
    "tx_power_dbm": ("tx_power", float),
    "antenna_gain_db": ("antenna_gain", float),
    "d_th_m": ("d_th", float),
    "noise_floor_w_per_hz": ("noise_floor_psd", float),
    "ambient_temperature_k": ("ambient_temperature", float),
    "gamma_th_fraction": ("gamma_th_fraction", float),
    "gain_per_end": ("gain_per_end", bool),
}
MMWAVE_KEYS: dict[str, tuple[str, Callable[[Any], Any]]] = {
    "f_c_hz": ("f_c", float),
    "bandwidth_hz": ("bandwidth", float),
    "pl_intercept_los_db": ("pl_intercept_los", float),
    "pl_slope_los": ("pl_slope_los", float),
    "pl_intercept_nlos_db": ("pl_intercept_nlos", float),
    "pl_slope_nlos": ("pl_slope_nlos", float),
    "tx_power_dbm": ("tx_power", float),
    "antenna_gain_db": ("antenna_gain", float),
    "noise_power_dbm": ("noise_power", float),
    "noise_figure_db": ("noise_figure", float),
    "d_th_m": ("d_th", float),
    "los_scale_m": ("a_los", lambda x: 1.0 / x),
    "outage_scale_m": ("a_out", lambda x: 1.0 / x),
    "b_out": ("b_out", float),
}
PROTOCOL_KEYS: dict[str, tuple[str, Callable[[Any], Any]]] = {
    "chunk_duration_s": ("chunk_duration", float),
    "packet_size_bits": ("packet_size", float),
    "thz_loss_prob": ("thz_loss_prob", float),
    "mmwave_loss_prob": ("mmwave_loss_prob", float),
    "ack_loss_prob": ("ack_loss_prob", float),
    "ack_delay_s": ("ack_delay", float),
    "ul_dl_split": ("ul_dl_split", float),
    "phase_switch_guard_s": ("phase_switch_guard", float),
    "outage_bursts": ("outage_bursts", bool),
    "burst_exit_prob": ("burst_exit_prob", float),
}
TOP_LEVEL = {"channel", "tower", "vehicles", "fleet", "bulk", "scheduler", "protocol", "run", "grids"}
FLEET_KEYS = {"n_vehicles", "speed_range_mps", "arrival_span_s", "d_min_m", "demand_bits", "overhead_s"}
BULK_KEYS = {
    "thz_tx_power_dbm",
    "d_min_grid_m",
    "speeds_kmh",
    "trace",
    "trace_native_speed_mps",
    "trace_speeds_kmh",
    "time_step_m",
}
SCHEDULER_KEYS = {
    "slot_duration_s",
    "algorithm",
    "budget",
    "compare_slot_duration_s",
    "compare_vehicles",
    "compare_arrival_span_s",
    "demand_range_bits",
    "overhead_ratios",
}
GRID_KEYS = {
    "distance_max_m",
    "distance_step_m",
    "thz_distance_step_m",
    "gamma_th_fractions",
    "tx_powers_dbm",
    "capacity_distance_step_m",
}


@dataclass(frozen=True)
class VehicleSpec:
    vehicle_id: str  # unique name
    trajectory: Trajectory  # straight pass or trace
    demand: float  # D_v, bits
    overhead: float = 0.0  # T^O_v, s


@dataclass(frozen=True)
class FleetSettings:
    n_vehicles: int = 5
    speed_range: tuple[float, float] = (3.0, 7.0)  # m/s
    arrival_span: float = 60.0  # s
    d_min: float = 5.0  # m
    d_entry: float = 200.0  # m
    demand: float = 5.0e12  # bits per vehicle
    overhead: float = 0.0  # s


@dataclass(frozen=True)
class BulkSettings:
    thz_tx_power: float = 20.0  # dBm used by the bulk experiments
    d_min_grid: tuple[float, ...] = (0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0)  # m
    speeds_kmh: tuple[float, ...] = (2.0, 5.0, 10.0, 20.0, 30.0, 50.0)
    trace: str = "bundled:boston_like_trace.csv"
    trace_native_speed: float = 1.0  # m/s the trace was sampled at
    trace_speeds_kmh: tuple[float, ...] = (2.0, 5.0, 10.0, 20.0, 30.0, 50.0)
    time_step: float = 0.1  # max distance change between time samples, m


@dataclass(frozen=True)
class SchedulerSettings:
    slot_duration: float = 0.0865  # s
    algorithm: str = "greedy"
    budget: float = 1.0e8
    compare_slot_duration: float = 10.0  # s
    compare_vehicles: int = 2
    compare_arrival_span: float = 10.0  # s, arrivals of the compared vehicles
    demand_range: tuple[float, float] = (5.0e13, 1.0e14)  # bits
    overhead_ratios: tuple[float, ...] = DEFAULT_OVERHEAD_RATIOS


@dataclass(frozen=True)
class RunSettings:
    seed: int = 1
    runs: int = 1000
    out_dir: str = "out"


@dataclass(frozen=True)
class GridSettings:
    distance_max: float = 400.0  # m, state-probs-mm range
    distance_step: float = 1.0  # m
    thz_distance_step: float = 0.1  # m, up to d_th^THz
    gamma_th_fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    tx_powers_dbm: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    capacity_distance_step: float = 0.5  # m


@dataclass(frozen=True, eq=False)
class Scenario:
    raw: RawScenario  # document as parsed, after overrides
    base_dir: Path  # relative file references resolve here
    model: CapacityModel
    vehicles: tuple[VehicleSpec, ...] = ()
    fleet: FleetSettings = field(default_factory=FleetSettings)
    bulk: BulkSettings = field(default_factory=BulkSettings)
    scheduler: SchedulerSettings = field(default_factory=SchedulerSettings)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    run: RunSettings = field(default_factory=RunSettings)
    grids: GridSettings = field(default_factory=GridSettings)
    tower: tuple[float, float] = (0.0, 0.0)

    @property
    def sha256(self) -> str:
        return scenario_hash(self.raw)

    @property
    def provenance(self) -> str:
        """Header text every result file starts with, after `# `."""
        return f"scenario_sha256={self.sha256} seed={self.run.seed}"


@dataclass(frozen=True)
class SweepSpec:
    path: str  # dotted key, e.g. channel.thz.tx_power_dbm
    values: tuple[Any, ...]
    runs: int | None = None  # Monte Carlo runs per value; None keeps the scenario's

    def __post_init__(self) -> None:
        if not self.values:
            raise ScenarioError(f"sweep over {self.path} has no values")
        if self.runs is not None and self.runs < 1:
            raise ScenarioError(f"sweep runs must be >= 1, got {self.runs}")


def scenario_hash(raw: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a scenario mapping."""
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def read_raw_scenario(path: str | Path | None = None) -> tuple[RawScenario, Path]:
    """Parse a scenario file (the bundled defaults when path is None); returns the mapping and its directory."""
    path = bundled_path(DEFAULT_SCENARIO) if path is None else Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"{path}: {e}") from e
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e.strerror}") from e
    return raw, path.parent


class _Reader:
    """Typed access to a raw scenario that records a diagnostic for every bad value."""

    def __init__(self, raw: Mapping[str, Any]) -> None:
        self.raw = raw
        self.diagnostics: list[str] = []

    def report(self, where: str, message: str) -> None:
        self.diagnostics.append(f"{where}: {message}")

    def table(self, where: str, parent: Mapping[str, Any] | None = None) -> Mapping[str, Any]:
        parent = self.raw if parent is None else parent
        name = where.rsplit(".", 1)[-1]
        value = parent.get(name, {})
        if not isinstance(value, Mapping):
            self.report(where, "must be a table")
            return {}
        return value

    def unknown(self, where: str, table: Mapping[str, Any], known: set[str]) -> None:
        for key in table:
            if key not in known:
                self.report(f"{where}.{key}" if where else key, "unknown key")

    def number(self, where: str, table: Mapping[str, Any], key: str, default: float | None) -> float:
        """A numeric value; NaN after a diagnostic when it is invalid, or missing without a default."""
        if key not in table:
            if default is None:
                self.report(f"{where}.{key}", "is required")
                return math.nan
            return default
        value = table[key]
        if isinstance(value, bool) or not isinstance(value, int | float) or math.isnan(value) or value == math.inf:
            self.report(f"{where}.{key}", f"must be a number, got {value!r}")
            return math.nan
        return float(value)

    def integer(self, where: str, table: Mapping[str, Any], key: str, default: int) -> int:
        value = table.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            self.report(f"{where}.{key}", f"must be an integer, got {value!r}")
            return default
        return value

    def string(self, where: str, table: Mapping[str, Any], key: str, default: str) -> str:
        value = table.get(key, default)
        if not isinstance(value, str):
            self.report(f"{where}.{key}", f"must be a string, got {value!r}")
            return default
        return value

    def numbers(self, where: str, table: Mapping[str, Any], key: str, default: tuple[float, ...]) -> tuple[float, ...]:
        value = table.get(key, list(default))
        ok = isinstance(value, list) and all(
            isinstance(x, int | float) and not isinstance(x, bool) and math.isfinite(x) for x in value
        )
        if not ok:
            self.report(f"{where}.{key}", f"must be a list of numbers, got {value!r}")
            return default
        if not value:
            self.report(f"{where}.{key}", "must not be empty")
            return default
        return tuple(float(x) for x in value)

    def mapped(
        self, where: str, table: Mapping[str, Any], keys: Mapping[str, tuple[str, Callable[[Any], Any]]]
    ) -> dict[str, Any]:
        """Dataclass keyword arguments for the keys present in a table."""
        kwargs: dict[str, Any] = {}
        for key, (name, convert) in keys.items():
            if key not in table:
                continue
            value = table[key]
            if convert is bool:
                if not isinstance(value, bool):
                    self.report(f"{where}.{key}", f"must be true or false, got {value!r}")
                    continue
                kwargs[name] = value
                continue
            if convert is int:
                kwargs[name] = self.integer(where, table, key, 0)
                continue
            number = self.number(where, table, key, None)
            if math.isnan(number):
                continue
            try:
                kwargs[name] = convert(number)
            except ZeroDivisionError:
                self.report(f"{where}.{key}", "must not be 0")
        return kwargs


def _build[T](reader: _Reader, where: str, factory: Callable[..., T], kwargs: dict[str, Any]) -> T | None:
    try:
        return factory(**kwargs)
    except (ValueError, DataShowerError) as e:
        reader.report(where, str(e))
        return None


def _parse_channel(reader: _Reader, base_dir: Path) -> CapacityModel | None:
    channel = reader.table("channel")
    reader.unknown("channel", channel, {"thz", "mmwave"})
    thz_table = reader.table("channel.thz", channel)
    mm_table = reader.table("channel.mmwave", channel)
    reader.unknown("channel.thz", thz_table, set(THZ_KEYS) | {"absorption_table"})
    reader.unknown("channel.mmwave", mm_table, set(MMWAVE_KEYS))

    thz_kwargs = reader.mapped("channel.thz", thz_table, THZ_KEYS)
    if "absorption_table" in thz_table:
        reference = reader.string("channel.thz", thz_table, "absorption_table", "")
        table_path = resolve_path(reference, base_dir)
        if not table_path.is_file():
            reader.report("channel.thz.absorption_table", f"file not found: {table_path}")
        else:
            try:
                thz_kwargs["absorption"] = read_absorption_table(table_path)
            except DataShowerError as e:
                reader.report("channel.thz.absorption_table", str(e))
    thz = _build(reader, "channel.thz", ThzParams, thz_kwargs)
    mmwave = _build(reader, "channel.mmwave", MmWaveParams, reader.mapped("channel.mmwave", mm_table, MMWAVE_KEYS))
    if thz is None or mmwave is None:
        return None
    if thz.d_th >= mmwave.d_th:
        reader.report(
            "channel.thz.d_th_m",
            f"must be < channel.mmwave.d_th_m (got {thz.d_th:g} m and {mmwave.d_th:g} m)",
        )
        return None
    return CapacityModel(thz=thz, mmwave=mmwave)


def _parse_vehicles(
    reader: _Reader, base_dir: Path, tower: tuple[float, float], d_entry: float
) -> tuple[VehicleSpec, ...]:
    entries = reader.raw.get("vehicles", [])
    if not isinstance(entries, list):
        reader.report("vehicles", "must be an array of tables")
        return ()
    known = {"id", "trace", "time_scale", "d_min_m", "speed_mps", "speed_kmh", "d_entry_m", "t_start_s"}
    known |= {"demand_bits", "overhead_s"}
    vehicles: list[VehicleSpec] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        where = f"vehicles[{i}]"
        if not isinstance(entry, Mapping):
            reader.report(where, "must be a table")
            continue
        reader.unknown(where, entry, known)
        vehicle_id = reader.string(where, entry, "id", f"vehicle-{i + 1}")
        if vehicle_id in seen:
            reader.report(f"{where}.id", f"duplicate vehicle id {vehicle_id!r}")
        seen.add(vehicle_id)
        demand = reader.number(where, entry, "demand_bits", None)
        if demand <= 0.0:
            reader.report(f"{where}.demand_bits", f"must be > 0, got {demand:g}")
        overhead = reader.number(where, entry, "overhead_s", 0.0)
        if overhead < 0.0:
            reader.report(f"{where}.overhead_s", f"must be >= 0, got {overhead}")

        trajectory: Trajectory | None = None
        if "trace" in entry:
            trace_path = resolve_path(reader.string(where, entry, "trace", ""), base_dir)
            if not trace_path.is_file():
                reader.report(f"{where}.trace", f"file not found: {trace_path}")
            else:
                try:
                    trace: TraceTrajectory | None = read_trace(trace_path, tower)
                except DataShowerError as e:
                    reader.report(f"{where}.trace", str(e))
                    trace = None
                scale = reader.number(where, entry, "time_scale", 1.0)
                if trace is not None and scale > 0.0:
                    trajectory = trace.time_scaled(scale) if scale != 1.0 else trace
                elif scale <= 0.0:
                    reader.report(f"{where}.time_scale", f"must be > 0, got {scale}")
        else:
            if "speed_kmh" in entry:
                speed = kmh_to_ms(reader.number(where, entry, "speed_kmh", None))
            else:
                speed = reader.number(where, entry, "speed_mps", None)
            path_kwargs = {
                "d_min": reader.number(where, entry, "d_min_m", None),
                "speed": speed,
                "d_entry": reader.number(where, entry, "d_entry_m", d_entry),
                "t_start": reader.number(where, entry, "t_start_s", 0.0),
            }
            if not any(math.isnan(v) for v in path_kwargs.values()):
                trajectory = _build(reader, where, StraightLinePath, path_kwargs)
        if trajectory is not None and demand > 0.0 and overhead >= 0.0:
            vehicles.append(VehicleSpec(vehicle_id, trajectory, demand, overhead))
    return tuple(vehicles)


def _pair(
    reader: _Reader, where: str, table: Mapping[str, Any], key: str, default: tuple[float, float]
) -> tuple[float, float]:
    values = reader.numbers(where, table, key, default)
    if len(values) != 2 or not 0.0 < values[0] <= values[1]:
        reader.report(f"{where}.{key}", f"must be [low, high] with 0 < low <= high, got {list(values)}")
        return default
    return values[0], values[1]


def _parse_settings(reader: _Reader, d_entry: float) -> dict[str, Any]:
    fleet_t = reader.table("fleet")
    reader.unknown("fleet", fleet_t, FLEET_KEYS)
    fleet = FleetSettings(
        n_vehicles=reader.integer("fleet", fleet_t, "n_vehicles", FleetSettings.n_vehicles),
        speed_range=_pair(reader, "fleet", fleet_t, "speed_range_mps", FleetSettings.speed_range),
        arrival_span=reader.number("fleet", fleet_t, "arrival_span_s", FleetSettings.arrival_span),
        d_min=reader.number("fleet", fleet_t, "d_min_m", FleetSettings.d_min),
        d_entry=d_entry,
        demand=reader.number("fleet", fleet_t, "demand_bits", FleetSettings.demand),
        overhead=reader.number("fleet", fleet_t, "overhead_s", FleetSettings.overhead),
    )
    if fleet.n_vehicles < 1:
        reader.report("fleet.n_vehicles", f"must be >= 1, got {fleet.n_vehicles}")
    if fleet.arrival_span < 0.0:
        reader.report("fleet.arrival_span_s", f"must be >= 0, got {fleet.arrival_span}")
    if not 0.0 <= fleet.d_min < d_entry:
        reader.report("fleet.d_min_m", f"must be in [0, {d_entry:g}), got {fleet.d_min}")
    if not fleet.demand > 0.0:
        reader.report("fleet.demand_bits", f"must be > 0, got {fleet.demand}")
    if fleet.overhead < 0.0:
        reader.report("fleet.overhead_s", f"must be >= 0, got {fleet.overhead}")

    bulk_t = reader.table("bulk")
    reader.unknown("bulk", bulk_t, BULK_KEYS)
    bulk = BulkSettings(
        thz_tx_power=reader.number("bulk", bulk_t, "thz_tx_power_dbm", BulkSettings.thz_tx_power),
        d_min_grid=reader.numbers("bulk", bulk_t, "d_min_grid_m", BulkSettings.d_min_grid),
        speeds_kmh=reader.numbers("bulk", bulk_t, "speeds_kmh", BulkSettings.speeds_kmh),
        trace=reader.string("bulk", bulk_t, "trace", BulkSettings.trace),
        trace_native_speed=reader.number("bulk", bulk_t, "trace_native_speed_mps", BulkSettings.trace_native_speed),
        trace_speeds_kmh=reader.numbers("bulk", bulk_t, "trace_speeds_kmh", BulkSettings.trace_speeds_kmh),
        time_step=reader.number("bulk", bulk_t, "time_step_m", BulkSettings.time_step),
    )
    if any(d < 0.0 or d >= d_entry for d in bulk.d_min_grid):
        reader.report("bulk.d_min_grid_m", f"values must be in [0, {d_entry:g})")
    for key, speeds in (("speeds_kmh", bulk.speeds_kmh), ("trace_speeds_kmh", bulk.trace_speeds_kmh)):
        if any(s <= 0.0 for s in speeds):
            reader.report(f"bulk.{key}", "speeds must be > 0")
    if bulk.trace_native_speed <= 0.0:
        reader.report("bulk.trace_native_speed_mps", f"must be > 0, got {bulk.trace_native_speed}")
    if bulk.time_step <= 0.0:
        reader.report("bulk.time_step_m", f"must be > 0, got {bulk.time_step}")

    sched_t = reader.table("scheduler")
    reader.unknown("scheduler", sched_t, SCHEDULER_KEYS)
    scheduler = SchedulerSettings(
        slot_duration=reader.number("scheduler", sched_t, "slot_duration_s", SchedulerSettings.slot_duration),
        algorithm=reader.string("scheduler", sched_t, "algorithm", SchedulerSettings.algorithm),
        budget=reader.number("scheduler", sched_t, "budget", SchedulerSettings.budget),
        compare_slot_duration=reader.number(
            "scheduler", sched_t, "compare_slot_duration_s", SchedulerSettings.compare_slot_duration
        ),
        compare_vehicles=reader.integer("scheduler", sched_t, "compare_vehicles", SchedulerSettings.compare_vehicles),
        compare_arrival_span=reader.number(
            "scheduler", sched_t, "compare_arrival_span_s", SchedulerSettings.compare_arrival_span
        ),
        demand_range=_pair(reader, "scheduler", sched_t, "demand_range_bits", SchedulerSettings.demand_range),
        overhead_ratios=reader.numbers("scheduler", sched_t, "overhead_ratios", SchedulerSettings.overhead_ratios),
    )
    if scheduler.slot_duration <= 0.0:
        reader.report("scheduler.slot_duration_s", f"must be > 0, got {scheduler.slot_duration}")
    if scheduler.compare_slot_duration <= 0.0:
        reader.report("scheduler.compare_slot_duration_s", f"must be > 0, got {scheduler.compare_slot_duration}")
    if scheduler.algorithm not in ("greedy", "optimal", "random"):
        reader.report("scheduler.algorithm", f"must be greedy, optimal or random, got {scheduler.algorithm!r}")
    if scheduler.budget < 1.0:
        reader.report("scheduler.budget", f"must be >= 1, got {scheduler.budget}")
    if scheduler.compare_vehicles < 1:
        reader.report("scheduler.compare_vehicles", f"must be >= 1, got {scheduler.compare_vehicles}")
    if scheduler.compare_arrival_span < 0.0:
        reader.report("scheduler.compare_arrival_span_s", f"must be >= 0, got {scheduler.compare_arrival_span}")
    if any(r < 0.0 for r in scheduler.overhead_ratios):
        reader.report("scheduler.overhead_ratios", "ratios must be >= 0")

    protocol_t = reader.table("protocol")
    reader.unknown("protocol", protocol_t, set(PROTOCOL_KEYS))
    protocol = _build(reader, "protocol", ProtocolConfig, reader.mapped("protocol", protocol_t, PROTOCOL_KEYS))

    run_t = reader.table("run")
    reader.unknown("run", run_t, {"seed", "runs", "out_dir"})
    if "seed" not in run_t:
        reader.report("run.seed", "is required")
    run = RunSettings(
        seed=reader.integer("run", run_t, "seed", RunSettings.seed),
        runs=reader.integer("run", run_t, "runs", RunSettings.runs),
        out_dir=reader.string("run", run_t, "out_dir", RunSettings.out_dir),
    )
    if run.runs < 1:
        reader.report("run.runs", f"must be >= 1, got {run.runs}")
    if run.seed < 0:
        reader.report("run.seed", f"must be >= 0, got {run.seed}")

    grids_t = reader.table("grids")
    reader.unknown("grids", grids_t, GRID_KEYS)
    grids = GridSettings(
        distance_max=reader.number("grids", grids_t, "distance_max_m", GridSettings.distance_max),
        distance_step=reader.number("grids", grids_t, "distance_step_m", GridSettings.distance_step),
        thz_distance_step=reader.number("grids", grids_t, "thz_distance_step_m", GridSettings.thz_distance_step),
        gamma_th_fractions=reader.numbers("grids", grids_t, "gamma_th_fractions", GridSettings.gamma_th_fractions),
        tx_powers_dbm=reader.numbers("grids", grids_t, "tx_powers_dbm", GridSettings.tx_powers_dbm),
        capacity_distance_step=reader.number(
            "grids", grids_t, "capacity_distance_step_m", GridSettings.capacity_distance_step
        ),
    )
    for key in ("distance_max", "distance_step", "thz_distance_step", "capacity_distance_step"):
        if getattr(grids, key) <= 0.0:
            reader.report(f"grids.{key}_m", f"must be > 0, got {getattr(grids, key)}")
    if any(not 0.0 < g <= 1.0 for g in grids.gamma_th_fractions):
        reader.report("grids.gamma_th_fractions", "fractions must be in (0, 1]")

    return {"fleet": fleet, "bulk": bulk, "scheduler": scheduler, "protocol": protocol, "run": run, "grids": grids}


def _diagnose(raw: RawScenario, base_dir: Path) -> tuple[list[str], Scenario | None]:
    reader = _Reader(raw)
    reader.unknown("", raw, TOP_LEVEL)
    model = _parse_channel(reader, base_dir)
    d_entry = model.d_th_mm if model is not None else MmWaveParams.d_th

    tower_t = reader.table("tower")
    reader.unknown("tower", tower_t, {"x_m", "y_m"})
    tower = (reader.number("tower", tower_t, "x_m", 0.0), reader.number("tower", tower_t, "y_m", 0.0))
    vehicles = _parse_vehicles(reader, base_dir, tower, d_entry)
    settings = _parse_settings(reader, d_entry)
    trace_path = resolve_path(settings["bulk"].trace, base_dir)
    if not trace_path.is_file():
        reader.report("bulk.trace", f"file not found: {trace_path}")

    if reader.diagnostics or model is None or settings["protocol"] is None:
        return reader.diagnostics, None
    scenario = Scenario(raw=raw, base_dir=base_dir, model=model, vehicles=vehicles, tower=tower, **settings)
    return [], scenario


def parse_scenario(raw: RawScenario, base_dir: Path) -> Scenario:
    """Build a Scenario from a parsed mapping, raising ScenarioError with every diagnostic."""
    diagnostics, scenario = _diagnose(raw, base_dir)
    if scenario is None:
        raise ScenarioError(f"invalid scenario ({len(diagnostics)} problem(s))", diagnostics)
    return scenario


def load_scenario(path: str | Path | None = None) -> Scenario:
    """Read and validate a scenario file; the bundled defaults when path is None."""
    raw, base_dir = read_raw_scenario(path)
    scenario = parse_scenario(raw, base_dir)
    logger.info(f"Loaded scenario {path or DEFAULT_SCENARIO} (sha256 {scenario.sha256[:12]})")
    return scenario


def validate_scenario(path: str | Path | None = None) -> list[str]:
    """Every violated invariant of a scenario file, as `config.path: message` lines; empty when clean."""
    raw, base_dir = read_raw_scenario(path)
    return _diagnose(raw, base_dir)[0]


def _parse_value(token: str) -> Any:
    token = token.strip()
    try:
        return tomllib.loads(f"value = {token}")["value"]
    except tomllib.TOMLDecodeError:
        return token


def parse_sweep(text: str, runs: int | None = None) -> SweepSpec:
    """Parse `PATH=V1,V2,...`; values use TOML syntax and fall back to plain strings."""
    path, sep, values = text.partition("=")
    if not sep or not path.strip() or not values.strip():
        raise ScenarioError(f"sweep must look like PATH=V1,V2,..., got {text!r}")
    return SweepSpec(path=path.strip(), values=tuple(_parse_value(v) for v in values.split(",")), runs=runs)


def apply_override(raw: Mapping[str, Any], path: str, value: Any) -> RawScenario:
    """
    Copy of the scenario mapping with the value at a dotted path replaced.

    The first component must name a scenario table. Integer components index arrays of tables
    (`vehicles.0.speed_mps`); missing tables along the path are created, and unknown keys surface as
    diagnostics when the result is parsed.
    """
    parts = path.split(".")
    if len(parts) < 2 or parts[0] not in TOP_LEVEL:
        raise ScenarioError(f"sweep path {path!r} does not resolve against the scenario")
    updated = copy.deepcopy(dict(raw))
    node: Any = updated
    for part in parts[:-1]:
        if isinstance(node, list) and part.isdigit() and int(part) < len(node):
            node = node[int(part)]
        elif isinstance(node, dict):
            node = node.setdefault(part, {})
        else:
            node = None
        if not isinstance(node, dict | list):
            raise ScenarioError(f"sweep path {path!r} does not resolve against the scenario")
    last = parts[-1]
    if isinstance(node, list) and last.isdigit() and int(last) < len(node):
        node[int(last)] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ScenarioError(f"sweep path {path!r} does not resolve against the scenario")
    return updated
