"""
Experiments: each one turns a scenario into plot-ready CSV files.

All randomness is drawn from generators derived from the scenario seed, per experiment and run index,
so reruns with the same scenario and seed write byte-identical files.
"""

import dataclasses
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger
from tqdm import tqdm

from data_shower.bulk import bulk_closed_form, bulk_integral
from data_shower.channel import (
    CapacityModel,
    Region,
    mmwave_state_probs,
    thz_capacity_los,
    thz_outage_prob,
)
from data_shower.errors import DataShowerError
from data_shower.macsim import run_session, session_summary, write_session_summary, write_session_ticks
from data_shower.metrics import mean_confidence_interval
from data_shower.scenario import Scenario
from data_shower.scheduler import (
    Schedule,
    SlotGrid,
    VehicleDemand,
    build_slot_grid,
    schedule_greedy,
    schedule_optimal,
    schedule_random,
    write_instance,
    write_schedule,
)
from data_shower.trajectory import StraightLinePath, Trajectory, contact_windows, read_trace
from data_shower.utils import kmh_to_ms, n_jobs, resolve_path, spawn_generator

type Experiment = Callable[[Scenario, Path], list[Path]]

DISTANCE_SAMPLE_S = 0.5  # time step of the vehicle distance table


class UnknownExperimentError(DataShowerError, ValueError):
    """The requested experiment name is not registered."""


def write_csv(frame: pd.DataFrame, path: Path, scenario: Scenario) -> Path:
    """Write a result table preceded by a comment line recording the scenario hash and seed."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# {scenario.provenance}\n")
        frame.to_csv(f, index=False, float_format="%.10g", lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def _grid(upper: float, step: float) -> np.ndarray:
    """Evenly spaced points in (0, upper], the last one exactly upper."""
    n = max(1, round(upper / step))
    return np.linspace(upper / n, upper, n)


def _with_thz_power(model: CapacityModel, tx_power: float) -> CapacityModel:
    return CapacityModel(thz=dataclasses.replace(model.thz, tx_power=tx_power), mmwave=model.mmwave)


def generate_fleet(
    n_vehicles: int,
    speed_range: tuple[float, float],
    arrival_span: float,
    d_min: float,
    rng: np.random.Generator,
    d_entry: float = 200.0,
) -> list[StraightLinePath]:
    """Straight passes sharing d_min, with uniform random speeds in speed_range and arrivals in [0, arrival_span]."""
    if n_vehicles < 1:
        raise ValueError(f"n_vehicles must be >= 1, got {n_vehicles}")
    low, high = speed_range
    if not 0.0 < low <= high:
        raise ValueError(f"speed_range must satisfy 0 < low <= high, got {speed_range}")
    speeds = rng.uniform(low, high, size=n_vehicles)
    arrivals = rng.uniform(0.0, arrival_span, size=n_vehicles)
    return [
        StraightLinePath(d_min=d_min, speed=float(v), d_entry=d_entry, t_start=float(t))
        for v, t in zip(speeds, arrivals, strict=True)
    ]


def scenario_vehicles(scenario: Scenario) -> tuple[dict[str, Trajectory], dict[str, VehicleDemand]]:
    """The scenario's explicit vehicles, or a fleet drawn from its [fleet] settings and seed."""
    if scenario.vehicles:
        trajectories = {v.vehicle_id: v.trajectory for v in scenario.vehicles}
        demands = {v.vehicle_id: VehicleDemand(v.vehicle_id, v.demand, v.overhead) for v in scenario.vehicles}
        return trajectories, demands
    fleet = scenario.fleet
    paths = generate_fleet(
        fleet.n_vehicles,
        fleet.speed_range,
        fleet.arrival_span,
        fleet.d_min,
        spawn_generator(scenario.run.seed, "fleet"),
        d_entry=scenario.model.d_th_mm,
    )
    ids = [f"vehicle-{i + 1}" for i in range(len(paths))]
    return dict(zip(ids, paths, strict=True)), {v: VehicleDemand(v, fleet.demand, fleet.overhead) for v in ids}


def schedule_journeys(
    grids: list[SlotGrid],
    demands: dict[str, VehicleDemand],
    algorithm: str,
    rng: np.random.Generator | None = None,
    budget: float = 1.0e8,
) -> list[Schedule]:
    """Schedule each journey grid on its own; demands reset at every journey, so each grid owes the full D_v."""
    schedules = []
    for grid in grids:
        switched = grid.switched_bits(demands)
        if algorithm == "optimal":
            schedule = schedule_optimal(grid, demands, budget=budget, switched_bits=switched)
        elif algorithm == "greedy":
            schedule = schedule_greedy(grid, demands, rng=rng, switched_bits=switched)
        elif algorithm == "random":
            if rng is None:
                raise ValueError("the random scheduler needs a generator")
            schedule = schedule_random(grid, demands, rng, switched_bits=switched)
        else:
            raise ValueError(f"unknown scheduler {algorithm!r}")
        schedules.append(schedule)
    return schedules


def state_probs_mm(scenario: Scenario, out_dir: Path) -> list[Path]:
    d = _grid(scenario.grids.distance_max, scenario.grids.distance_step)
    p_los, p_nlos, p_out = mmwave_state_probs(d, scenario.model.mmwave)
    frame = pd.DataFrame({"distance_m": d, "p_los": p_los, "p_nlos": p_nlos, "p_outage": p_out})
    return [write_csv(frame, out_dir / "state-probs-mm.csv", scenario)]


def state_probs_thz(scenario: Scenario, out_dir: Path) -> list[Path]:
    thz = scenario.model.thz
    d = _grid(thz.d_th, scenario.grids.thz_distance_step)
    frames = []
    for fraction in scenario.grids.gamma_th_fractions:
        p_out = thz_outage_prob(d, dataclasses.replace(thz, gamma_th_fraction=fraction))
        frame = {"gamma_th_fraction": fraction, "distance_m": d, "p_los": 1.0 - p_out, "p_outage": p_out}
        frames.append(pd.DataFrame(frame))
    return [write_csv(pd.concat(frames, ignore_index=True), out_dir / "state-probs-thz.csv", scenario)]


def thz_capacity_grid(scenario: Scenario, out_dir: Path) -> list[Path]:
    thz = scenario.model.thz
    d = _grid(thz.d_th, scenario.grids.capacity_distance_step)
    frames = []
    for power in scenario.grids.tx_powers_dbm:
        params = dataclasses.replace(thz, tx_power=power)
        capacity = np.asarray(thz_capacity_los(d, params))
        p_out = np.asarray(thz_outage_prob(d, params))
        frames.append(
            pd.DataFrame(
                {
                    "tx_power_dbm": power,
                    "distance_m": d,
                    "capacity_los_bps": capacity,
                    "p_outage": p_out,
                    "capacity_bps": capacity * (1.0 - p_out),
                }
            )
        )
    return [write_csv(pd.concat(frames, ignore_index=True), out_dir / "thz-capacity-grid.csv", scenario)]


def combined_capacity_grid(scenario: Scenario, out_dir: Path) -> list[Path]:
    d = _grid(scenario.grids.distance_max, scenario.grids.capacity_distance_step)
    frames = []
    for power in scenario.grids.tx_powers_dbm:
        model = _with_thz_power(scenario.model, power)
        regions = [Region(int(r)).name.lower() for r in model.region_of(d)]
        frames.append(
            pd.DataFrame(
                {"thz_tx_power_dbm": power, "distance_m": d, "region": regions, "capacity_bps": model.capacity(d)}
            )
        )
    return [write_csv(pd.concat(frames, ignore_index=True), out_dir / "combined-capacity-grid.csv", scenario)]


def _pass_bulk(model: CapacityModel, d_min: float, speed_kmh: float, step: float) -> dict[str, float]:
    path = StraightLinePath(d_min=d_min, speed=kmh_to_ms(speed_kmh), d_entry=model.d_th_mm)
    closed = bulk_closed_form(path, model)
    return {
        "d_min_m": d_min,
        "speed_kmh": speed_kmh,
        "contact_time_s": sum(w.duration for w in contact_windows(path, model.d_th_mm)),
        "bulk_integral_bits": bulk_integral(path, model, step),
        "bulk_closed_form_bits": closed.bits,
    }


def bulk_vs_dmin_speed(scenario: Scenario, out_dir: Path) -> list[Path]:
    settings = scenario.bulk
    model = _with_thz_power(scenario.model, settings.thz_tx_power)
    points = [(d, v) for d in settings.d_min_grid for v in settings.speeds_kmh]
    rows = Parallel(n_jobs=n_jobs())(
        delayed(_pass_bulk)(model, d, v, settings.time_step) for d, v in tqdm(points, desc="bulk-vs-dmin-speed")
    )
    return [write_csv(pd.DataFrame(rows), out_dir / "bulk-vs-dmin-speed.csv", scenario)]


def bulk_trace(scenario: Scenario, out_dir: Path) -> list[Path]:
    settings = scenario.bulk
    model = _with_thz_power(scenario.model, settings.thz_tx_power)
    trace = read_trace(resolve_path(settings.trace, scenario.base_dir), scenario.tower)
    rows = []
    for speed_kmh in settings.trace_speeds_kmh:
        replay = trace.time_scaled(settings.trace_native_speed / kmh_to_ms(speed_kmh))
        windows = contact_windows(replay, model.d_th_mm)
        rows.append(
            {
                "speed_kmh": speed_kmh,
                "contact_time_s": sum(w.duration for w in windows),
                "min_distance_m": float(np.min(replay.distances_m)),
                "bulk_bits": bulk_integral(replay, model, settings.time_step) if windows else 0.0,
            }
        )
    return [write_csv(pd.DataFrame(rows), out_dir / "bulk-trace.csv", scenario)]


def schedule_timeline(scenario: Scenario, out_dir: Path) -> list[Path]:
    settings = scenario.scheduler
    trajectories, demands = scenario_vehicles(scenario)
    grids = build_slot_grid(trajectories, scenario.model, settings.slot_duration, n_jobs=n_jobs())
    rng = spawn_generator(scenario.run.seed, f"schedule-timeline/{settings.algorithm}")
    schedules = schedule_journeys(grids, demands, settings.algorithm, rng=rng, budget=settings.budget)
    total = sum(s.total for s in schedules)
    n_slots = sum(grid.n_slots for grid in grids)
    logger.info(f"{settings.algorithm} schedule exchanged {total:.4g} bits over {n_slots} slots")

    out_dir.mkdir(parents=True, exist_ok=True)
    timeline_path = out_dir / "schedule-timeline.csv"
    write_schedule(schedules, timeline_path, scenario.provenance)
    instance_paths = []
    for i, grid in enumerate(grids, start=1):
        matrix_path = out_dir / f"schedule-journey-{i}-n-tilde.csv"
        demands_path = out_dir / f"schedule-journey-{i}-demands.csv"
        write_instance(grid, demands, matrix_path, demands_path, scenario.provenance)
        instance_paths += [matrix_path, demands_path]

    t_lo = min(tr.span[0] for tr in trajectories.values())
    t_hi = max(tr.span[1] for tr in trajectories.values())
    times = np.arange(t_lo, t_hi + DISTANCE_SAMPLE_S / 2.0, DISTANCE_SAMPLE_S)
    distances: dict[str, Any] = {"t_s": times}
    for vehicle_id, trajectory in trajectories.items():
        start, end = trajectory.span
        inside = (times >= start) & (times <= end)
        column = np.full(times.shape, np.nan)
        column[inside] = trajectory.distances(times[inside])
        distances[vehicle_id] = column
    distances_path = write_csv(pd.DataFrame(distances), out_dir / "schedule-distances.csv", scenario)
    return [timeline_path, distances_path, *instance_paths]


def _compare_run(scenario: Scenario, run: int) -> list[dict[str, Any]]:
    """One random instance, solved by the three schedulers at every normalized overhead."""
    settings = scenario.scheduler
    seed = scenario.run.seed
    rng = spawn_generator(seed, "scheduler-compare", run)
    fleet = scenario.fleet
    paths = generate_fleet(
        settings.compare_vehicles,
        fleet.speed_range,
        settings.compare_arrival_span,
        fleet.d_min,
        rng,
        scenario.model.d_th_mm,
    )
    ids = [f"vehicle-{i + 1}" for i in range(len(paths))]
    demand_bits = rng.uniform(*settings.demand_range, size=len(ids))
    grids = build_slot_grid(dict(zip(ids, paths, strict=True)), scenario.model, settings.compare_slot_duration)

    rows = []
    for ratio in settings.overhead_ratios:
        overhead = ratio * settings.compare_slot_duration
        demands = {v: VehicleDemand(v, float(b), overhead) for v, b in zip(ids, demand_bits, strict=True)}
        for algorithm in ("optimal", "greedy", "random"):
            algo_rng = spawn_generator(seed, f"scheduler-compare/{algorithm}/{ratio:g}", run)
            schedules = schedule_journeys(grids, demands, algorithm, rng=algo_rng, budget=settings.budget)
            rows.append(
                {
                    "run": run,
                    "algorithm": algorithm,
                    "overhead_ratio": ratio,
                    "total_bits": sum(s.total for s in schedules),
                    "switches": sum(s.switch_count for s in schedules),
                    "operations": sum(s.operations for s in schedules),
                }
            )
    return rows


def scheduler_compare(scenario: Scenario, out_dir: Path) -> list[Path]:
    runs = range(scenario.run.runs)
    results = Parallel(n_jobs=n_jobs())(
        delayed(_compare_run)(scenario, run) for run in tqdm(runs, desc="scheduler-compare")
    )
    per_run = pd.DataFrame([row for rows in results for row in rows])
    per_run = per_run.sort_values(["run", "algorithm", "overhead_ratio"], kind="stable", ignore_index=True)

    summary = []
    for (algorithm, ratio), group in per_run.groupby(["algorithm", "overhead_ratio"], sort=True):
        ci = mean_confidence_interval(group["total_bits"].to_numpy())
        summary.append(
            {
                "algorithm": algorithm,
                "overhead_ratio": ratio,
                "runs": ci.n,
                "mean_bits": ci.mean,
                "ci_half_width": ci.half_width,
                "ci_low": ci.low,
                "ci_high": ci.high,
            }
        )
    return [
        write_csv(pd.DataFrame(summary), out_dir / "scheduler-compare.csv", scenario),
        write_csv(per_run, out_dir / "scheduler-compare-runs.csv", scenario),
    ]


def _session_run(scenario: Scenario, trajectory: Trajectory, run: int, trace_dir: Path | None = None) -> dict[str, Any]:
    """One seeded session; with trace_dir set, its tick table and counters are written there too."""
    rng = spawn_generator(scenario.run.seed, "protocol-goodput", run)
    report = run_session(trajectory, scenario.model, scenario.protocol, rng)
    if trace_dir is not None:
        write_session_ticks(report, trace_dir / "protocol-session-ticks.csv", scenario.provenance)
        write_session_summary(report, trace_dir / "protocol-session-summary.txt", scenario.provenance)
    return {"run": run, **session_summary(report)}


def protocol_goodput(scenario: Scenario, out_dir: Path) -> list[Path]:
    trajectories, _ = scenario_vehicles(scenario)
    vehicle_id, trajectory = next(iter(trajectories.items()))
    windows = contact_windows(trajectory, scenario.model.d_th_mm)
    contact_time = sum(w.duration for w in windows)
    bound = bulk_integral(trajectory, scenario.model) / contact_time if contact_time > 0.0 else 0.0
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = Parallel(n_jobs=n_jobs())(
        delayed(_session_run)(scenario, trajectory, run, out_dir if run == 0 else None)
        for run in tqdm(range(scenario.run.runs), desc="protocol-goodput")
    )
    per_run = pd.DataFrame(rows)
    ci = mean_confidence_interval(per_run["goodput_bps"].to_numpy())
    summary = pd.DataFrame(
        [
            {
                "vehicle_id": vehicle_id,
                "runs": ci.n,
                "contact_time_s": contact_time,
                "goodput_mean_bps": ci.mean,
                "ci_half_width": ci.half_width,
                "ci_low": ci.low,
                "ci_high": ci.high,
                "bulk_rate_bound_bps": bound,
            }
        ]
    )
    return [
        write_csv(summary, out_dir / "protocol-goodput.csv", scenario),
        write_csv(per_run, out_dir / "protocol-goodput-runs.csv", scenario),
        out_dir / "protocol-session-ticks.csv",
        out_dir / "protocol-session-summary.txt",
    ]


EXPERIMENTS: dict[str, Experiment] = {
    "state-probs-mm": state_probs_mm,
    "state-probs-thz": state_probs_thz,
    "thz-capacity-grid": thz_capacity_grid,
    "combined-capacity-grid": combined_capacity_grid,
    "bulk-vs-dmin-speed": bulk_vs_dmin_speed,
    "bulk-trace": bulk_trace,
    "schedule-timeline": schedule_timeline,
    "scheduler-compare": scheduler_compare,
    "protocol-goodput": protocol_goodput,
}


def run_experiment(name: str, scenario: Scenario, out_dir: str | Path | None = None) -> list[Path]:
    """Run one registered experiment and return the files it wrote."""
    try:
        experiment = EXPERIMENTS[name]
    except KeyError:
        raise UnknownExperimentError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}") from None
    target = Path(scenario.run.out_dir if out_dir is None else out_dir)
    logger.info(f"Running {name} (seed {scenario.run.seed}, {scenario.run.runs} runs) into {target}")
    return experiment(scenario, target)
