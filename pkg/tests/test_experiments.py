import math

import numpy as np
import pandas as pd
import pytest
from conftest import ConstantCapacity

from data_shower.experiments import (
    EXPERIMENTS,
    UnknownExperimentError,
    generate_fleet,
    run_experiment,
    scenario_vehicles,
    schedule_journeys,
)
from data_shower.scenario import apply_override, parse_scenario, read_raw_scenario
from data_shower.scheduler import VehicleDemand, build_slot_grid, read_instance
from data_shower.trajectory import TraceTrajectory


def scenario_with(overrides=None):
    """The bundled scenario with dotted-path overrides applied."""
    raw, base_dir = read_raw_scenario()
    for path, value in (overrides or {}).items():
        if "." in path:
            raw = apply_override(raw, path, value)
        else:
            raw[path] = value
    return parse_scenario(raw, base_dir)


def read_result(path):
    with open(path) as f:
        header = f.readline()
    return header, pd.read_csv(path, comment="#")


def test_generate_fleet():
    """Test fleet speeds and arrivals stay inside their ranges."""
    paths = generate_fleet(20, (3.0, 7.0), 60.0, 5.0, np.random.default_rng(0))
    assert len(paths) == 20
    assert all(3.0 <= p.speed <= 7.0 for p in paths)
    assert all(0.0 <= p.span[0] <= 60.0 for p in paths)
    assert all(p.d_min == 5.0 for p in paths)
    with pytest.raises(ValueError, match="n_vehicles"):
        generate_fleet(0, (3.0, 7.0), 60.0, 5.0, np.random.default_rng(0))
    with pytest.raises(ValueError, match="speed_range"):
        generate_fleet(2, (7.0, 3.0), 60.0, 5.0, np.random.default_rng(0))


def test_scenario_vehicles_prefers_explicit_vehicles():
    """Test explicit vehicles replace the seeded fleet."""
    fleet, demands = scenario_vehicles(scenario_with())
    assert list(fleet) == [f"vehicle-{i}" for i in range(1, 6)]
    assert all(d.demand == 5.0e12 for d in demands.values())
    again, _ = scenario_vehicles(scenario_with())
    assert [p.speed for p in again.values()] == [p.speed for p in fleet.values()]

    explicit = scenario_with({"vehicles": [{"id": "car", "d_min_m": 4.0, "speed_kmh": 10.0, "demand_bits": 1.0e12}]})
    trajectories, demands = scenario_vehicles(explicit)
    assert list(trajectories) == ["car"]
    assert demands["car"].demand == 1.0e12


def two_visits(distance):
    """Two one-second stops at `distance` separated by a trip out of range."""
    return TraceTrajectory(
        times=np.array([0.0, 1.0, 1.01, 1.99, 2.0, 3.0]),
        distances_m=np.array([distance, distance, 300.0, 300.0, distance, distance]),
    )


@pytest.mark.parametrize("algorithm", ["greedy", "optimal"])
def test_schedule_journeys_resets_demand(algorithm):
    """Test identical journeys get identical schedules because each one owes the full demand."""
    trajectories = {"a": two_visits(5.0), "b": two_visits(50.0)}
    grids = build_slot_grid(trajectories, ConstantCapacity(), slot_duration=0.25)
    assert [grid.slots for grid in grids] == [(0, 1, 2, 3), (8, 9, 10, 11)]
    demands = {"a": VehicleDemand("a", 4.5e8), "b": VehicleDemand("b", 1.0e12)}
    first, second = schedule_journeys(grids, demands, algorithm)
    assert first.assignment == second.assignment
    assert first.delivered["a"] == second.delivered["a"] == pytest.approx(4.5e8)
    assert first.total == pytest.approx(second.total)
    assert first.assignment == ("a", "a", "b", "b")
    assert first.total == pytest.approx(5.0e8)


def test_state_probs_mm(tmp_path):
    """Test the mmWave state table at 200 m and its provenance line."""
    scenario = scenario_with()
    (path,) = run_experiment("state-probs-mm", scenario, tmp_path)
    header, frame = read_result(path)
    assert header == f"# scenario_sha256={scenario.sha256} seed={scenario.run.seed}\n"
    assert list(frame.columns) == ["distance_m", "p_los", "p_nlos", "p_outage"]
    assert len(frame) == 400
    row = frame[frame["distance_m"] == 200.0].iloc[0]
    assert 0.64 <= row["p_outage"] <= 0.70
    assert (frame.loc[frame["distance_m"] <= 150.0, "p_outage"] == 0.0).all()
    np.testing.assert_allclose(frame[["p_los", "p_nlos", "p_outage"]].sum(axis=1), 1.0, atol=1.0e-9)


def test_state_probs_thz(tmp_path):
    """Test the THz outage table reaches 1 - 1/e at d_th when gamma_th is the SNR there."""
    (path,) = run_experiment("state-probs-thz", scenario_with(), tmp_path)
    _, frame = read_result(path)
    assert sorted(frame["gamma_th_fraction"].unique()) == [0.25, 0.5, 0.75, 1.0]
    edge = frame[(frame["gamma_th_fraction"] == 1.0) & (frame["distance_m"] == 10.0)].iloc[0]
    assert edge["p_outage"] == pytest.approx(1.0 - math.exp(-1.0), abs=1.0e-8)


def test_capacity_grids(tmp_path):
    """Test the THz capacity grid meets 1 Tbps at 10 m and the combined grid switches regions."""
    scenario = scenario_with()
    (thz_path,) = run_experiment("thz-capacity-grid", scenario, tmp_path)
    _, thz = read_result(thz_path)
    at_edge = thz[thz["distance_m"] == 10.0]
    assert (at_edge["capacity_los_bps"] >= 1.0e12).all()
    assert (thz["capacity_bps"] <= thz["capacity_los_bps"]).all()

    (combined_path,) = run_experiment("combined-capacity-grid", scenario, tmp_path)
    _, combined = read_result(combined_path)
    first = combined[combined["thz_tx_power_dbm"] == 0.0]
    assert first.loc[first["distance_m"] <= 10.0, "region"].eq("thz").all()
    assert first.loc[(first["distance_m"] > 10.0) & (first["distance_m"] <= 200.0), "region"].eq("mmwave").all()
    assert (first.loc[first["distance_m"] > 200.0, "capacity_bps"] == 0.0).all()


def test_bulk_vs_dmin_speed(tmp_path, serial_jobs):
    """Test the bulk grid: contact time follows the chord and a head-on pass matches the closed form."""
    scenario = scenario_with({"bulk.d_min_grid_m": [0.0, 4.0], "bulk.speeds_kmh": [10.0, 50.0]})
    (path,) = run_experiment("bulk-vs-dmin-speed", scenario, tmp_path)
    _, frame = read_result(path)
    assert len(frame) == 4
    for row in frame.itertuples():
        speed = row.speed_kmh / 3.6
        chord = 2.0 * math.sqrt(200.0**2 - row.d_min_m**2)
        assert row.contact_time_s == pytest.approx(chord / speed, rel=1.0e-6)
        if row.d_min_m == 0.0:
            assert row.bulk_closed_form_bits == pytest.approx(row.bulk_integral_bits, rel=0.01)
    slow, fast = frame.loc[frame["d_min_m"] == 4.0, "bulk_integral_bits"]
    assert slow > 1.0e12
    assert slow > fast


def test_bulk_trace(tmp_path):
    """Test the bundled trace replayed at walking pace carries tens of terabits."""
    scenario = scenario_with({"bulk.trace_speeds_kmh": [2.0, 20.0]})
    (path,) = run_experiment("bulk-trace", scenario, tmp_path)
    _, frame = read_result(path)
    slow, fast = frame.itertuples()
    assert slow.min_distance_m == pytest.approx(5.02)
    assert slow.bulk_bits > 1.0e13
    assert slow.contact_time_s == pytest.approx(10.0 * fast.contact_time_s, rel=1.0e-6)
    assert fast.bulk_bits < slow.bulk_bits


def test_schedule_timeline(tmp_path, serial_jobs):
    """Test the timeline covers every slot and never serves more than a vehicle's demand."""
    scenario = scenario_with({"fleet.n_vehicles": 3, "fleet.demand_bits": 1.0e12})
    timeline_path, distances_path, *instance_paths = run_experiment("schedule-timeline", scenario, tmp_path)
    header, timeline = read_result(timeline_path)
    assert header == f"# {scenario.provenance}\n"
    _, distances = read_result(distances_path)
    assert list(timeline.columns) == ["slot_index", "t_start_s", "vehicle_id", "bits", "switched"]
    assert list(distances.columns) == ["t_s", "vehicle-1", "vehicle-2", "vehicle-3"]
    assert timeline["slot_index"].is_monotonic_increasing
    assert (timeline["bits"] >= 0.0).all()
    served = timeline.dropna(subset=["vehicle_id"]).groupby("vehicle_id")["bits"].sum()
    assert (served <= 1.0e12 * (1.0 + 1.0e-9)).all()
    assert distances.drop(columns="t_s").min().min() >= 5.0 - 1.0e-9

    matrix_path, demands_path = instance_paths[:2]
    grid, demands = read_instance(matrix_path, demands_path)
    assert matrix_path.read_text().startswith(f"# {scenario.provenance}\n")
    assert demands["vehicle-1"].demand == 1.0e12
    assert grid.slots[0] == timeline["slot_index"].iloc[0]


def test_scheduler_compare(tmp_path, serial_jobs):
    """Test the comparison tables: optimal >= greedy >= random at every overhead, greedy near optimal below 1e-2."""
    scenario = scenario_with({"run.runs": 20})
    summary_path, runs_path = run_experiment("scheduler-compare", scenario, tmp_path)
    _, summary = read_result(summary_path)
    _, per_run = read_result(runs_path)
    assert len(summary) == 3 * 5
    assert (summary["runs"] == 20).all()
    assert (summary["ci_low"] <= summary["mean_bits"]).all()
    assert (summary["mean_bits"] <= summary["ci_high"]).all()
    assert len(per_run) == 20 * 3 * 5

    totals = per_run.pivot_table(index=["overhead_ratio", "run"], columns="algorithm", values="total_bits")
    assert (totals["optimal"] >= totals["greedy"] * (1.0 - 1.0e-9)).all()
    means = summary.pivot(index="overhead_ratio", columns="algorithm", values="mean_bits")
    assert (means["optimal"] >= means["greedy"]).all()
    assert (means["greedy"] >= means["random"]).all()
    low = means[means.index <= 1.0e-2]
    assert (low["greedy"] >= 0.98 * low["optimal"]).all()
    assert means.loc[1.0, "random"] < means.loc[1.0e-4, "random"]


def test_protocol_goodput(tmp_path, serial_jobs):
    """Test session goodput stays below the bulk rate bound of the pass."""
    scenario = scenario_with(
        {
            "run.runs": 2,
            "protocol.packet_size_bits": 1.0e8,
            "vehicles": [{"id": "car", "d_min_m": 4.0, "speed_mps": 15.0, "demand_bits": 1.0e12}],
        }
    )
    summary_path, runs_path, ticks_path, session_path = run_experiment("protocol-goodput", scenario, tmp_path)
    _, summary = read_result(summary_path)
    _, per_run = read_result(runs_path)
    (row,) = summary.itertuples()
    assert row.vehicle_id == "car"
    assert row.runs == 2
    assert 0.0 < row.goodput_mean_bps <= row.bulk_rate_bound_bps
    assert list(per_run["run"]) == [0, 1]
    provenance = f"# {scenario.provenance}"
    ticks = ticks_path.read_text().splitlines()
    assert ticks[:2] == [provenance, "t_s,mode,offered_bits,delivered_bits,retx_bits"]
    session = session_path.read_text().splitlines()
    assert session[0] == provenance
    assert f"goodput_bps={per_run.loc[0, 'goodput_bps']:.10g}" in session


def test_results_are_reproducible(tmp_path, serial_jobs):
    """Test two runs with the same scenario and seed write byte-identical files."""
    scenario = scenario_with({"run.runs": 2})
    first = run_experiment("scheduler-compare", scenario, tmp_path / "first")
    second = run_experiment("scheduler-compare", scenario, tmp_path / "second")
    for a, b in zip(first, second, strict=True):
        assert a.read_bytes() == b.read_bytes()


def test_unknown_experiment(tmp_path):
    """Test unknown experiment names list the registered ones."""
    assert len(EXPERIMENTS) == 9
    with pytest.raises(UnknownExperimentError, match="state-probs-mm"):
        run_experiment("figure-13", scenario_with(), tmp_path)
