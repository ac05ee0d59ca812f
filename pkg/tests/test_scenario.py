import shutil

import pytest

from data_shower.errors import ScenarioError
from data_shower.scenario import (
    SweepSpec,
    apply_override,
    load_scenario,
    parse_scenario,
    parse_sweep,
    read_raw_scenario,
    scenario_hash,
    validate_scenario,
)
from data_shower.trajectory import StraightLinePath, TraceTrajectory
from data_shower.utils import bundled_path, kmh_to_ms


def diagnostics_of(raw, base_dir):
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(raw, base_dir)
    return excinfo.value.diagnostics


def test_bundled_defaults_are_valid():
    """Test the bundled scenario parses into the default channel and settings."""
    assert validate_scenario() == []
    scenario = load_scenario()
    assert scenario.model.d_th_thz == 10.0
    assert scenario.model.d_th_mm == 200.0
    assert scenario.model.mmwave.a_los == pytest.approx(1.0 / 37.0)
    assert scenario.vehicles == ()
    assert scenario.scheduler.slot_duration == pytest.approx(0.0865)
    assert scenario.protocol.chunk_duration == pytest.approx(0.01)
    assert scenario.run.seed == 20240611
    assert len(scenario.sha256) == 64


def test_threshold_order_diagnostic(tmp_path):
    """Test a THz threshold beyond the mmWave threshold is reported against its key."""
    raw, _ = read_raw_scenario()
    raw = apply_override(raw, "channel.thz.d_th_m", 250.0)
    diagnostics = diagnostics_of(raw, tmp_path)
    assert "channel.thz.d_th_m: must be < channel.mmwave.d_th_m (got 250 m and 200 m)" in diagnostics


def test_every_problem_is_reported(tmp_path):
    """Test parsing collects all diagnostics instead of stopping at the first."""
    raw, _ = read_raw_scenario()
    raw = apply_override(raw, "fleet.colour", "red")
    raw = apply_override(raw, "protocol.thz_loss_prob", 1.5)
    raw = apply_override(raw, "scheduler.algorithm", "fastest")
    raw = apply_override(raw, "grids.distance_step_m", "one")
    del raw["run"]["seed"]
    diagnostics = diagnostics_of(raw, tmp_path)
    assert "fleet.colour: unknown key" in diagnostics
    assert any(d.startswith("protocol: thz_loss_prob must be in [0, 1]") for d in diagnostics)
    assert any(d.startswith("scheduler.algorithm:") for d in diagnostics)
    assert any(d.startswith("grids.distance_step_m: must be a number") for d in diagnostics)
    assert "run.seed: is required" in diagnostics


def test_compare_arrival_span_diagnostic(tmp_path):
    """Test a negative arrival span for the compared vehicles is rejected."""
    raw, _ = read_raw_scenario()
    raw = apply_override(raw, "scheduler.compare_arrival_span_s", -1.0)
    diagnostics = diagnostics_of(raw, tmp_path)
    assert any(d.startswith("scheduler.compare_arrival_span_s:") and "must be >= 0" in d for d in diagnostics)


def test_vehicle_diagnostics(tmp_path):
    """Test missing traces, bad demands and duplicate ids are reported per vehicle."""
    raw, _ = read_raw_scenario()
    raw["vehicles"] = [
        {"id": "bus", "trace": "missing.csv", "demand_bits": 1.0e12},
        {"id": "car", "d_min_m": 4.0, "speed_kmh": 10.0, "demand_bits": 0.0},
        {"id": "car", "d_min_m": 4.0, "speed_mps": 3.0},
    ]
    diagnostics = diagnostics_of(raw, tmp_path)
    assert f"vehicles[0].trace: file not found: {tmp_path / 'missing.csv'}" in diagnostics
    assert "vehicles[1].demand_bits: must be > 0, got 0" in diagnostics
    assert "vehicles[2].id: duplicate vehicle id 'car'" in diagnostics
    assert "vehicles[2].demand_bits: is required" in diagnostics


def test_vehicles_resolve_relative_to_scenario(tmp_path):
    """Test trace references resolve against the scenario directory and straight passes convert km/h."""
    (tmp_path / "traces").mkdir()
    shutil.copy(bundled_path("boston_like_trace.csv"), tmp_path / "traces" / "bus.csv")
    raw, _ = read_raw_scenario()
    raw["vehicles"] = [
        {"id": "bus", "trace": "traces/bus.csv", "time_scale": 0.5, "demand_bits": 1.0e13},
        {"id": "car", "d_min_m": 4.0, "speed_kmh": 10.0, "demand_bits": 2.0e12, "overhead_s": 0.01},
    ]
    scenario = parse_scenario(raw, tmp_path)
    bus, car = scenario.vehicles
    assert isinstance(bus.trajectory, TraceTrajectory)
    assert bus.trajectory.span == (0.0, pytest.approx(307.5))
    assert isinstance(car.trajectory, StraightLinePath)
    assert car.trajectory.speed == pytest.approx(kmh_to_ms(10.0))
    assert car.overhead == 0.01


def test_missing_bulk_trace(tmp_path):
    """Test the bulk trace reference must exist."""
    raw, _ = read_raw_scenario()
    raw = apply_override(raw, "bulk.trace", "nowhere.csv")
    assert f"bulk.trace: file not found: {tmp_path / 'nowhere.csv'}" in diagnostics_of(raw, tmp_path)


def test_scenario_files(tmp_path):
    """Test reading scenario files from disk, including syntax errors."""
    path = tmp_path / "scenario.toml"
    shutil.copy(bundled_path("defaults.toml"), path)
    assert validate_scenario(path) == []
    assert load_scenario(path).base_dir == tmp_path

    path.write_text("[run\nseed = 1\n")
    with pytest.raises(ScenarioError, match="scenario.toml"):
        read_raw_scenario(path)
    with pytest.raises(ScenarioError, match="cannot read"):
        read_raw_scenario(tmp_path / "absent.toml")


def test_scenario_hash():
    """Test the hash ignores key order and follows every value."""
    assert scenario_hash({"a": 1, "b": {"c": 2}}) == scenario_hash({"b": {"c": 2}, "a": 1})
    assert scenario_hash({"a": 1}) != scenario_hash({"a": 2})


def test_apply_override():
    """Test overrides copy the mapping, create missing tables and index arrays."""
    raw = {"run": {"seed": 1}, "vehicles": [{"id": "car", "speed_mps": 3.0}]}
    updated = apply_override(raw, "run.seed", 2)
    assert updated["run"]["seed"] == 2
    assert raw["run"]["seed"] == 1

    assert apply_override(raw, "vehicles.0.speed_mps", 4.0)["vehicles"][0]["speed_mps"] == 4.0
    assert apply_override(raw, "channel.thz.tx_power_dbm", 10.0)["channel"] == {"thz": {"tx_power_dbm": 10.0}}

    for bad in ("seed", "nonsense.key", "vehicles.5.speed_mps", "run.seed.value"):
        with pytest.raises(ScenarioError, match="does not resolve"):
            apply_override(raw, bad, 1)


def test_parse_sweep():
    """Test sweep values use TOML syntax and fall back to strings."""
    spec = parse_sweep("channel.thz.tx_power_dbm=0,10,20.5", runs=3)
    assert spec == SweepSpec(path="channel.thz.tx_power_dbm", values=(0, 10, 20.5), runs=3)
    assert parse_sweep("scheduler.algorithm=greedy,optimal").values == ("greedy", "optimal")
    assert parse_sweep("protocol.outage_bursts=true,false").values == (True, False)
    for bad in ("channel.thz.tx_power_dbm", "=1,2", "run.seed="):
        with pytest.raises(ScenarioError, match="PATH=V1,V2"):
            parse_sweep(bad)
    with pytest.raises(ScenarioError, match="runs"):
        SweepSpec(path="run.seed", values=(1,), runs=0)
