from dataclasses import dataclass

import numpy as np
import pytest

from data_shower.channel import Region
from data_shower.scenario import load_scenario
from data_shower.scheduler import SlotGrid, VehicleDemand
from data_shower.trajectory import TraceTrajectory
from data_shower.utils import THREADS_ENV


@dataclass(frozen=True)
class ConstantCapacity:
    """Capacity model with one constant rate per region, for hand-checkable integrals."""

    c_thz: float = 1.0e9
    c_mm: float = 1.0e8
    thz_threshold: float = 10.0
    mm_threshold: float = 200.0
    p_outage: float = 0.0

    @property
    def d_th_thz(self) -> float:
        return self.thz_threshold

    @property
    def d_th_mm(self) -> float:
        return self.mm_threshold

    def region_of(self, distances):
        d = np.asarray(distances, dtype=float)
        return np.where(
            d <= self.thz_threshold, Region.THZ, np.where(d <= self.mm_threshold, Region.MMWAVE, Region.NONE)
        )

    def region_capacity(self, distances, region):
        value = {Region.THZ: self.c_thz, Region.MMWAVE: self.c_mm}.get(region, 0.0)
        return np.full_like(np.asarray(distances, dtype=float), value)

    def outage_prob(self, distances):
        return np.full_like(np.asarray(distances, dtype=float), self.p_outage)


def parked(distance: float, t_start: float, t_end: float) -> TraceTrajectory:
    """A vehicle standing still at `distance` between t_start and t_end."""
    return TraceTrajectory(times=np.array([t_start, t_end]), distances_m=np.array([distance, distance]))


@pytest.fixture(scope="session")
def default_model():
    """The capacity model of the bundled scenario."""
    return load_scenario().model


@pytest.fixture
def constant_model():
    return ConstantCapacity()


@pytest.fixture
def serial_jobs(monkeypatch):
    """Run joblib work in-process."""
    monkeypatch.setenv(THREADS_ENV, "1")


@pytest.fixture
def small_grid():
    """Three slots: a alone, a and b, b alone."""
    grid = SlotGrid(
        slot_duration=1.0,
        slots=(0, 1, 2),
        vehicle_ids=("a", "b"),
        candidates=(frozenset({"a"}), frozenset({"a", "b"}), frozenset({"b"})),
        n_tilde=np.array([[5.0, 0.0], [4.0, 3.0], [0.0, 2.0]]),
    )
    demands = {"a": VehicleDemand("a", 6.0), "b": VehicleDemand("b", 10.0)}
    return grid, demands
