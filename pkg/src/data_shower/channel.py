"""
Distance-dependent capacity of the mmWave and THz links between a vehicle and a roadside tower.

All functions accept a scalar distance or a numpy array of distances and return a value of the same
shape. Capacities are in bits/s, distances in metres, frequencies in Hz.
"""

import csv
from dataclasses import dataclass, field
from enum import IntEnum, StrEnum
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Protocol

import numpy as np
import numpy.typing as npt
from loguru import logger
from scipy import constants

from data_shower.errors import DomainError, ExtrapolationError, TraceLoadError
from data_shower.utils import bundled_path, db_to_linear, dbm_to_watts

type FloatArray = npt.NDArray[np.float64]
type FloatOrArray = float | FloatArray

DEFAULT_ABSORPTION_FILE = "absorption_0.8-0.9THz.csv"
MAX_K_PER_CM = 1.0e2  # sanity bound on tabulated absorption coefficients


class LinkState(StrEnum):
    LOS = "LoS"
    NLOS = "NLoS"
    OUTAGE = "Outage"


class Region(IntEnum):
    NONE = 0  # beyond d_th^mm
    THZ = 1  # (0, d_th^THz]
    MMWAVE = 2  # (d_th^THz, d_th^mm]


def _as_distances(d: npt.ArrayLike) -> FloatArray:
    distances = np.asarray(d, dtype=float)
    if np.any(~(distances > 0.0)):
        raise DomainError(f"distance must be > 0 m, got {distances.min() if distances.size else distances}")
    return distances


def _out(values: FloatArray) -> FloatOrArray:
    """Return a python float for 0-d results and the array otherwise."""
    return float(values) if np.ndim(values) == 0 else values


@dataclass(frozen=True, eq=False)
class AbsorptionTable:
    frequencies: FloatArray  # Hz, strictly increasing
    k: FloatArray  # medium absorption coefficient, 1/m

    def __post_init__(self) -> None:
        frequencies = np.array(self.frequencies, dtype=float)
        k = np.array(self.k, dtype=float)
        if frequencies.ndim != 1 or frequencies.shape != k.shape:
            raise ValueError("absorption table needs two 1-d columns of equal length")
        if frequencies.size < 2:
            raise ValueError(f"absorption table needs at least 2 entries, got {frequencies.size}")
        if np.any(np.diff(frequencies) <= 0.0):
            raise ValueError("absorption table frequencies must be strictly increasing")
        if np.any(k < 0.0) or np.any(k / 100.0 > MAX_K_PER_CM):
            raise ValueError(f"absorption coefficients must lie in [0, {MAX_K_PER_CM}] 1/cm")
        frequencies.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "frequencies", frequencies)
        object.__setattr__(self, "k", k)

    @classmethod
    def from_per_cm(cls, frequencies: npt.ArrayLike, k_per_cm: npt.ArrayLike) -> "AbsorptionTable":
        return cls(frequencies=np.asarray(frequencies, dtype=float), k=np.asarray(k_per_cm, dtype=float) * 100.0)

    @classmethod
    def constant(cls, k_per_m: float, f_lo: float = 0.8e12, f_hi: float = 0.9e12) -> "AbsorptionTable":
        """Flat table, mostly useful for hand-checkable evaluations."""
        return cls(frequencies=np.array([f_lo, f_hi]), k=np.array([k_per_m, k_per_m]))

    @property
    def span(self) -> tuple[float, float]:
        return float(self.frequencies[0]), float(self.frequencies[-1])

    def k_at(self, f: npt.ArrayLike) -> FloatOrArray:
        """Absorption coefficient in 1/m, linearly interpolated between samples."""
        freqs = np.asarray(f, dtype=float)
        lo, hi = self.span
        if np.any(freqs < lo) or np.any(freqs > hi):
            raise ExtrapolationError(f"frequency outside the absorption table span [{lo:.6g}, {hi:.6g}] Hz")
        return _out(np.interp(freqs, self.frequencies, self.k))


def read_absorption_table(path: str | Path) -> AbsorptionTable:
    """
    Read a `frequency_hz,k_per_cm` CSV file into an AbsorptionTable (k stored in 1/m).
    """
    frequencies = []
    k_per_cm = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"frequency_hz", "k_per_cm"} <= set(reader.fieldnames):
            raise TraceLoadError("expected header frequency_hz,k_per_cm", str(path), 1)
        for ix, row in enumerate(reader):
            try:
                frequencies.append(float(row["frequency_hz"]))
                k_per_cm.append(float(row["k_per_cm"]))
            except (TypeError, ValueError) as e:
                raise TraceLoadError(f"bad absorption sample: {e}", str(path), ix + 2) from e
    try:
        table = AbsorptionTable.from_per_cm(frequencies, k_per_cm)
    except ValueError as e:
        raise TraceLoadError(str(e), str(path)) from e
    logger.debug(f"Read {len(frequencies)} absorption samples from {path}")
    return table


@lru_cache(maxsize=1)
def default_absorption_table() -> AbsorptionTable:
    return read_absorption_table(bundled_path(DEFAULT_ABSORPTION_FILE))


@dataclass(frozen=True)
class ThzParams:
    f_c: float = 0.85e12  # carrier frequency, Hz
    bandwidth: float = 0.1e12  # B_THz, Hz
    n_subbands: int = 100  # N_B
    tx_power: float = 0.0  # P_s, dBm
    antenna_gain: float = 27.0  # G, dB
    d_th: float = 10.0  # d_th^THz, m
    absorption: AbsorptionTable = field(default_factory=default_absorption_table)
    noise_floor_psd: float = 1.0e-25  # receiver floor, W/Hz
    ambient_temperature: float = 296.0  # T0, K
    gamma_th_fraction: float = 1.0  # gamma_th = fraction * snr(d_th)
    gain_per_end: bool = False  # True applies antenna_gain at both antennas

    def __post_init__(self) -> None:
        if self.n_subbands < 1:
            raise ValueError(f"n_subbands must be >= 1, got {self.n_subbands}")
        if self.bandwidth <= 0.0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")
        if self.d_th <= 0.0:
            raise ValueError(f"d_th must be > 0, got {self.d_th}")
        if not 0.0 < self.gamma_th_fraction <= 1.0:
            raise ValueError(f"gamma_th_fraction must be in (0, 1], got {self.gamma_th_fraction}")
        if self.noise_floor_psd <= 0.0:
            raise ValueError(f"noise_floor_psd must be > 0, got {self.noise_floor_psd}")
        if self.ambient_temperature < 0.0:
            raise ValueError(f"ambient_temperature must be >= 0, got {self.ambient_temperature}")
        # sub-band centers must be covered by the table
        self.absorption.k_at(self.subband_centers)

    @property
    def subband_width(self) -> float:
        return self.bandwidth / self.n_subbands

    @cached_property
    def subband_centers(self) -> FloatArray:
        edges = self.f_c - self.bandwidth / 2.0
        centers = edges + (np.arange(self.n_subbands) + 0.5) * self.subband_width
        centers.setflags(write=False)
        return centers

    @cached_property
    def subband_k(self) -> FloatArray:
        return np.asarray(self.absorption.k_at(self.subband_centers), dtype=float)

    @property
    def link_gain(self) -> float:
        gain_db = 2.0 * self.antenna_gain if self.gain_per_end else self.antenna_gain
        return db_to_linear(gain_db)

    @property
    def subband_power(self) -> float:
        """P_i in watts: uniform split of the total (gain-scaled) power over the sub-bands."""
        return dbm_to_watts(self.tx_power) * self.link_gain / self.n_subbands

    @cached_property
    def gamma_th(self) -> float:
        return self.gamma_th_fraction * float(thz_snr(self.d_th, self))


@dataclass(frozen=True)
class MmWaveParams:
    f_c: float = 73.0e9  # carrier frequency, Hz
    bandwidth: float = 1.0e9  # B_mm, Hz
    pl_intercept_los: float = 69.8  # alpha_LoS, dB
    pl_slope_los: float = 2.0  # beta_LoS
    pl_intercept_nlos: float = 82.7  # alpha_NLoS, dB
    pl_slope_nlos: float = 2.69  # beta_NLoS
    tx_power: float = 30.0  # dBm
    antenna_gain: float = 27.0  # dB, whole link
    noise_power: float = -87.0  # dBm
    noise_figure: float = 5.0  # dB
    d_th: float = 200.0  # d_th^mm, m
    a_los: float = 1.0 / 37.0  # 1/m
    a_out: float = 1.0 / 45.5  # 1/m
    b_out: float = 3.3

    def __post_init__(self) -> None:
        if self.bandwidth <= 0.0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")
        if self.d_th <= 0.0:
            raise ValueError(f"d_th must be > 0, got {self.d_th}")
        if self.a_los <= 0.0 or self.a_out <= 0.0:
            raise ValueError("a_los and a_out must be > 0")


def thz_path_gain(f: npt.ArrayLike, d: npt.ArrayLike, absorption: AbsorptionTable) -> FloatOrArray:
    """
    Power gain |H(f, d)|^2 of the LoS THz channel: free-space spreading times molecular absorption.
    """
    distances = _as_distances(d)
    freqs = np.asarray(f, dtype=float)
    k = np.asarray(absorption.k_at(freqs), dtype=float)
    spreading = (constants.speed_of_light / (4.0 * np.pi * freqs * distances)) ** 2
    return _out(spreading * np.exp(-k * distances))


def thz_noise_psd(f: npt.ArrayLike, d: npt.ArrayLike, params: ThzParams) -> FloatOrArray:
    """Molecular (emissivity-scaled thermal) noise plus the receiver floor, W/Hz."""
    distances = _as_distances(d)
    k = np.asarray(params.absorption.k_at(np.asarray(f, dtype=float)), dtype=float)
    emissivity = -np.expm1(-k * distances)
    return _out(constants.k * params.ambient_temperature * emissivity + params.noise_floor_psd)


def _subband_snr(distances: FloatArray, params: ThzParams) -> FloatArray:
    """Per sub-band SNR with a trailing sub-band axis; distances are already validated."""
    f = params.subband_centers
    k = params.subband_k
    d = distances[..., np.newaxis]
    spreading = (constants.speed_of_light / (4.0 * np.pi * f * d)) ** 2
    gain = spreading * np.exp(-k * d)
    noise = constants.k * params.ambient_temperature * -np.expm1(-k * d) + params.noise_floor_psd
    return np.asarray(gain * params.subband_power / (params.subband_width * noise))


def thz_capacity_los(d: npt.ArrayLike, params: ThzParams) -> FloatOrArray:
    """LoS THz capacity: sum of Shannon capacities of N_B equal-width sub-bands under uniform power."""
    snr = _subband_snr(_as_distances(d), params)
    return _out(params.subband_width * np.log2(1.0 + snr).sum(axis=-1))


def thz_snr(d: npt.ArrayLike, params: ThzParams) -> FloatOrArray:
    """Average THz SNR, the sum over sub-bands of |H|^2 S_t / S_n."""
    return _out(_subband_snr(_as_distances(d), params).sum(axis=-1))


def thz_outage_prob(d: npt.ArrayLike, params: ThzParams) -> FloatOrArray:
    """Exponential outage model 1 - exp(-gamma_th / snr(d)), defined only inside the THz range."""
    distances = _as_distances(d)
    if np.any(distances > params.d_th):
        raise DomainError(f"THz outage is undefined beyond d_th={params.d_th} m")
    snr = _subband_snr(distances, params).sum(axis=-1)
    return _out(-np.expm1(-params.gamma_th / snr))


def thz_state_probs(d: npt.ArrayLike, params: ThzParams) -> tuple[FloatOrArray, FloatOrArray]:
    """(p_los, p_outage) of the THz link."""
    p_out = np.asarray(thz_outage_prob(d, params), dtype=float)
    return _out(1.0 - p_out), _out(p_out)


def mmwave_path_loss(d: npt.ArrayLike, state: LinkState, params: MmWaveParams) -> FloatOrArray:
    """Close-in path loss alpha + 10 beta log10(d) in dB."""
    distances = _as_distances(d)
    if state is LinkState.LOS:
        return _out(params.pl_intercept_los + 10.0 * params.pl_slope_los * np.log10(distances))
    if state is LinkState.NLOS:
        return _out(params.pl_intercept_nlos + 10.0 * params.pl_slope_nlos * np.log10(distances))
    raise DomainError(f"no path loss defined in state {state}")


def mmwave_snr(d: npt.ArrayLike, state: LinkState, params: MmWaveParams) -> FloatOrArray:
    path_loss = np.asarray(mmwave_path_loss(d, state, params), dtype=float)
    snr_db = params.tx_power + params.antenna_gain - path_loss - (params.noise_power + params.noise_figure)
    return _out(10.0 ** (snr_db / 10.0))


def mmwave_capacity(d: npt.ArrayLike, state: LinkState, params: MmWaveParams) -> FloatOrArray:
    snr = np.asarray(mmwave_snr(d, state, params), dtype=float)
    return _out(params.bandwidth * np.log2(1.0 + snr))


def nlos_snr_ratio(d: npt.ArrayLike, params: MmWaveParams) -> FloatOrArray:
    """Equivalent LoS-to-NLoS SNR scaling Delta(d) implied by the two path-loss fits."""
    los = np.asarray(mmwave_snr(d, LinkState.LOS, params), dtype=float)
    nlos = np.asarray(mmwave_snr(d, LinkState.NLOS, params), dtype=float)
    return _out(los / nlos)


def mmwave_state_probs(d: npt.ArrayLike, params: MmWaveParams) -> tuple[FloatOrArray, FloatOrArray, FloatOrArray]:
    """
    Empirical (p_los, p_nlos, p_outage) of the mmWave link at distance d.

    Outage is clamped at zero below b_out / a_out; LoS decays exponentially with distance.
    """
    distances = _as_distances(d)
    p_out = np.maximum(0.0, -np.expm1(-params.a_out * distances + params.b_out))
    p_los = (1.0 - p_out) * np.exp(-params.a_los * distances)
    p_nlos = (1.0 - p_out) * -np.expm1(-params.a_los * distances)
    return _out(p_los), _out(p_nlos), _out(p_out)


class SupportsCapacity(Protocol):
    """Anything the quadrature, scheduler and protocol simulator can integrate."""

    @property
    def d_th_thz(self) -> float: ...

    @property
    def d_th_mm(self) -> float: ...

    def region_of(self, distances: npt.ArrayLike) -> npt.NDArray[np.int_]: ...

    def region_capacity(self, distances: FloatArray, region: Region) -> FloatArray: ...

    def outage_prob(self, distances: FloatArray) -> FloatArray: ...


@dataclass(frozen=True)
class CapacityModel:
    thz: ThzParams = field(default_factory=ThzParams)
    mmwave: MmWaveParams = field(default_factory=MmWaveParams)

    def __post_init__(self) -> None:
        if self.mmwave.d_th <= self.thz.d_th:
            raise DomainError(
                f"mmWave threshold {self.mmwave.d_th} m must exceed the THz threshold {self.thz.d_th} m"
            )

    @property
    def d_th_thz(self) -> float:
        return self.thz.d_th

    @property
    def d_th_mm(self) -> float:
        return self.mmwave.d_th

    def region_of(self, distances: npt.ArrayLike) -> npt.NDArray[np.int_]:
        d = np.asarray(distances, dtype=float)
        return np.where(d <= self.d_th_thz, Region.THZ, np.where(d <= self.d_th_mm, Region.MMWAVE, Region.NONE))

    def region_capacity(self, distances: FloatArray, region: Region) -> FloatArray:
        """Capacity of one branch of C(d), evaluated regardless of which region d actually lies in."""
        d = _as_distances(distances)
        if region is Region.THZ:
            band_snr = _subband_snr(d, self.thz)
            p_out = -np.expm1(-self.thz.gamma_th / band_snr.sum(axis=-1))
            capacity = self.thz.subband_width * np.log2(1.0 + band_snr).sum(axis=-1)
            return np.asarray(capacity * (1.0 - p_out))
        if region is Region.MMWAVE:
            p_los, p_nlos, _ = mmwave_state_probs(d, self.mmwave)
            los = np.asarray(mmwave_capacity(d, LinkState.LOS, self.mmwave))
            nlos = np.asarray(mmwave_capacity(d, LinkState.NLOS, self.mmwave))
            return np.asarray(los * p_los + nlos * p_nlos)
        return np.zeros_like(d)

    def outage_prob(self, distances: FloatArray) -> FloatArray:
        """Outage probability of the link active at each distance; 1 beyond d_th^mm."""
        d = _as_distances(distances).reshape(-1)
        regions = self.region_of(d)
        result = np.ones_like(d)
        thz = regions == Region.THZ
        mm = regions == Region.MMWAVE
        if np.any(thz):
            result[thz] = thz_outage_prob(d[thz], self.thz)
        if np.any(mm):
            result[mm] = mmwave_state_probs(d[mm], self.mmwave)[2]
        return result.reshape(np.shape(distances))

    def capacity(self, distances: npt.ArrayLike) -> FloatOrArray:
        """C(d) over an array of distances."""
        d = _as_distances(distances)
        flat = d.reshape(-1)
        regions = self.region_of(flat)
        result = np.zeros_like(flat)
        for region in (Region.THZ, Region.MMWAVE):
            mask = regions == region
            if np.any(mask):
                result[mask] = self.region_capacity(flat[mask], region)
        return _out(result.reshape(d.shape))


def combined_capacity(d: npt.ArrayLike, model: CapacityModel) -> FloatOrArray:
    """Distance-switched capacity: THz inside d_th^THz, mmWave up to d_th^mm, zero beyond."""
    return model.capacity(d)
