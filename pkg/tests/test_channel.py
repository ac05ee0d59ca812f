import dataclasses
import math

import numpy as np
import pytest
from scipy import constants

from data_shower.channel import (
    AbsorptionTable,
    CapacityModel,
    LinkState,
    MmWaveParams,
    Region,
    ThzParams,
    combined_capacity,
    default_absorption_table,
    mmwave_capacity,
    mmwave_path_loss,
    mmwave_snr,
    mmwave_state_probs,
    nlos_snr_ratio,
    read_absorption_table,
    thz_capacity_los,
    thz_noise_psd,
    thz_outage_prob,
    thz_path_gain,
    thz_snr,
    thz_state_probs,
)
from data_shower.errors import DomainError, ExtrapolationError, TraceLoadError


def test_default_absorption_table():
    """Test the bundled absorption table covers the THz band with small coefficients."""
    table = default_absorption_table()
    assert table.span == (0.8e12, 0.9e12)
    assert table.k_at(0.85e12) == pytest.approx(2.0e-4)  # 2e-6 1/cm
    assert table.k_at(0.8e12) == pytest.approx(3.0e-4)
    with pytest.raises(ExtrapolationError):
        table.k_at(0.95e12)


def test_absorption_table_validation():
    """Test AbsorptionTable rejects malformed tables."""
    with pytest.raises(ValueError, match="at least 2"):
        AbsorptionTable(frequencies=np.array([1.0]), k=np.array([0.0]))
    with pytest.raises(ValueError, match="strictly increasing"):
        AbsorptionTable(frequencies=np.array([2.0, 1.0]), k=np.array([0.0, 0.0]))
    with pytest.raises(ValueError, match="absorption coefficients"):
        AbsorptionTable.from_per_cm([1.0, 2.0], [-1.0, 0.0])
    table = AbsorptionTable.from_per_cm([1.0, 3.0], [1.0, 3.0])
    assert table.k_at(2.0) == pytest.approx(200.0)


def test_read_absorption_table(tmp_path):
    """Test read_absorption_table reports the offending line."""
    good = tmp_path / "good.csv"
    good.write_text("frequency_hz,k_per_cm\n8e11,1e-6\n9e11,3e-6\n")
    table = read_absorption_table(good)
    assert table.k_at(8.5e11) == pytest.approx(2.0e-4)

    bad = tmp_path / "bad.csv"
    bad.write_text("frequency_hz,k_per_cm\n8e11,1e-6\nabc,2e-6\n")
    with pytest.raises(TraceLoadError, match="bad.csv:3"):
        read_absorption_table(bad)

    header = tmp_path / "header.csv"
    header.write_text("f,k\n1,2\n")
    with pytest.raises(TraceLoadError, match="header.csv:1"):
        read_absorption_table(header)


def test_thz_params_outside_table():
    """Test a THz band not covered by the absorption table is rejected."""
    with pytest.raises(ExtrapolationError):
        ThzParams(f_c=1.0e12)
    with pytest.raises(ValueError, match="gamma_th_fraction"):
        ThzParams(gamma_th_fraction=0.0)


def test_thz_path_gain_free_space():
    """Test the path gain reduces to free-space spreading without absorption."""
    table = AbsorptionTable.constant(0.0)
    f, d = 0.85e12, 5.0
    expected = (constants.speed_of_light / (4.0 * math.pi * f * d)) ** 2
    assert thz_path_gain(f, d, table) == pytest.approx(expected)
    lossy = AbsorptionTable.constant(0.1)
    assert thz_path_gain(f, d, lossy) == pytest.approx(expected * math.exp(-0.5))


def test_thz_noise_psd():
    """Test molecular noise grows with distance on top of the receiver floor."""
    params = ThzParams(absorption=AbsorptionTable.constant(0.1))
    near = thz_noise_psd(0.85e12, 1.0, params)
    far = thz_noise_psd(0.85e12, 10.0, params)
    assert near > params.noise_floor_psd
    assert far > near
    assert far == pytest.approx(constants.k * 296.0 * (1.0 - math.exp(-1.0)) + 1.0e-25)


def test_thz_capacity_terabit(default_model):
    """Test the bundled THz link exceeds 1 Tbps at 10 m for every power in 0-20 dBm."""
    assert default_model.thz.gain_per_end
    for power in (0.0, 5.0, 10.0, 15.0, 20.0):
        params = dataclasses.replace(default_model.thz, tx_power=power)
        assert thz_capacity_los(10.0, params) >= 1.0e12


def test_thz_gain_is_total_by_default():
    """Test antenna_gain counts once unless gain_per_end is set."""
    total = ThzParams()
    per_end = ThzParams(gain_per_end=True)
    assert not total.gain_per_end
    assert total.link_gain == pytest.approx(10.0**2.7)
    assert per_end.link_gain == pytest.approx(10.0**5.4)
    assert thz_snr(10.0, per_end) > 100.0 * thz_snr(10.0, total)


def test_molecular_noise_dominates_receiver_floor():
    """Test lowering the receiver floor barely moves the total-gain capacity at 10 m."""
    for power in (0.0, 20.0):
        params = ThzParams(tx_power=power)
        quiet = dataclasses.replace(params, noise_floor_psd=1.0e-35)
        assert thz_noise_psd(0.85e12, 10.0, quiet) > 50.0 * params.noise_floor_psd
        assert thz_capacity_los(10.0, quiet) / thz_capacity_los(10.0, params) < 1.01
        assert thz_capacity_los(10.0, quiet) < 1.0e12


def test_thz_capacity_monotone():
    """Test THz capacity decreases with distance and increases with power."""
    params = ThzParams()
    d = np.linspace(0.5, 10.0, 40)
    capacity = thz_capacity_los(d, params)
    assert capacity.shape == d.shape
    assert np.all(np.diff(capacity) < 0.0)
    assert thz_capacity_los(5.0, ThzParams(tx_power=10.0)) > thz_capacity_los(5.0, params)


def test_thz_capacity_zero_power():
    """Test zero transmit power gives zero SNR and capacity."""
    params = ThzParams(tx_power=-math.inf)
    assert thz_snr(5.0, params) == 0.0
    assert thz_capacity_los(5.0, params) == 0.0


def test_thz_outage_anchor():
    """Test the outage probability at d_th equals 1 - 1/e when gamma_th is the SNR there."""
    params = ThzParams(gamma_th_fraction=1.0)
    assert thz_outage_prob(10.0, params) == pytest.approx(1.0 - math.exp(-1.0), abs=1.0e-9)
    assert thz_outage_prob(2.0, params) < thz_outage_prob(8.0, params)
    small = ThzParams(gamma_th_fraction=1.0e-6)
    assert thz_outage_prob(5.0, small) < 1.0e-5


def test_thz_outage_domain():
    """Test THz outage is only defined inside the THz range."""
    params = ThzParams()
    with pytest.raises(DomainError, match="beyond d_th"):
        thz_outage_prob(10.5, params)
    with pytest.raises(DomainError):
        thz_outage_prob(0.0, params)
    p_los, p_out = thz_state_probs(np.array([1.0, 5.0, 10.0]), params)
    np.testing.assert_allclose(p_los + p_out, 1.0)


def test_mmwave_hand_values():
    """Test mmWave path loss, SNR and capacity against hand-computed link budgets."""
    params = MmWaveParams()
    assert mmwave_path_loss(100.0, LinkState.LOS, params) == pytest.approx(109.8)
    assert mmwave_path_loss(100.0, LinkState.NLOS, params) == pytest.approx(82.7 + 53.8)
    assert mmwave_snr(100.0, LinkState.LOS, params) == pytest.approx(10.0 ** 2.92)
    expected = 1.0e9 * math.log2(1.0 + 10.0 ** 2.92)
    assert mmwave_capacity(100.0, LinkState.LOS, params) == pytest.approx(expected)
    assert nlos_snr_ratio(1.0, params) == pytest.approx(10.0 ** 1.29)
    with pytest.raises(DomainError, match="Outage"):
        mmwave_path_loss(100.0, LinkState.OUTAGE, params)


def test_mmwave_outage_curve():
    """Test mmWave outage is null up to 150 m and close to 0.67 at 200 m."""
    params = MmWaveParams()
    d = np.linspace(1.0, 150.0, 300)
    _, _, p_out = mmwave_state_probs(d, params)
    assert np.all(p_out == 0.0)
    _, _, p_out_200 = mmwave_state_probs(200.0, params)
    assert 0.64 <= p_out_200 <= 0.70


def test_mmwave_state_probs_simplex():
    """Test mmWave state probabilities sum to one everywhere."""
    d = np.linspace(0.04, 400.0, 10_000)
    p_los, p_nlos, p_out = mmwave_state_probs(d, MmWaveParams())
    np.testing.assert_allclose(p_los + p_nlos + p_out, 1.0, rtol=0.0, atol=1.0e-12)
    assert np.all(p_los >= 0.0)
    assert np.all(p_nlos >= 0.0)


def test_region_boundaries(default_model):
    """Test the closed region boundaries at both thresholds."""
    regions = default_model.region_of(np.array([0.5, 10.0, 10.01, 200.0, 200.01]))
    assert list(regions) == [Region.THZ, Region.THZ, Region.MMWAVE, Region.MMWAVE, Region.NONE]


def test_combined_capacity(default_model):
    """Test combined capacity switches bands at d_th^THz and vanishes beyond d_th^mm."""
    c_thz = combined_capacity(5.0, default_model)
    c_mm = combined_capacity(100.0, default_model)
    assert c_thz > 1.0e11
    assert 0.0 < c_mm < c_thz
    assert combined_capacity(250.0, default_model) == 0.0
    d = np.array([[5.0, 100.0], [250.0, 10.0]])
    assert combined_capacity(d, default_model).shape == (2, 2)
    with pytest.raises(DomainError):
        combined_capacity(np.array([1.0, -1.0]), default_model)


def test_thz_region_capacity_includes_outage(default_model):
    """Test the THz branch is the LoS capacity weighted by the LoS probability."""
    d = np.array([2.0, 9.0])
    expected = thz_capacity_los(d, default_model.thz) * (1.0 - thz_outage_prob(d, default_model.thz))
    np.testing.assert_allclose(default_model.region_capacity(d, Region.THZ), expected)


def test_capacity_model_outage_prob(default_model):
    """Test the active link's outage probability by region."""
    p = default_model.outage_prob(np.array([10.0, 200.0, 300.0]))
    assert p[0] == pytest.approx(1.0 - math.exp(-1.0))
    assert p[1] == pytest.approx(mmwave_state_probs(200.0, default_model.mmwave)[2])
    assert p[2] == 1.0


def test_capacity_model_threshold_order():
    """Test the mmWave threshold must exceed the THz threshold."""
    with pytest.raises(DomainError, match="must exceed"):
        CapacityModel(thz=ThzParams(d_th=10.0), mmwave=MmWaveParams(d_th=10.0))
    model = CapacityModel(mmwave=dataclasses.replace(MmWaveParams(), d_th=150.0))
    assert model.d_th_mm == 150.0
