import pytest

from data_shower.metrics import ConfidenceInterval, mean_confidence_interval


def test_mean_confidence_interval():
    """Test the 95% interval of a small sample."""
    ci = mean_confidence_interval([1.0, 2.0, 3.0, 4.0, 5.0])
    assert ci.mean == pytest.approx(3.0)
    assert ci.half_width == pytest.approx(1.3859, abs=1.0e-4)
    assert ci.n == 5
    assert ci.low == pytest.approx(3.0 - ci.half_width)
    assert ci.high == pytest.approx(3.0 + ci.half_width)
    assert mean_confidence_interval([1.0, 2.0, 3.0, 4.0, 5.0], level=0.99).half_width > ci.half_width


def test_single_sample():
    """Test one run gives a zero-width interval."""
    assert mean_confidence_interval([2.5]) == ConfidenceInterval(mean=2.5, half_width=0.0, level=0.95, n=1)


def test_confidence_interval_errors():
    """Test empty samples and levels outside (0, 1)."""
    with pytest.raises(ValueError, match="empty"):
        mean_confidence_interval([])
    with pytest.raises(ValueError, match="level"):
        mean_confidence_interval([1.0, 2.0], level=1.0)
