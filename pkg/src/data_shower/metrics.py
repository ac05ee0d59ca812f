import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class ConfidenceInterval:
    mean: float  # sample mean
    half_width: float  # half width of the interval
    level: float  # confidence level
    n: int  # number of samples

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width


def mean_confidence_interval(values: Sequence[float] | np.ndarray, level: float = 0.95) -> ConfidenceInterval:
    """
    Normal-approximation confidence interval of the mean of independent run results.

    A single sample yields a zero-width interval.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    samples = np.asarray(values, dtype=float)
    if samples.size == 0:
        raise ValueError("cannot summarize an empty sample")
    mean = float(samples.mean())
    if samples.size == 1:
        return ConfidenceInterval(mean=mean, half_width=0.0, level=level, n=1)
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    sem = float(samples.std(ddof=1)) / math.sqrt(samples.size)
    return ConfidenceInterval(mean=mean, half_width=z * sem, level=level, n=int(samples.size))
