import warnings
from typing import Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid


def binomial_sigma(p, n: int):
    """Standard deviation of the mean of n Bernoulli(p) samples."""
    p = np.asarray(p, dtype=np.float64)
    return np.sqrt(p * (1 - p) / n)


def standard_error(samples: np.ndarray, axis: int = 0):
    """
    Standard error of the mean along `axis`.

    Returns zero for a single sample instead of NaN.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[axis] < 2:
        return np.zeros(samples.shape[:axis] + samples.shape[axis + 1:])
    return stats.sem(samples, axis=axis)


def max_sigmas(observed, expected, sigma, floor: float = 1e-12) -> float:
    """
    Largest |observed - expected| in units of sigma.

    Entries with sigma = 0 count 0 when they agree to `floor`, infinity
    otherwise.
    """
    deviation = np.abs(np.asarray(observed, dtype=np.float64)
                       - np.asarray(expected, dtype=np.float64))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64),
                            deviation.shape)
    safe = np.where(sigma > 0, sigma, 1.0)
    ratios = np.where(sigma > 0, deviation / safe,
                      np.where(deviation > floor, np.inf, 0.0))
    return float(ratios.max())


def time_integral(times: Sequence[float], values: np.ndarray) -> float:
    """Trapezoidal integral of sampled values over time."""
    times = np.asarray(times, dtype=np.float64)
    if times.size < 2:
        return 0.0
    return float(trapezoid(np.asarray(values, dtype=np.float64), times))


def log_log_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Least-squares slope of log(y) against log(x).

    Non-positive values of y are dropped with a warning.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = y > 0
    if not np.all(keep):
        warnings.warn(f"dropping {np.count_nonzero(~keep)} non-positive "
                      f"values from the log-log fit")
    if np.count_nonzero(keep) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope)


def log_linear_fit(t: Sequence[float], y: Sequence[float]) -> Tuple[float,
                                                                    float]:
    """(slope, intercept) of the least-squares line through (t, log y)."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = y > 0
    if np.count_nonzero(keep) < 2:
        raise ValueError("need at least two positive values for a "
                         "log-linear fit")
    slope, intercept = np.polyfit(t[keep], np.log(y[keep]), 1)
    return float(slope), float(intercept)
