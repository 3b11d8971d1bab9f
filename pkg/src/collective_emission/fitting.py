"""Power-law fits on log-log data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InvalidArgument


@dataclass(frozen=True)
class PowerLawFit:
    """``y = prefactor * x**exponent`` with standard errors from least squares."""

    exponent: float
    exponent_stderr: float
    prefactor: float
    log_prefactor_stderr: float
    x_used: tuple

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "exponent_stderr": self.exponent_stderr,
                "prefactor": self.prefactor, "log_prefactor_stderr": self.log_prefactor_stderr,
                "x_used": list(self.x_used)}


def fit_power_law(x, y, exclude_smallest: bool = True) -> PowerLawFit:
    """Least-squares line through ``(log x, log y)``.

    At least three points are required before any exclusion. By default the
    point with the smallest ``x`` is dropped, since finite-size transients
    are largest there.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidArgument("x and y must be 1-d arrays of equal length")
    if len(x) < 3:
        raise InvalidArgument(f"a power-law fit needs at least 3 points, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidArgument("power-law fits need positive data")
    order = np.argsort(x)
    x, y = x[order], y[order]
    if exclude_smallest:
        x, y = x[1:], y[1:]
    res = stats.linregress(np.log(x), np.log(y))
    return PowerLawFit(float(res.slope), float(res.stderr), float(np.exp(res.intercept)),
                       float(res.intercept_stderr), tuple(float(v) for v in x))


def prefactor_at_exponent(x, y, exponent: float) -> float:
    """Least-squares prefactor on log-log data with the exponent held fixed."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return float(np.exp(np.mean(np.log(y) - exponent * np.log(x))))
