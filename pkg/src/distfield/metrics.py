"""Location and field-reconstruction errors, box-plot summaries, outlier curves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import DEFAULT_RESOLUTION, DEFAULT_SPREAD, Region, bell_derivatives, region_nodes


@dataclass(frozen=True)
class BoxStats:
    """Box-plot summary of the finite samples.

    Quartiles use linear interpolation between order statistics (numpy's
    default, Hyndman-Fan type 7). Whiskers reach the most extreme samples
    within 1.5 IQR of the box; everything beyond is listed in ``outliers``.
    Non-finite samples (diverged runs) are only counted in ``n_nonfinite``.
    """

    median: float
    q25: float
    q75: float
    whisker_low: float
    whisker_high: float
    outliers: tuple
    n_inside: int
    n_nonfinite: int = 0

    @property
    def n(self) -> int:
        return self.n_inside + len(self.outliers) + self.n_nonfinite


@dataclass(frozen=True)
class TrialResult:
    trial: int
    K: int
    theta_hat: tuple
    se: float
    ise: float
    converged: bool
    iterations: int
    failure_reason: str | None = None
    loglik_monotone: bool = True

    @property
    def diverged(self) -> bool:
        return not np.isfinite(self.se)


def location_se(theta_hat, theta_true) -> float:
    """Squared distance between estimated and true field centers (``mu`` ignored)."""
    th = np.asarray(theta_hat, dtype=float)
    tt = np.asarray(theta_true, dtype=float)
    if not np.all(np.isfinite(th)):
        return float("inf")
    return float((th[1] - tt[1]) ** 2 + (th[2] - tt[2]) ** 2)


def ise(theta_hat, theta_true, spread=DEFAULT_SPREAD, region: Region | None = None,
        resolution=DEFAULT_RESOLUTION) -> float:
    """Integrated squared error of the reconstructed field, normalised by field energy."""
    th = np.asarray(theta_hat, dtype=float)
    if not np.all(np.isfinite(th)):
        return float("inf")
    region = region or Region()
    X, Y, W = region_nodes(region, resolution)
    g_true = bell_derivatives(np.asarray(theta_true, dtype=float), X, Y, spread, order=0)
    g_hat = bell_derivatives(th, X, Y, spread, order=0)
    # exactly rounded sums: independent of node order
    return math.fsum((W * (g_hat - g_true) ** 2).ravel()) / math.fsum((W * g_true ** 2).ravel())


def box_stats(samples, whis=1.5) -> BoxStats:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("box_stats needs at least one sample")
    finite = np.sort(x[np.isfinite(x)])
    n_nonfinite = int(x.size - finite.size)
    if finite.size == 0:
        nan = float("nan")
        return BoxStats(nan, nan, nan, nan, nan, (), 0, n_nonfinite)
    q25, median, q75 = np.percentile(finite, [25.0, 50.0, 75.0])
    iqr = q75 - q25
    lo_fence = q25 - whis * iqr
    hi_fence = q75 + whis * iqr
    inside = finite[(finite >= lo_fence) & (finite <= hi_fence)]
    outliers = tuple(float(v) for v in finite[(finite < lo_fence) | (finite > hi_fence)])
    return BoxStats(float(median), float(q25), float(q75), float(inside[0]), float(inside[-1]),
                    outliers, int(inside.size), n_nonfinite)


def outlier_curve(se_samples, thresholds):
    """``[(tau, 100 * P[SE > tau]), ...]``; infinite SE counts at every threshold."""
    se = np.asarray(se_samples, dtype=float).ravel()
    if se.size == 0:
        raise ValueError("outlier_curve needs at least one sample")
    taus = np.asarray(thresholds, dtype=float).ravel()
    if np.any(np.diff(taus) < 0):
        raise ValueError("thresholds must be sorted ascending")
    # NaN SE is treated like divergence
    se = np.where(np.isnan(se), np.inf, se)
    pct = [100.0 * np.count_nonzero(se > t) / se.size for t in taus]
    return [(float(t), float(p)) for t, p in zip(taus, pct)]


def outlier_fraction(se_samples, tau) -> float:
    """``P[SE > tau]`` as a fraction."""
    return outlier_curve(se_samples, [tau])[0][1] / 100.0
