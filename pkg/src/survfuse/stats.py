"""Survival statistics: concordance index, Kaplan-Meier, log-rank, stratification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UndefinedMetricError


@dataclass(frozen=True)
class RiskRecord:
    risk: float
    time: float
    event: int


@dataclass
class KmCurve:
    """Product-limit curve evaluated at the distinct event times."""

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray


@dataclass(frozen=True)
class LogrankResult:
    chi2: float
    p: float


def concordance_index(risks, times, events) -> float:
    """Harrell's C over all comparable ordered pairs.

    A pair (i, j) is comparable when t_i < t_j and subject i had an event;
    equal-time pairs are excluded.  Concordant pairs have risk_i > risk_j;
    tied risks count 0.5.
    """
    risks = np.asarray(risks, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=np.int64)
    if risks.shape != times.shape or risks.shape != events.shape:
        raise ValueError("risks, times and events must have equal length")
    if risks.size < 2:
        raise UndefinedMetricError("need at least two records")
    comparable = (times[:, None] < times[None, :]) & (events[:, None] == 1)
    n_comp = int(comparable.sum())
    if n_comp == 0:
        raise UndefinedMetricError("no comparable pairs (all times tied or no events)")
    higher = risks[:, None] > risks[None, :]
    tied = risks[:, None] == risks[None, :]
    concordant = float((comparable & higher).sum())
    ties = float((comparable & tied).sum())
    return (concordant + 0.5 * ties) / n_comp


def kaplan_meier(times, events) -> KmCurve:
    """Product-limit estimator over the distinct event times.

    Censored subjects leave the risk set after their time and contribute no
    survival drop of their own.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=np.int64)
    if times.size == 0:
        raise DataError("kaplan_meier requires at least one subject")
    event_times = np.unique(times[events == 1])
    surv = 1.0
    survival, at_risk, n_events = [], [], []
    for t in event_times:
        n_t = int((times >= t).sum())
        d_t = int(((times == t) & (events == 1)).sum())
        surv *= 1.0 - d_t / n_t
        survival.append(surv)
        at_risk.append(n_t)
        n_events.append(d_t)
    return KmCurve(
        times=event_times,
        survival=np.array(survival, dtype=np.float64),
        at_risk=np.array(at_risk, dtype=np.int64),
        events=np.array(n_events, dtype=np.int64),
    )


def chi2_sf_1df(x: float) -> float:
    """Survival function of the chi-square distribution with one degree of
    freedom, via the closed form erfc(sqrt(x/2))."""
    if x < 0:
        raise ValueError(f"chi2 statistic must be nonnegative, got {x}")
    return math.erfc(math.sqrt(x / 2.0))


def logrank_test(times_a, events_a, times_b, events_b) -> LogrankResult:
    """Two-group log-rank test (1 df) on the pooled distinct event times."""
    times_a = np.asarray(times_a, dtype=np.float64)
    events_a = np.asarray(events_a, dtype=np.int64)
    times_b = np.asarray(times_b, dtype=np.float64)
    events_b = np.asarray(events_b, dtype=np.int64)
    if times_a.size == 0 or times_b.size == 0:
        raise UndefinedMetricError("both groups must be nonempty")
    if events_a.sum() + events_b.sum() == 0:
        raise UndefinedMetricError("log-rank test requires at least one event")
    pooled = np.unique(
        np.concatenate([times_a[events_a == 1], times_b[events_b == 1]])
    )
    observed_a = 0.0
    expected_a = 0.0
    variance = 0.0
    for t in pooled:
        n_a = int((times_a >= t).sum())
        n_b = int((times_b >= t).sum())
        n = n_a + n_b
        d_a = int(((times_a == t) & (events_a == 1)).sum())
        d_b = int(((times_b == t) & (events_b == 1)).sum())
        d = d_a + d_b
        if n == 0 or d == 0:
            continue
        observed_a += d_a
        expected_a += d * n_a / n
        if n > 1:
            variance += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1)
    if variance == 0.0:
        if abs(observed_a - expected_a) < 1e-12:
            # observed == expected at every time (e.g. identical groups)
            return LogrankResult(chi2=0.0, p=1.0)
        raise UndefinedMetricError("log-rank variance is zero with a nonzero deviation")
    chi2 = (observed_a - expected_a) ** 2 / variance
    return LogrankResult(chi2=chi2, p=chi2_sf_1df(chi2))


def stratify_by_median(records: list[RiskRecord]) -> tuple[list[RiskRecord], list[RiskRecord]]:
    """Split records at the median risk: strictly above -> high, rest -> low."""
    if len(records) < 2:
        raise DataError("stratification requires at least two records")
    risks = np.array([r.risk for r in records], dtype=np.float64)
    med = float(np.median(risks))
    high = [r for r in records if r.risk > med]
    low = [r for r in records if r.risk <= med]
    if not high or not low:
        raise DataError("degenerate split: all risks on one side of the median")
    return high, low
