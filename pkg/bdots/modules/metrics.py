"""Error and power summaries over Monte Carlo replicates.

Every function takes ``masks`` of shape (replicates, T): True where a method flagged
the time point as significant.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import InvalidArgument
from ..models import SimReport

logger = logging.getLogger(__name__)


@dataclass
class PowerSummary:
    alpha: float
    beta: float
    power: float
    onset_quartiles: Optional[Tuple[float, float, float]]
    per_time: np.ndarray


@dataclass
class ReplicateOutcome:
    null_detection: bool
    any_detection: bool
    onset: Optional[float]
    n_significant: int


def _masks(masks) -> np.ndarray:
    m = np.asarray(masks, dtype=bool)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2 or m.shape[0] == 0:
        raise InvalidArgument("need at least one replicate mask")
    return m


def _region(region, T: int) -> np.ndarray:
    r = np.asarray(region, dtype=bool)
    if r.shape != (T,):
        raise InvalidArgument(f"region has shape {r.shape}, expected ({T},)")
    return r


def aggregate_fwer(masks, null_region) -> float:
    """Share of replicates with at least one detection inside the null region."""
    m = _masks(masks)
    null = _region(null_region, m.shape[1])
    if not null.any():
        return 0.0
    return float(np.mean(m[:, null].any(axis=1)))


def aggregate_median_pcer(masks, null_region) -> float:
    """Median over null-region time points of the per-time false-positive rate."""
    m = _masks(masks)
    null = _region(null_region, m.shape[1])
    if not null.any():
        return 0.0
    return float(np.median(m[:, null].mean(axis=0)))


def _onset(row: np.ndarray, times: np.ndarray, effect: np.ndarray) -> Optional[float]:
    hits = row & effect
    return float(times[np.argmax(hits)]) if hits.any() else None


def aggregate_power(masks, effect_region, times, null_region=None) -> PowerSummary:
    """alpha / beta / 1 - alpha - beta classification of replicates.

    alpha: any detection in the null region (takes precedence); beta: no detection at all;
    the rest detect in the effect region only, and their earliest effect-region detection
    is the onset. Quartiles are over that subset and None when it is empty.
    """
    m = _masks(masks)
    times = np.asarray(times, dtype=float)
    effect = _region(effect_region, m.shape[1])
    if not effect.any():
        raise InvalidArgument("effect region is empty")
    null = ~effect if null_region is None else _region(null_region, m.shape[1])

    null_hit = m[:, null].any(axis=1) if null.any() else np.zeros(m.shape[0], dtype=bool)
    any_hit = m.any(axis=1)
    good = ~null_hit & (m & effect).any(axis=1)
    onsets = [_onset(row, times, effect) for row in m[good]]
    quartiles = None
    if onsets:
        q1, q2, q3 = np.quantile(np.array(onsets), [0.25, 0.5, 0.75])
        quartiles = (float(q1), float(q2), float(q3))
    return PowerSummary(
        alpha=float(np.mean(null_hit)),
        beta=float(np.mean(~any_hit)),
        power=float(np.mean(good)),
        onset_quartiles=quartiles,
        per_time=m.mean(axis=0),
    )


def replicate_outcome(mask, times, null_region, effect_region) -> ReplicateOutcome:
    mask = np.asarray(mask, dtype=bool)
    times = np.asarray(times, dtype=float)
    null = _region(null_region, mask.size)
    effect = _region(effect_region, mask.size)
    return ReplicateOutcome(
        null_detection=bool((mask & null).any()),
        any_detection=bool(mask.any()),
        onset=_onset(mask, times, effect),
        n_significant=int(mask.sum()),
    )


SUMMARY_COLUMNS = ["method", "settings", "fwer", "median_pcer", "alpha", "beta", "power",
                   "onset_q1", "onset_median", "onset_q3"]


def summarize_methods(reports: Sequence[SimReport]) -> pd.DataFrame:
    """Per-method means over several scenario reports."""
    rows: List[dict] = []
    for report in reports:
        for name, mr in report.methods.items():
            row = {"method": name, "settings": 1, "fwer": mr.fwer, "median_pcer": mr.median_pcer}
            if mr.power is not None:
                row.update(alpha=mr.power.alpha, beta=mr.power.beta, power=mr.power.power,
                           onset_q1=mr.power.onset_q1, onset_median=mr.power.onset_median,
                           onset_q3=mr.power.onset_q3)
            rows.append(row)
    if not rows:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    df = pd.DataFrame(rows).reindex(columns=SUMMARY_COLUMNS)
    df[SUMMARY_COLUMNS[2:]] = df[SUMMARY_COLUMNS[2:]].apply(pd.to_numeric, errors="coerce")
    out = df.groupby("method", sort=True).agg(
        settings=("settings", "sum"),
        **{c: (c, "mean") for c in SUMMARY_COLUMNS[2:]},
    ).reset_index()
    return out[SUMMARY_COLUMNS]
