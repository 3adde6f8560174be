"""Sufficient statistics of a trajectory and pilot normalization.

Each 5-channel record is compressed to a fixed 35-vector: per-channel mean
and log-variance, autocorrelation coefficients at three lags, and the
lag-zero Pearson cross-correlation of every unordered channel pair. A
Normalizer fitted on a pilot batch of prior-predictive simulations
standardizes the coordinates before they reach the density estimator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .simulator import CHANNEL_NAMES, TrajectoryRecord

__all__ = [
    "SUMMARY_LENGTH", "ACF_LAGS", "SummaryVector", "Normalizer",
    "summarize", "fit_normalizer", "normalize", "summary_layout",
    "write_normalizer", "read_normalizer",
]

ACF_LAGS = (10, 20, 40)       # samples: 0.05 / 0.1 / 0.2 s at 200 Hz
VARIANCE_FLOOR = 1e-12        # keeps log-variance finite for constant channels

_N_CH = len(CHANNEL_NAMES)
_PAIRS = [(i, j) for i in range(_N_CH) for j in range(i + 1, _N_CH)]
SUMMARY_LENGTH = 2 * _N_CH + len(ACF_LAGS) * _N_CH + len(_PAIRS)


def summary_layout() -> list:
    """Names of the 35 summary coordinates, in order."""
    names = [f"mean:{c}" for c in CHANNEL_NAMES]
    names += [f"logvar:{c}" for c in CHANNEL_NAMES]
    for c in CHANNEL_NAMES:
        names += [f"acf{k}:{c}" for k in ACF_LAGS]
    names += [f"xcorr:{CHANNEL_NAMES[i]}:{CHANNEL_NAMES[j]}" for i, j in _PAIRS]
    return names


@dataclass
class SummaryVector:
    values: np.ndarray
    normalized: bool = False


def summarize(record: TrajectoryRecord) -> SummaryVector:
    """Compress a valid record into the 35 summary statistics."""
    if not record.valid:
        raise ValueError("cannot summarize an invalid record")
    x = np.asarray(record.channels, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("record contains non-finite channel values")
    n, n_ch = x.shape
    if n_ch != _N_CH:
        raise ValueError(f"expected {_N_CH} channels")
    if n <= max(ACF_LAGS):
        raise ValueError("record too short for the autocorrelation lags")

    means = x.mean(axis=0)
    d = x - means
    ss = np.sum(d * d, axis=0)            # n * population variance
    var = ss / n
    logvars = np.log(var + VARIANCE_FLOOR)

    vals = [means, logvars]
    acf = np.zeros((_N_CH, len(ACF_LAGS)))
    for ci in range(_N_CH):
        if ss[ci] > 0:
            for li, lag in enumerate(ACF_LAGS):
                acf[ci, li] = np.dot(d[:-lag, ci], d[lag:, ci]) / ss[ci]
    vals.append(acf.ravel())

    xcorr = np.zeros(len(_PAIRS))
    for pi, (i, j) in enumerate(_PAIRS):
        if ss[i] > 0 and ss[j] > 0:
            xcorr[pi] = np.dot(d[:, i], d[:, j]) / np.sqrt(ss[i] * ss[j])
    vals.append(xcorr)

    values = np.concatenate(vals)
    assert values.shape == (SUMMARY_LENGTH,)
    return SummaryVector(values=values, normalized=False)


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    pilot_count: int

    def validate(self) -> None:
        if self.mean.shape != (SUMMARY_LENGTH,) or self.std.shape != (SUMMARY_LENGTH,):
            raise ValueError("normalizer arrays must have the summary length")
        if np.any(self.std < 0):
            raise ValueError("stds must be non-negative")
        if self.pilot_count < 2:
            raise ValueError("pilot_count must be >= 2")


def fit_normalizer(summaries: list) -> Normalizer:
    """Per-coordinate mean and sample std (n-1 denominator) of a pilot set."""
    if len(summaries) < 2:
        raise ValueError("need at least 2 summaries to fit a normalizer")
    vals = np.stack([s.values for s in summaries])
    if not np.all(np.isfinite(vals)):
        raise ValueError("pilot summaries contain non-finite values")
    return Normalizer(mean=vals.mean(axis=0), std=vals.std(axis=0, ddof=1),
                      pilot_count=len(summaries))


def normalize(s: SummaryVector, n: Normalizer) -> SummaryVector:
    """Standardize a raw summary; coordinates with zero pilot std map to 0."""
    if s.normalized:
        raise ValueError("summary is already normalized")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(n.std > 0, (s.values - n.mean) / n.std, 0.0)
    return SummaryVector(values=z, normalized=True)


def write_normalizer(n: Normalizer, path) -> None:
    doc = {
        "schema": "vehsbi-normalizer-v1",
        "layout": summary_layout(),
        "mean": [repr(float(v)) for v in n.mean],
        "std": [repr(float(v)) for v in n.std],
        "pilot_count": n.pilot_count,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_normalizer(path) -> Normalizer:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != "vehsbi-normalizer-v1":
        raise ValueError("not a normalizer file")
    if doc["layout"] != summary_layout():
        raise ValueError("normalizer layout does not match this build")
    n = Normalizer(mean=np.array([float(v) for v in doc["mean"]]),
                   std=np.array([float(v) for v in doc["std"]]),
                   pilot_count=int(doc["pilot_count"]))
    n.validate()
    return n
