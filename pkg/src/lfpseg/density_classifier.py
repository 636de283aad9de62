"""Chain peaks into intervals and label them by peak density and duration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_io import LabelClass, LabelInterval, Segmentation
from .zdensity_rode import PeakTrain

__all__ = ["DensityThresholds", "RawInterval", "integrate", "classify"]


@dataclass(frozen=True)
class DensityThresholds:
    """Rates are in peaks per second; durations in seconds."""

    ictal_density_hz: float = 2.0
    interictal_density_hz: float = 0.2
    min_ictal_duration_s: float = 5.0
    pad_s: float = 0.08

    def __post_init__(self):
        if not 0 < self.interictal_density_hz < self.ictal_density_hz:
            raise ValueError("need 0 < interictal_density_hz < ictal_density_hz")
        if not self.min_ictal_duration_s > 0:
            raise ValueError("min_ictal_duration_s must be positive")
        if self.pad_s < 0:
            raise ValueError("pad_s must be non-negative")


@dataclass(frozen=True)
class RawInterval:
    """Inclusive sample span ``[start_sample, end_sample]`` holding ``peak_count`` peaks."""

    start_sample: int
    end_sample: int
    peak_count: int

    def __post_init__(self):
        if self.end_sample < self.start_sample or self.peak_count < 1:
            raise ValueError("RawInterval needs end >= start and at least one peak")

    @property
    def n_samples(self) -> int:
        return self.end_sample - self.start_sample + 1


def integrate(peaks: PeakTrain, delta_s: float, pad_s: float = 0.0,
              total_len: int | None = None) -> list[RawInterval]:
    """Chain-merge peaks whose successive gaps are at most ``delta_s``.

    Each chain spans its first to last peak and is then widened by ``pad_s``
    on both sides (clamped to ``[0, total_len - 1]``). Chains whose padded
    spans overlap are merged, so the result is disjoint and every
    peak is counted exactly once.
    """
    if not delta_s > 0:
        raise ValueError("delta_s must be positive")
    idx = peaks.indices
    if idx.size == 0:
        return []
    rate = peaks.sample_rate_hz
    max_gap = round(delta_s * rate, 9)  # gaps of exactly delta stay inclusive despite float error
    pad = int(round(pad_s * rate))
    hi = np.inf if total_len is None else total_len - 1

    breaks = np.flatnonzero(np.diff(idx) > max_gap) + 1
    chains = np.split(idx, breaks)
    out: list[RawInterval] = []
    for chain in chains:
        start = max(int(chain[0]) - pad, 0)
        end = int(min(int(chain[-1]) + pad, hi))
        if out and start <= out[-1].end_sample:
            prev = out.pop()
            out.append(RawInterval(prev.start_sample, max(end, prev.end_sample),
                                   prev.peak_count + chain.size))
        else:
            out.append(RawInterval(start, end, int(chain.size)))
    return out


def classify(intervals: list[RawInterval], thr: DensityThresholds, total_len: int,
             rate: float) -> Segmentation:
    """Label each interval ictal, interictal, or drop it to baseline."""
    labelled = []
    prev_end = -1
    for iv in intervals:
        if iv.start_sample <= prev_end:
            raise ValueError("classify needs disjoint, sorted intervals")
        prev_end = iv.end_sample
        duration = iv.n_samples / rate
        density = iv.peak_count / duration
        if density >= thr.ictal_density_hz and duration >= thr.min_ictal_duration_s:
            label = LabelClass.ICTAL
        elif density >= thr.interictal_density_hz:
            label = LabelClass.INTERICTAL
        else:
            continue
        labelled.append(LabelInterval(iv.start_sample, min(iv.end_sample + 1, total_len), label))
    return Segmentation(tuple(labelled), total_len)
