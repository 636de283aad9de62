"""Windowed automatic multiscale peak detection (AMPDE).

For every window the local maxima scalogram (LMS) marks, per scale ``k``,
which samples exceed both neighbours at distance ``k`` (entry 0) and fills
every other entry with ``r + alpha``, ``r ~ U[0, 1)``. The scale whose row
mean is smallest bounds the rows that are kept; a column whose kept entries
have zero spread is a peak.

LMS columns are aligned with samples: column ``j`` describes sample ``j``
of the window, so a scale-``k`` row has ``k`` boundary columns at each end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .preprocess import BandpassSpec, NotchSpec, bandpass, detrend_linear, notch_filter, remove_offset
from .signal_io import Signal
from .zdensity_rode import PeakTrain

__all__ = [
    "AmpdeParams",
    "LmsMatrix",
    "AmpdeCandidates",
    "compute_lms",
    "gamma",
    "optimal_scale",
    "detect_peaks_in_window",
    "window_starts",
    "ampde_candidates",
    "ampde_process",
]


@dataclass(frozen=True)
class AmpdeParams:
    window_s: float = 10.0
    overlap_s: float = 1.0
    scale_cap: int | None = 1000
    threshold_sigma: float = 4.0
    delta_s: float = 2.0
    alpha: float = 1.0
    rng_seed: int = 0
    notch: NotchSpec | None = field(default_factory=NotchSpec)
    bandpass: BandpassSpec | None = field(default_factory=BandpassSpec)

    def __post_init__(self):
        if not self.window_s > 0 or self.overlap_s < 0 or self.overlap_s >= self.window_s:
            raise ValueError("need window_s > 0 and 0 <= overlap_s < window_s")
        if self.scale_cap is not None and self.scale_cap < 1:
            raise ValueError("scale_cap must be >= 1")
        if not (self.threshold_sigma > 0 and self.delta_s > 0):
            raise ValueError("threshold_sigma and delta_s must be positive")


@dataclass(frozen=True, eq=False)
class LmsMatrix:
    values: np.ndarray  # (L, N)

    @property
    def L(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]


class AmpdeCandidates(NamedTuple):
    """Ungated peaks of a whole signal with their gate statistic."""

    indices: np.ndarray
    amplitudes: np.ndarray
    gate_z: np.ndarray  # |x - median(window)| / std(window) of the first window that found the peak
    sample_rate_hz: float


def n_scales(n: int, scale_cap: int | None) -> int:
    L = n // 2 - 1
    if scale_cap is not None:
        L = min(L, scale_cap)
    return L


def _window_rng(seed: int, window_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, window_index])


def _lms_rows(x: np.ndarray, n_rows: int, alpha: float, rng: np.random.Generator):
    """Yield ``(row, zero_mask)`` for scales 1..n_rows, one uniform draw per entry."""
    n = x.size
    for k in range(1, n_rows + 1):
        zero = np.zeros(n, dtype=bool)
        mid = x[k : n - k]
        zero[k : n - k] = (mid > x[: n - 2 * k]) & (mid > x[2 * k :])
        row = rng.random(n) + alpha
        row[zero] = 0.0
        yield row, zero


def _row_gamma(row: np.ndarray) -> float:
    return float(np.add.reduce(row)) / row.size


def _check_window(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size // 2 - 1 < 1:
        raise ValueError("window needs at least 4 samples")
    return x


def compute_lms(window, params: AmpdeParams = AmpdeParams(), window_index: int = 0) -> LmsMatrix:
    """Materialise the L x N scalogram of an already detrended window."""
    x = _check_window(window)
    L = n_scales(x.size, params.scale_cap)
    rng = _window_rng(params.rng_seed, window_index)
    rows = [row for row, _ in _lms_rows(x, L, params.alpha, rng)]
    return LmsMatrix(np.vstack(rows))


def gamma(lms: LmsMatrix) -> np.ndarray:
    """Per-scale mean of the LMS rows."""
    return np.array([_row_gamma(row) for row in lms.values])


def optimal_scale(gamma_vec) -> int:
    """1-based scale of the smallest gamma; ties go to the smaller scale."""
    g = np.asarray(gamma_vec, dtype=np.float64)
    if g.size == 0:
        raise ValueError("empty gamma vector")
    return int(np.argmin(g)) + 1


def detect_peaks_in_window(window, params: AmpdeParams = AmpdeParams(), window_index: int = 0,
                           return_scale: bool = False):
    """Peak positions (0-based) of a detrended, conditioned window.

    Works row by row, so memory stays O(N): one pass for gamma, then the
    generator is re-seeded and the first ``lambda`` rows are replayed to get
    column-wise standard deviations.
    """
    x = _check_window(window)
    n = x.size
    L = n_scales(n, params.scale_cap)
    g = np.empty(L)
    rng = _window_rng(params.rng_seed, window_index)
    for k, (row, _) in enumerate(_lms_rows(x, L, params.alpha, rng)):
        g[k] = _row_gamma(row)
    lam = optimal_scale(g)

    rng = _window_rng(params.rng_seed, window_index)
    mean = np.zeros(n)
    m2 = np.zeros(n)
    first_zero = None
    for k, (row, zero) in enumerate(_lms_rows(x, lam, params.alpha, rng), start=1):
        if first_zero is None:
            first_zero = zero
        d = row - mean
        mean += d / k
        m2 += d * (row - mean)
    peaks = np.flatnonzero((m2 == 0.0) & first_zero)
    return (peaks, lam) if return_scale else peaks


def window_starts(n: int, win: int, overlap: int) -> list[int]:
    if n < win:
        raise ValueError(f"signal of {n} samples is shorter than one window ({win})")
    step = win - overlap
    starts = list(range(0, n - win + 1, step))
    if starts[-1] + win < n:
        starts.append(n - win)
    return starts


def condition(params: AmpdeParams, signal: Signal) -> Signal:
    signal = remove_offset(signal)
    if params.notch is not None:
        signal = notch_filter(signal, params.notch)
    if params.bandpass is not None:
        signal = bandpass(signal, params.bandpass)
    return signal


def ampde_candidates(params: AmpdeParams, signal: Signal) -> AmpdeCandidates:
    """Condition, window, detrend and detect; no amplitude gate yet."""
    rate = signal.sample_rate_hz
    win = int(round(params.window_s * rate))
    ovl = int(round(params.overlap_s * rate))
    starts = window_starts(len(signal), win, ovl)
    x = condition(params, signal).samples

    found: dict[int, float] = {}
    for w, s in enumerate(starts):
        d = detrend_linear(x[s : s + win])
        idx = detect_peaks_in_window(d, params, window_index=w)
        sd = d.std()
        med = np.median(d)
        z = np.abs(d[idx] - med) / sd if sd > 0 else np.zeros(idx.size)
        for i, zi in zip((idx + s).tolist(), z.tolist()):
            found.setdefault(i, zi)  # overlap duplicates: first window wins
    order = sorted(found)
    indices = np.asarray(order, dtype=np.int64)
    return AmpdeCandidates(indices, x[indices], np.asarray([found[i] for i in order]), rate)


def gate(cands: AmpdeCandidates, threshold_sigma: float) -> PeakTrain:
    keep = cands.gate_z > threshold_sigma
    return PeakTrain(cands.indices[keep], cands.amplitudes[keep], cands.sample_rate_hz)


def ampde_process(params: AmpdeParams, signal: Signal) -> PeakTrain:
    return gate(ampde_candidates(params, signal), params.threshold_sigma)
