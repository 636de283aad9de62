"""Streaming adaptive z-score peak detector (ZdensityRODE).

Each sample is tested against the mean and standard deviation of a FIFO of
the last ``lag`` filtered values. Outliers enter the FIFO damped by the
influence weight, ordinary samples enter unchanged. A peak is reported one
sample late, once the following sample confirms a local maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .preprocess import NotchSpec, notch_filter
from .signal_io import Signal

__all__ = ["ZdrParams", "ZdrState", "PeakTrain", "Peak", "zdr_new", "zdr_step", "zdr_process"]


@dataclass(frozen=True)
class ZdrParams:
    """
    Parameters
    ----------
    lag_s : float
        History length in seconds.
    threshold_sigma : float
        z-score above which a sample is an outlier.
    influence : float
        Weight in [0, 1] of an outlier when it enters the history.
    delta_s : float
        Peak-chaining gap used by the density classifier.
    two_sided : bool
        Test ``|z| > threshold`` instead of ``z > threshold``.
    sigma_floor : float, optional
        Lower bound on the standard deviation. ``None`` means 1e-9 times the
        largest absolute value seen during training (at least 1e-12).
    notch : NotchSpec, optional
        Powerline notch applied by :func:`zdr_process`; ``None`` disables it.
    """

    lag_s: float = 0.125
    threshold_sigma: float = 5.0
    influence: float = 0.5
    delta_s: float = 3.0
    two_sided: bool = True
    sigma_floor: float | None = None
    notch: NotchSpec | None = field(default_factory=NotchSpec)

    def __post_init__(self):
        if not 0.0 <= self.influence <= 1.0:
            raise ValueError("influence must lie in [0, 1]")
        if not (self.lag_s > 0 and self.threshold_sigma > 0 and self.delta_s > 0):
            raise ValueError("lag_s, threshold_sigma and delta_s must be positive")
        if self.sigma_floor is not None and not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be positive")


class Peak(NamedTuple):
    index: int
    amplitude: float


@dataclass(frozen=True, eq=False)
class PeakTrain:
    """Sorted peak positions (sample indices) with their sample values."""

    indices: np.ndarray
    amplitudes: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        amp = np.asarray(self.amplitudes, dtype=np.float64).ravel()
        if idx.shape != amp.shape:
            raise ValueError("indices and amplitudes must have equal length")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("peak indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "amplitudes", amp)

    def __len__(self) -> int:
        return self.indices.size

    def __eq__(self, other):
        if not isinstance(other, PeakTrain):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.amplitudes, other.amplitudes)
        )

    @classmethod
    def from_peaks(cls, peaks: Sequence[Peak], sample_rate_hz: float) -> "PeakTrain":
        return cls([p.index for p in peaks], [p.amplitude for p in peaks], sample_rate_hz)

    @property
    def times_s(self) -> np.ndarray:
        return self.indices / self.sample_rate_hz


def lag_samples(lag_s: float, sample_rate_hz: float) -> int:
    # guard against 0.125 * 2000 = 250.00000000000003 style ceil overshoot
    return int(math.ceil(round(lag_s * sample_rate_hz, 9)))


class ZdrState:
    """Mutable detector state; memory is O(lag) regardless of signal length."""

    def __init__(self, params: ZdrParams, sample_rate_hz: float):
        if not sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        lag = lag_samples(params.lag_s, sample_rate_hz)
        if lag < 2:
            raise ValueError(f"lag of {params.lag_s} s is shorter than 2 samples")
        self.params = params
        self.sample_rate_hz = float(sample_rate_hz)
        self.lag = lag
        self.buffer = [0.0] * lag  # ring of filtered values U
        self.pos = 0
        self.mu = 0.0
        self.m2 = 0.0  # sum of squared deviations over the buffer
        self.sample_index = 0
        self.prev_samples = (0.0, 0.0)  # (x[n-2], x[n-1])
        self.prev_outlier = False
        self.u_prev = 0.0
        self.last_peak_index: int | None = None
        self.sigma_floor = params.sigma_floor
        self._train_absmax = 0.0

    @property
    def trained(self) -> bool:
        return self.sample_index >= self.lag

    @property
    def sigma(self) -> float:
        return math.sqrt(self.m2 / self.lag)

    def buffer_size(self) -> int:
        return len(self.buffer)

    def step(self, x: float) -> Peak | None:
        peaks = self.feed((x,))
        return peaks[0] if peaks else None

    def feed(self, xs) -> list[Peak]:
        """Process samples in order and return the peaks they confirm."""
        p = self.params
        lag = self.lag
        tau = float(p.threshold_sigma)
        infl = float(p.influence)
        two_sided = p.two_sided
        buf = self.buffer
        pos, mu, m2 = self.pos, self.mu, self.m2
        n = self.sample_index
        x2, x1 = self.prev_samples
        prev_out = self.prev_outlier
        u_prev = self.u_prev
        floor = self.sigma_floor
        absmax = self._train_absmax
        last_peak = self.last_peak_index
        sqrt = math.sqrt
        peaks: list[Peak] = []

        for x in xs:
            x = float(x)
            if n < lag:
                # training: raw samples, running Welford accumulation
                buf[n] = x
                d = x - mu
                mu += d / (n + 1)
                m2 += d * (x - mu)
                if abs(x) > absmax:
                    absmax = abs(x)
                u = x
                outlier = False
                if n == lag - 1 and floor is None:
                    floor = max(1e-9 * absmax, 1e-12)
            else:
                sigma = sqrt(m2 / lag)
                z = (x - mu) / (sigma if sigma > floor else floor)
                outlier = z > tau or (two_sided and z < -tau)
                u = infl * x + (1.0 - infl) * u_prev if outlier else x
                y = buf[pos]
                buf[pos] = u
                pos += 1
                if pos == lag:
                    pos = 0
                    # periodic exact recompute bounds drift of the sliding update
                    mu = math.fsum(buf) / lag
                    m2 = math.fsum((b - mu) * (b - mu) for b in buf)
                else:
                    old = mu
                    mu = old + (u - y) / lag
                    m2 += (u - y) * (u - mu + y - old)
                    if m2 < 0.0:
                        m2 = 0.0
                if prev_out and x2 < x1 and x < x1:
                    last_peak = n - 1
                    peaks.append(Peak(n - 1, x1))
            x2, x1 = x1, x
            prev_out = outlier
            u_prev = u
            n += 1

        self.pos, self.mu, self.m2 = pos, mu, m2
        self.sample_index = n
        self.prev_samples = (x2, x1)
        self.prev_outlier = prev_out
        self.u_prev = u_prev
        self.sigma_floor = floor
        self._train_absmax = absmax
        self.last_peak_index = last_peak
        return peaks


def zdr_new(params: ZdrParams, sample_rate_hz: float) -> ZdrState:
    return ZdrState(params, sample_rate_hz)


def zdr_step(state: ZdrState, x: float) -> Peak | None:
    return state.step(x)


def zdr_process(params: ZdrParams, signal: Signal) -> PeakTrain:
    """Notch-filter ``signal`` (if configured) and run the detector over it."""
    state = ZdrState(params, signal.sample_rate_hz)
    if len(signal) <= state.lag:
        raise ValueError(f"signal of {len(signal)} samples is not longer than the lag ({state.lag})")
    if params.notch is not None:
        signal = notch_filter(signal, params.notch)
    peaks = state.feed(signal.samples.tolist())
    return PeakTrain.from_peaks(peaks, signal.sample_rate_hz)
