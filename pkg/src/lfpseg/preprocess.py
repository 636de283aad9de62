"""Causal signal conditioning shared by both detectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .signal_io import Signal

__all__ = [
    "NotchSpec",
    "BandpassSpec",
    "notch_filter",
    "bandpass",
    "detrend_linear",
    "moving_average",
    "remove_offset",
]


@dataclass(frozen=True)
class NotchSpec:
    center_hz: float = 50.0
    quality_factor: float = 90.0

    def validate(self, rate: float) -> None:
        if not 0 < self.center_hz < rate / 2:
            raise ValueError(f"notch center {self.center_hz} Hz must lie in (0, Nyquist={rate / 2})")
        if not self.quality_factor > 0:
            raise ValueError("quality_factor must be positive")


@dataclass(frozen=True)
class BandpassSpec:
    low_hz: float = 0.5
    high_hz: float = 50.0
    order: int = 4

    def validate(self, rate: float) -> None:
        if not 0 <= self.low_hz < self.high_hz < rate / 2:
            raise ValueError(
                f"invalid band [{self.low_hz}, {self.high_hz}] Hz for rate {rate} Hz"
            )
        if self.order < 2:
            raise ValueError("order must be >= 2")


def notch_filter(signal: Signal, spec: NotchSpec = NotchSpec()) -> Signal:
    """Second-order IIR notch applied causally from a zero initial state."""
    spec.validate(signal.sample_rate_hz)
    b, a = sps.iirnotch(spec.center_hz, spec.quality_factor, fs=signal.sample_rate_hz)
    return signal.replace_samples(sps.lfilter(b, a, signal.samples))


def _bandpass_sos(spec: BandpassSpec, rate: float) -> np.ndarray:
    if spec.low_hz == 0:
        return sps.butter(spec.order, spec.high_hz, btype="lowpass", fs=rate, output="sos")
    return sps.butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass", fs=rate, output="sos")


def bandpass(signal: Signal, spec: BandpassSpec = BandpassSpec()) -> Signal:
    """Causal Butterworth bandpass realised as cascaded biquads.

    ``order`` applies per band edge (order 4 gives ~24 dB one octave out).
    """
    spec.validate(signal.sample_rate_hz)
    sos = _bandpass_sos(spec, signal.sample_rate_hz)
    return signal.replace_samples(sps.sosfilt(sos, signal.samples))


def detrend_linear(window) -> np.ndarray:
    """Subtract the least-squares straight line."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("detrend_linear needs a 1-D window of length >= 2")
    return sps.detrend(x, type="linear")


def moving_average(window, w: int) -> np.ndarray:
    """Centred mean over ``i - w/2 .. i + w/2``; the span shrinks at the edges."""
    x = np.asarray(window, dtype=np.float64)
    if w <= 0 or w % 2:
        raise ValueError("w must be a positive even integer")
    if w > x.size:
        raise ValueError("w exceeds window length")
    h = w // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(x.size)
    lo = np.maximum(idx - h, 0)
    hi = np.minimum(idx + h + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def remove_offset(signal: Signal) -> Signal:
    x = signal.samples
    return signal.replace_samples(x - x.mean())
