"""Detector -> density classifier wiring shared by the grid search and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .ampde import AmpdeParams, ampde_process
from .density_classifier import DensityThresholds, classify, integrate
from .signal_io import Segmentation, Signal
from .zdensity_rode import PeakTrain, ZdrParams, zdr_process

ALGORITHMS = ("zdr", "ampde")


@dataclass(frozen=True)
class DetectorConfig:
    algorithm: str = "zdr"
    zdr: ZdrParams = field(default_factory=ZdrParams)
    ampde: AmpdeParams = field(default_factory=AmpdeParams)
    thresholds: DensityThresholds = field(default_factory=DensityThresholds)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")

    @property
    def params(self):
        return self.zdr if self.algorithm == "zdr" else self.ampde

    @property
    def delta_s(self) -> float:
        return self.params.delta_s

    def with_values(self, values: dict) -> "DetectorConfig":
        """Return a copy with named fields of the active detector or thresholds replaced."""
        det_names = {f.name for f in fields(self.params)}
        thr_names = {f.name for f in fields(self.thresholds)}
        det, thr = {}, {}
        for name, value in values.items():
            if name in det_names:
                det[name] = value
            elif name in thr_names:
                thr[name] = value
            else:
                raise ValueError(f"{name!r} is not a {self.algorithm} or density-threshold field")
        cfg = replace(self, thresholds=replace(self.thresholds, **thr))
        if self.algorithm == "zdr":
            return replace(cfg, zdr=replace(self.zdr, **det))
        return replace(cfg, ampde=replace(self.ampde, **det))


def detect_peaks(cfg: DetectorConfig, signal: Signal) -> PeakTrain:
    if cfg.algorithm == "zdr":
        return zdr_process(cfg.zdr, signal)
    return ampde_process(cfg.ampde, signal)


def segment_peaks(cfg: DetectorConfig, peaks: PeakTrain, total_len: int) -> Segmentation:
    raw = integrate(peaks, cfg.delta_s, cfg.thresholds.pad_s, total_len)
    return classify(raw, cfg.thresholds, total_len, peaks.sample_rate_hz)


def run_detector(cfg: DetectorConfig, signal: Signal) -> tuple[PeakTrain, Segmentation]:
    peaks = detect_peaks(cfg, signal)
    return peaks, segment_peaks(cfg, peaks, len(signal))
