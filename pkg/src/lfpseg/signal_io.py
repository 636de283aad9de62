"""Signals, label segmentations, file formats and the synthetic LFP generator."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.special import i0e

__all__ = [
    "Signal",
    "LabelClass",
    "LabelInterval",
    "Segmentation",
    "AnnotatedRecord",
    "SynthSpec",
    "read_signal",
    "write_signal",
    "read_annotations",
    "write_annotations",
    "synth_record",
    "estimate_snr",
    "save_record",
    "load_record",
    "load_corpus",
]


class LabelClass(IntEnum):
    BASELINE = 0
    INTERICTAL = 1
    ICTAL = 2

    @classmethod
    def parse(cls, name: str) -> "LabelClass":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown label {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled single-channel trace.

    Parameters
    ----------
    samples : array_like
        Voltage values (microvolts). Stored as a read-only float64 array.
    sample_rate_hz : float
        Sampling frequency in Hz.
    """

    samples: np.ndarray
    sample_rate_hz: float = 2000.0

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64).ravel()
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        bad = np.flatnonzero(~np.isfinite(x))
        if bad.size:
            raise ValueError(f"non-finite sample at index {bad[0]}")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        return self.sample_rate_hz == other.sample_rate_hz and np.array_equal(
            self.samples, other.samples
        )

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def replace_samples(self, samples) -> "Signal":
        return Signal(samples, self.sample_rate_hz)


@dataclass(frozen=True, order=True)
class LabelInterval:
    """Half-open labelled span ``[start_sample, end_sample)``."""

    start_sample: int
    end_sample: int
    label: LabelClass = LabelClass.ICTAL

    def __post_init__(self):
        if self.start_sample < 0:
            raise ValueError("start_sample must be non-negative")
        if self.end_sample <= self.start_sample:
            raise ValueError(
                f"interval end ({self.end_sample}) must exceed start ({self.start_sample})"
            )
        object.__setattr__(self, "label", LabelClass(self.label))

    @property
    def length(self) -> int:
        return self.end_sample - self.start_sample


@dataclass(frozen=True)
class Segmentation:
    """Sorted, non-overlapping labelled intervals over ``total_len`` samples.

    Samples not covered by any interval are baseline.
    """

    intervals: tuple = ()
    total_len: int = 0

    def __post_init__(self):
        ivs = tuple(sorted(self.intervals, key=lambda iv: (iv.start_sample, iv.end_sample)))
        for a, b in zip(ivs, ivs[1:]):
            if b.start_sample < a.end_sample:
                raise ValueError(f"overlapping intervals {a} and {b}")
        if ivs and ivs[-1].end_sample > self.total_len:
            raise ValueError(
                f"interval end {ivs[-1].end_sample} exceeds total_len {self.total_len}"
            )
        object.__setattr__(self, "intervals", ivs)

    def of_class(self, label: LabelClass) -> list[LabelInterval]:
        return [iv for iv in self.intervals if iv.label == label]

    def to_labels(self) -> np.ndarray:
        labels = np.zeros(self.total_len, dtype=np.int8)
        for iv in self.intervals:
            labels[iv.start_sample : iv.end_sample] = int(iv.label)
        return labels

    def event_mask(self) -> np.ndarray:
        return self.to_labels() != LabelClass.BASELINE


@dataclass(frozen=True, eq=False)
class AnnotatedRecord:
    signal: Signal
    reference: Segmentation
    snr_db: float | None = None
    session_id: str = ""

    def __post_init__(self):
        if self.reference.total_len != len(self.signal):
            raise ValueError("reference.total_len must equal signal length")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic record.

    Ictal events are spike-train discharges whose repetition rate sweeps
    ``ictal_rate_range_hz`` (high to low) under a tapered envelope.
    Interictal events are single biphasic transients: a sharp positive
    spike centred in the annotated span followed by a shallower negative wave.
    """

    duration_s: float = 60.0
    sample_rate_hz: float = 2000.0
    target_snr_db: float = 20.0
    n_ictal: int = 2
    n_interictal: int = 5
    ictal_duration_range_s: tuple[float, float] = (8.0, 14.0)
    rng_seed: int = 0
    interictal_duration_range_s: tuple[float, float] = (0.05, 0.2)
    ictal_rate_range_hz: tuple[float, float] = (2.5, 5.0)
    spike_width_s: float = 0.006
    ictal_taper: float = 0.35
    interictal_rel_amplitude: float = 0.4
    min_gap_s: float = 4.0
    edge_margin_s: float = 2.0
    baseline_rms_uv: float = 10.0
    noise_band_hz: tuple[float, float] = (0.5, 150.0)
    line_noise_uv: float = 0.0
    line_freq_hz: float = 50.0

    def __post_init__(self):
        if not (self.duration_s > 0 and self.sample_rate_hz > 0):
            raise ValueError("duration_s and sample_rate_hz must be positive")
        if self.n_ictal < 0 or self.n_interictal < 0:
            raise ValueError("event counts must be non-negative")
        for name in ("ictal_duration_range_s", "interictal_duration_range_s", "ictal_rate_range_hz"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi")
        if self.noise_band_hz[1] >= self.sample_rate_hz / 2:
            raise ValueError("noise band must lie below Nyquist")


# -- signal files --------------------------------------------------------------


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        if fmt not in ("csv", "raw-f32"):
            raise ValueError(f"unknown signal format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "raw-f32"


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def read_signal(path, format: str | None = None) -> Signal:
    """Read a signal file.

    ``csv`` files start with a ``rate_hz=<float>`` line followed by one sample
    per line. ``raw-f32`` files hold little-endian float32 samples and carry the
    rate in a ``<path>.meta.json`` sidecar.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        with open(path) as fh:
            header = fh.readline().strip()
            if not header.startswith("rate_hz="):
                raise ValueError(f"{path}: malformed header {header!r}")
            try:
                rate = float(header.split("=", 1)[1])
            except ValueError:
                raise ValueError(f"{path}: malformed header {header!r}") from None
            values = [float(line) for line in fh if line.strip()]
        samples = np.asarray(values, dtype=np.float64)
    else:
        with open(_meta_path(path)) as fh:
            meta = json.load(fh)
        try:
            rate = float(meta["rate_hz"])
        except (KeyError, TypeError, ValueError):
            raise ValueError(f"{path}: malformed sidecar") from None
        samples = np.fromfile(path, dtype="<f4")
        n_expected = meta.get("n_samples")
        if n_expected is not None and int(n_expected) != samples.size:
            raise ValueError(
                f"{path}: sidecar declares {n_expected} samples, file holds {samples.size}"
            )
    if samples.size == 0:
        raise ValueError(f"{path}: empty signal")
    return Signal(samples, rate)


def write_signal(signal: Signal, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(f"rate_hz={signal.sample_rate_hz!r}\n")
            fh.writelines(f"{v!r}\n" for v in signal.samples.tolist())
    else:
        signal.samples.astype("<f4").tofile(path)
        with open(_meta_path(path), "w") as fh:
            json.dump({"rate_hz": signal.sample_rate_hz, "n_samples": len(signal)}, fh)


# -- annotation files ----------------------------------------------------------

ANNOTATION_HEADER = ("start_s", "end_s", "label")


def read_annotations(path, sample_rate_hz: float, total_len: int | None = None) -> Segmentation:
    """Read a ``start_s,end_s,label`` CSV into sample-indexed intervals.

    If ``total_len`` is omitted the segmentation ends at the last interval.
    """
    intervals = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and tuple(h.strip() for h in header) != ANNOTATION_HEADER:
            raise ValueError(f"{path}: expected header {','.join(ANNOTATION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns")
            start = int(round(float(row[0]) * sample_rate_hz))
            end = int(round(float(row[1]) * sample_rate_hz))
            if end <= start:
                raise ValueError(f"{path}:{lineno}: end <= start")
            intervals.append(LabelInterval(start, end, LabelClass.parse(row[2])))
    if total_len is None:
        total_len = max((iv.end_sample for iv in intervals), default=0)
    return Segmentation(tuple(intervals), total_len)


def write_annotations(seg: Segmentation, path, sample_rate_hz: float) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANNOTATION_HEADER)
        for iv in seg.intervals:
            writer.writerow(
                [repr(iv.start_sample / sample_rate_hz), repr(iv.end_sample / sample_rate_hz), iv.label.label]
            )


# -- records on disk -----------------------------------------------------------


def save_record(record: AnnotatedRecord, directory, format: str = "raw-f32") -> dict:
    """Write ``<id>.f32|.csv``, ``<id>.ann.csv`` and ``<id>.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sid = record.session_id or "record"
    sig_name = f"{sid}.csv" if format == "csv" else f"{sid}.f32"
    write_signal(record.signal, directory / sig_name, format)
    write_annotations(record.reference, directory / f"{sid}.ann.csv", record.signal.sample_rate_hz)
    meta = {
        "session_id": sid,
        "signal": sig_name,
        "format": format,
        "annotations": f"{sid}.ann.csv",
        "rate_hz": record.signal.sample_rate_hz,
        "n_samples": len(record.signal),
        "snr_db": record.snr_db,
    }
    with open(directory / f"{sid}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


def load_record(meta_path) -> AnnotatedRecord:
    meta_path = Path(meta_path)
    with open(meta_path) as fh:
        meta = json.load(fh)
    base = meta_path.parent
    sig = read_signal(base / meta["signal"], meta.get("format"))
    ref = read_annotations(base / meta["annotations"], sig.sample_rate_hz, len(sig))
    return AnnotatedRecord(sig, ref, meta.get("snr_db"), meta.get("session_id", meta_path.stem))


def load_corpus(directory) -> list[AnnotatedRecord]:
    """Load every record whose metadata JSON sits in ``directory``, sorted by id."""
    directory = Path(directory)
    metas = sorted(p for p in directory.glob("*.json") if not p.name.endswith(".meta.json"))
    records = []
    for p in metas:
        with open(p) as fh:
            meta = json.load(fh)
        if isinstance(meta, dict) and "signal" in meta and "annotations" in meta:
            records.append(load_record(p))
    return sorted(records, key=lambda r: r.session_id)


# -- synthetic generator -------------------------------------------------------


def _band_noise(rng: np.random.Generator, n: int, rate: float, band: tuple[float, float]) -> np.ndarray:
    sos = sps.butter(4, band, btype="bandpass", fs=rate, output="sos")
    pad = int(2 * rate / band[0])  # burn-in so the low edge has settled
    white = rng.standard_normal(n + pad)
    return sps.sosfilt(sos, white)[pad:]


def _ictal_waveform(rng, n: int, rate: float, spec: SynthSpec) -> np.ndarray:
    t = np.arange(n) / rate
    f_lo, f_hi = spec.ictal_rate_range_hz
    freq = f_hi + (f_lo - f_hi) * t / max(t[-1], 1.0 / rate)
    phase = 2 * np.pi * np.cumsum(freq) / rate + rng.uniform(0, 2 * np.pi)
    # von Mises pulse train with a constant temporal width
    kappa = 1.0 / (2 * np.pi * freq * spec.spike_width_s) ** 2
    pulses = np.exp(kappa * (np.cos(phase) - 1.0)) - i0e(kappa)
    return pulses * sps.windows.tukey(n, spec.ictal_taper)


def _interictal_waveform(n: int, spec: SynthSpec) -> np.ndarray:
    u = (np.arange(n) + 0.5) / n
    spike = np.exp(-0.5 * ((u - 0.5) / 0.08) ** 2)
    wave = 0.6 * np.exp(-0.5 * ((u - 0.75) / 0.1) ** 2)
    return spec.interictal_rel_amplitude * np.sin(np.pi * u) ** 2 * (spike - wave)


def _place_events(rng, spec: SynthSpec, n: int) -> list[tuple[int, int, LabelClass]]:
    rate = spec.sample_rate_hz
    kinds = [LabelClass.ICTAL] * spec.n_ictal + [LabelClass.INTERICTAL] * spec.n_interictal
    kinds = [kinds[i] for i in rng.permutation(len(kinds))]
    lengths = []
    for kind in kinds:
        lo, hi = (
            spec.ictal_duration_range_s if kind == LabelClass.ICTAL else spec.interictal_duration_range_s
        )
        lengths.append(max(1, int(round(rng.uniform(lo, hi) * rate))))
    gap = int(round(spec.min_gap_s * rate))
    margin = int(round(spec.edge_margin_s * rate))
    required = sum(lengths) + gap * max(len(kinds) - 1, 0) + 2 * margin
    slack = n - required
    if slack < 0:
        raise ValueError(
            f"cannot place {len(kinds)} events in {spec.duration_s} s without overlap"
        )
    cuts = np.sort(rng.integers(0, slack + 1, size=len(kinds)))
    extras = np.diff(np.concatenate(([0], cuts)))
    events = []
    pos = margin
    for kind, length, extra in zip(kinds, lengths, extras):
        pos += int(extra)
        events.append((pos, pos + length, kind))
        pos += length + gap
    return events


def synth_record(spec: SynthSpec) -> AnnotatedRecord:
    """Generate a seeded synthetic record with exact reference annotations.

    The event waveforms share one gain, solved in closed form so that the
    power over annotated event samples divided by the power over the
    remaining samples equals ``target_snr_db``.
    """
    rate = spec.sample_rate_hz
    n = int(round(spec.duration_s * rate))
    rng = np.random.default_rng(spec.rng_seed)
    noise = _band_noise(rng, n, rate, spec.noise_band_hz)
    noise *= spec.baseline_rms_uv / np.sqrt(np.mean(noise**2))
    if spec.line_noise_uv:
        t = np.arange(n) / rate
        noise += spec.line_noise_uv * np.sin(2 * np.pi * spec.line_freq_hz * t + rng.uniform(0, 2 * np.pi))

    events = _place_events(rng, spec, n)
    shape = np.zeros(n)
    for start, end, kind in events:
        if kind == LabelClass.ICTAL:
            shape[start:end] = _ictal_waveform(rng, end - start, rate, spec)
        else:
            shape[start:end] = _interictal_waveform(end - start, spec)

    reference = Segmentation(tuple(LabelInterval(s, e, k) for s, e, k in events), n)
    sid = f"synth-{spec.rng_seed}"
    if not events:
        return AnnotatedRecord(Signal(noise, rate), reference, None, sid)

    mask = reference.event_mask()
    if mask.all():
        raise ValueError("events leave no baseline samples")
    p_base = np.mean(noise[~mask] ** 2)
    w, nz = shape[mask], noise[mask]
    sww, swn, snn = np.dot(w, w), np.dot(w, nz), np.dot(nz, nz)
    target = 10.0 ** (spec.target_snr_db / 10.0) * p_base * mask.sum()
    disc = swn**2 - sww * (snn - target)
    gain = (-swn + math.sqrt(disc)) / sww if disc >= 0 else -1.0
    if gain <= 0:
        raise ValueError(f"target SNR {spec.target_snr_db} dB is below the noise floor of the events")
    x = noise + gain * shape
    record = AnnotatedRecord(Signal(x, rate), reference, None, sid)
    return AnnotatedRecord(record.signal, reference, estimate_snr(record), sid)


def estimate_snr(record: AnnotatedRecord) -> float:
    """Event-to-baseline power ratio in dB, using the reference annotations."""
    mask = record.reference.event_mask()
    if not mask.any():
        raise ValueError("undefined SNR: record has no annotated events")
    if mask.all():
        raise ValueError("undefined SNR: record has no baseline samples")
    x = record.signal.samples
    p_event = np.mean(x[mask] ** 2)
    p_base = np.mean(x[~mask] ** 2)
    if p_base == 0:
        raise ValueError("undefined SNR: zero baseline power")
    return float(10.0 * np.log10(p_event / p_base))
