"""Command-line entry point.

Subcommands: ``synth``, ``detect``, ``evaluate``, ``gridsearch``, ``plotdata``
and ``snr``. Settings resolve as flags > ``--config`` file > defaults. The
config file holds ``key = value`` lines (``#`` starts a comment); keys are
the field names listed by ``lfpseg detect --help``.

Exit codes: 0 success, 1 domain error (invalid parameters, length
mismatch, undefined SNR), 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .ampde import AmpdeParams
from .density_classifier import DensityThresholds
from .gridsearch import (
    DEFAULT_AXES,
    GridSpec,
    SplitSpec,
    run_protocol,
    write_results_csv,
    write_summary_json,
)
from .metrics import REPORT_COLUMNS, MatchRule, ScoreWeights, evaluate
from .pipeline import DetectorConfig, run_detector
from .preprocess import BandpassSpec, NotchSpec
from .signal_io import (
    AnnotatedRecord,
    SynthSpec,
    estimate_snr,
    load_corpus,
    load_record,
    read_annotations,
    read_signal,
    save_record,
    synth_record,
    write_annotations,
)
from .zdensity_rode import ZdrParams

log = logging.getLogger("lfpseg")


class UsageError(Exception):
    """Bad flags or config; maps to exit code 2."""


# -- settings ------------------------------------------------------------------


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() == "none" else float(s)


def _opt_int(s: str):
    return None if s.strip().lower() == "none" else int(s)


ZDR_KEYS = {"lag_s": float, "influence": float, "two_sided": _bool, "sigma_floor": _opt_float}
AMPDE_KEYS = {"window_s": float, "overlap_s": float, "scale_cap": _opt_int, "alpha": float}
SHARED_KEYS = {"threshold_sigma": float, "delta_s": float}
FILTER_KEYS = {"notch": _bool, "notch_hz": float, "notch_q": float, "bandpass": _bool,
               "bandpass_low_hz": float, "bandpass_high_hz": float, "bandpass_order": int}
THRESHOLD_KEYS = {"ictal_density_hz": float, "interictal_density_hz": float,
                  "min_ictal_duration_s": float, "pad_s": float}
RULE_KEYS = {"min_coincidence": float, "max_overhang_frac": float, "per_side": _bool,
             "denominator": str}
WEIGHT_KEYS = {"w_prec_ictal": float, "w_jaccard_ictal": float, "w_recall_ictal": float,
               "w_prec_inter": float, "w_recall_inter": float}
GENERAL_KEYS = {"algorithm": str, "seed": int}

ALL_KEYS = {**GENERAL_KEYS, **SHARED_KEYS, **ZDR_KEYS, **AMPDE_KEYS, **FILTER_KEYS,
            **THRESHOLD_KEYS, **RULE_KEYS, **WEIGHT_KEYS}


def _convert(key: str, raw: str):
    if key not in ALL_KEYS:
        raise UsageError(f"unknown setting {key!r}")
    try:
        return ALL_KEYS[key](raw)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {raw!r} ({exc})") from None


def read_config(path) -> dict:
    """Parse ``key = value`` lines."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, raw = (p.strip() for p in line.split("=", 1))
            values[key] = _convert(key, raw)
    return values


@dataclass(frozen=True)
class RunConfig:
    detector: DetectorConfig
    rule: MatchRule
    weights: ScoreWeights
    seed: int | None


def _pick(values: dict, keys) -> dict:
    return {k: values[k] for k in keys if k in values}


def build_run_config(values: dict) -> RunConfig:
    """Resolve a flat settings dict into typed configuration objects."""
    algorithm = values.get("algorithm", "zdr")
    if algorithm not in ("zdr", "ampde"):
        raise UsageError(f"unknown algorithm {algorithm!r}")

    notch = NotchSpec(values.get("notch_hz", 50.0), values.get("notch_q", 90.0))
    if not values.get("notch", True):
        notch = None
    det = _pick(values, SHARED_KEYS)
    if algorithm == "zdr":
        stray = set(values) & set(AMPDE_KEYS)
        det.update(_pick(values, ZDR_KEYS))
        cfg = DetectorConfig("zdr", zdr=ZdrParams(notch=notch, **det))
    else:
        stray = set(values) & set(ZDR_KEYS)
        det.update(_pick(values, AMPDE_KEYS))
        band = BandpassSpec(values.get("bandpass_low_hz", 0.5), values.get("bandpass_high_hz", 50.0),
                            values.get("bandpass_order", 4))
        if not values.get("bandpass", True):
            band = None
        if values.get("seed") is not None:
            det["rng_seed"] = values["seed"]
        cfg = DetectorConfig("ampde", ampde=AmpdeParams(notch=notch, bandpass=band, **det))
    if stray:
        log.warning("ignoring settings not used by %s: %s", algorithm, ", ".join(sorted(stray)))
    cfg = replace(cfg, thresholds=DensityThresholds(**_pick(values, THRESHOLD_KEYS)))
    weights = ScoreWeights(**_pick(values, WEIGHT_KEYS))
    weights.validate()
    return RunConfig(cfg, MatchRule(**_pick(values, RULE_KEYS)), weights, values.get("seed"))


def _settings(args) -> dict:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config(args.config))
    for item in getattr(args, "set", None) or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        values[key.strip()] = _convert(key.strip(), raw.strip())
    for key in ALL_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


# -- helpers -------------------------------------------------------------------


def _load_input(path: str, fmt: str | None) -> AnnotatedRecord | None:
    """A record metadata JSON yields the record; anything else is read as a bare signal."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    if p.suffix == ".json" and not p.name.endswith(".meta.json"):
        return load_record(p)
    return None


def _write_peaks(peaks, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "time_s", "amplitude"))
        rate = peaks.sample_rate_hz
        for i, a in zip(peaks.indices.tolist(), peaks.amplitudes.tolist()):
            w.writerow((i, repr(i / rate), repr(a)))


REPORT_HEADER = ("session", *REPORT_COLUMNS, "snr_db")


def _report_row(session: str, report, snr_db) -> list:
    return [session, *(repr(float(v)) for v in report.as_row().values()),
            "" if snr_db is None else repr(float(snr_db))]


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    rng = np.random.default_rng(args.seed)
    seeds = rng.integers(0, 2**31 - 1, size=args.n)
    snrs = rng.uniform(args.snr - args.snr_jitter, args.snr + args.snr_jitter, size=args.n)
    for i in range(args.n):
        spec = SynthSpec(duration_s=args.duration, sample_rate_hz=args.rate,
                         target_snr_db=float(snrs[i]) if args.snr_jitter else args.snr,
                         n_ictal=args.n_ictal, n_interictal=args.n_interictal,
                         rng_seed=int(seeds[i]))
        rec = synth_record(spec)
        rec = AnnotatedRecord(rec.signal, rec.reference, rec.snr_db, f"rec{i:03d}")
        save_record(rec, args.out, args.format)
        print(f"rec{i:03d}  snr_db={rec.snr_db if rec.snr_db is not None else 'n/a'}")
    return 0


def cmd_detect(args) -> int:
    rc = build_run_config(_settings(args))
    rec = _load_input(args.input, args.format)
    signal = rec.signal if rec is not None else read_signal(args.input, args.format)
    peaks, seg = run_detector(rc.detector, signal)
    write_annotations(seg, args.out, signal.sample_rate_hz)
    if args.peaks:
        _write_peaks(peaks, args.peaks)
    n_ictal = sum(1 for iv in seg.intervals if iv.label.label == "ictal")
    print(f"{len(peaks)} peaks, {len(seg.intervals)} intervals ({n_ictal} ictal)")
    return 0


def _reference_and_length(args):
    if args.record:
        rec = _load_input(args.record, None)
        if rec is None:
            raise UsageError("--record must be a record metadata JSON")
        return rec.reference, rec.signal.sample_rate_hz, len(rec.signal), rec.snr_db, rec.session_id
    if args.ref is None or args.rate is None or args.n_samples is None:
        raise UsageError("give --record, or --ref with --rate and --n-samples")
    ref = read_annotations(args.ref, args.rate, args.n_samples)
    return ref, args.rate, args.n_samples, args.snr_db, Path(args.ref).stem


def cmd_evaluate(args) -> int:
    rc = build_run_config(_settings(args))
    ref, rate, n, snr_db, session = _reference_and_length(args)
    hyp = read_annotations(args.hyp, rate, n)
    report = evaluate(ref, hyp, rc.rule, rc.weights)
    if args.report:
        with open(args.report, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            w.writerow(_report_row(args.session or session, report, snr_db))
    for name, value in report.as_row().items():
        print(f"{name:22s} {value:.4f}")
    return 0


def _parse_axis(item: str):
    if "=" not in item:
        raise UsageError(f"--axis expects name=v1,v2,..., got {item!r}")
    name, raw = item.split("=", 1)
    try:
        values = tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"non-numeric axis values in {item!r}") from None
    return name.strip(), values


def cmd_gridsearch(args) -> int:
    values = _settings(args)
    values.setdefault("algorithm", "zdr")
    rc = build_run_config(values)
    records = load_corpus(args.corpus)
    if not records:
        raise ValueError(f"no records found in {args.corpus}")
    axes = dict(DEFAULT_AXES[rc.detector.algorithm])
    if args.axis:
        axes = dict(_parse_axis(a) for a in args.axis)
    spec = GridSpec(rc.detector.algorithm, axes, rc.detector)
    split = None if args.no_split else SplitSpec(args.train_fraction, args.seed)
    result = run_protocol(records, spec, split, args.k, rc.rule, rc.weights, args.workers,
                          args.snr_cutoff, not args.no_finetune)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(result.results, out / f"grid_{spec.algorithm}.csv")
    summary = result.summary()
    summary["seed"] = args.seed
    write_summary_json(summary, out / f"summary_{spec.algorithm}.json")
    with open(out / f"validation_{spec.algorithm}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for rec, rep in result.validation_reports:
            w.writerow(_report_row(rec.session_id, rep, rec.snr_db))
    print(f"{len(result.results)} configurations; recommended {summary['recommended']} "
          f"(mean score {summary['recommended_mean_score']:.4f})")
    return 0


def _plot_rows(path: Path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "session" in cols:
            for row in reader:
                for m in REPORT_COLUMNS:
                    yield (row["session"], "", m, row[m], row.get("snr_db", ""))
        elif "mean_score" in cols and "rank" in cols:
            metrics = [c for c in cols if c.startswith("mean_")]
            axes = [c for c in cols if c not in metrics and c != "rank"]
            for row in reader:
                config = ";".join(f"{a}={row[a]}" for a in axes)
                for m in metrics:
                    name = "score" if m == "mean_score" else m[len("mean_"):]
                    yield (path.stem, config, name, row[m], "")
        else:
            raise ValueError(f"{path}: neither a report nor a grid results CSV")


def cmd_plotdata(args) -> int:
    rows = []
    for p in args.inputs:
        path = Path(p)
        if not path.exists():
            raise FileNotFoundError(p)
        rows.extend(_plot_rows(path))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("session", "config", "metric", "value", "snr_db"))
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_snr(args) -> int:
    if args.record:
        rec = _load_input(args.record, None)
        if rec is None:
            raise UsageError("--record must be a record metadata JSON")
    else:
        if not (args.signal and args.ref):
            raise UsageError("give --record, or --signal with --ref")
        sig = read_signal(args.signal, args.format)
        rec = AnnotatedRecord(sig, read_annotations(args.ref, sig.sample_rate_hz, len(sig)))
    print(f"{estimate_snr(rec):.4f}")
    return 0


# -- parser --------------------------------------------------------------------


def _add_common(p, seed_required=False):
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--format", choices=("csv", "raw-f32"), default=None)


def _add_detector_flags(p):
    g = p.add_argument_group("detector settings (override --config)")
    g.add_argument("--algorithm", choices=("zdr", "ampde"))
    g.add_argument("--threshold", dest="threshold_sigma", type=float)
    g.add_argument("--delta", dest="delta_s", type=float)
    g.add_argument("--lag", dest="lag_s", type=float, help="zdr history length (s)")
    g.add_argument("--influence", type=float, help="zdr outlier influence in [0, 1]")
    g.add_argument("--window", dest="window_s", type=float, help="ampde window length (s)")
    g.add_argument("--overlap", dest="overlap_s", type=float, help="ampde window overlap (s)")
    g.add_argument("--pad", dest="pad_s", type=float, help="interval padding (s)")
    g.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="any setting: " + ", ".join(sorted(ALL_KEYS)))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lfpseg", description="LFP event segmentation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    _add_common(p, seed_required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--rate", type=float, default=2000.0)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--snr-jitter", type=float, default=0.0,
                   help="per-record SNR drawn uniformly from snr +/- jitter")
    p.add_argument("--n-ictal", type=int, default=2)
    p.add_argument("--n-interictal", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth, format_default="raw-f32")

    p = sub.add_parser("detect", help="run a detector and the density classifier")
    _add_common(p)
    _add_detector_flags(p)
    p.add_argument("--input", required=True, help="signal file or record metadata JSON")
    p.add_argument("--out", required=True, help="segmentation CSV")
    p.add_argument("--peaks", help="peak-train CSV")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score a segmentation against a reference")
    _add_common(p)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--record", help="record metadata JSON supplying the reference")
    p.add_argument("--ref", help="reference annotations CSV")
    p.add_argument("--rate", type=float)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--hyp", required=True, help="segmentation CSV to score")
    p.add_argument("--session")
    p.add_argument("--report", help="report CSV to write")
    p.add_argument("--per-side", dest="per_side", action="store_const", const=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gridsearch", help="parameter sweep with split and validation")
    _add_common(p, seed_required=True)
    _add_detector_flags(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--axis", action="append", metavar="NAME=V1,V2",
                   help="replace the default axes (repeatable)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--no-split", action="store_true")
    p.add_argument("--snr-cutoff", type=float, default=20.0)
    p.add_argument("--no-finetune", action="store_true")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("plotdata", help="long-format rows from report or grid CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("snr", help="estimate event-to-baseline SNR")
    _add_common(p)
    p.add_argument("--record")
    p.add_argument("--signal")
    p.add_argument("--ref")
    p.set_defaults(func=cmd_snr)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "format", None) is None and hasattr(args, "format_default"):
        args.format = args.format_default
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lfpseg: {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, csv.Error) as exc:
        print(f"lfpseg: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"lfpseg: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
