"""Parameter sweeps over an annotated corpus, with a train/validation split,
top-k summaries and a local refinement pass for low-SNR records.

Grid cells are evaluated per record (one worker task per record) so that
expensive detector stages can be shared across cells that differ only in
downstream parameters: ZDR peaks do not depend on ``delta_s``, and AMPDE
candidates depend on neither ``delta_s`` nor ``threshold_sigma``.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ampde import ampde_candidates, gate
from .metrics import (
    EVENT_CLASSES,
    REPORT_COLUMNS,
    ClassCounts,
    EvalReport,
    MatchRule,
    ScoreWeights,
    evaluate,
    pearson_corr,
    report_from_counts,
)
from .pipeline import DetectorConfig, segment_peaks
from .zdensity_rode import zdr_process

__all__ = [
    "DEFAULT_AXES",
    "GridSpec",
    "GridResult",
    "SplitSpec",
    "TopK",
    "ProtocolResult",
    "param_grid",
    "split_dataset",
    "run_grid",
    "select_top_k",
    "finetune_low_snr",
    "correlate_score_snr",
    "pooled_report",
    "run_protocol",
    "write_results_csv",
    "write_summary_json",
]

log = logging.getLogger(__name__)

METRIC_COLUMNS = tuple(c for c in REPORT_COLUMNS if c != "score")

DEFAULT_AXES = {
    "zdr": {
        "threshold_sigma": (4.0, 5.0, 6.0),
        "delta_s": (3.0, 4.0, 5.0),
        "lag_s": (0.125, 0.25, 0.5),
    },
    "ampde": {
        "threshold_sigma": (3.0, 4.0, 5.0, 6.0),
        "delta_s": (1.5, 2.0, 2.5),
    },
}


@dataclass(frozen=True)
class GridSpec:
    """Axes to sweep on top of a fixed base configuration.

    Axis names may be any detector field of the active algorithm or any
    :class:`~lfpseg.density_classifier.DensityThresholds` field.
    """

    algorithm: str = "zdr"
    axes: dict = None
    base: DetectorConfig = None

    def __post_init__(self):
        if self.algorithm not in DEFAULT_AXES:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.axes is None:
            object.__setattr__(self, "axes", dict(DEFAULT_AXES[self.algorithm]))
        if self.base is None:
            object.__setattr__(self, "base", DetectorConfig(self.algorithm))
        if self.base.algorithm != self.algorithm:
            raise ValueError("base configuration is for a different algorithm")
        for name, values in self.axes.items():
            if len(values) == 0:
                raise ValueError(f"axis {name!r} is empty")
        # raises on unknown names
        self.base.with_values({name: values[0] for name, values in self.axes.items()})

    @property
    def axis_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.axes))


@dataclass(frozen=True)
class GridResult:
    params: dict
    per_record_scores: tuple  # ((record_id, EvalReport), ...)
    mean_score: float

    def metric_means(self) -> dict:
        return {
            name: math.fsum(getattr(rep, name) for _, rep in self.per_record_scores)
            / len(self.per_record_scores)
            for name in REPORT_COLUMNS
            if name != "score"
        }


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class TopK:
    top: tuple
    average_score: float
    recommended: dict


def param_grid(spec: GridSpec) -> list[dict]:
    """Cartesian product over axes sorted by name, values ascending."""
    names = spec.axis_names
    value_lists = [sorted(spec.axes[n]) for n in names]
    return [dict(zip(names, combo)) for combo in itertools.product(*value_lists)]


def split_dataset(records, spec: SplitSpec = SplitSpec()):
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least 2 records to split")
    order = np.random.default_rng(spec.seed).permutation(len(records))
    n_train = math.ceil(round(spec.train_fraction * len(records), 9))
    n_train = min(max(n_train, 1), len(records) - 1)
    train = [records[i] for i in order[:n_train]]
    val = [records[i] for i in order[n_train:]]
    return train, val


def _zero_report() -> EvalReport:
    return report_from_counts({c: ClassCounts() for c in EVENT_CLASSES},
                              {c: 0.0 for c in EVENT_CLASSES})


def _peak_stage_key(cfg: DetectorConfig):
    if cfg.algorithm == "zdr":
        return replace(cfg.zdr, delta_s=1.0)
    return replace(cfg.ampde, delta_s=1.0, threshold_sigma=1.0)


def _evaluate_record(task) -> list:
    """Evaluate every parameter set on one record; returns reports in grid order."""
    record, base, param_sets, rule, weights = task
    signal = record.signal
    cache: dict = {}
    out = []
    for ps in param_sets:
        try:
            cfg = base.with_values(ps)
            key = _peak_stage_key(cfg)
            if key not in cache:
                if cfg.algorithm == "zdr":
                    cache[key] = zdr_process(cfg.zdr, signal)
                else:
                    cache[key] = ampde_candidates(cfg.ampde, signal)
            stage = cache[key]
            peaks = stage if cfg.algorithm == "zdr" else gate(stage, cfg.ampde.threshold_sigma)
            seg = segment_peaks(cfg, peaks, len(signal))
            out.append(evaluate(record.reference, seg, rule, weights))
        except (ValueError, ArithmeticError) as exc:
            log.warning("record %s, params %s: detector failed (%s); scoring 0",
                        record.session_id, ps, exc)
            out.append(_zero_report())
    return out


def _map_records(tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [_evaluate_record(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(_evaluate_record, tasks))


def _run_param_sets(records, base, param_sets, rule, weights, workers) -> list[GridResult]:
    records = list(records)
    if not records:
        raise ValueError("run_grid needs at least one record")
    tasks = [(r, base, param_sets, rule, weights) for r in records]
    per_record = _map_records(tasks, workers)
    results = []
    for j, ps in enumerate(param_sets):
        scores = tuple((rec.session_id, per_record[i][j]) for i, rec in enumerate(records))
        mean = math.fsum(rep.score for _, rep in scores) / len(scores)
        results.append(GridResult(dict(ps), scores, mean))
    # stable sort keeps grid (lexicographic) order among equal scores
    return sorted(results, key=lambda g: -g.mean_score)


def run_grid(train, spec: GridSpec, rule: MatchRule = MatchRule(),
             weights: ScoreWeights = ScoreWeights(), workers: int = 1) -> list[GridResult]:
    """Evaluate every grid cell on every record and rank by mean score."""
    weights.validate()
    return _run_param_sets(train, spec.base, param_grid(spec), rule, weights, workers)


def select_top_k(results, k: int = 10) -> TopK:
    if not results:
        raise ValueError("no grid results")
    top = tuple(results[: max(k, 1)])
    avg = math.fsum(g.mean_score for g in top) / len(top)
    return TopK(top, avg, dict(results[0].params))


def _local_axis(values, center: float, radius: int) -> list[float]:
    uniq = sorted(set(float(v) for v in values))
    if len(uniq) < 2:
        return [center]
    half = min(b - a for a, b in zip(uniq, uniq[1:])) / 2
    pts = (round(center + j * half, 12) for j in range(-radius, radius + 1))
    return [p for p in pts if p > 0]


def finetune_low_snr(records, base_params: dict, spec: GridSpec, snr_cutoff_db: float = 20.0,
                     refine_radius: int = 1, rule: MatchRule = MatchRule(),
                     weights: ScoreWeights = ScoreWeights(), workers: int = 1) -> dict:
    """Search a half-step local grid around ``base_params`` on records below the SNR cutoff.

    The incumbent is part of the local grid, so the result never scores
    worse than ``base_params`` on that subset.
    """
    low = [r for r in records if r.snr_db is not None and r.snr_db < snr_cutoff_db]
    if not low:
        return dict(base_params)
    local = GridSpec(
        spec.algorithm,
        {name: tuple(_local_axis(spec.axes.get(name, (v,)), float(v), refine_radius))
         for name, v in base_params.items()},
        spec.base,
    )
    ranked = _run_param_sets(low, local.base, param_grid(local), rule, weights, workers)
    best = ranked[0]
    base_score = next(g.mean_score for g in ranked if g.params == {k: float(v) for k, v in base_params.items()})
    return dict(best.params) if best.mean_score > base_score else dict(base_params)


def correlate_score_snr(per_record) -> float:
    """Pearson r between SNR and score over ``(snr_db, score)`` pairs."""
    pairs = list(per_record)
    return pearson_corr([p[0] for p in pairs], [p[1] for p in pairs])


def pooled_report(records, cfg: DetectorConfig, rule: MatchRule = MatchRule(),
                  weights: ScoreWeights = ScoreWeights(), per_record_cfg=None):
    """Run ``cfg`` on each record and pool event counts across the corpus.

    Jaccard is pooled sample-wise (summed intersections over summed unions).
    ``per_record_cfg`` may map a record to an override configuration.
    Returns the pooled report and the list of per-record reports.
    """
    from .metrics import match_events
    from .pipeline import run_detector

    counts = {c: ClassCounts() for c in EVENT_CLASSES}
    inter = {c: 0 for c in EVENT_CLASSES}
    union = {c: 0 for c in EVENT_CLASSES}
    reports = []
    for rec in records:
        use = per_record_cfg(rec) if per_record_cfg else cfg
        _, seg = run_detector(use, rec.signal)
        reports.append((rec, evaluate(rec.reference, seg, rule, weights)))
        a_lab, b_lab = rec.reference.to_labels(), seg.to_labels()
        for c in EVENT_CLASSES:
            counts[c] = counts[c] + match_events(rec.reference, seg, c, rule)
            a, b = a_lab == c, b_lab == c
            inter[c] += int(np.count_nonzero(a & b))
            union[c] += int(np.count_nonzero(a | b))
    jac = {c: (inter[c] / union[c] if union[c] else 1.0) for c in EVENT_CLASSES}
    return report_from_counts(counts, jac, weights), reports


@dataclass
class ProtocolResult:
    spec: GridSpec
    train_ids: list
    validation_ids: list
    results: list
    selection: TopK
    finetuned: dict
    validation: EvalReport | None
    validation_reports: list = field(default_factory=list)  # (record, EvalReport)
    snr_correlation: float | None = None

    def summary(self) -> dict:
        return {
            "algorithm": self.spec.algorithm,
            "n_configurations": len(self.results),
            "n_train": len(self.train_ids),
            "n_validation": len(self.validation_ids),
            "train_ids": self.train_ids,
            "validation_ids": self.validation_ids,
            "recommended": self.selection.recommended,
            "recommended_mean_score": self.results[0].mean_score,
            "top_k": len(self.selection.top),
            "top_k_average_score": self.selection.average_score,
            "finetuned_low_snr": self.finetuned,
            "validation": None if self.validation is None else self.validation.as_row(),
            "score_snr_correlation": self.snr_correlation,
        }


def run_protocol(records, spec: GridSpec, split: SplitSpec | None = SplitSpec(), k: int = 10,
                 rule: MatchRule = MatchRule(), weights: ScoreWeights = ScoreWeights(),
                 workers: int = 1, snr_cutoff_db: float = 20.0, finetune: bool = True) -> ProtocolResult:
    """Split, sweep on train, summarise, refine for low SNR, then re-score on validation.

    With ``split=None`` every record is used for both the sweep and the
    re-scoring pass.
    """
    records = list(records)
    if not records:
        raise ValueError("empty corpus")
    if split is None:
        train, val = records, records
    else:
        train, val = split_dataset(records, split)
    results = run_grid(train, spec, rule, weights, workers)
    sel = select_top_k(results, k)
    tuned = (finetune_low_snr(train, sel.recommended, spec, snr_cutoff_db, 1, rule, weights, workers)
             if finetune else dict(sel.recommended))

    base_cfg = spec.base.with_values(sel.recommended)
    tuned_cfg = spec.base.with_values(tuned)

    def pick(rec):
        low = rec.snr_db is not None and rec.snr_db < snr_cutoff_db
        return tuned_cfg if low else base_cfg

    pooled, reports = pooled_report(val, base_cfg, rule, weights, pick)
    corr = None
    pairs = [(rec.snr_db, rep.score) for rec, rep in reports if rec.snr_db is not None]
    if len(pairs) >= 2:
        try:
            corr = correlate_score_snr(pairs)
        except ValueError:
            corr = None
    return ProtocolResult(spec, [r.session_id for r in train], [r.session_id for r in val],
                          results, sel, tuned, pooled, reports, corr)


def _fmt(v) -> str:
    return repr(float(v))


def write_results_csv(results, path) -> None:
    """One row per parameter set: axis values, mean_score, per-metric means."""
    if not results:
        raise ValueError("no grid results")
    names = sorted(results[0].params)
    header = ["rank", *names, "mean_score", *(f"mean_{m}" for m in METRIC_COLUMNS)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rank, g in enumerate(results, start=1):
            means = g.metric_means()
            w.writerow([rank, *(_fmt(g.params[n]) for n in names), _fmt(g.mean_score),
                        *(_fmt(means[m]) for m in METRIC_COLUMNS)])


def write_summary_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
