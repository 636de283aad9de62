"""Interval-matching evaluation of a segmentation against a reference."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .signal_io import LabelClass, LabelInterval, Segmentation

__all__ = [
    "MatchRule",
    "ClassCounts",
    "ScoreWeights",
    "EvalReport",
    "REPORT_COLUMNS",
    "coincidence_ratio",
    "match_events",
    "precision",
    "recall",
    "f1",
    "jaccard",
    "mcda_score",
    "evaluate",
    "pearson_corr",
]

EVENT_CLASSES = (LabelClass.ICTAL, LabelClass.INTERICTAL)

# column order of the CSV report row
REPORT_COLUMNS = (
    "precision_ictal",
    "precision_interictal",
    "recall_ictal",
    "recall_interictal",
    "jaccard_ictal",
    "jaccard_interictal",
    "f1_ictal",
    "f1_interictal",
    "score",
)


@dataclass(frozen=True)
class MatchRule:
    """
    min_coincidence : overlap fraction required for a true positive.
    max_overhang_frac : output may be at most ``1 + max_overhang_frac`` times
        the reference length (``per_side=False``), or may extend past each
        reference boundary by at most that fraction of the reference length
        (``per_side=True``).
    denominator : ``"reference"`` or ``"output"`` length in the coincidence ratio.
    """

    min_coincidence: float = 0.8
    max_overhang_frac: float = 0.5
    per_side: bool = False
    denominator: str = "reference"

    def __post_init__(self):
        if not 0 < self.min_coincidence <= 1:
            raise ValueError("min_coincidence must lie in (0, 1]")
        if not self.max_overhang_frac > 0:
            raise ValueError("max_overhang_frac must be positive")
        if self.denominator not in ("reference", "output"):
            raise ValueError("denominator must be 'reference' or 'output'")


@dataclass(frozen=True)
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "ClassCounts") -> "ClassCounts":
        return ClassCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class ScoreWeights:
    w_prec_ictal: float = 0.6
    w_jaccard_ictal: float = 0.2
    w_recall_ictal: float = 0.1
    w_prec_inter: float = 0.05
    w_recall_inter: float = 0.05

    def validate(self) -> None:
        total = (self.w_prec_ictal + self.w_jaccard_ictal + self.w_recall_ictal
                 + self.w_prec_inter + self.w_recall_inter)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"score weights sum to {total}, not 1")


@dataclass(frozen=True)
class EvalReport:
    precision_ictal: float
    precision_interictal: float
    recall_ictal: float
    recall_interictal: float
    jaccard_ictal: float
    jaccard_interictal: float
    f1_ictal: float
    f1_interictal: float
    score: float
    counts: dict = field(default_factory=dict, compare=False)

    def as_row(self) -> dict:
        return {name: getattr(self, name) for name in REPORT_COLUMNS}


def coincidence_ratio(ref: LabelInterval, out: LabelInterval, denominator: str = "reference") -> float:
    """Overlap length over the reference length (or output length), floored at 0."""
    base = ref if denominator == "reference" else out
    if base.end_sample <= base.start_sample:
        raise ValueError("zero-length interval")
    overlap = min(ref.end_sample, out.end_sample) - max(ref.start_sample, out.start_sample)
    return max(overlap, 0) / (base.end_sample - base.start_sample)


def _length_ok(ref: LabelInterval, out: LabelInterval, rule: MatchRule) -> bool:
    if rule.per_side:
        slack = rule.max_overhang_frac * ref.length
        return (ref.start_sample - out.start_sample <= slack
                and out.end_sample - ref.end_sample <= slack)
    return out.length <= (1.0 + rule.max_overhang_frac) * ref.length


def candidate_pairs(ref: Segmentation, out: Segmentation, label: LabelClass,
                    rule: MatchRule) -> list[tuple[float, int, int]]:
    """All admissible ``(coincidence, ref_pos, out_pos)`` pairs for one class."""
    refs = ref.of_class(label)
    outs = out.of_class(label)
    pairs = []
    j0 = 0
    for i, r in enumerate(refs):
        while j0 < len(outs) and outs[j0].end_sample <= r.start_sample:
            j0 += 1
        for j in range(j0, len(outs)):
            y = outs[j]
            if y.start_sample >= r.end_sample:
                break
            c = coincidence_ratio(r, y, rule.denominator)
            if c >= rule.min_coincidence and _length_ok(r, y, rule):
                pairs.append((c, i, j))
    return pairs


def match_events(ref: Segmentation, out: Segmentation, label: LabelClass,
                 rule: MatchRule = MatchRule()) -> ClassCounts:
    """Greedy one-to-one matching in descending coincidence order.

    Ties go to the earlier reference, then the earlier output.
    """
    if ref.total_len != out.total_len:
        raise ValueError(f"segmentation lengths differ ({ref.total_len} vs {out.total_len})")
    pairs = sorted(candidate_pairs(ref, out, label, rule), key=lambda p: (-p[0], p[1], p[2]))
    used_r, used_o = set(), set()
    for _, i, j in pairs:
        if i not in used_r and j not in used_o:
            used_r.add(i)
            used_o.add(j)
    tp = len(used_r)
    return ClassCounts(tp, len(out.of_class(label)) - tp, len(ref.of_class(label)) - tp)


def precision(c: ClassCounts) -> float:
    d = c.tp + c.fp
    return c.tp / d if d else 0.0


def recall(c: ClassCounts) -> float:
    d = c.tp + c.fn
    return c.tp / d if d else 0.0


def f1(c: ClassCounts) -> float:
    p, r = precision(c), recall(c)
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def jaccard(ref: Segmentation, out: Segmentation, label: LabelClass) -> float:
    """Sample-wise |A and B| / |A or B|; 1.0 when neither labels any sample."""
    if ref.total_len != out.total_len:
        raise ValueError(f"segmentation lengths differ ({ref.total_len} vs {out.total_len})")
    a = ref.to_labels() == label
    b = out.to_labels() == label
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def mcda_score(report: EvalReport, weights: ScoreWeights = ScoreWeights()) -> float:
    weights.validate()
    return (weights.w_prec_ictal * report.precision_ictal
            + weights.w_jaccard_ictal * report.jaccard_ictal
            + weights.w_recall_ictal * report.recall_ictal
            + weights.w_prec_inter * report.precision_interictal
            + weights.w_recall_inter * report.recall_interictal)


def report_from_metrics(precision_ictal, precision_interictal, recall_ictal, recall_interictal,
                        jaccard_ictal=0.0, jaccard_interictal=0.0, f1_ictal=0.0, f1_interictal=0.0,
                        weights: ScoreWeights = ScoreWeights(), counts=None) -> EvalReport:
    """Build a report from component metrics, computing the composite score."""
    partial = EvalReport(precision_ictal, precision_interictal, recall_ictal, recall_interictal,
                         jaccard_ictal, jaccard_interictal, f1_ictal, f1_interictal, 0.0)
    return EvalReport(precision_ictal, precision_interictal, recall_ictal, recall_interictal,
                      jaccard_ictal, jaccard_interictal, f1_ictal, f1_interictal,
                      mcda_score(partial, weights), counts or {})


def report_from_counts(counts: dict, jaccards: dict, weights: ScoreWeights = ScoreWeights()) -> EvalReport:
    ci, cii = counts[LabelClass.ICTAL], counts[LabelClass.INTERICTAL]
    return report_from_metrics(
        precision(ci), precision(cii), recall(ci), recall(cii),
        jaccards[LabelClass.ICTAL], jaccards[LabelClass.INTERICTAL], f1(ci), f1(cii),
        weights, counts,
    )


def evaluate(ref: Segmentation, out: Segmentation, rule: MatchRule = MatchRule(),
             weights: ScoreWeights = ScoreWeights()) -> EvalReport:
    counts = {c: match_events(ref, out, c, rule) for c in EVENT_CLASSES}
    jaccards = {c: jaccard(ref, out, c) for c in EVENT_CLASSES}
    return report_from_counts(counts, jaccards, weights)


def pearson_corr(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson_corr needs two equal-length sequences of >= 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance")
    r = np.dot(dx, dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))
