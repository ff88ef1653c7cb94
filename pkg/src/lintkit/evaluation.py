"""Scoring predictions against truth, plus the wall-clock benchmark.

Metric conventions used throughout:

* accuracy = (TP + TN) / total, precision = TP / (TP + FP),
  recall = TP / (TP + FN), F1 = harmonic mean of precision and recall
* any zero denominator yields 0.0 for that metric and adds a flag to the
  report instead of raising
* multi-label counts are sample-level: a type's TP is the number of samples
  where both prediction and truth contain it
* weighted aggregates average per-type values by the type's truth support
  n(i), over types with n(i) >= 1; the NOISSUE pseudo-type participates
  when present in truth unless the caller excludes it

Frequency-based head/tail splits sort types by truth support, keep the
smallest prefix covering the configured fraction, and then force-include any
configured must-have labels into the head.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .dataset import _id_sort_key
from .model import NO_ISSUE_LABEL, PredictionRecord, binary_truth

ZERO_DIV_FLAG = "zero_denominator"


class EvalDataError(ValueError):
    """Predictions and truth cannot be aligned."""


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class BinaryReport:
    counts: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "tn": self.counts.tn,
                "fn": self.counts.fn,
            },
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "flags": list(self.flags),
        }


def _safe_div(num: float, den: float, flags: list[str], what: str) -> float:
    if den == 0:
        flags.append(f"{ZERO_DIV_FLAG}:{what}")
        return 0.0
    return num / den


def _f1(precision: float, recall: float, flags: list[str], what: str) -> float:
    return _safe_div(2 * precision * recall, precision + recall, flags, what)


def _check_alignment(pred_ids: Iterable[str], truth_ids: Iterable[str]) -> None:
    pred_set = set(pred_ids)
    truth_set = set(truth_ids)
    if pred_set != truth_set:
        missing = len(truth_set - pred_set)
        extra = len(pred_set - truth_set)
        raise EvalDataError(
            f"predictions and truth do not align: {missing} truth sample(s) "
            f"without predictions, {extra} prediction(s) without truth"
        )


def binary_metrics(
    preds: Sequence[PredictionRecord],
    truth: Mapping[str, frozenset[str]] | Mapping[str, bool],
) -> BinaryReport:
    """Score has-issue verdicts; truth values may be bools or label sets."""
    _check_alignment((p.sample_id for p in preds), truth.keys())
    counts = ConfusionCounts()
    for p in preds:
        raw = truth[p.sample_id]
        actual = raw if isinstance(raw, bool) else binary_truth(frozenset(raw))
        predicted = binary_truth(p.decided_labels)
        if predicted and actual:
            counts.tp += 1
        elif predicted and not actual:
            counts.fp += 1
        elif not predicted and actual:
            counts.fn += 1
        else:
            counts.tn += 1
    flags: list[str] = []
    accuracy = _safe_div(counts.tp + counts.tn, counts.total, flags, "accuracy")
    precision = _safe_div(counts.tp, counts.tp + counts.fp, flags, "precision")
    recall = _safe_div(counts.tp, counts.tp + counts.fn, flags, "recall")
    f1 = _f1(precision, recall, flags, "f1")
    return BinaryReport(
        counts=counts,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        flags=flags,
    )


@dataclass
class PerTypeMetrics:
    type_id: str
    support: int  # samples whose truth contains the type
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "type_id": self.type_id,
            "support": self.support,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "flags": list(self.flags),
        }


@dataclass
class MultiLabelReport:
    per_type: list[PerTypeMetrics]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    exact_match_accuracy: float
    total_samples: int
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "per_type": [t.to_json() for t in self.per_type],
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "exact_match_accuracy": self.exact_match_accuracy,
            "total_samples": self.total_samples,
            "flags": list(self.flags),
        }


def canonical_label_set(labels: Iterable[str]) -> frozenset[str]:
    """Multi-label truth/prediction normal form: empty becomes {NOISSUE}."""
    s = frozenset(labels)
    return s if s else frozenset({NO_ISSUE_LABEL})


def multilabel_metrics(
    preds: Sequence[PredictionRecord],
    truth: Mapping[str, frozenset[str]],
    *,
    include_no_issue: bool = True,
) -> MultiLabelReport:
    """Per-type precision/recall/F1 plus support-weighted aggregates.

    Types are whatever appears in truth or predictions after normalization.
    Weighted aggregates run over types with truth support >= 1;
    ``include_no_issue=False`` drops the NOISSUE pseudo-type from both the
    per-type table and the aggregates.
    """
    _check_alignment((p.sample_id for p in preds), truth.keys())
    pred_sets = {p.sample_id: canonical_label_set(p.decided_labels) for p in preds}
    truth_sets = {sid: canonical_label_set(labels) for sid, labels in truth.items()}

    type_ids = set()
    for labels in truth_sets.values():
        type_ids |= labels
    for labels in pred_sets.values():
        type_ids |= labels
    if not include_no_issue:
        type_ids.discard(NO_ISSUE_LABEL)

    per_type: list[PerTypeMetrics] = []
    for type_id in sorted(type_ids, key=_id_sort_key):
        tp = fp = fn = 0
        support = 0
        for sid, truth_labels in truth_sets.items():
            in_truth = type_id in truth_labels
            in_pred = type_id in pred_sets[sid]
            support += in_truth
            if in_pred and in_truth:
                tp += 1
            elif in_pred:
                fp += 1
            elif in_truth:
                fn += 1
        flags: list[str] = []
        precision = _safe_div(tp, tp + fp, flags, f"{type_id}:precision")
        recall = _safe_div(tp, tp + fn, flags, f"{type_id}:recall")
        f1 = _f1(precision, recall, flags, f"{type_id}:f1")
        per_type.append(
            PerTypeMetrics(
                type_id=type_id,
                support=support,
                tp=tp,
                fp=fp,
                fn=fn,
                precision=precision,
                recall=recall,
                f1=f1,
                flags=flags,
            )
        )

    report_flags: list[str] = []
    weighted = _weighted_aggregate(per_type, report_flags)
    exact = sum(
        pred_sets[sid] == truth_sets[sid] for sid in truth_sets
    )
    exact_match = _safe_div(exact, len(truth_sets), report_flags, "exact_match")
    return MultiLabelReport(
        per_type=per_type,
        weighted_precision=weighted[0],
        weighted_recall=weighted[1],
        weighted_f1=weighted[2],
        exact_match_accuracy=exact_match,
        total_samples=len(truth_sets),
        flags=report_flags,
    )


def _weighted_aggregate(
    per_type: Sequence[PerTypeMetrics], flags: list[str]
) -> tuple[float, float, float]:
    supported = [t for t in per_type if t.support >= 1]
    total = sum(t.support for t in supported)
    if total == 0:
        flags.append(f"{ZERO_DIV_FLAG}:weighted_aggregate")
        return 0.0, 0.0, 0.0
    wp = sum(t.support * t.precision for t in supported) / total
    wr = sum(t.support * t.recall for t in supported) / total
    wf = sum(t.support * t.f1 for t in supported) / total
    return wp, wr, wf


# --------------------------------------------------------------------------
# head/tail frequency partition


@dataclass(frozen=True)
class HeadTailConfig:
    coverage_fraction: float = 0.5
    forced_head_labels: frozenset[str] = frozenset({"S8"})


@dataclass
class HeadTailPartition:
    head: frozenset[str]
    tail: frozenset[str]
    ignored_forced: frozenset[str] = frozenset()


def head_tail_partition(
    freq: Mapping[str, int], config: HeadTailConfig = HeadTailConfig()
) -> HeadTailPartition:
    """Most-frequent prefix covering the fraction -> head; rest -> tail.

    Forced labels move to the head regardless of frequency; a forced label
    absent from the table is noted and skipped.
    """
    items = sorted(freq.items(), key=lambda lc: (-lc[1], _id_sort_key(lc[0])))
    total = sum(count for _, count in items)
    head = set()
    cumulative = 0
    for label, count in items:
        if cumulative >= config.coverage_fraction * total:
            break
        head.add(label)
        cumulative += count
    present = {label for label, _ in items}
    ignored = frozenset(config.forced_head_labels - present)
    head |= config.forced_head_labels & present
    tail = present - head
    return HeadTailPartition(
        head=frozenset(head), tail=frozenset(tail), ignored_forced=ignored
    )


@dataclass
class GroupMetrics:
    labels: frozenset[str]
    accuracy: float  # subset exact-match over all samples
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_type: list[PerTypeMetrics]
    flags: list[str] = field(default_factory=list)


@dataclass
class HeadTailReport:
    partition: HeadTailPartition
    head: GroupMetrics
    tail: GroupMetrics
    tail_only_accuracy: Optional[float]  # None when no sample expects a tail label
    tail_only_samples: int

    def to_json(self) -> dict:
        def group(g: GroupMetrics) -> dict:
            return {
                "labels": sorted(g.labels, key=_id_sort_key),
                "accuracy": g.accuracy,
                "weighted_precision": g.weighted_precision,
                "weighted_recall": g.weighted_recall,
                "weighted_f1": g.weighted_f1,
                "per_type": [t.to_json() for t in g.per_type],
                "flags": list(g.flags),
            }

        return {
            "head": group(self.head),
            "tail": group(self.tail),
            "tail_only_accuracy": self.tail_only_accuracy,
            "tail_only_samples": self.tail_only_samples,
            "ignored_forced": sorted(self.partition.ignored_forced),
        }


def head_tail_metrics(
    preds: Sequence[PredictionRecord],
    truth: Mapping[str, frozenset[str]],
    partition: HeadTailPartition,
) -> HeadTailReport:
    """Score the head and tail label groups separately.

    Group accuracy asks whether prediction and truth agree on the group's
    labels exactly (both restricted to the group; agreeing on "none" counts).
    Tail-only accuracy reruns the tail check over just the samples whose
    truth expects at least one tail label; it is absent when no sample does.
    """
    _check_alignment((p.sample_id for p in preds), truth.keys())
    pred_sets = {p.sample_id: canonical_label_set(p.decided_labels) for p in preds}
    truth_sets = {sid: canonical_label_set(labels) for sid, labels in truth.items()}

    head = _group_metrics(pred_sets, truth_sets, partition.head)
    tail = _group_metrics(pred_sets, truth_sets, partition.tail)

    tail_expected = [
        sid for sid, labels in truth_sets.items() if labels & partition.tail
    ]
    if tail_expected:
        hits = sum(
            (pred_sets[sid] & partition.tail) == (truth_sets[sid] & partition.tail)
            for sid in tail_expected
        )
        tail_only = hits / len(tail_expected)
    else:
        tail_only = None
    return HeadTailReport(
        partition=partition,
        head=head,
        tail=tail,
        tail_only_accuracy=tail_only,
        tail_only_samples=len(tail_expected),
    )


def _group_metrics(
    pred_sets: Mapping[str, frozenset[str]],
    truth_sets: Mapping[str, frozenset[str]],
    labels: frozenset[str],
) -> GroupMetrics:
    per_type: list[PerTypeMetrics] = []
    for type_id in sorted(labels, key=_id_sort_key):
        tp = fp = fn = 0
        support = 0
        for sid, truth_labels in truth_sets.items():
            in_truth = type_id in truth_labels
            in_pred = type_id in pred_sets[sid]
            support += in_truth
            if in_pred and in_truth:
                tp += 1
            elif in_pred:
                fp += 1
            elif in_truth:
                fn += 1
        flags: list[str] = []
        precision = _safe_div(tp, tp + fp, flags, f"{type_id}:precision")
        recall = _safe_div(tp, tp + fn, flags, f"{type_id}:recall")
        f1 = _f1(precision, recall, flags, f"{type_id}:f1")
        per_type.append(
            PerTypeMetrics(type_id, support, tp, fp, fn, precision, recall, f1, flags)
        )
    group_flags: list[str] = []
    wp, wr, wf = _weighted_aggregate(per_type, group_flags)
    matches = sum(
        (pred_sets[sid] & labels) == (truth_sets[sid] & labels) for sid in truth_sets
    )
    accuracy = _safe_div(matches, len(truth_sets), group_flags, "group_accuracy")
    return GroupMetrics(
        labels=labels,
        accuracy=accuracy,
        weighted_precision=wp,
        weighted_recall=wr,
        weighted_f1=wf,
        per_type=per_type,
        flags=group_flags,
    )


def per_type_csv(per_type: Sequence[PerTypeMetrics]) -> str:
    """Per-type table as CSV text (type, support, precision, recall, f1)."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["type_id", "support", "precision", "recall", "f1"])
    for t in per_type:
        writer.writerow(
            [t.type_id, t.support, f"{t.precision:.4f}", f"{t.recall:.4f}", f"{t.f1:.4f}"]
        )
    return buf.getvalue()


# --------------------------------------------------------------------------
# wall-clock benchmark


@dataclass
class TimingRow:
    project: str
    stage: str
    seconds: float

    def to_json(self) -> dict:
        return {"project": self.project, "stage": self.stage, "seconds": self.seconds}


@dataclass
class TimingReport:
    rows: list[TimingRow]
    stage_means: dict[str, float]
    stage_medians: dict[str, float]
    comparison: Optional[dict] = None

    def to_json(self) -> dict:
        return {
            "rows": [r.to_json() for r in self.rows],
            "stage_means": dict(self.stage_means),
            "stage_medians": dict(self.stage_medians),
            "comparison": self.comparison,
        }


def timing_bench(
    project_ids: Sequence[str],
    stages: Mapping[str, Callable[[str], object]],
    *,
    clock: Callable[[], float] = time.perf_counter,
) -> TimingReport:
    """Run each stage on each project, recording wall-clock seconds.

    Rows keep per-project granularity (box-plot ready); means and medians
    are per stage.
    """
    rows: list[TimingRow] = []
    for project in project_ids:
        for stage, fn in stages.items():
            started = clock()
            fn(project)
            rows.append(TimingRow(project, stage, clock() - started))
    return summarize_timing(rows)


def summarize_timing(rows: Sequence[TimingRow]) -> TimingReport:
    by_stage: dict[str, list[float]] = {}
    for row in rows:
        by_stage.setdefault(row.stage, []).append(row.seconds)
    means = {stage: statistics.fmean(vals) for stage, vals in by_stage.items()}
    medians = {stage: statistics.median(vals) for stage, vals in by_stage.items()}
    return TimingReport(rows=list(rows), stage_means=means, stage_medians=medians)


def speedup_percent(reference_total: float, approach_total: float) -> float:
    """How much less time the approach needs, as a percentage of reference."""
    if reference_total <= 0:
        raise ValueError("reference total must be positive")
    return (reference_total - approach_total) / reference_total * 100.0


def attach_comparison(
    report: TimingReport,
    reference_means: Mapping[str, float],
    *,
    approach_total: Optional[float] = None,
) -> TimingReport:
    """Add a reference-vs-approach comparison to a timing report.

    ``reference_means`` holds externally measured per-tool mean runtimes;
    the approach total defaults to the sum of the report's stage means.
    """
    if approach_total is None:
        approach_total = sum(report.stage_means.values())
    reference_total = sum(reference_means.values())
    report.comparison = {
        "reference_means": dict(reference_means),
        "reference_total": reference_total,
        "approach_total": approach_total,
        "speedup_pct": speedup_percent(reference_total, approach_total),
    }
    return report


def render_timing_report(report: TimingReport) -> str:
    lines = ["stage timings (seconds):"]
    for stage in report.stage_means:
        lines.append(
            f"  {stage}: mean {report.stage_means[stage]:.3f}"
            f" median {report.stage_medians[stage]:.3f}"
        )
    if report.comparison:
        c = report.comparison
        lines.append(
            f"reference linters: {c['reference_total']:.3f}s total;"
            f" this approach: {c['approach_total']:.3f}s"
        )
        lines.append(f"speedup: {c['speedup_pct']:.2f}%")
    return "\n".join(lines)
