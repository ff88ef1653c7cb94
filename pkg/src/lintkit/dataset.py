"""Dataset assembly: issues onto methods, label algebra, balancing, splits.

The label vocabulary starts from the per-tool type tables, folds groups of
tool-specific ids that describe the same defect into shared equivalence ids,
and can then be narrowed by a frequency threshold.  Negative examples
(methods from cleanly analyzed projects with no findings) are sampled down
to match the positive count, and the result is split either by stratified
random assignment or by withholding whole projects.

Every random step takes an explicit seed, and the manifest records enough
(seeds, counts, an assignment digest) to verify a rebuild bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, unique
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

from .extract import MethodUnit, locate_method
from .lintrun import IssueRecord

log = logging.getLogger(__name__)


@unique
class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    HELDOUT = "heldout"
    UNASSIGNED = "unassigned"


class UnknownLabelError(KeyError):
    def __init__(self, label: str):
        super().__init__(f"label id not in vocabulary: {label!r}")
        self.label = label


@dataclass(frozen=True)
class LabelVocabulary:
    """Base type ids, their equivalence groups, and (optionally) frequencies.

    ``effective_ids`` is what models see: ungrouped base ids plus one id per
    equivalence group.
    """

    base_ids: frozenset[str]
    equivalence_groups: Mapping[str, frozenset[str]]
    frequency: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        seen: dict[str, str] = {}
        for gid, members in self.equivalence_groups.items():
            for m in members:
                if m in seen:
                    raise ValueError(
                        f"base id {m!r} appears in groups {seen[m]!r} and {gid!r}"
                    )
                seen[m] = gid
                if m not in self.base_ids:
                    raise ValueError(f"group {gid!r} references unknown base id {m!r}")
        object.__setattr__(self, "_base_to_group", seen)

    @property
    def grouped_base_ids(self) -> frozenset[str]:
        return frozenset(self._base_to_group)

    @property
    def effective_ids(self) -> frozenset[str]:
        return (self.base_ids - self.grouped_base_ids) | frozenset(
            self.equivalence_groups
        )

    def resolve(self, label: str) -> str:
        """Base id -> effective id (itself when ungrouped).

        Effective ids pass through unchanged, so resolving twice equals
        resolving once.
        """
        if label in self._base_to_group:
            return self._base_to_group[label]
        if label in self.equivalence_groups:
            return label
        if label not in self.base_ids:
            raise UnknownLabelError(label)
        return label

    def with_frequency(self, frequency: Mapping[str, int]) -> "LabelVocabulary":
        return LabelVocabulary(
            base_ids=self.base_ids,
            equivalence_groups=self.equivalence_groups,
            frequency=dict(frequency),
        )

    def restricted(self, keep: frozenset[str]) -> "LabelVocabulary":
        """Narrow to a subset of effective ids (after a frequency filter)."""
        groups = {g: m for g, m in self.equivalence_groups.items() if g in keep}
        grouped = frozenset().union(*groups.values()) if groups else frozenset()
        base = frozenset(
            b for b in self.base_ids if b in keep or b in grouped
        )
        freq = {k: v for k, v in self.frequency.items() if k in keep}
        return LabelVocabulary(base_ids=base, equivalence_groups=groups, frequency=freq)

    def to_json(self) -> dict:
        return {
            "base_ids": sorted(self.base_ids, key=_id_sort_key),
            "equivalence_groups": {
                g: sorted(m, key=_id_sort_key)
                for g, m in sorted(self.equivalence_groups.items())
            },
            "frequency": {k: self.frequency[k] for k in sorted(self.frequency, key=_id_sort_key)},
        }

    @classmethod
    def from_json(cls, rec: dict) -> "LabelVocabulary":
        return cls(
            base_ids=frozenset(rec["base_ids"]),
            equivalence_groups={
                g: frozenset(m) for g, m in rec.get("equivalence_groups", {}).items()
            },
            frequency=dict(rec.get("frequency", {})),
        )

    @classmethod
    def load_default(cls) -> "LabelVocabulary":
        """Vocabulary from the shipped type tables and equivalence groups."""
        from .lintrun import infer_type_table, spotbugs_type_table

        base = frozenset(infer_type_table().values()) | frozenset(
            spotbugs_type_table().values()
        )
        with resources.files("lintkit.data").joinpath("equivalences.json").open(
            "r", encoding="utf-8"
        ) as fh:
            raw = json.load(fh)
        groups = {g: frozenset(members) for g, members in raw.items()}
        return cls(base_ids=base, equivalence_groups=groups)


def _id_sort_key(label: str):
    m = re.match(r"([A-Za-z?]+)(\d+)$", label)
    if m:
        return (m.group(1), int(m.group(2)))
    return (label, -1)


def apply_equivalence(labels: Iterable[str], vocab: LabelVocabulary) -> frozenset[str]:
    """Map base ids to effective ids; unknown ids raise UnknownLabelError."""
    return frozenset(vocab.resolve(label) for label in labels)


@dataclass
class LabeledSample:
    method_id: str
    project: str
    labels: frozenset[str]
    in_csn: bool = False
    split: Split = Split.UNASSIGNED

    @property
    def has_issue(self) -> bool:
        return bool(self.labels)

    def to_json(self) -> dict:
        return {
            "id": self.method_id,
            "project": self.project,
            "labels": sorted(self.labels, key=_id_sort_key),
            "in_csn": self.in_csn,
            "split": self.split.value,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "LabeledSample":
        return cls(
            method_id=rec["id"],
            project=rec["project"],
            labels=frozenset(rec.get("labels", [])),
            in_csn=bool(rec.get("in_csn", False)),
            split=Split(rec.get("split", "unassigned")),
        )


@dataclass
class MappingResult:
    samples: list[LabeledSample]
    unmatched_issues: int


def map_issues_to_methods(
    units: Sequence[MethodUnit],
    issues: Iterable[IssueRecord],
    *,
    in_csn: Mapping[str, bool] | None = None,
) -> MappingResult:
    """Assign each finding to the innermost method covering its line.

    Findings that land outside every extracted method are counted and
    discarded.  Labels are tool type ids, deduplicated per method.  Every
    unit yields a sample; units without findings come back with an empty
    label set (the negative pool).
    """
    by_path: dict[str, list[MethodUnit]] = {}
    for u in units:
        by_path.setdefault(u.path, []).append(u)
    labels: dict[str, set[str]] = {u.id: set() for u in units}
    unmatched = 0
    for issue in issues:
        unit = locate_method(by_path.get(issue.path, ()), issue.path, issue.line)
        if unit is None:
            unmatched += 1
            continue
        labels[unit.id].add(issue.type_id)
    if unmatched:
        log.info("dropped %d finding(s) outside any extracted method", unmatched)
    csn = in_csn or {}
    samples = [
        LabeledSample(
            method_id=u.id,
            project=u.project,
            labels=frozenset(labels[u.id]),
            in_csn=bool(csn.get(u.project, False)),
        )
        for u in units
    ]
    return MappingResult(samples=samples, unmatched_issues=unmatched)


def resolve_sample_labels(
    samples: Iterable[LabeledSample], vocab: LabelVocabulary
) -> list[LabeledSample]:
    """Replace base ids with effective ids on every sample."""
    return [
        LabeledSample(
            method_id=s.method_id,
            project=s.project,
            labels=apply_equivalence(s.labels, vocab),
            in_csn=s.in_csn,
            split=s.split,
        )
        for s in samples
    ]


@dataclass(frozen=True)
class ThresholdConfig:
    """Which labels survive the frequency filter.

    mode "coverage_fraction": keep the smallest most-frequent prefix whose
    cumulative count reaches ``value`` of all label occurrences, plus any
    label tied with the last kept count.  mode "min_count": keep labels
    occurring at least ``value`` times.
    """

    mode: str
    value: float

    def __post_init__(self):
        if self.mode not in ("coverage_fraction", "min_count"):
            raise ValueError(f"unknown threshold mode: {self.mode!r}")
        if self.mode == "coverage_fraction" and not (0.0 < self.value <= 1.0):
            raise ValueError("coverage_fraction value must be in (0, 1]")
        if self.mode == "min_count" and self.value < 0:
            raise ValueError("min_count value must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "ThresholdConfig":
        """Parse "coverage:0.75" or "mincount:15"."""
        kind, _, raw = text.partition(":")
        if kind == "coverage":
            return cls("coverage_fraction", float(raw))
        if kind == "mincount":
            return cls("min_count", float(raw))
        raise ValueError(f"unknown threshold spec: {text!r}")


def label_frequencies(samples: Iterable[LabeledSample]) -> Counter:
    freq: Counter = Counter()
    for s in samples:
        freq.update(s.labels)
    return freq


def kept_labels(freq: Mapping[str, int], config: ThresholdConfig) -> frozenset[str]:
    """Labels surviving the threshold; ties at the boundary count are kept."""
    items = [(label, count) for label, count in freq.items() if count > 0]
    if config.mode == "min_count":
        return frozenset(label for label, count in items if count >= config.value)
    total = sum(count for _, count in items)
    if total == 0:
        return frozenset()
    target = config.value * total
    items.sort(key=lambda lc: (-lc[1], _id_sort_key(lc[0])))
    cumulative = 0
    boundary = None
    for _label, count in items:
        cumulative += count
        if cumulative >= target:
            boundary = count
            break
    assert boundary is not None  # fraction <= 1 guarantees the loop breaks
    return frozenset(label for label, count in items if count >= boundary)


@dataclass
class FilterResult:
    samples: list[LabeledSample]
    vocabulary: LabelVocabulary
    removed_labels: frozenset[str]
    emptied_samples: int


def frequency_filter(
    samples: Sequence[LabeledSample],
    vocab: LabelVocabulary,
    config: ThresholdConfig,
) -> FilterResult:
    """Drop labels below the threshold; positives left labelless are removed.

    Samples that never had labels (the negative pool) pass through untouched.
    Re-applying a min_count filter is a no-op; a coverage filter is not
    idempotent in general (the total shrinks with the removed labels).
    """
    freq = label_frequencies(samples)
    keep = kept_labels(freq, config)
    removed = frozenset(freq) - keep
    out: list[LabeledSample] = []
    emptied = 0
    for s in samples:
        if not s.labels:
            out.append(s)
            continue
        trimmed = s.labels & keep
        if not trimmed:
            emptied += 1
            continue
        out.append(
            LabeledSample(
                method_id=s.method_id,
                project=s.project,
                labels=trimmed,
                in_csn=s.in_csn,
                split=s.split,
            )
        )
    kept_freq = {label: freq[label] for label in keep}
    return FilterResult(
        samples=out,
        vocabulary=vocab.restricted(keep).with_frequency(kept_freq),
        removed_labels=removed,
        emptied_samples=emptied,
    )


class BalanceError(ValueError):
    pass


def balance_negatives(
    positives: Sequence[LabeledSample],
    negative_pool: Sequence[LabeledSample],
    seed: int,
) -> list[LabeledSample]:
    """Uniformly sample negatives (without replacement) to match the positive
    count; result is positives + sampled negatives.  Deterministic in the
    seed and independent of pool order."""
    n = len(positives)
    if len(negative_pool) < n:
        raise BalanceError(
            f"negative pool ({len(negative_pool)}) smaller than positive count ({n})"
        )
    pool = sorted(negative_pool, key=lambda s: s.method_id)
    rng = random.Random(seed)
    chosen = rng.sample(pool, n)
    return list(positives) + chosen


class SplitError(ValueError):
    pass


@dataclass
class SplitSummary:
    counts: dict[str, int]
    positives: dict[str, int]
    heldout_projects: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "counts": dict(self.counts),
            "positives": dict(self.positives),
            "heldout_projects": list(self.heldout_projects),
        }


def split_default(
    samples: Sequence[LabeledSample], seed: int
) -> tuple[list[LabeledSample], SplitSummary]:
    """80/10/10 split, stratified on has-issue.

    Validation and test get floor(10%) of each stratum; training takes the
    remainder, so a balanced input yields an exactly balanced split.
    """
    positives = sorted((s for s in samples if s.has_issue), key=lambda s: s.method_id)
    negatives = sorted((s for s in samples if not s.has_issue), key=lambda s: s.method_id)
    rng = random.Random(seed)
    out: list[LabeledSample] = []
    for stratum in (positives, negatives):
        shuffled = list(stratum)
        rng.shuffle(shuffled)
        n = len(shuffled)
        n_val = n // 10
        n_test = n // 10
        for i, s in enumerate(shuffled):
            if i < n - n_val - n_test:
                split = Split.TRAIN
            elif i < n - n_test:
                split = Split.VAL
            else:
                split = Split.TEST
            out.append(
                LabeledSample(
                    method_id=s.method_id,
                    project=s.project,
                    labels=s.labels,
                    in_csn=s.in_csn,
                    split=split,
                )
            )
    out.sort(key=lambda s: s.method_id)
    return out, _summarize(out)


def split_project_heldout(
    samples: Sequence[LabeledSample],
    seed: int,
    *,
    target_fraction: float = 0.10,
) -> tuple[list[LabeledSample], SplitSummary]:
    """Withhold whole projects as an out-of-distribution test set.

    Projects are drawn alternately from the curated-list pool and the
    API-search pool (curated first), each in seeded random order, until the
    withheld samples reach ``target_fraction`` of the corpus; the first draw
    crossing the line is kept, so overshoot is expected.  The remainder gets
    the default 80/10/10 treatment.
    """
    by_project: dict[str, list[LabeledSample]] = {}
    for s in samples:
        by_project.setdefault(s.project, []).append(s)
    csn_pool = sorted(p for p, ss in by_project.items() if ss[0].in_csn)
    other_pool = sorted(p for p, ss in by_project.items() if not ss[0].in_csn)
    rng = random.Random(seed)
    rng.shuffle(csn_pool)
    rng.shuffle(other_pool)

    target = target_fraction * len(samples)
    heldout_projects: list[str] = []
    withheld = 0
    pools = (csn_pool, other_pool)
    pool_names = ("curated-list", "api-search")
    turn = 0
    while withheld < target:
        pool = pools[turn % 2]
        # Strict alternation keeps the withheld set half-and-half by origin;
        # an empty pool at its turn is an error, not a silent substitution.
        if not pool:
            raise SplitError(
                f"{pool_names[turn % 2]} project pool exhausted at "
                f"{withheld}/{len(samples)} samples withheld "
                f"({withheld / len(samples):.1%} of target {target_fraction:.1%})"
            )
        turn += 1
        project = pool.pop()
        heldout_projects.append(project)
        withheld += len(by_project[project])

    heldout_set = set(heldout_projects)
    heldout_samples = [
        LabeledSample(
            method_id=s.method_id,
            project=s.project,
            labels=s.labels,
            in_csn=s.in_csn,
            split=Split.HELDOUT,
        )
        for s in samples
        if s.project in heldout_set
    ]
    rest = [s for s in samples if s.project not in heldout_set]
    rest_split, _ = split_default(rest, seed)
    out = sorted(heldout_samples + rest_split, key=lambda s: s.method_id)
    summary = _summarize(out)
    summary.heldout_projects = sorted(heldout_projects)
    return out, summary


def _summarize(samples: Iterable[LabeledSample]) -> SplitSummary:
    counts: Counter = Counter()
    positives: Counter = Counter()
    for s in samples:
        counts[s.split.value] += 1
        if s.has_issue:
            positives[s.split.value] += 1
    return SplitSummary(counts=dict(counts), positives=dict(positives))


@dataclass
class DatasetManifest:
    """Everything needed to audit or reproduce one dataset build."""

    vocabulary: LabelVocabulary
    threshold: Optional[ThresholdConfig]
    balance_seed: Optional[int]
    split_seed: Optional[int]
    split_kind: str
    summary: SplitSummary
    assignment_digest: str = ""
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "vocabulary": self.vocabulary.to_json(),
            "threshold": {
                "mode": self.threshold.mode,
                "value": self.threshold.value,
            }
            if self.threshold
            else None,
            "seeds": {"balance": self.balance_seed, "split": self.split_seed},
            "split_kind": self.split_kind,
            "summary": self.summary.to_json(),
            "assignment_digest": self.assignment_digest,
            "notes": list(self.notes),
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def assignment_digest(samples: Iterable[LabeledSample]) -> str:
    """Order-independent digest of (sample id, split, labels) assignments."""
    h = hashlib.sha256()
    for s in sorted(samples, key=lambda x: x.method_id):
        h.update(s.method_id.encode("utf-8"))
        h.update(s.split.value.encode("utf-8"))
        h.update(",".join(sorted(s.labels)).encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def build_dataset(
    units: Sequence[MethodUnit],
    issues: Iterable[IssueRecord],
    *,
    threshold: ThresholdConfig,
    balance_seed: int,
    split_seed: int,
    split_kind: str = "default",
    in_csn: Mapping[str, bool] | None = None,
    vocab: Optional[LabelVocabulary] = None,
) -> tuple[list[LabeledSample], DatasetManifest]:
    """The full assembly line: map, fold equivalences, filter, balance, split."""
    vocab = vocab or LabelVocabulary.load_default()
    mapped = map_issues_to_methods(units, issues, in_csn=in_csn)
    resolved = resolve_sample_labels(mapped.samples, vocab)
    filtered = frequency_filter(resolved, vocab, threshold)
    positives = [s for s in filtered.samples if s.has_issue]
    negatives = [s for s in filtered.samples if not s.has_issue]
    balanced = balance_negatives(positives, negatives, balance_seed)
    if split_kind == "default":
        assigned, summary = split_default(balanced, split_seed)
    elif split_kind == "project-heldout":
        assigned, summary = split_project_heldout(balanced, split_seed)
    else:
        raise ValueError(f"unknown split kind: {split_kind!r}")
    manifest = DatasetManifest(
        vocabulary=filtered.vocabulary,
        threshold=threshold,
        balance_seed=balance_seed,
        split_seed=split_seed,
        split_kind=split_kind,
        summary=summary,
        assignment_digest=assignment_digest(assigned),
        notes=[
            f"unmatched_issues={mapped.unmatched_issues}",
            f"labels_removed_by_threshold={len(filtered.removed_labels)}",
            f"positives_emptied_by_threshold={filtered.emptied_samples}",
        ],
    )
    return assigned, manifest
