"""Label vocabulary, issue mapping, thresholding, balancing, and splits."""

import random
from collections import Counter

import pytest

from lintkit.dataset import (
    BalanceError,
    DatasetManifest,
    LabelVocabulary,
    LabeledSample,
    Split,
    SplitError,
    ThresholdConfig,
    UnknownLabelError,
    apply_equivalence,
    assignment_digest,
    balance_negatives,
    build_dataset,
    frequency_filter,
    kept_labels,
    label_frequencies,
    map_issues_to_methods,
    resolve_sample_labels,
    split_default,
    split_project_heldout,
)
from lintkit.extract import MethodUnit
from lintkit.lintrun import IssueRecord, Tool


def sample(method_id, labels=(), project="p", in_csn=False, split=Split.UNASSIGNED):
    return LabeledSample(
        method_id=method_id,
        project=project,
        labels=frozenset(labels),
        in_csn=in_csn,
        split=split,
    )


def tiny_vocab():
    return LabelVocabulary(
        base_ids=frozenset({"I1", "S1", "S2", "X1"}),
        equivalence_groups={"E1": frozenset({"I1", "S1"})},
    )


def unit(uid, path="A.java", lo=1, hi=10, project="p"):
    return MethodUnit(
        id=uid,
        project=project,
        path=path,
        start_line=lo,
        end_line=hi,
        text="void m() { }",
    )


def issue(type_id, path="A.java", line=5, tool=Tool.INFER):
    return IssueRecord(tool=tool, type_id=type_id, path=path, line=line)


class TestDefaultVocabulary:
    def test_shipped_table_sizes(self):
        vocab = LabelVocabulary.load_default()
        assert len(vocab.base_ids) == 118
        assert len(vocab.grouped_base_ids) == 26
        assert len(vocab.equivalence_groups) == 8
        assert len(vocab.effective_ids) == 100

    def test_resolve_examples(self):
        vocab = LabelVocabulary.load_default()
        assert vocab.resolve("I1") == "E1"
        assert vocab.resolve("S2") == "E3"
        assert vocab.resolve("S8") == "S8"
        assert vocab.resolve("E1") == "E1"  # effective ids pass through

    def test_resolve_unknown(self):
        vocab = LabelVocabulary.load_default()
        with pytest.raises(UnknownLabelError):
            vocab.resolve("S999")
        with pytest.raises(UnknownLabelError):
            vocab.resolve("bogus")

    def test_every_group_fully_folds(self):
        vocab = LabelVocabulary.load_default()
        for gid, members in vocab.equivalence_groups.items():
            assert apply_equivalence(members, vocab) == frozenset({gid})


class TestEquivalence:
    def test_mixed_set(self):
        vocab = LabelVocabulary.load_default()
        assert apply_equivalence({"I3", "S6", "S12"}, vocab) == frozenset({"E2", "S12"})

    def test_single_examples(self):
        vocab = LabelVocabulary.load_default()
        assert apply_equivalence({"I1"}, vocab) == frozenset({"E1"})
        assert apply_equivalence({"S8"}, vocab) == frozenset({"S8"})

    def test_idempotent(self):
        vocab = LabelVocabulary.load_default()
        once = apply_equivalence({"I1", "S2", "S8", "S36"}, vocab)
        assert apply_equivalence(once, vocab) == once

    def test_group_members_collapse_to_one(self):
        vocab = tiny_vocab()
        assert apply_equivalence({"I1", "S1"}, vocab) == frozenset({"E1"})

    def test_unknown_label_raises(self):
        with pytest.raises(UnknownLabelError):
            apply_equivalence({"nope"}, tiny_vocab())

    def test_overlapping_groups_rejected(self):
        with pytest.raises(ValueError, match="appears in groups"):
            LabelVocabulary(
                base_ids=frozenset({"A1", "A2"}),
                equivalence_groups={
                    "G1": frozenset({"A1"}),
                    "G2": frozenset({"A1", "A2"}),
                },
            )

    def test_group_with_unknown_member_rejected(self):
        with pytest.raises(ValueError, match="unknown base id"):
            LabelVocabulary(
                base_ids=frozenset({"A1"}),
                equivalence_groups={"G1": frozenset({"A1", "A9"})},
            )

    def test_restricted(self):
        vocab = tiny_vocab()
        narrowed = vocab.restricted(frozenset({"E1", "S2"}))
        assert narrowed.effective_ids == frozenset({"E1", "S2"})
        assert narrowed.base_ids == frozenset({"I1", "S1", "S2"})
        narrowed = vocab.restricted(frozenset({"X1"}))
        assert narrowed.effective_ids == frozenset({"X1"})
        assert narrowed.equivalence_groups == {}

    def test_json_round_trip(self):
        vocab = tiny_vocab().with_frequency({"E1": 5, "S2": 2})
        back = LabelVocabulary.from_json(vocab.to_json())
        assert back.base_ids == vocab.base_ids
        assert back.equivalence_groups == dict(vocab.equivalence_groups)
        assert back.frequency == {"E1": 5, "S2": 2}


class TestIssueMapping:
    def test_innermost_and_dedup(self):
        units = [
            unit("outer", lo=1, hi=10),
            unit("inner", lo=4, hi=6),
            unit("other_file", path="B.java", lo=1, hi=4),
        ]
        issues = [
            issue("I1", line=5),  # inside inner
            issue("I1", line=5),  # duplicate label, same method
            issue("S1", line=2),  # outer only
            issue("S2", line=99),  # outside everything
            issue("I1", path="B.java", line=3),
        ]
        result = map_issues_to_methods(units, issues)
        by_id = {s.method_id: s for s in result.samples}
        assert by_id["inner"].labels == frozenset({"I1"})
        assert by_id["outer"].labels == frozenset({"S1"})
        assert by_id["other_file"].labels == frozenset({"I1"})
        assert result.unmatched_issues == 1

    def test_unlabeled_units_are_negative_pool(self):
        units = [unit("a"), unit("b", path="B.java")]
        result = map_issues_to_methods(units, [issue("I1", line=3)])
        by_id = {s.method_id: s for s in result.samples}
        assert by_id["a"].has_issue
        assert not by_id["b"].has_issue
        assert len(result.samples) == 2

    def test_wrong_path_never_matches(self):
        units = [unit("a", path="A.java")]
        result = map_issues_to_methods(units, [issue("I1", path="Z.java", line=5)])
        assert result.unmatched_issues == 1
        assert not result.samples[0].has_issue

    def test_in_csn_flag_copied_from_project(self):
        units = [unit("a", project="p1"), unit("b", path="B.java", project="p2")]
        result = map_issues_to_methods(units, [], in_csn={"p1": True})
        by_id = {s.method_id: s for s in result.samples}
        assert by_id["a"].in_csn and not by_id["b"].in_csn

    def test_resolve_sample_labels(self):
        vocab = tiny_vocab()
        resolved = resolve_sample_labels(
            [sample("a", {"I1", "S2"}), sample("b")], vocab
        )
        assert resolved[0].labels == frozenset({"E1", "S2"})
        assert resolved[1].labels == frozenset()


class TestThresholdConfig:
    def test_parse(self):
        cov = ThresholdConfig.parse("coverage:0.75")
        assert (cov.mode, cov.value) == ("coverage_fraction", 0.75)
        mc = ThresholdConfig.parse("mincount:15")
        assert (mc.mode, mc.value) == ("min_count", 15.0)

    @pytest.mark.parametrize("bad", ["cover:0.5", "15", "", "coverage:-"])
    def test_parse_rejects(self, bad):
        with pytest.raises(ValueError):
            ThresholdConfig.parse(bad)

    def test_validation(self):
        with pytest.raises(ValueError):
            ThresholdConfig("bogus", 0.5)
        with pytest.raises(ValueError):
            ThresholdConfig("coverage_fraction", 0.0)
        with pytest.raises(ValueError):
            ThresholdConfig("min_count", -1)
        assert ThresholdConfig("coverage_fraction", 1.0).value == 1.0


class TestKeptLabels:
    def test_coverage_example(self):
        freq = {"X": 60, "Y": 20, "Z": 15, "W": 4, "V": 1}
        keep = kept_labels(freq, ThresholdConfig("coverage_fraction", 0.75))
        assert keep == frozenset({"X", "Y"})

    def test_coverage_tie_at_boundary(self):
        freq = {"X": 50, "Y": 25, "Z": 25}
        keep = kept_labels(freq, ThresholdConfig("coverage_fraction", 0.75))
        assert keep == frozenset({"X", "Y", "Z"})

    def test_min_count(self):
        freq = {"X": 60, "Y": 20, "Z": 15, "W": 4}
        keep = kept_labels(freq, ThresholdConfig("min_count", 15))
        assert keep == frozenset({"X", "Y", "Z"})

    def test_full_coverage_keeps_everything(self):
        freq = {"X": 3, "Y": 2, "Z": 1}
        keep = kept_labels(freq, ThresholdConfig("coverage_fraction", 1.0))
        assert keep == frozenset(freq)

    def test_zero_counts_ignored(self):
        freq = {"X": 5, "Y": 0}
        assert kept_labels(freq, ThresholdConfig("min_count", 0)) == frozenset({"X"})

    def test_empty(self):
        assert kept_labels({}, ThresholdConfig("coverage_fraction", 0.5)) == frozenset()


class TestFrequencyFilter:
    def _population(self):
        # E1 x4, S2 x2, X1 x1 across five positives, plus two negatives
        return [
            sample("a", {"E1"}),
            sample("b", {"E1", "S2"}),
            sample("c", {"E1", "S2"}),
            sample("d", {"X1"}),
            sample("e", {"E1"}),
            sample("neg1"),
            sample("neg2"),
        ]

    def test_filter_drops_rare_labels_and_empty_positives(self):
        result = frequency_filter(
            self._population(), tiny_vocab(), ThresholdConfig("min_count", 2)
        )
        by_id = {s.method_id: s for s in result.samples}
        assert by_id["b"].labels == frozenset({"E1", "S2"})
        assert "d" not in by_id  # only label was removed
        assert by_id["neg1"].labels == frozenset()
        assert result.removed_labels == frozenset({"X1"})
        assert result.emptied_samples == 1
        assert result.vocabulary.effective_ids == frozenset({"E1", "S2"})
        assert result.vocabulary.frequency == {"E1": 4, "S2": 2}

    def test_min_count_filter_is_idempotent(self):
        config = ThresholdConfig("min_count", 2)
        once = frequency_filter(self._population(), tiny_vocab(), config)
        twice = frequency_filter(once.samples, once.vocabulary, config)
        assert [s.to_json() for s in twice.samples] == [
            s.to_json() for s in once.samples
        ]
        assert twice.removed_labels == frozenset()

    def test_label_frequencies(self):
        freq = label_frequencies(self._population())
        assert freq == Counter({"E1": 4, "S2": 2, "X1": 1})


class TestBalance:
    def _pools(self, n_pos=100, n_neg=1000):
        positives = [sample(f"pos{i:04d}", {"E1"}) for i in range(n_pos)]
        negatives = [sample(f"neg{i:04d}") for i in range(n_neg)]
        return positives, negatives

    def test_one_to_one_ratio(self):
        positives, negatives = self._pools()
        balanced = balance_negatives(positives, negatives, seed=7)
        assert len(balanced) == 200
        assert sum(1 for s in balanced if s.has_issue) == 100
        assert sum(1 for s in balanced if not s.has_issue) == 100

    def test_deterministic_in_seed(self):
        positives, negatives = self._pools()
        a = balance_negatives(positives, negatives, seed=7)
        b = balance_negatives(positives, negatives, seed=7)
        assert [s.method_id for s in a] == [s.method_id for s in b]
        c = balance_negatives(positives, negatives, seed=8)
        assert [s.method_id for s in a] != [s.method_id for s in c]

    def test_independent_of_pool_order(self):
        positives, negatives = self._pools()
        shuffled = list(negatives)
        random.Random(99).shuffle(shuffled)
        a = balance_negatives(positives, negatives, seed=7)
        b = balance_negatives(positives, shuffled, seed=7)
        assert {s.method_id for s in a} == {s.method_id for s in b}

    def test_no_replacement(self):
        positives, negatives = self._pools(50, 50)
        balanced = balance_negatives(positives, negatives, seed=1)
        chosen = [s.method_id for s in balanced if not s.has_issue]
        assert len(chosen) == len(set(chosen)) == 50

    def test_pool_too_small(self):
        positives, negatives = self._pools(10, 9)
        with pytest.raises(BalanceError, match="negative pool"):
            balance_negatives(positives, negatives, seed=1)


class TestSplitDefault:
    def _balanced(self, n_per_stratum=100):
        return [
            *(sample(f"pos{i:04d}", {"E1"}) for i in range(n_per_stratum)),
            *(sample(f"neg{i:04d}") for i in range(n_per_stratum)),
        ]

    def test_eighty_ten_ten_per_stratum(self):
        assigned, summary = split_default(self._balanced(), seed=3)
        assert summary.counts == {"train": 160, "val": 20, "test": 20}
        assert summary.positives == {"train": 80, "val": 10, "test": 10}

    def test_floor_arithmetic_on_awkward_sizes(self):
        # 57 positives, 43 negatives: per-stratum floor(10%) to val and test
        samples = [
            *(sample(f"pos{i}", {"E1"}) for i in range(57)),
            *(sample(f"neg{i}") for i in range(43)),
        ]
        _, summary = split_default(samples, seed=3)
        assert summary.positives["val"] == 5 and summary.positives["test"] == 5
        negatives = {
            k: summary.counts[k] - summary.positives[k] for k in summary.counts
        }
        assert negatives == {"train": 35, "val": 4, "test": 4}

    def test_preserves_ids_and_labels(self):
        source = self._balanced(20)
        assigned, _ = split_default(source, seed=3)
        assert {s.method_id for s in assigned} == {s.method_id for s in source}
        labels = {s.method_id: s.labels for s in source}
        assert all(s.labels == labels[s.method_id] for s in assigned)

    def test_same_seed_identical_different_seed_not(self):
        source = self._balanced()
        a, _ = split_default(source, seed=11)
        b, _ = split_default(source, seed=11)
        c, _ = split_default(source, seed=12)
        assert assignment_digest(a) == assignment_digest(b)
        assert assignment_digest(a) != assignment_digest(c)

    def test_input_order_does_not_matter(self):
        source = self._balanced()
        shuffled = list(source)
        random.Random(5).shuffle(shuffled)
        a, _ = split_default(source, seed=11)
        b, _ = split_default(shuffled, seed=11)
        assert assignment_digest(a) == assignment_digest(b)


class TestSplitProjectHeldout:
    def _corpus(self, n_csn=5, n_other=5, per_project=10):
        out = []
        for p in range(n_csn):
            for i in range(per_project):
                out.append(
                    sample(f"c{p}_{i}", {"E1"} if i % 2 else (), f"csn{p}", in_csn=True)
                )
        for p in range(n_other):
            for i in range(per_project):
                out.append(sample(f"o{p}_{i}", {"E1"} if i % 2 else (), f"api{p}"))
        return out

    def test_first_crossing_draw_is_kept(self):
        corpus = self._corpus()
        assigned, summary = split_project_heldout(corpus, seed=2)
        # 100 samples, 10% target: the very first curated-list draw covers it
        assert len(summary.heldout_projects) == 1
        assert summary.heldout_projects[0].startswith("csn")
        assert summary.counts["heldout"] == 10
        heldout = [s for s in assigned if s.split is Split.HELDOUT]
        assert {s.project for s in heldout} == set(summary.heldout_projects)

    def test_alternation_between_pools(self):
        corpus = self._corpus()
        _, summary = split_project_heldout(corpus, seed=2, target_fraction=0.30)
        kinds = sorted(p[:3] for p in summary.heldout_projects)
        assert kinds == ["api", "csn", "csn"]  # csn, api, csn draw order
        assert summary.counts["heldout"] == 30

    def test_remainder_gets_default_treatment(self):
        corpus = self._corpus()
        assigned, summary = split_project_heldout(corpus, seed=2)
        rest = [s for s in assigned if s.split is not Split.HELDOUT]
        assert len(rest) == 90  # 45 positives + 45 negatives
        assert summary.counts["val"] == 8  # floor(4.5) per stratum, twice
        assert summary.counts["test"] == 8
        assert summary.counts["train"] == 74

    def test_deterministic(self):
        corpus = self._corpus()
        a, sa = split_project_heldout(corpus, seed=4)
        b, sb = split_project_heldout(corpus, seed=4)
        assert assignment_digest(a) == assignment_digest(b)
        assert sa.heldout_projects == sb.heldout_projects

    def test_exhausted_pool_is_an_error(self):
        corpus = [
            sample("c0_0", {"E1"}, "csn0", in_csn=True),
            *(sample(f"o{p}_0", (), f"api{p}") for p in range(9)),
        ]
        with pytest.raises(SplitError, match="curated-list"):
            split_project_heldout(corpus, seed=1, target_fraction=0.5)

    def test_error_reports_achieved_fraction(self):
        corpus = [
            sample("c0_0", {"E1"}, "csn0", in_csn=True),
            *(sample(f"o{p}_0", (), f"api{p}") for p in range(9)),
        ]
        with pytest.raises(SplitError, match="2/10"):
            split_project_heldout(corpus, seed=1, target_fraction=0.5)


class TestBuildDataset:
    def _inputs(self):
        # 30 projects x 4 methods; every project's first method gets a finding.
        # Paths are project-qualified so findings cannot cross projects.
        units = []
        issues = []
        for p in range(30):
            project = f"proj{p:02d}"
            for m in range(4):
                units.append(
                    unit(
                        f"{project}_m{m}",
                        path=f"{project}/M{m}.java",
                        lo=1,
                        hi=10,
                        project=project,
                    )
                )
            issues.append(
                issue("I1" if p % 2 else "S8", path=f"{project}/M0.java", line=5)
            )
        return units, issues

    def test_end_to_end_manifest(self):
        units = []
        issues = []
        for p in range(10):
            project = f"proj{p:02d}"
            for m in range(4):
                units.append(
                    unit(
                        f"{project}_m{m}",
                        path=f"{project}/M{m}.java",
                        lo=1,
                        hi=10,
                        project=project,
                    )
                )
            issues.append(
                issue(
                    "I1" if p % 2 else "S8", path=f"{project}/M0.java", line=5
                )
            )
        assigned, manifest = build_dataset(
            units,
            issues,
            threshold=ThresholdConfig("min_count", 1),
            balance_seed=1,
            split_seed=2,
        )
        assert len(assigned) == 20  # 10 positives + 10 sampled negatives
        positives = [s for s in assigned if s.has_issue]
        assert len(positives) == 10
        assert {s.labels for s in positives} == {
            frozenset({"E1"}),
            frozenset({"S8"}),
        }
        assert manifest.summary.counts == {"train": 16, "val": 2, "test": 2}
        assert manifest.assignment_digest == assignment_digest(assigned)
        assert manifest.split_kind == "default"
        assert "unmatched_issues=0" in manifest.notes

    def test_rebuild_reproduces_digest(self):
        units, issues = self._inputs()
        kwargs = dict(
            threshold=ThresholdConfig("min_count", 1),
            balance_seed=5,
            split_seed=6,
        )
        a_assigned, a_manifest = build_dataset(units, issues, **kwargs)
        b_assigned, b_manifest = build_dataset(units, issues, **kwargs)
        assert a_manifest.assignment_digest == b_manifest.assignment_digest
        assert a_manifest.digest() == b_manifest.digest()
        assert [s.to_json() for s in a_assigned] == [s.to_json() for s in b_assigned]

    def test_unknown_split_kind(self):
        units, issues = self._inputs()
        with pytest.raises(ValueError, match="split kind"):
            build_dataset(
                units,
                issues,
                threshold=ThresholdConfig("min_count", 1),
                balance_seed=1,
                split_seed=2,
                split_kind="sideways",
            )

    def test_manifest_json_shape(self):
        units, issues = self._inputs()
        _, manifest = build_dataset(
            units,
            issues,
            threshold=ThresholdConfig("coverage_fraction", 0.9),
            balance_seed=1,
            split_seed=2,
        )
        rec = manifest.to_json()
        assert rec["threshold"] == {"mode": "coverage_fraction", "value": 0.9}
        assert rec["seeds"] == {"balance": 1, "split": 2}
        assert set(rec) == {
            "vocabulary",
            "threshold",
            "seeds",
            "split_kind",
            "summary",
            "assignment_digest",
            "notes",
        }


class TestSampleSerialization:
    def test_round_trip(self):
        s = sample("m1", {"E1", "S8"}, "proj", in_csn=True, split=Split.VAL)
        back = LabeledSample.from_json(s.to_json())
        assert back == s

    def test_labels_sorted_numerically(self):
        s = sample("m1", {"S10", "S2", "E1"})
        assert s.to_json()["labels"] == ["E1", "S2", "S10"]
