"""Command-line front end.

One subcommand per pipeline stage, JSONL artifacts between stages.  Every
run writes a manifest echoing the full effective configuration (flags,
defaults, seeds) next to its primary output, so any artifact can be traced
back to the exact invocation that produced it.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
inconsistent inputs).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

from . import corpus as corpus_mod
from . import dataset as dataset_mod
from . import evaluation as eval_mod
from . import lintrun as lintrun_mod
from . import model as model_mod
from .extract import MethodUnit, extract_tree
from .jsonl import dump_json, load_json, read_jsonl, write_jsonl
from .transform import (
    DEFAULT_MAX_TOKENS,
    InputFormat,
    apply_format,
)

log = logging.getLogger("lintkit")

USAGE_ERROR = 1
DATA_ERROR = 2


class CliDataError(RuntimeError):
    pass


def _format_code(text: str) -> InputFormat:
    try:
        return InputFormat.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _iso_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lintkit",
        description="Corpus-to-linter pipeline: extract methods, format them, "
        "assemble datasets, train and evaluate issue classifiers.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("corpus", help="filter a seed list and/or sweep the project index")
    p.add_argument("--seed-list", help="seed project records (JSONL)")
    p.add_argument(
        "--fixture",
        help="recorded search records for an offline sweep: a JSONL file or a "
        "directory of JSONL files",
    )
    p.add_argument("--start", type=_iso_date, help="sweep start date (newest)")
    p.add_argument("--floor", type=_iso_date, help="sweep floor date (oldest)")
    p.add_argument("--window-days", type=int, default=30)
    p.add_argument("--out", required=True, help="output project records (JSONL)")
    p.set_defaults(fn=cmd_corpus)

    p = sub.add_parser("extract", help="extract method units from Java sources")
    p.add_argument("--src", required=True, help="source tree root")
    p.add_argument("--project", default="", help="project name for unit ids")
    p.add_argument("--out", required=True, help="output method units (JSONL)")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("transform", help="render method units under an input format")
    p.add_argument("--methods", required=True, help="method units (JSONL)")
    p.add_argument("--format", type=_format_code, default=InputFormat(), dest="fmt")
    p.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    p.add_argument("--out", required=True, help="output formatted samples (JSONL)")
    p.set_defaults(fn=cmd_transform)

    p = sub.add_parser("lintrun", help="run a static analyzer over one project")
    p.add_argument("--project", required=True, help="project directory")
    p.add_argument("--tool", required=True, choices=[t.value for t in lintrun_mod.Tool])
    p.add_argument("--timeout", type=float, default=lintrun_mod.DEFAULT_TIMEOUT_SECONDS)
    p.add_argument("--out", required=True, help="output issue records (JSONL)")
    p.add_argument("--run-log", help="run descriptor output (JSON)")
    p.set_defaults(fn=cmd_lintrun)

    p = sub.add_parser("build-dataset", help="assemble labeled samples and a manifest")
    p.add_argument("--methods", required=True, help="method units (JSONL)")
    p.add_argument("--issues", required=True, help="issue records (JSONL)")
    p.add_argument(
        "--threshold",
        default="coverage:0.75",
        help='label frequency threshold: "coverage:0.75" or "mincount:15"',
    )
    p.add_argument("--balance-seed", type=int, default=0)
    p.add_argument("--split", choices=["default", "project-heldout"], default="default")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--csn", help="JSON map of project name to curated-list membership")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_build_dataset)

    p = sub.add_parser("train", help="train a classifier on a dataset split")
    p.add_argument("--task", required=True, choices=[t.value for t in model_mod.Task])
    p.add_argument("--methods", required=True, help="method units (JSONL)")
    p.add_argument("--samples", required=True, help="labeled samples (JSONL)")
    p.add_argument("--format", type=_format_code, default=None, dest="fmt")
    p.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--hash-bits", type=int, default=18)
    p.add_argument("--model-dir", required=True)
    p.add_argument(
        "--backend-cmd",
        help="external backend command; when set, training goes through the "
        "batch-file protocol instead of the built-in baseline",
    )
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="score method units with a trained model")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--methods", required=True, help="method units (JSONL)")
    p.add_argument("--format", type=_format_code, default=None, dest="fmt")
    p.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    p.add_argument("--backend-cmd", help="external backend command")
    p.add_argument("--out", required=True, help="output predictions (JSONL)")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser(
        "pipeline", help="binary screen, then multi-label typing of flagged methods"
    )
    p.add_argument("--binary-model", required=True)
    p.add_argument("--multi-model", required=True)
    p.add_argument("--methods", required=True, help="method units (JSONL)")
    p.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    p.add_argument("--out-binary", required=True)
    p.add_argument("--out-multi", required=True)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("eval", help="score predictions against labeled samples")
    p.add_argument("--task", required=True, choices=[t.value for t in model_mod.Task])
    p.add_argument("--preds", required=True, help="predictions (JSONL)")
    p.add_argument("--truth", required=True, help="labeled samples (JSONL)")
    p.add_argument("--head-tail", action="store_true", help="add a head/tail breakdown")
    p.add_argument("--coverage", type=float, default=0.5, help="head coverage fraction")
    p.add_argument(
        "--forced-head",
        default="S8",
        help="comma-separated labels pinned into the head group",
    )
    p.add_argument("--exclude-no-issue", action="store_true")
    p.add_argument("--out", required=True, help="report output (JSON)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="time pipeline stages per project")
    p.add_argument(
        "--projects-root",
        required=True,
        help="directory holding one source tree per project",
    )
    p.add_argument("--binary-model")
    p.add_argument("--multi-model")
    p.add_argument(
        "--reference",
        help='externally measured per-tool means, e.g. "infer=51.395,spotbugs=27.203"',
    )
    p.add_argument("--out", required=True, help="timing report output (JSON)")
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage problems; 0 must pass through (--help)
        return 0 if exc.code == 0 else USAGE_ERROR
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if ns.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not getattr(ns, "fn", None):
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return ns.fn(ns)
    except (
        CliDataError,
        eval_mod.EvalDataError,
        lintrun_mod.ReportParseError,
        dataset_mod.UnknownLabelError,
        dataset_mod.BalanceError,
        dataset_mod.SplitError,
        model_mod.BackendProtocolError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        log.error("%s", exc)
        return DATA_ERROR


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


def _write_manifest(ns: argparse.Namespace, anchor: str | Path) -> None:
    """Echo the effective configuration next to the anchor output path."""
    payload = {}
    for key, value in sorted(vars(ns).items()):
        if key in ("fn",):
            continue
        if isinstance(value, (str, int, float, bool)) or value is None:
            payload[key] = value
        else:
            payload[key] = str(value)
    anchor = Path(anchor)
    target = anchor / "run.manifest.json" if anchor.is_dir() else Path(f"{anchor}.manifest.json")
    dump_json(target, payload)
    log.info("run manifest: %s", target)


def _load_units(path: str) -> list[MethodUnit]:
    return [MethodUnit.from_json(rec) for rec in read_jsonl(path)]


def cmd_corpus(ns: argparse.Namespace) -> int:
    if not ns.seed_list and not ns.fixture:
        raise CliDataError("corpus needs --seed-list and/or --fixture")
    kept: list[corpus_mod.ProjectRecord] = []
    seed_names: frozenset[str] = frozenset()
    if ns.seed_list:
        seed = [corpus_mod.ProjectRecord.from_json(r) for r in read_jsonl(ns.seed_list)]
        result = corpus_mod.filter_seed_projects(seed)
        log.info(
            "seed list: kept %d, dropped %d private, %d without a root build file,"
            " %d unreachable",
            len(result.kept),
            result.dropped_private,
            result.dropped_no_pom,
            result.skipped_unreachable,
        )
        kept.extend(result.kept)
        seed_names = frozenset(r.full_name for r in result.kept)
    if ns.fixture:
        if not (ns.start and ns.floor):
            raise CliDataError("an offline sweep needs --start and --floor")
        fixture = Path(ns.fixture)
        paths = sorted(fixture.glob("*.jsonl")) if fixture.is_dir() else [fixture]
        records = [
            corpus_mod.ProjectRecord.from_json(r)
            for p in paths
            for r in read_jsonl(p)
        ]
        client = corpus_mod.FixtureSearchClient(records)
        outcome = corpus_mod.sweep_api_search(
            client,
            corpus_mod.SweepConfig(
                start=ns.start, floor=ns.floor, window_days=ns.window_days
            ),
            seed_names=seed_names,
        )
        log.info(
            "sweep: %d projects over %d queries (%d splits, %d duplicates skipped)",
            len(outcome.projects),
            outcome.stats.windows_queried,
            outcome.stats.windows_split,
            outcome.stats.duplicates_skipped,
        )
        kept.extend(outcome.projects)
    write_jsonl(ns.out, (r.to_json() for r in kept))
    _write_manifest(ns, ns.out)
    return 0


def cmd_extract(ns: argparse.Namespace) -> int:
    project = ns.project or Path(ns.src).name
    result = extract_tree(ns.src, project=project)
    write_jsonl(ns.out, (u.to_json() for u in result.units))
    log.info(
        "extracted %d units from %s (%d files skipped)",
        len(result.units),
        ns.src,
        len(result.skipped_files),
    )
    _write_manifest(ns, ns.out)
    return 0


def cmd_transform(ns: argparse.Namespace) -> int:
    units = _load_units(ns.methods)
    samples = [
        apply_format(u, ns.fmt, max_tokens=ns.max_tokens).to_json() for u in units
    ]
    write_jsonl(ns.out, samples)
    log.info("formatted %d units as %s", len(samples), ns.fmt.code)
    _write_manifest(ns, ns.out)
    return 0


def cmd_lintrun(ns: argparse.Namespace) -> int:
    tool = lintrun_mod.Tool(ns.tool)
    config = lintrun_mod.ToolchainConfig.from_env(tool)
    run, issues = lintrun_mod.run_analysis(
        ns.project, tool, config, timeout_seconds=ns.timeout
    )
    write_jsonl(ns.out, (i.to_json() for i in issues))
    if ns.run_log:
        dump_json(ns.run_log, run.to_json())
    log.info(
        "%s on %s: %s after %d attempt(s), %d issue(s)",
        tool.value,
        run.project,
        run.status.value,
        len(run.attempts),
        len(issues),
    )
    _write_manifest(ns, ns.out)
    return 0 if run.status is lintrun_mod.RunStatus.OK else DATA_ERROR


def cmd_build_dataset(ns: argparse.Namespace) -> int:
    units = _load_units(ns.methods)
    issues = [lintrun_mod.IssueRecord.from_json(r) for r in read_jsonl(ns.issues)]
    threshold = dataset_mod.ThresholdConfig.parse(ns.threshold)
    in_csn = load_json(ns.csn) if ns.csn else None
    samples, manifest = dataset_mod.build_dataset(
        units,
        issues,
        threshold=threshold,
        balance_seed=ns.balance_seed,
        split_seed=ns.split_seed,
        split_kind=ns.split,
        in_csn=in_csn,
    )
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(out_dir / "samples.jsonl", (s.to_json() for s in samples))
    dump_json(out_dir / "manifest.json", manifest.to_json())
    log.info(
        "dataset: %d samples, split counts %s",
        len(samples),
        manifest.summary.counts,
    )
    _write_manifest(ns, out_dir)
    return 0


def _join_model_samples(
    ns: argparse.Namespace,
    task: model_mod.Task,
    fmt: InputFormat,
    wanted_splits: set[dataset_mod.Split],
) -> dict[dataset_mod.Split, list[model_mod.ModelSample]]:
    units = {u.id: u for u in _load_units(ns.methods)}
    out: dict[dataset_mod.Split, list[model_mod.ModelSample]] = {
        s: [] for s in wanted_splits
    }
    missing = 0
    for rec in read_jsonl(ns.samples):
        sample = dataset_mod.LabeledSample.from_json(rec)
        if sample.split not in wanted_splits:
            continue
        unit = units.get(sample.method_id)
        if unit is None:
            missing += 1
            continue
        formatted = apply_format(unit, fmt, max_tokens=ns.max_tokens)
        if task is model_mod.Task.BINARY:
            labels = frozenset(
                {
                    model_mod.BINARY_POSITIVE
                    if sample.has_issue
                    else model_mod.BINARY_NEGATIVE
                }
            )
        else:
            labels = sample.labels
        out[sample.split].append(
            model_mod.ModelSample(sample.method_id, formatted.text, labels)
        )
    if missing:
        log.warning("%d dataset sample(s) had no matching method unit", missing)
    return out


_DEFAULT_TRAIN_FORMATS = {
    model_mod.Task.BINARY: model_mod.DEFAULT_BINARY_FORMAT,
    model_mod.Task.MULTI_LABEL: model_mod.DEFAULT_MULTI_FORMAT,
}


def cmd_train(ns: argparse.Namespace) -> int:
    task = model_mod.Task(ns.task)
    fmt = ns.fmt or _DEFAULT_TRAIN_FORMATS[task]
    splits = _join_model_samples(
        ns, task, fmt, {dataset_mod.Split.TRAIN, dataset_mod.Split.VAL}
    )
    train = splits[dataset_mod.Split.TRAIN]
    val = splits[dataset_mod.Split.VAL]
    if not train:
        raise CliDataError("no training samples after the split/join")
    if task is model_mod.Task.BINARY:
        spec = model_mod.ClassifierSpec.binary()
    else:
        issue_ids = sorted(
            {label for s in train for label in s.labels}, key=dataset_mod._id_sort_key
        )
        if not issue_ids:
            raise CliDataError("no issue labels present in the training split")
        spec = model_mod.ClassifierSpec.multi_label(issue_ids)
    if ns.backend_cmd:
        backend = model_mod.ExternalBackend(
            ns.backend_cmd.split(), ns.model_dir, spec, format_code=fmt.code
        )
        backend.train(train, val)
    else:
        trained = model_mod.train_baseline(
            spec,
            train,
            val,
            seed=ns.seed,
            epochs=ns.epochs,
            dim=2**ns.hash_bits,
            format_code=fmt.code,
        )
        trained.save(ns.model_dir)
        log.info("baseline weights digest: %s", trained.weights_digest())
    _write_manifest(ns, Path(ns.model_dir))
    return 0


def _load_predictor(
    model_dir: str, backend_cmd: Optional[str]
) -> model_mod.Predictor:
    if backend_cmd:
        meta = load_json(Path(model_dir) / "model.json")
        spec = model_mod.ClassifierSpec.from_json(meta["spec"])
        return model_mod.ExternalBackend(
            backend_cmd.split(), model_dir, spec, format_code=meta.get("format", "")
        )
    return model_mod.BaselineModel.load(model_dir)


def _model_format(model_dir: str, override: Optional[InputFormat]) -> InputFormat:
    if override is not None:
        return override
    meta = load_json(Path(model_dir) / "model.json")
    code = meta.get("format") or "Unmodified"
    return InputFormat.parse(code)


def cmd_predict(ns: argparse.Namespace) -> int:
    predictor = _load_predictor(ns.model_dir, ns.backend_cmd)
    fmt = _model_format(ns.model_dir, ns.fmt)
    units = _load_units(ns.methods)
    samples = [
        model_mod.ModelSample(fs.method_id, fs.text)
        for fs in (apply_format(u, fmt, max_tokens=ns.max_tokens) for u in units)
    ]
    records = model_mod.predict(predictor, samples)
    write_jsonl(ns.out, (r.to_json() for r in records))
    log.info("scored %d units with %s", len(records), ns.model_dir)
    _write_manifest(ns, ns.out)
    return 0


def cmd_pipeline(ns: argparse.Namespace) -> int:
    binary = model_mod.BaselineModel.load(ns.binary_model)
    multi = model_mod.BaselineModel.load(ns.multi_model)
    units = _load_units(ns.methods)
    result = model_mod.run_pipeline(
        binary,
        multi,
        units,
        binary_format=_model_format(ns.binary_model, None),
        multi_format=_model_format(ns.multi_model, None),
        max_tokens=ns.max_tokens,
    )
    write_jsonl(ns.out_binary, (r.to_json() for r in result.binary))
    write_jsonl(ns.out_multi, (r.to_json() for r in result.multi))
    log.info(
        "pipeline: %d units screened, %d flagged for typing",
        len(result.binary),
        result.positive_count,
    )
    _write_manifest(ns, ns.out_binary)
    return 0


def _read_predictions(path: str, task: model_mod.Task) -> list[model_mod.PredictionRecord]:
    records = []
    for rec in read_jsonl(path):
        if "id" not in rec or "scores" not in rec:
            raise CliDataError(f"{path}: prediction line needs id and scores")
        scores = {k: float(v) for k, v in rec["scores"].items()}
        if "decided_labels" in rec:
            decided = frozenset(rec["decided_labels"])
        else:
            spec = (
                model_mod.ClassifierSpec.binary()
                if task is model_mod.Task.BINARY
                else model_mod.ClassifierSpec(
                    task=model_mod.Task.MULTI_LABEL, label_ids=tuple(sorted(scores))
                )
            )
            decided = model_mod.decide_labels(spec, scores)
        records.append(
            model_mod.PredictionRecord(
                sample_id=rec["id"], scores=scores, decided_labels=decided
            )
        )
    return records


def cmd_eval(ns: argparse.Namespace) -> int:
    task = model_mod.Task(ns.task)
    preds = _read_predictions(ns.preds, task)
    truth_samples = [
        dataset_mod.LabeledSample.from_json(rec) for rec in read_jsonl(ns.truth)
    ]
    report: dict
    if task is model_mod.Task.BINARY:
        truth = {s.method_id: s.has_issue for s in truth_samples}
        report = eval_mod.binary_metrics(preds, truth).to_json()
    else:
        truth_sets = {s.method_id: s.labels for s in truth_samples}
        multi = eval_mod.multilabel_metrics(
            preds, truth_sets, include_no_issue=not ns.exclude_no_issue
        )
        report = multi.to_json()
        if ns.head_tail:
            freq = {
                t.type_id: t.support for t in multi.per_type if t.support > 0
            }
            forced = frozenset(
                label for label in ns.forced_head.split(",") if label
            )
            partition = eval_mod.head_tail_partition(
                freq,
                eval_mod.HeadTailConfig(
                    coverage_fraction=ns.coverage, forced_head_labels=forced
                ),
            )
            report["head_tail"] = eval_mod.head_tail_metrics(
                preds, truth_sets, partition
            ).to_json()
    dump_json(ns.out, report)
    _write_manifest(ns, ns.out)
    return 0


def cmd_bench(ns: argparse.Namespace) -> int:
    root = Path(ns.projects_root)
    projects = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not projects:
        raise CliDataError(f"no project directories under {root}")
    extracted: dict[str, list[MethodUnit]] = {}

    def stage_extract(project: str) -> None:
        extracted[project] = extract_tree(str(root / project), project=project).units

    stages: dict = {"extraction": stage_extract}
    if ns.binary_model and ns.multi_model:
        binary = model_mod.BaselineModel.load(ns.binary_model)
        multi = model_mod.BaselineModel.load(ns.multi_model)
        bfmt = _model_format(ns.binary_model, None)
        mfmt = _model_format(ns.multi_model, None)
        flagged: dict[str, list[MethodUnit]] = {}

        def stage_binary(project: str) -> None:
            units = extracted[project]
            inputs = [
                model_mod.ModelSample(fs.method_id, fs.text)
                for fs in (apply_format(u, bfmt) for u in units)
            ]
            records = model_mod.predict(binary, inputs)
            flagged[project] = [
                u
                for u, r in zip(units, records)
                if model_mod.BINARY_POSITIVE in r.decided_labels
            ]

        def stage_multi(project: str) -> None:
            inputs = [
                model_mod.ModelSample(fs.method_id, fs.text)
                for fs in (apply_format(u, mfmt) for u in flagged[project])
            ]
            model_mod.predict(multi, inputs)

        stages["binary_screen"] = stage_binary
        stages["multi_label"] = stage_multi

    report = eval_mod.timing_bench(projects, stages)
    if ns.reference:
        reference = {}
        for part in ns.reference.split(","):
            name, _, value = part.partition("=")
            reference[name.strip()] = float(value)
        eval_mod.attach_comparison(report, reference)
    dump_json(ns.out, report.to_json())
    print(eval_mod.render_timing_report(report))
    _write_manifest(ns, ns.out)
    return 0


if __name__ == "__main__":
    entrypoint()
