"""Classifiers over formatted method text, plus the batch exchange protocol.

Two tasks share one prediction record shape:

* BINARY: does the method contain any issue (labels "has-issue"/"no-issue")
* MULTI_LABEL: which issue types apply; the label set always includes the
  reserved NOISSUE id exactly once

The built-in baseline hashes lexer tokens into a fixed-width count vector
and fits one independent logistic scorer per label by full-batch gradient
descent with a backtracking step, which makes the training loss provably
non-increasing.  Heavier models plug in as subprocess backends speaking the
batch-file protocol documented next to ExternalBackend; the two-stage
``run_pipeline`` only ever talks to the Predictor interface, so baseline and
backend models are interchangeable everywhere.
"""

from __future__ import annotations

import hashlib
import json
import logging
import subprocess
import zlib
from dataclasses import dataclass, field
from enum import Enum, unique
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np
from scipy import sparse

from .extract import MethodUnit
from .jsonl import dump_json, load_json, read_jsonl, write_jsonl
from .lexer import TokenKind
from .transform import (
    DEFAULT_MAX_TOKENS,
    FormattedSample,
    InputFormat,
    _lex_lenient,
    format_all,
)

log = logging.getLogger(__name__)

NO_ISSUE_LABEL = "NOISSUE"
BINARY_POSITIVE = "has-issue"
BINARY_NEGATIVE = "no-issue"
DECISION_THRESHOLD = 0.5
DEFAULT_HASH_DIM = 2**18


@unique
class Task(Enum):
    BINARY = "binary"
    MULTI_LABEL = "multi_label"


@dataclass(frozen=True)
class ClassifierSpec:
    """Task plus ordered label ids; validated on construction."""

    task: Task
    label_ids: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.label_ids)) != len(self.label_ids):
            raise ValueError("duplicate label ids in classifier spec")
        if self.task is Task.BINARY:
            if set(self.label_ids) != {BINARY_POSITIVE, BINARY_NEGATIVE}:
                raise ValueError(
                    f"binary spec needs exactly {{{BINARY_POSITIVE!r}, {BINARY_NEGATIVE!r}}}"
                )
        else:
            if self.label_ids.count(NO_ISSUE_LABEL) != 1:
                raise ValueError(
                    f"multi-label spec must include {NO_ISSUE_LABEL!r} exactly once"
                )
            if len(self.label_ids) < 2:
                raise ValueError("multi-label spec needs at least one issue label")

    @classmethod
    def binary(cls) -> "ClassifierSpec":
        return cls(task=Task.BINARY, label_ids=(BINARY_POSITIVE, BINARY_NEGATIVE))

    @classmethod
    def multi_label(cls, issue_ids: Sequence[str]) -> "ClassifierSpec":
        ids = tuple(issue_ids)
        if NO_ISSUE_LABEL not in ids:
            ids = ids + (NO_ISSUE_LABEL,)
        return cls(task=Task.MULTI_LABEL, label_ids=ids)

    def to_json(self) -> dict:
        return {"task": self.task.value, "label_ids": list(self.label_ids)}

    @classmethod
    def from_json(cls, rec: dict) -> "ClassifierSpec":
        return cls(task=Task(rec["task"]), label_ids=tuple(rec["label_ids"]))


@dataclass
class PredictionRecord:
    sample_id: str
    scores: dict[str, float]
    decided_labels: frozenset[str]

    def to_json(self) -> dict:
        return {
            "id": self.sample_id,
            "scores": {k: self.scores[k] for k in sorted(self.scores)},
            "decided_labels": sorted(self.decided_labels),
        }


@dataclass
class ModelSample:
    """One classifier input: formatted text plus (for training) truth labels.

    Binary truth uses the has-issue/no-issue ids; multi-label truth uses
    issue ids, with the empty set meaning NOISSUE.
    """

    sample_id: str
    text: str
    labels: frozenset[str] = frozenset()

    def to_json(self) -> dict:
        return {"id": self.sample_id, "text": self.text, "labels": sorted(self.labels)}

    @classmethod
    def from_json(cls, rec: dict) -> "ModelSample":
        return cls(
            sample_id=rec["id"],
            text=rec["text"],
            labels=frozenset(rec.get("labels", [])),
        )


def binary_truth(labels: frozenset[str]) -> bool:
    """Interpret a truth label set for the binary task.

    Accepts either explicit binary outcome ids or an issue label set (where
    empty / NOISSUE-only means clean).
    """
    if BINARY_POSITIVE in labels:
        return True
    if not labels or BINARY_NEGATIVE in labels or labels == {NO_ISSUE_LABEL}:
        return False
    return True


def decide_labels(
    spec: ClassifierSpec,
    scores: dict[str, float],
    threshold: float = DECISION_THRESHOLD,
) -> frozenset[str]:
    """Scores -> decided label set, applying the task's fallback rules.

    Binary picks the higher-scoring outcome (ties go positive at exactly the
    threshold).  Multi-label keeps every label at or above the threshold;
    an empty decision falls back to {NOISSUE}, and NOISSUE is dropped
    whenever it co-occurs with concrete issue labels.
    """
    if spec.task is Task.BINARY:
        p = scores[BINARY_POSITIVE]
        return frozenset({BINARY_POSITIVE if p >= threshold else BINARY_NEGATIVE})
    decided = {label for label in spec.label_ids if scores[label] >= threshold}
    if not decided:
        return frozenset({NO_ISSUE_LABEL})
    if NO_ISSUE_LABEL in decided and len(decided) > 1:
        decided.discard(NO_ISSUE_LABEL)
    return frozenset(decided)


class Predictor(Protocol):
    """Anything that can score formatted samples for a fixed spec."""

    spec: ClassifierSpec

    def score_batch(self, texts: Sequence[str]) -> list[dict[str, float]]: ...


def predict(
    model: "Predictor",
    samples: Sequence[ModelSample],
    *,
    threshold: float = DECISION_THRESHOLD,
) -> list[PredictionRecord]:
    """Score samples in order; every record carries a complete score map."""
    score_maps = model.score_batch([s.text for s in samples])
    if len(score_maps) != len(samples):
        raise BackendProtocolError(
            f"scorer returned {len(score_maps)} rows for {len(samples)} samples"
        )
    records = []
    for sample, scores in zip(samples, score_maps):
        missing = [label for label in model.spec.label_ids if label not in scores]
        if missing:
            raise BackendProtocolError(
                f"sample {sample.sample_id!r}: missing scores for {missing}"
            )
        records.append(
            PredictionRecord(
                sample_id=sample.sample_id,
                scores={label: float(scores[label]) for label in model.spec.label_ids},
                decided_labels=decide_labels(model.spec, scores, threshold),
            )
        )
    return records


# --------------------------------------------------------------------------
# hashed-token baseline


def hash_token(token: str, dim: int) -> int:
    # crc32 rather than hash(): stable across processes and Python runs
    return zlib.crc32(token.encode("utf-8")) % dim


def featurize(texts: Sequence[str], dim: int = DEFAULT_HASH_DIM) -> sparse.csr_matrix:
    """Token-count feature matrix with a trailing always-on bias column."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for text in texts:
        counts: dict[int, float] = {}
        for tok in _lex_lenient(text):
            if tok.kind is TokenKind.WHITESPACE:
                continue
            slot = hash_token(tok.text, dim)
            counts[slot] = counts.get(slot, 0.0) + 1.0
        counts[dim] = 1.0  # bias
        for slot in sorted(counts):
            indices.append(slot)
            data.append(counts[slot])
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices), np.asarray(indptr)),
        shape=(len(texts), dim + 1),
    )


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_accuracy: Optional[float] = None


class BaselineModel:
    """Independent per-label logistic scorers over hashed token counts."""

    def __init__(
        self,
        spec: ClassifierSpec,
        weights: np.ndarray,
        *,
        dim: int = DEFAULT_HASH_DIM,
        format_code: str = "",
        seed: int = 0,
        history: Optional[list[EpochStats]] = None,
    ):
        self.spec = spec
        self.weights = weights  # (n_scorers, dim + 1)
        self.dim = dim
        self.format_code = format_code
        self.seed = seed
        self.history = history or []

    @property
    def scorer_labels(self) -> tuple[str, ...]:
        if self.spec.task is Task.BINARY:
            return (BINARY_POSITIVE,)
        return self.spec.label_ids

    def score_batch(self, texts: Sequence[str]) -> list[dict[str, float]]:
        X = featurize(texts, self.dim)
        probs = _sigmoid(X @ self.weights.T)  # (n, n_scorers)
        out = []
        for row in probs:
            scores = dict(zip(self.scorer_labels, (float(p) for p in row)))
            if self.spec.task is Task.BINARY:
                scores[BINARY_NEGATIVE] = 1.0 - scores[BINARY_POSITIVE]
            out.append(scores)
        return out

    def weights_digest(self) -> str:
        return hashlib.sha256(self.weights.tobytes()).hexdigest()

    def save(self, model_dir: str | Path) -> None:
        model_dir = Path(model_dir)
        model_dir.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(model_dir / "weights.npz", weights=self.weights)
        dump_json(
            model_dir / "model.json",
            {
                "kind": "baseline",
                "spec": self.spec.to_json(),
                "dim": self.dim,
                "format": self.format_code,
                "seed": self.seed,
                "weights_digest": self.weights_digest(),
            },
        )

    @classmethod
    def load(cls, model_dir: str | Path) -> "BaselineModel":
        model_dir = Path(model_dir)
        meta = load_json(model_dir / "model.json")
        if meta.get("kind") != "baseline":
            raise ValueError(f"{model_dir} does not hold a baseline model")
        with np.load(model_dir / "weights.npz") as npz:
            weights = npz["weights"]
        return cls(
            spec=ClassifierSpec.from_json(meta["spec"]),
            weights=weights,
            dim=int(meta["dim"]),
            format_code=meta.get("format", ""),
            seed=int(meta.get("seed", 0)),
        )


def _sigmoid(z):
    if sparse.issparse(z):
        z = z.toarray()
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def _logistic_loss(X, y, w, l2):
    z = X @ w
    # log(1 + e^-yz) with the sign trick, stable for large |z|
    margins = np.where(y > 0.5, -z, z)
    loss = np.logaddexp(0.0, margins).mean()
    return loss + 0.5 * l2 * float(w[:-1] @ w[:-1])


def train_baseline(
    spec: ClassifierSpec,
    train_samples: Sequence[ModelSample],
    val_samples: Sequence[ModelSample] = (),
    *,
    seed: int = 0,
    epochs: int = 40,
    learning_rate: float = 0.5,
    l2: float = 1e-6,
    dim: int = DEFAULT_HASH_DIM,
    format_code: str = "",
    threshold: float = DECISION_THRESHOLD,
) -> BaselineModel:
    """Fit the baseline by full-batch gradient descent.

    Each accepted step must not increase the training loss (the step is
    halved until it does not), so the loss curve is non-increasing and two
    runs with the same seed produce bit-identical weights.
    """
    if not train_samples:
        raise ValueError("cannot train on an empty sample list")
    X = featurize([s.text for s in train_samples], dim)
    n = X.shape[0]
    scorer_labels = (
        (BINARY_POSITIVE,) if spec.task is Task.BINARY else spec.label_ids
    )
    Y = np.zeros((n, len(scorer_labels)))
    for i, s in enumerate(train_samples):
        if spec.task is Task.BINARY:
            Y[i, 0] = 1.0 if binary_truth(s.labels) else 0.0
            continue
        truth = s.labels if s.labels else frozenset({NO_ISSUE_LABEL})
        for j, label in enumerate(scorer_labels):
            Y[i, j] = 1.0 if label in truth else 0.0

    weights = np.zeros((len(scorer_labels), dim + 1))
    model = BaselineModel(
        spec, weights, dim=dim, format_code=format_code, seed=seed
    )
    Xt = X.T.tocsr()
    step = np.full(len(scorer_labels), learning_rate)
    losses = np.array(
        [_logistic_loss(X, Y[:, j], weights[j], l2) for j in range(len(scorer_labels))]
    )
    for epoch in range(epochs):
        for j in range(len(scorer_labels)):
            w = weights[j]
            p = _sigmoid(X @ w)
            grad = (Xt @ (p - Y[:, j])) / n
            grad[:-1] += l2 * w[:-1]
            while True:
                cand = w - step[j] * grad
                cand_loss = _logistic_loss(X, Y[:, j], cand, l2)
                if cand_loss <= losses[j] + 1e-15 or step[j] < 1e-12:
                    break
                step[j] *= 0.5
            if cand_loss <= losses[j] + 1e-15:
                weights[j] = cand
                losses[j] = cand_loss
                step[j] *= 1.05
        stats = EpochStats(epoch=epoch, train_loss=float(losses.mean()))
        if val_samples:
            stats.val_accuracy = _quick_accuracy(model, val_samples, threshold)
        model.history.append(stats)
        log.debug(
            "epoch %d: train loss %.6f val acc %s",
            epoch,
            stats.train_loss,
            f"{stats.val_accuracy:.4f}" if stats.val_accuracy is not None else "-",
        )
    return model


def _quick_accuracy(
    model: BaselineModel, samples: Sequence[ModelSample], threshold: float
) -> float:
    records = predict(model, samples, threshold=threshold)
    hits = 0
    for s, r in zip(samples, records):
        if model.spec.task is Task.BINARY:
            truth = frozenset(
                {BINARY_POSITIVE if binary_truth(s.labels) else BINARY_NEGATIVE}
            )
        else:
            truth = s.labels if s.labels else frozenset({NO_ISSUE_LABEL})
        hits += truth == r.decided_labels
    return hits / len(samples) if samples else 0.0


# --------------------------------------------------------------------------
# batch exchange protocol


class BackendProtocolError(RuntimeError):
    """A backend response that violates the exchange contract."""


def write_request(
    path: str | Path,
    spec: ClassifierSpec,
    format_code: str,
    samples: Sequence[ModelSample],
    *,
    include_labels: bool,
) -> None:
    """Request file: one header line, then one sample object per line.

    Header: {"task", "label_ids", "format"}.  Sample lines: {"id", "text"}
    plus "labels" on training requests.
    """
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "task": spec.task.value,
            "label_ids": list(spec.label_ids),
            "format": format_code,
        }
        fh.write(json.dumps(header) + "\n")
        for s in samples:
            rec: dict = {"id": s.sample_id, "text": s.text}
            if include_labels:
                rec["labels"] = sorted(s.labels)
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_request(path: str | Path) -> tuple[ClassifierSpec, str, list[ModelSample]]:
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise BackendProtocolError(f"{path}: empty request file")
        header = json.loads(header_line)
        spec = ClassifierSpec(
            task=Task(header["task"]), label_ids=tuple(header["label_ids"])
        )
        samples = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                samples.append(ModelSample.from_json(rec))
            except KeyError as exc:
                raise BackendProtocolError(
                    f"{path}:{lineno}: sample line missing {exc}"
                ) from exc
    return spec, header.get("format", ""), samples


def write_response(path: str | Path, records: Sequence[PredictionRecord]) -> None:
    write_jsonl(path, (r.to_json() for r in records))


def read_response(
    path: str | Path, spec: ClassifierSpec, expected_ids: Sequence[str]
) -> list[dict[str, float]]:
    """Score maps in request order; validates coverage and completeness."""
    by_id: dict[str, dict[str, float]] = {}
    for rec in read_jsonl(path):
        if "id" not in rec or "scores" not in rec:
            raise BackendProtocolError(f"{path}: response line missing id/scores")
        by_id[rec["id"]] = rec["scores"]
    rows = []
    for sample_id in expected_ids:
        if sample_id not in by_id:
            raise BackendProtocolError(
                f"backend response missing sample {sample_id!r}"
            )
        scores = by_id[sample_id]
        missing = [label for label in spec.label_ids if label not in scores]
        if missing:
            raise BackendProtocolError(
                f"sample {sample_id!r}: response missing scores for {missing}"
            )
        rows.append({label: float(scores[label]) for label in spec.label_ids})
    return rows


class ExternalBackend:
    """Subprocess model speaking the batch-file protocol.

    Training:   <command> --train  <request> --model <dir> [--val <request>]
    Prediction: <command> --predict <request> --model <dir> --out <response>
    """

    def __init__(
        self,
        command: Sequence[str],
        model_dir: str | Path,
        spec: ClassifierSpec,
        *,
        format_code: str = "",
        work_dir: str | Path | None = None,
        timeout: float = 3600.0,
    ):
        self.command = list(command)
        self.model_dir = Path(model_dir)
        self.spec = spec
        self.format_code = format_code
        self.work_dir = Path(work_dir) if work_dir else self.model_dir
        self.timeout = timeout

    def train(
        self,
        train_samples: Sequence[ModelSample],
        val_samples: Sequence[ModelSample] = (),
    ) -> None:
        self.work_dir.mkdir(parents=True, exist_ok=True)
        req = self.work_dir / "train_request.jsonl"
        write_request(req, self.spec, self.format_code, train_samples, include_labels=True)
        cmd = self.command + ["--train", str(req), "--model", str(self.model_dir)]
        if val_samples:
            val_req = self.work_dir / "val_request.jsonl"
            write_request(
                val_req, self.spec, self.format_code, val_samples, include_labels=True
            )
            cmd += ["--val", str(val_req)]
        self._run(cmd)

    def score_batch(self, texts: Sequence[str]) -> list[dict[str, float]]:
        self.work_dir.mkdir(parents=True, exist_ok=True)
        ids = [f"q{i}" for i in range(len(texts))]
        samples = [ModelSample(i, t) for i, t in zip(ids, texts)]
        req = self.work_dir / "predict_request.jsonl"
        resp = self.work_dir / "predict_response.jsonl"
        write_request(req, self.spec, self.format_code, samples, include_labels=False)
        self._run(
            self.command
            + ["--predict", str(req), "--model", str(self.model_dir), "--out", str(resp)]
        )
        return read_response(resp, self.spec, ids)

    def _run(self, cmd: list[str]) -> None:
        result = subprocess.run(
            cmd, capture_output=True, text=True, timeout=self.timeout
        )
        if result.returncode != 0:
            raise BackendProtocolError(
                f"backend command failed ({result.returncode}): "
                f"{' '.join(cmd)}\n{result.stderr.strip()[-2000:]}"
            )


# --------------------------------------------------------------------------
# two-stage pipeline


DEFAULT_BINARY_FORMAT = InputFormat(rj=True)  # RJ
DEFAULT_MULTI_FORMAT = InputFormat(rc=True, rj=True)  # RC+RJ


@dataclass
class PipelineResult:
    binary: list[PredictionRecord]  # one per input unit
    multi: list[PredictionRecord]  # one per positive binary verdict
    positive_ids: list[str]

    @property
    def positive_count(self) -> int:
        return len(self.positive_ids)


def run_pipeline(
    binary_model: Predictor,
    multi_model: Predictor,
    units: Sequence[MethodUnit],
    *,
    binary_format: InputFormat = DEFAULT_BINARY_FORMAT,
    multi_format: InputFormat = DEFAULT_MULTI_FORMAT,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    threshold: float = DECISION_THRESHOLD,
) -> PipelineResult:
    """Screen every method with the binary model; run the multi-label model
    on exactly the methods flagged as having an issue.

    Each stage formats its own input (the models were trained on different
    formats), so a unit is rendered at most twice and the multi-label stage
    sees precisely the flagged subset.
    """
    binary_inputs = [
        ModelSample(fs.method_id, fs.text)
        for fs in format_all(units, binary_format, max_tokens=max_tokens)
    ]
    binary_records = predict(binary_model, binary_inputs, threshold=threshold)
    flagged = [
        unit
        for unit, record in zip(units, binary_records)
        if BINARY_POSITIVE in record.decided_labels
    ]
    multi_inputs = [
        ModelSample(fs.method_id, fs.text)
        for fs in format_all(flagged, multi_format, max_tokens=max_tokens)
    ]
    multi_records = predict(multi_model, multi_inputs, threshold=threshold)
    return PipelineResult(
        binary=binary_records,
        multi=multi_records,
        positive_ids=[u.id for u in flagged],
    )
