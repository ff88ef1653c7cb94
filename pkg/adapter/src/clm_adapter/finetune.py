"""Fine-tuning and batch scoring on top of a pretrained encoder.

The classifier is the encoder's final hidden states, mean-pooled over the
attention mask, feeding one linear layer with an output per label id.
The binary task trains with a softmax over its two outputs; the
multi-label task trains each output as an independent sigmoid.

Hyperparameter defaults (epochs 8, AdamW at 5e-4, batch 16, length cap
512, seed 0) are this package's own choices; tune per corpus.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import torch
from torch import nn
from torch.nn import functional as F
from transformers import AutoModel, AutoTokenizer
from transformers.utils import logging as hf_logging

from .protocol import (
    NO_ISSUE_ID,
    ProtocolError,
    RequestHeader,
    Sample,
    Task,
    read_request,
    write_response,
)

# Subprocess stderr is reserved for real errors; keep the library quiet.
hf_logging.set_verbosity_error()
hf_logging.disable_progress_bar()

META_FILE = "adapter.json"
HOST_META_FILE = "model.json"  # the host pipeline reads this to rebuild its spec
HEAD_FILE = "head.pt"
METRICS_FILE = "metrics.json"
ENCODER_DIR = "encoder"
TOKENIZER_DIR = "tokenizer"

DEFAULT_MAX_LENGTH = 512
DEFAULT_EPOCHS = 8
DEFAULT_LEARNING_RATE = 5e-4
DEFAULT_BATCH_SIZE = 16


class AdapterError(RuntimeError):
    """Configuration or data problem detected before or during a run."""


@dataclass(frozen=True)
class AdapterConfig:
    """Everything a fine-tuning run depends on, echoed into the checkpoint."""

    pretrained: str
    task: Task
    label_ids: tuple[str, ...]
    max_length: int = DEFAULT_MAX_LENGTH
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0

    def __post_init__(self):
        if self.max_length < 1:
            raise AdapterError("max_length must be positive")
        if self.epochs < 0:
            raise AdapterError("epochs must be >= 0")
        if self.batch_size < 1:
            raise AdapterError("batch_size must be positive")

    @classmethod
    def from_header(cls, pretrained: str, header: RequestHeader, **kwargs) -> "AdapterConfig":
        return cls(
            pretrained=pretrained,
            task=header.task,
            label_ids=header.label_ids,
            **kwargs,
        )


class _Classifier(nn.Module):
    def __init__(self, encoder, n_labels: int):
        super().__init__()
        self.encoder = encoder
        self.head = nn.Linear(encoder.config.hidden_size, n_labels)

    def forward(self, input_ids, attention_mask):
        hidden = self.encoder(
            input_ids=input_ids, attention_mask=attention_mask
        ).last_hidden_state
        mask = attention_mask.unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        return self.head(pooled)


def _encode(tokenizer, texts: Sequence[str], max_length: int):
    enc = tokenizer(
        list(texts),
        padding=True,
        truncation=True,
        max_length=max_length,
        return_tensors="pt",
    )
    if enc["input_ids"].shape[1] == 0:  # every text tokenized to nothing
        enc = tokenizer(
            list(texts),
            padding="max_length",
            truncation=True,
            max_length=1,
            return_tensors="pt",
        )
    return enc


def _binary_targets(samples: Sequence[Sample], label_ids: Sequence[str]) -> torch.Tensor:
    index = {label: i for i, label in enumerate(label_ids)}
    targets = []
    for s in samples:
        present = [label for label in s.labels if label in index]
        if len(present) != 1:
            raise AdapterError(
                f"sample {s.sample_id!r}: binary training needs exactly one of "
                f"{list(label_ids)}, got {sorted(s.labels)}"
            )
        targets.append(index[present[0]])
    return torch.tensor(targets, dtype=torch.long)


def _multi_targets(samples: Sequence[Sample], label_ids: Sequence[str]) -> torch.Tensor:
    index = {label: i for i, label in enumerate(label_ids)}
    rows = torch.zeros(len(samples), len(label_ids))
    for row, s in enumerate(samples):
        labels = s.labels or frozenset({NO_ISSUE_ID})
        unknown = [label for label in labels if label not in index]
        if unknown:
            raise AdapterError(
                f"sample {s.sample_id!r}: labels {unknown} not in the header's ids"
            )
        for label in labels:
            rows[row, index[label]] = 1.0
    return rows


def _scores(logits: torch.Tensor, task: Task) -> torch.Tensor:
    if task is Task.BINARY:
        return torch.softmax(logits, dim=-1)
    return torch.sigmoid(logits)


def _decided(probs: torch.Tensor, task: Task, label_ids: Sequence[str]) -> list[frozenset[str]]:
    out = []
    for row in probs:
        if task is Task.BINARY:
            out.append(frozenset({label_ids[int(row.argmax())]}))
        else:
            chosen = {label_ids[j] for j, p in enumerate(row) if float(p) >= 0.5}
            out.append(frozenset(chosen) if chosen else frozenset({NO_ISSUE_ID}))
    return out


def _truth_sets(samples: Sequence[Sample], task: Task) -> list[frozenset[str]]:
    if task is Task.BINARY:
        return [s.labels for s in samples]
    return [s.labels or frozenset({NO_ISSUE_ID}) for s in samples]


def fine_tune(
    config: AdapterConfig,
    train_request: str | Path,
    model_dir: str | Path,
    *,
    val_request: Optional[str | Path] = None,
) -> Path:
    """Train head + encoder on a request file and write a checkpoint.

    The request header must agree with the config's task and label ids;
    a mismatch aborts before any training.  A zero-epoch run saves the
    untrained classifier (useful for protocol checks).
    """
    header, samples = read_request(train_request)
    if header.task is not config.task:
        raise AdapterError(
            f"request task {header.task.value!r} != configured {config.task.value!r}"
        )
    if header.label_ids != tuple(config.label_ids):
        raise AdapterError(
            f"request label ids {list(header.label_ids)} != configured "
            f"{list(config.label_ids)}"
        )
    if not samples:
        raise AdapterError("training request has no samples")

    val_samples: list[Sample] = []
    if val_request is not None:
        val_header, val_samples = read_request(val_request)
        if val_header.task is not config.task or val_header.label_ids != header.label_ids:
            raise AdapterError("validation request disagrees with the training header")

    tokenizer = AutoTokenizer.from_pretrained(config.pretrained)
    encoder = AutoModel.from_pretrained(config.pretrained)
    capacity = int(encoder.config.max_position_embeddings)
    if config.max_length > capacity:
        raise AdapterError(
            f"max_length {config.max_length} exceeds encoder capacity {capacity}"
        )

    if config.task is Task.BINARY:
        targets = _binary_targets(samples, config.label_ids)
    else:
        targets = _multi_targets(samples, config.label_ids)
    val_targets = None
    if val_samples:
        if config.task is Task.BINARY:
            val_targets = _binary_targets(val_samples, config.label_ids)
        else:
            val_targets = _multi_targets(val_samples, config.label_ids)

    torch.manual_seed(config.seed)
    model = _Classifier(encoder, len(config.label_ids))
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    shuffler = random.Random(config.seed)

    val_enc = None
    if val_samples:
        val_enc = _encode(tokenizer, [s.text for s in val_samples], config.max_length)

    trace: list[dict] = []
    order = list(range(len(samples)))
    for epoch in range(config.epochs):
        model.train()
        shuffler.shuffle(order)
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            enc = _encode(
                tokenizer, [samples[i].text for i in batch], config.max_length
            )
            logits = model(enc["input_ids"], enc["attention_mask"])
            if config.task is Task.BINARY:
                loss = F.cross_entropy(logits, targets[batch])
            else:
                loss = F.binary_cross_entropy_with_logits(logits, targets[batch])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        entry = {"epoch": epoch, "train_loss": sum(losses) / len(losses)}
        if val_enc is not None:
            entry.update(
                _validate(model, val_enc, val_targets, val_samples, config)
            )
        trace.append(entry)

    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    model.encoder.save_pretrained(model_dir / ENCODER_DIR)
    tokenizer.save_pretrained(model_dir / TOKENIZER_DIR)
    torch.save(model.head.state_dict(), model_dir / HEAD_FILE)
    meta = {
        "kind": "clm-adapter",
        "task": config.task.value,
        "label_ids": list(config.label_ids),
        "format": header.format_code,
        "config": {**asdict(config), "task": config.task.value},
        "trained_on": len(samples),
        "validated_on": len(val_samples),
    }
    (model_dir / META_FILE).write_text(json.dumps(meta, indent=2) + "\n")
    host_meta = {
        "kind": "clm-adapter",
        "spec": {"task": config.task.value, "label_ids": list(config.label_ids)},
        "format": header.format_code,
        "trained_on": len(samples),
    }
    (model_dir / HOST_META_FILE).write_text(json.dumps(host_meta, indent=2) + "\n")
    (model_dir / METRICS_FILE).write_text(
        json.dumps({"trace": trace}, indent=2) + "\n"
    )
    return model_dir


def _validate(model, val_enc, val_targets, val_samples, config: AdapterConfig) -> dict:
    model.eval()
    with torch.no_grad():
        logits = model(val_enc["input_ids"], val_enc["attention_mask"])
        if config.task is Task.BINARY:
            loss = F.cross_entropy(logits, val_targets)
        else:
            loss = F.binary_cross_entropy_with_logits(logits, val_targets)
        decided = _decided(_scores(logits, config.task), config.task, config.label_ids)
    truth = _truth_sets(val_samples, config.task)
    hits = sum(1 for d, t in zip(decided, truth) if d == t)
    return {
        "val_loss": float(loss),
        "val_accuracy": hits / len(val_samples),
    }


def load_metadata(model_dir: str | Path) -> dict:
    meta_path = Path(model_dir) / META_FILE
    if not meta_path.exists():
        raise AdapterError(f"{model_dir} holds no adapter checkpoint")
    return json.loads(meta_path.read_text())


def predict_batch(
    model_dir: str | Path,
    request: str | Path,
    response: str | Path,
    *,
    batch_size: int = 64,
) -> Path:
    """Score a request file with a saved checkpoint; write the response.

    Inputs longer than the configured length are truncated by the
    checkpoint's own tokenizer, never rejected.  Scores cover every label
    id, in request order.
    """
    header, samples = read_request(request)
    model_dir = Path(model_dir)
    meta = load_metadata(model_dir)
    if header.task.value != meta["task"] or list(header.label_ids) != meta["label_ids"]:
        raise AdapterError(
            f"checkpoint trained for task {meta['task']!r} labels {meta['label_ids']}, "
            f"request asks {header.task.value!r} {list(header.label_ids)}"
        )

    tokenizer = AutoTokenizer.from_pretrained(model_dir / TOKENIZER_DIR)
    encoder = AutoModel.from_pretrained(model_dir / ENCODER_DIR)
    model = _Classifier(encoder, len(header.label_ids))
    model.head.load_state_dict(torch.load(model_dir / HEAD_FILE, weights_only=True))
    model.eval()
    max_length = int(meta["config"]["max_length"])

    rows: list[tuple[str, dict[str, float]]] = []
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            batch = samples[start : start + batch_size]
            enc = _encode(tokenizer, [s.text for s in batch], max_length)
            probs = _scores(
                model(enc["input_ids"], enc["attention_mask"]), header.task
            )
            for sample, row in zip(batch, probs):
                rows.append(
                    (
                        sample.sample_id,
                        {
                            label: float(row[j])
                            for j, label in enumerate(header.label_ids)
                        },
                    )
                )
    write_response(response, rows)
    return Path(response)
