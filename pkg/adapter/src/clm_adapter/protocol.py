"""Batch-file exchange protocol shared with the host pipeline.

A request file is one JSON header line ({"task", "label_ids", "format"})
followed by one sample object per line ({"id", "text"}, plus "labels" on
training requests).  A response file is JSONL: {"id", "scores"} with a
score for every label id named in the request header.  Files are UTF-8;
blank lines are ignored.

This module is the only coupling point to the host: everything else in
the package works on the parsed dataclasses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

# Pseudo-label the host's multi-label runs use for "no finding".  Samples
# arriving with an empty label set mean the same thing.
NO_ISSUE_ID = "NOISSUE"


class Task(Enum):
    BINARY = "binary"
    MULTI_LABEL = "multi_label"


class ProtocolError(ValueError):
    """A request or response file violates the exchange contract."""


@dataclass(frozen=True)
class RequestHeader:
    task: Task
    label_ids: tuple[str, ...]
    format_code: str = ""


@dataclass(frozen=True)
class Sample:
    sample_id: str
    text: str
    labels: frozenset[str] = frozenset()


def read_request(path: str | Path) -> tuple[RequestHeader, list[Sample]]:
    """Parse a request file; malformed lines raise with their line number."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ProtocolError(f"{path}: empty request file")
        try:
            raw = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"{path}:1: header is not valid JSON: {exc}") from exc
        try:
            task = Task(raw["task"])
            label_ids = tuple(raw["label_ids"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"{path}:1: bad header: {exc!r}") from exc
        if not label_ids:
            raise ProtocolError(f"{path}:1: header has no label ids")
        if len(set(label_ids)) != len(label_ids):
            raise ProtocolError(f"{path}:1: duplicate label ids in header")
        header = RequestHeader(
            task=task, label_ids=label_ids, format_code=raw.get("format", "")
        )
        samples = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
                raise ProtocolError(f"{path}:{lineno}: sample line needs id and text")
            samples.append(
                Sample(
                    sample_id=rec["id"],
                    text=rec["text"],
                    labels=frozenset(rec.get("labels", [])),
                )
            )
    return header, samples


def write_response(
    path: str | Path, rows: Iterable[tuple[str, Mapping[str, float]]]
) -> None:
    """One {"id", "scores"} object per line, in the order given."""
    path = Path(path)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, scores in rows:
            rec = {
                "id": sample_id,
                "scores": {label: float(v) for label, v in scores.items()},
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
