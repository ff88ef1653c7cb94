"""Pretrained-encoder classification backend for the lintkit pipeline.

Talks to the host exclusively through its batch-file exchange protocol:
JSONL request files (header line, then one sample per line) in, JSONL
score files out.  Nothing here imports the host package.
"""

from .finetune import (
    AdapterConfig,
    AdapterError,
    fine_tune,
    load_metadata,
    predict_batch,
)
from .pretrained import build_tiny_base
from .protocol import (
    NO_ISSUE_ID,
    ProtocolError,
    RequestHeader,
    Sample,
    Task,
    read_request,
    write_response,
)

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "NO_ISSUE_ID",
    "ProtocolError",
    "RequestHeader",
    "Sample",
    "Task",
    "build_tiny_base",
    "fine_tune",
    "load_metadata",
    "predict_batch",
    "read_request",
    "write_response",
]
