"""Command-line entry point speaking the batch-file exchange protocol.

Invocations mirror what the host pipeline issues:

    clm-adapter --train  REQ.jsonl --model DIR [--val REQ.jsonl]
    clm-adapter --predict REQ.jsonl --model DIR --out RESP.jsonl

Exit codes: 0 success, 1 usage, 2 bad data or protocol violation.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

USAGE_ERROR = 1
DATA_ERROR = 2

PRETRAINED_ENV = "CLM_ADAPTER_PRETRAINED"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clm-adapter",
        description="Fine-tune or score with a pretrained encoder over "
        "batch request files.",
    )
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--train", metavar="REQUEST", help="training request file")
    mode.add_argument("--predict", metavar="REQUEST", help="scoring request file")
    parser.add_argument("--model", required=True, help="checkpoint directory")
    parser.add_argument("--val", metavar="REQUEST", help="validation request file")
    parser.add_argument("--out", metavar="RESPONSE", help="response file (predict)")
    parser.add_argument(
        "--pretrained",
        default=os.environ.get(PRETRAINED_ENV),
        help=f"base checkpoint for --train (or ${PRETRAINED_ENV})",
    )
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--max-len", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    return parser


def _train(args) -> int:
    from .finetune import AdapterConfig, fine_tune
    from .protocol import read_request

    if not args.pretrained:
        print(
            f"--train needs --pretrained or ${PRETRAINED_ENV}", file=sys.stderr
        )
        return USAGE_ERROR
    header, _ = read_request(args.train)
    overrides = {
        key: value
        for key, value in (
            ("epochs", args.epochs),
            ("learning_rate", args.lr),
            ("batch_size", args.batch_size),
            ("max_length", args.max_len),
            ("seed", args.seed),
        )
        if value is not None
    }
    config = AdapterConfig.from_header(args.pretrained, header, **overrides)
    fine_tune(config, args.train, args.model, val_request=args.val)
    return 0


def _predict(args) -> int:
    from .finetune import predict_batch

    if not args.out:
        print("--predict needs --out", file=sys.stderr)
        return USAGE_ERROR
    predict_batch(args.model, args.predict, args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else USAGE_ERROR

    from .finetune import AdapterError
    from .protocol import ProtocolError

    try:
        if args.train:
            return _train(args)
        return _predict(args)
    except (AdapterError, ProtocolError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
