"""Self-contained miniature encoder checkpoints for offline runs.

Builds a directory loadable by the transformers auto classes: a
word-level tokenizer trained on supplied texts plus a small randomly
initialized encoder.  Real pretrained checkpoints drop in unchanged (the
fine-tuner only needs a directory the auto classes accept); this builder
exists so tests and demos never download anything.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import torch
from tokenizers import Tokenizer, models, pre_tokenizers, trainers
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"


def build_tiny_base(
    out_dir: str | Path,
    texts: Iterable[str],
    *,
    hidden_size: int = 64,
    layers: int = 2,
    heads: int = 2,
    max_positions: int = 512,
    seed: int = 0,
) -> Path:
    """Write a tokenizer + encoder pair under ``out_dir`` and return it.

    The tokenizer's vocabulary comes from ``texts`` (whitespace and
    punctuation pre-tokenization), so any token the downstream task cares
    about should appear in at least one text; everything else maps to the
    unknown token.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tokenizer = Tokenizer(models.WordLevel(unk_token=UNK_TOKEN))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.WordLevelTrainer(special_tokens=[PAD_TOKEN, UNK_TOKEN])
    tokenizer.train_from_iterator(texts, trainer)
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        unk_token=UNK_TOKEN,
        pad_token=PAD_TOKEN,
        model_max_length=max_positions,
    )

    config = BertConfig(
        vocab_size=fast.vocab_size,
        hidden_size=hidden_size,
        num_hidden_layers=layers,
        num_attention_heads=heads,
        intermediate_size=4 * hidden_size,
        max_position_embeddings=max_positions,
    )
    torch.manual_seed(seed)
    encoder = BertModel(config)

    encoder.save_pretrained(out_dir)
    fast.save_pretrained(out_dir)
    return out_dir
