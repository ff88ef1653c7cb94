import random

import pytest
from .adapter_fixtures import (
    BINARY_IDS,
    MULTI_IDS,
    binary_rows,
    multi_rows,
    write_request,
)

from clm_adapter import AdapterConfig, Task, build_tiny_base, fine_tune


@pytest.fixture(scope="session")
def train_rows():
    return binary_rows(100, random.Random(11))


@pytest.fixture(scope="session")
def multi_train_rows():
    return multi_rows(100, random.Random(12))


@pytest.fixture(scope="session")
def tiny_base(tmp_path_factory, train_rows, multi_train_rows):
    """Small offline checkpoint whose vocabulary covers the test corpora."""
    texts = [text for _, text, _ in train_rows + multi_train_rows]
    out = tmp_path_factory.mktemp("pretrained") / "tiny"
    return str(build_tiny_base(out, texts))


@pytest.fixture(scope="session")
def binary_request(tmp_path_factory, train_rows):
    path = tmp_path_factory.mktemp("requests") / "train_binary.jsonl"
    return write_request(path, "binary", BINARY_IDS, train_rows)


@pytest.fixture(scope="session")
def multi_request(tmp_path_factory, multi_train_rows):
    path = tmp_path_factory.mktemp("requests") / "train_multi.jsonl"
    return write_request(path, "multi_label", MULTI_IDS, multi_train_rows)


@pytest.fixture(scope="session")
def overfit_model(tmp_path_factory, tiny_base, binary_request):
    """100-sample binary model trained long enough to memorize its inputs."""
    out = tmp_path_factory.mktemp("models") / "binary"
    config = AdapterConfig(
        pretrained=tiny_base, task=Task.BINARY, label_ids=BINARY_IDS, epochs=20
    )
    fine_tune(config, binary_request, out, val_request=binary_request)
    return out
