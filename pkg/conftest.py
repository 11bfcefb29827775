"""
Shared pytest fixtures for PrefixForge.

Tests marked ``slow`` run only when PREFIXFORGE_SLOW_TESTS=1.
"""

import os
import shlex
import sys
import textwrap

import pytest
import torch

from models.config import ModelConfig
from models.policy import PolicyModel
from utils.prefix_graph import CoordinateSequence

SIX_BIT_EXAMPLE = [
    (0, 0),
    (1, 1), (1, 0),
    (2, 2), (2, 0),
    (3, 3), (3, 2), (3, 0),
    (4, 4), (4, 2), (4, 0),
    (5, 5), (5, 4), (5, 0),
]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance check (PREFIXFORGE_SLOW_TESTS=1)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("PREFIXFORGE_SLOW_TESTS") == "1":
        return
    skip = pytest.mark.skip(reason="set PREFIXFORGE_SLOW_TESTS=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def six_bit_sequence() -> CoordinateSequence:
    return CoordinateSequence.of(6, SIX_BIT_EXAMPLE)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        max_width=8, embed_dim=8, shared_layers=1, row_layers=1, col_layers=1, head_count=2
    )


@pytest.fixture
def tiny_model(tiny_config) -> PolicyModel:
    torch.manual_seed(0)
    return PolicyModel(tiny_config)


@pytest.fixture
def stub_hook(tmp_path):
    """Factory: write a Python hook script and return the command that runs it."""

    def make(body: str, name: str = "hook.py") -> str:
        script = tmp_path / name
        script.write_text(textwrap.dedent(body), encoding="utf-8")
        return f"{shlex.quote(sys.executable)} {shlex.quote(str(script))}"

    return make
