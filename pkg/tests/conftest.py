"""Shared fixtures: synthetic fault scenarios generated once per session."""

from __future__ import annotations

import numpy as np
import pytest

from convsurgeon.fixtures import gen_fixture


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    return tmp_path_factory.mktemp("fx")


def _gen(root, kind, seed, **kwargs):
    out = root / f"{kind}-{seed}"
    truth = gen_fixture(kind, seed, out, **kwargs)
    return out, truth


@pytest.fixture(scope="session")
def param_fault_fx(fixture_root):
    return _gen(fixture_root, "chain-param-fault", 7, site="conv2")


@pytest.fixture(scope="session")
def hyper_fault_fx(fixture_root):
    return _gen(fixture_root, "chain-hyper-fault", 11)


@pytest.fixture(scope="session")
def substitution_fx(fixture_root):
    return _gen(fixture_root, "chain-substitution", 13)


@pytest.fixture(scope="session")
def extranode_fx(fixture_root):
    return _gen(fixture_root, "chain-extranode", 17)


@pytest.fixture(scope="session")
def clean_chain_fx(fixture_root):
    return _gen(fixture_root, "clean-chain", 19)


@pytest.fixture(scope="session")
def smallcnn_fx(fixture_root):
    return _gen(fixture_root, "smallcnn", 23)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
