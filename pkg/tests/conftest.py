"""Shared fixtures.

All tests run fully offline: an autouse fixture blocks socket
connections so an accidental network call fails loudly instead of
hanging in CI.
"""
from __future__ import annotations

import socket
from pathlib import Path

import pytest
from hypothesis import settings

from rxverify import dosage_graph, gateway, monographs, pipeline

settings.register_profile("ci", derandomize=True, max_examples=100)
settings.load_profile("ci")

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "rxverify" / "data"


class _NetworkBlocked(RuntimeError):
    pass


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    def guard(*args, **kwargs):
        raise _NetworkBlocked("network access attempted during tests")

    monkeypatch.setattr(socket.socket, "connect", guard)
    monkeypatch.setattr(socket, "create_connection", guard)
    yield


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def demo_corpus(data_dir):
    return monographs.load_monographs(data_dir / "monographs_demo.json")


@pytest.fixture(scope="session")
def sample_corpus(data_dir):
    return monographs.load_monographs(data_dir / "monographs_sample.json")


@pytest.fixture
def stub_gw():
    return gateway.stub_gateway()


@pytest.fixture(scope="session")
def demo_graph(demo_corpus):
    return dosage_graph.build_graph(demo_corpus, gateway.stub_gateway())


@pytest.fixture
def demo_case(data_dir):
    return pipeline.load_case(data_dir / "case_sample.json")
