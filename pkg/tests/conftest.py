from __future__ import annotations

import socket

import pytest

from mobisense.knowledge_base import default_knowledge_base

ACCEPTANCE_LINES: list[str] = []


def _no_network(*args, **kwargs):
    raise OSError("network access is disabled during tests")


def pytest_configure(config):
    # Everything runs against the mock backend or httpx.MockTransport.
    socket.socket.connect = _no_network
    socket.create_connection = _no_network


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def kb():
    return default_knowledge_base()
