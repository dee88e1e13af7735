"""Shared fixtures and the per-criterion pass/fail report for the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

import pytest

from decoyqkd import ChannelConfig, SourceConfig


@dataclass
class CriterionOutcome:
    number: str
    title: str
    passed: bool
    detail: str


_OUTCOMES: list[CriterionOutcome] = []


class CriterionRecorder:
    """Collects one line per acceptance criterion; assertion happens afterwards."""

    def record(self, number: str, title: str, passed: bool, detail: str) -> bool:
        _OUTCOMES.append(CriterionOutcome(number, title, bool(passed), detail))
        return bool(passed)


@pytest.fixture(scope="session")
def criterion() -> CriterionRecorder:
    return CriterionRecorder()


@pytest.fixture
def source() -> SourceConfig:
    return SourceConfig()


@pytest.fixture
def channel() -> ChannelConfig:
    return ChannelConfig()


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for o in sorted(_OUTCOMES, key=lambda o: o.number):
        status = "PASS" if o.passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {o.number}: {o.title} | {o.detail}")
