"""Shared helpers: tiny hand-built records and a seeded toy corpus."""

from __future__ import annotations

from pathlib import Path

import pytest

from attrseq.data import AttributedSequence
from attrseq.numerics import Rng
from attrseq.synthetic import generate_synthetic

FIXTURES = Path(__file__).parent / "fixtures"


def toy_record(rng: Rng, u: int, r: int, length: int, rid: str = "x", label: str | None = None) -> AttributedSequence:
    attrs = rng.random(u)
    seq = tuple(int(v) for v in rng.integers(0, r, size=length))
    return AttributedSequence(rid, attrs, seq, label)


def jitter_params(params: dict, rng: Rng, scale: float = 0.3) -> dict:
    """Non-zero biases and perturbed weights so every gradient path is exercised."""
    return {k: v + rng.normal(0.0, scale, v.shape) for k, v in params.items()}


@pytest.fixture
def toy_corpus():
    return generate_synthetic(Rng(7), 2, 10, u=4, r=6, len_range=(2, 5), noise=0.1)


@pytest.fixture
def fixture_path() -> Path:
    return FIXTURES / "fixture50.jsonl"


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record a one-line criterion verdict; lines are echoed in the terminal summary."""

    def record(number: int, name: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number} ({name}): {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
