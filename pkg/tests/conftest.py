from __future__ import annotations

import itertools

import pytest

from harmonic_memory.provider import ChatProvider, ProviderResponse, TransientProviderError
from harmonic_memory.store import MemoryStore


class FakeClock:
    def __init__(self) -> None:
        self._ticks = itertools.count(1)

    def __call__(self) -> float:
        return float(next(self._ticks))


class ScriptedTransport:
    """Chat transport replying from a list (or a function of the prompt); records requests."""

    def __init__(self, replies=None, fail_first: int = 0) -> None:
        self.replies = replies if replies is not None else []
        self.fail_first = fail_first
        self.requests = []

    def __call__(self, request):
        self.requests.append(request)
        if self.fail_first > 0:
            self.fail_first -= 1
            raise TransientProviderError("simulated outage")
        prompt = request.messages[-1][1]
        if callable(self.replies):
            return ProviderResponse(self.replies(prompt))
        if not self.replies:
            raise AssertionError(f"unexpected provider call: {prompt[:80]!r}")
        return ProviderResponse(self.replies.pop(0))


def make_provider(replies=None, fail_first: int = 0) -> tuple[ChatProvider, ScriptedTransport]:
    transport = ScriptedTransport(replies, fail_first)
    return ChatProvider(transport, sleep=lambda s: None), transport


@pytest.fixture
def store() -> MemoryStore:
    return MemoryStore(clock=FakeClock())


# acceptance results, printed once at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {number}: {detail}")
