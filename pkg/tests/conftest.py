from __future__ import annotations

import pytest

from memcoder.embedding import DeterministicProvider
from memcoder.execution import ExecutionFeedback, Outcome
from memcoder.memory import ApiDoc, LibraryCatalog, MemoryStore, WeightParams
from memcoder.templates import TemplateSet


@pytest.fixture(scope="session")
def templates() -> TemplateSet:
    return TemplateSet.load()


@pytest.fixture()
def provider() -> DeterministicProvider:
    return DeterministicProvider(64)


def make_catalog(names: list[str] | None = None) -> LibraryCatalog:
    names = names or ["lib.alpha", "lib.beta", "lib.gamma"]
    return LibraryCatalog(
        {
            name: ApiDoc(f"{name}(x)", f"Does the {name.split('.')[-1]} thing to x.")
            for name in names
        },
        library="lib",
    )


@pytest.fixture()
def catalog() -> LibraryCatalog:
    return make_catalog()


@pytest.fixture()
def store(catalog) -> MemoryStore:
    return MemoryStore(catalog, WeightParams())


def success_feedback(tests: int = 3) -> ExecutionFeedback:
    return ExecutionFeedback(
        status=Outcome.SUCCESS,
        executed=True,
        tests_passed=tests,
        tests_total=tests,
        traceback=None,
        wall_time_ms=5,
        timed_out=False,
    )


def failure_feedback(tests: int = 3, passed: int = 0, executed: bool = False) -> ExecutionFeedback:
    return ExecutionFeedback(
        status=Outcome.FAILURE,
        executed=executed,
        tests_passed=passed,
        tests_total=tests,
        traceback="Traceback (most recent call last):\n  ...\nValueError: boom\n",
        wall_time_ms=5,
        timed_out=False,
    )
