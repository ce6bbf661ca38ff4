"""Candidate execution against task tests, via an external sandbox runner.

The engine never interprets candidate code itself. It ships one JSON request
over a process boundary (or an in-process stub for offline runs) and
classifies the structured response into the binary feedback signal:
Success means every test passed; "executed" separately tracks whether the
candidate ran all tests to completion without a runtime exception, which is
what the Exec@k metric counts.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import shutil
import subprocess
from dataclasses import dataclass

from .errors import RunnerError

ENV_RUNNER = "MEMCODER_RUNNER"

RESPONSE_FIELDS = {
    "executed": bool,
    "tests_passed": int,
    "tests_total": int,
    "traceback": (str, type(None)),
    "timed_out": bool,
    "wall_time_ms": int,
}


class Outcome(str, enum.Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"


@dataclass(frozen=True)
class ExecutionFeedback:
    """Structured verdict for one candidate run.

    Invariants (checked at construction):
      * status == SUCCESS iff executed and all of a non-empty test set passed;
      * a timeout always means not-executed Failure.
    """

    status: Outcome
    executed: bool
    tests_passed: int
    tests_total: int
    traceback: str | None
    wall_time_ms: int
    timed_out: bool

    def __post_init__(self) -> None:
        if self.tests_passed < 0 or self.tests_total < 0 or self.wall_time_ms < 0:
            raise ValueError("counters must be non-negative")
        if self.tests_passed > self.tests_total:
            raise ValueError("tests_passed cannot exceed tests_total")
        should_succeed = (
            self.executed and self.tests_total > 0 and self.tests_passed == self.tests_total
        )
        if (self.status is Outcome.SUCCESS) != should_succeed:
            raise ValueError(f"status {self.status.value} inconsistent with test counts")
        if self.timed_out and (self.executed or self.status is Outcome.SUCCESS):
            raise ValueError("a timed-out run cannot be executed or successful")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["status"] = self.status.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionFeedback":
        return cls(
            status=Outcome(d["status"]),
            executed=bool(d["executed"]),
            tests_passed=int(d["tests_passed"]),
            tests_total=int(d["tests_total"]),
            traceback=d.get("traceback"),
            wall_time_ms=int(d["wall_time_ms"]),
            timed_out=bool(d["timed_out"]),
        )


def classify(response: dict) -> ExecutionFeedback:
    """Turn a raw runner response dict into validated feedback."""
    executed = bool(response["executed"])
    passed = int(response["tests_passed"])
    total = int(response["tests_total"])
    status = (
        Outcome.SUCCESS if executed and total > 0 and passed == total else Outcome.FAILURE
    )
    return ExecutionFeedback(
        status=status,
        executed=executed,
        tests_passed=passed,
        tests_total=total,
        traceback=response.get("traceback"),
        wall_time_ms=int(response["wall_time_ms"]),
        timed_out=bool(response["timed_out"]),
    )


def synthetic_failure(reason: str, tests_total: int, timed_out: bool = False) -> ExecutionFeedback:
    """Failure feedback fabricated by the engine itself (protocol or generation errors)."""
    return ExecutionFeedback(
        status=Outcome.FAILURE,
        executed=False,
        tests_passed=0,
        tests_total=tests_total,
        traceback=reason,
        wall_time_ms=0,
        timed_out=timed_out,
    )


def _validate_response(response: dict) -> None:
    for field, expected in RESPONSE_FIELDS.items():
        if field not in response:
            raise ValueError(f"runner response missing field {field!r}")
        if not isinstance(response[field], expected):
            raise ValueError(f"runner response field {field!r} has wrong type")


def stub_fixture_key(code: str, tests: list[str]) -> str:
    """Stable lookup key for the stub runner: hash of the candidate + tests."""
    payload = json.dumps({"code": code, "tests": tests}, sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class StubRunner:
    """Fixture-driven runner for offline/replay use.

    Maps stub_fixture_key(code, tests) to a canned response dict. A missing
    fixture is a protocol violation (surfaces as a synthetic Failure), never a
    silent pass.
    """

    def __init__(self, fixtures: dict[str, dict]):
        self.fixtures = fixtures

    @classmethod
    def from_file(cls, path: str) -> "StubRunner":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def run(self, request: dict) -> dict:
        key = stub_fixture_key(request["code"], request["tests"])
        if key not in self.fixtures:
            raise ValueError(f"stub runner has no fixture for key {key[:12]}...")
        return self.fixtures[key]


class SubprocessRunner:
    """Client side of the runner wire protocol.

    Spawns the runner executable once per candidate, writes one JSON request
    to its stdin and reads one JSON response from its stdout.
    """

    def __init__(self, executable: str):
        resolved = shutil.which(executable) or (
            executable if shutil.os.path.exists(executable) else None
        )
        if resolved is None:
            raise RunnerError(f"runner executable not found: {executable!r}")
        self.executable = resolved

    def run(self, request: dict) -> dict:
        # Generous process-level timeout: the runner enforces per-test limits
        # itself; this guards only against a hung runner.
        budget_s = max(30.0, 3.0 * request["timeout_ms"] * len(request["tests"]) / 1000.0)
        try:
            proc = subprocess.run(
                [self.executable],
                input=json.dumps(request).encode("utf-8"),
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                timeout=budget_s,
            )
        except FileNotFoundError as exc:
            raise RunnerError(f"runner executable vanished: {self.executable!r}") from exc
        except subprocess.TimeoutExpired as exc:
            raise ValueError(f"runner process hung beyond {budget_s:.0f}s") from exc
        if proc.returncode != 0:
            stderr = proc.stderr.decode("utf-8", "replace").strip()
            raise ValueError(f"runner exited {proc.returncode}: {stderr[:500]}")
        return json.loads(proc.stdout.decode("utf-8"))


def execute_candidate(code: str, tests: list[str], timeout_ms: int, runner) -> ExecutionFeedback:
    """Run one candidate against the task tests and classify the outcome.

    Runner crashes and protocol violations are themselves Failures with a
    synthetic traceback; only a missing runner binary raises (that is a
    configuration error, not a task verdict).
    """
    if timeout_ms <= 0:
        raise ValueError(f"timeout_ms must be positive, got {timeout_ms}")
    request = {"code": code, "tests": list(tests), "timeout_ms": timeout_ms}
    try:
        response = runner.run(request)
        _validate_response(response)
        return classify(response)
    except RunnerError:
        raise
    except Exception as exc:
        return synthetic_failure(
            f"runner protocol error: {type(exc).__name__}: {exc}", tests_total=len(tests)
        )
