"""Sandboxed executor for untrusted candidate code.

Reads one JSON request from stdin ({"code", "tests": [...], "timeout_ms"}),
runs every test in a fresh child process with the candidate preloaded, and
writes one JSON response to stdout. The exit code is 0 even when the
candidate fails; only a malformed request yields a nonzero exit.

Each child gets its own interpreter so a crashing or state-corrupting test
can never contaminate another test or the runner itself, plus an
address-space cap and a CPU-time cap derived from the wall-clock timeout.
Assertion failures are reported separately from runtime exceptions: a
candidate that runs every test to completion but fails asserts still counts
as executed.
"""

from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import tempfile
import time

ADDRESS_SPACE_LIMIT = 1 << 30  # 1 GiB per child

# Bootstrap executed in each child: preload the candidate, then the test, in
# one shared namespace. AssertionError is a test verdict; any other exception
# means the code did not execute cleanly. A result file that never appears
# means the child died before the finally block (hard crash).
_CHILD_BOOTSTRAP = r"""
import json, sys, traceback

candidate_path, test_path, result_path = sys.argv[1:4]
status, tb = "pass", None
try:
    with open(candidate_path, encoding="utf-8") as fh:
        candidate = fh.read()
    with open(test_path, encoding="utf-8") as fh:
        test = fh.read()
    namespace = {"__name__": "__main__"}
    exec(compile(candidate, "<candidate>", "exec"), namespace)
    exec(compile(test, "<test>", "exec"), namespace)
except AssertionError:
    status, tb = "assert_fail", traceback.format_exc()
except BaseException:
    status, tb = "exception", traceback.format_exc()
finally:
    try:
        with open(result_path, "w", encoding="utf-8") as fh:
            json.dump({"status": status, "traceback": tb}, fh)
    except Exception:
        pass
"""


def _child_limits(timeout_ms: int):
    """Resource caps applied in the child before exec."""

    def apply() -> None:
        os.setsid()  # own process group, so a timeout can kill helpers too
        try:
            import resource

            resource.setrlimit(resource.RLIMIT_AS, (ADDRESS_SPACE_LIMIT, ADDRESS_SPACE_LIMIT))
            cpu_seconds = max(1, timeout_ms // 1000 + 1)
            resource.setrlimit(resource.RLIMIT_CPU, (cpu_seconds, cpu_seconds + 1))
        except (ImportError, ValueError, OSError):
            pass  # limits are best-effort; the wall-clock timeout still holds

    return apply


def _run_one_test(workdir: str, index: int, test_source: str, timeout_ms: int) -> dict:
    """Execute one test in a fresh interpreter; returns {status, traceback}."""
    test_path = os.path.join(workdir, f"test_{index}.py")
    result_path = os.path.join(workdir, f"result_{index}.json")
    with open(test_path, "w", encoding="utf-8") as fh:
        fh.write(test_source)

    proc = subprocess.Popen(
        [
            sys.executable,
            os.path.join(workdir, "bootstrap.py"),
            os.path.join(workdir, "candidate.py"),
            test_path,
            result_path,
        ],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
        preexec_fn=_child_limits(timeout_ms),
        cwd=workdir,
    )
    try:
        proc.wait(timeout=timeout_ms / 1000.0)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()
        proc.wait()
        return {"status": "timeout", "traceback": f"test timed out after {timeout_ms} ms"}

    try:
        with open(result_path, encoding="utf-8") as fh:
            return json.load(fh)
    except (FileNotFoundError, json.JSONDecodeError):
        return {
            "status": "crash",
            "traceback": f"child process died without reporting (exit code {proc.returncode})",
        }


def run_request(request: dict) -> dict:
    code = request["code"]
    tests = request["tests"]
    timeout_ms = int(request["timeout_ms"])
    if timeout_ms <= 0:
        raise ValueError("timeout_ms must be positive")

    started = time.monotonic()
    outcomes = []
    with tempfile.TemporaryDirectory(prefix="memcoder-runner-") as workdir:
        with open(os.path.join(workdir, "candidate.py"), "w", encoding="utf-8") as fh:
            fh.write(code)
        with open(os.path.join(workdir, "bootstrap.py"), "w", encoding="utf-8") as fh:
            fh.write(_CHILD_BOOTSTRAP)
        for index, test_source in enumerate(tests):
            outcomes.append(_run_one_test(workdir, index, test_source, timeout_ms))

    wall_time_ms = int((time.monotonic() - started) * 1000)
    timed_out = any(o["status"] == "timeout" for o in outcomes)
    executed = all(o["status"] in ("pass", "assert_fail") for o in outcomes)
    traceback_text = next(
        (o["traceback"] for o in outcomes if o["status"] != "pass"), None
    )
    return {
        "executed": executed,
        "tests_passed": sum(1 for o in outcomes if o["status"] == "pass"),
        "tests_total": len(tests),
        "traceback": traceback_text,
        "timed_out": timed_out,
        "wall_time_ms": wall_time_ms,
    }


def main() -> int:
    try:
        request = json.load(sys.stdin)
        if not isinstance(request, dict):
            raise ValueError("request must be a JSON object")
        for field in ("code", "tests", "timeout_ms"):
            if field not in request:
                raise ValueError(f"request missing field {field!r}")
        response = run_request(request)
    except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        print(f"malformed runner request: {exc}", file=sys.stderr)
        return 2
    json.dump(response, sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
