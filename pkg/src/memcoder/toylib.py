"""Bundled synthetic mini-library benchmark ("toylib") with frozen fixtures.

Six list-processing APIs, eight tasks in two segments of four. Each segment-1
task trips over a specific API misuse (swapped arguments, reversed bounds,
missing parameter, off-by-one ranks); the scripted reflections distill one
corrective guideline per key API. Each segment-2 task is a near-rephrasing of
its segment-1 partner and its scripted candidate is correct exactly when the
partner's guideline text appears in the prompt. That makes the closed loop
observable at desk scale: with full memory segment 2 flips to Success, while
vanilla and doc-only runs stay flat.

Everything is generated deterministically: the module builds the catalog, the
benchmark, the stub-runner fixtures, and -- by capturing a rule-driven
backend across all run modes -- the scripted LLM fixtures.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass

from .config import RunConfig
from .embedding import DeterministicProvider
from .errors import MemcoderError
from .execution import StubRunner, stub_fixture_key
from .gateway import CaptureBackend, ChatRequest, ScriptedBackend
from .generation import MODES
from .loop import Engine, TaskRecord, TaskResult
from .memory import ApiDoc, LibraryCatalog, MemoryStore
from .templates import TemplateSet

N_SAMPLES = 2
EMBED_DIMENSION = 256
MODEL_NAME = "toy-model"

CATALOG_APIS: dict[str, ApiDoc] = {
    "toylib.scale": ApiDoc(
        "toylib.scale(xs: list[float], factor: float) -> list[float]",
        "Multiply every element of xs by factor and return the new list.",
    ),
    "toylib.shift": ApiDoc(
        "toylib.shift(xs: list[float], offset: float) -> list[float]",
        "Add offset to every element of xs and return the new list.",
    ),
    "toylib.clip": ApiDoc(
        "toylib.clip(xs: list[float], lo: float, hi: float) -> list[float]",
        "Bound every element of xs into the closed interval [lo, hi].",
    ),
    "toylib.mix": ApiDoc(
        "toylib.mix(a: list[float], b: list[float], alpha: float) -> list[float]",
        "Blend two equal-length lists elementwise.",
    ),
    "toylib.rank": ApiDoc(
        "toylib.rank(xs: list[float]) -> list[int]",
        "Dense ranks of the elements, smallest value first.",
    ),
    "toylib.normalize": ApiDoc(
        "toylib.normalize(xs: list[float]) -> list[float]",
        "Scale xs so that its values sum to one.",
    ),
}

# One corrective guideline per misused API; these strings are the sentinels
# the generation rule keys on.
KEY_GUIDELINES = {
    "toylib.scale": (
        "toylib.scale takes the data list first and the factor second; "
        "never swap the argument order."
    ),
    "toylib.clip": (
        "toylib.clip requires lo <= hi: pass the lower bound before the "
        "upper bound or values are bounded into an empty interval."
    ),
    "toylib.mix": (
        "toylib.mix needs the explicit alpha argument; it weights a by alpha "
        "and b by (1 - alpha)."
    ),
    "toylib.rank": (
        "toylib.rank returns zero-based dense ranks; add 1 to each rank "
        "before normalizing to one-based weights."
    ),
}

TASK_GUIDELINE = "Align list lengths first and pass toylib parameters positionally."

PAIRS = ("scale", "clip", "mix", "rank")
KEY_API = {
    "scale": "toylib.scale",
    "clip": "toylib.clip",
    "mix": "toylib.mix",
    "rank": "toylib.rank",
}

GOOD_CODE = {
    "scale": (
        "def solve(xs, factor, offset):\n"
        "    scaled = toylib.scale(xs, factor)\n"
        "    return toylib.shift(scaled, offset)\n"
    ),
    "clip": (
        "def solve(xs, lo, hi):\n"
        "    return toylib.clip(xs, lo, hi)\n"
    ),
    "mix": (
        "def solve(a, b, alpha):\n"
        "    return toylib.mix(a, b, alpha)\n"
    ),
    "rank": (
        "def solve(xs):\n"
        "    ranks = [r + 1 for r in toylib.rank(xs)]\n"
        "    return toylib.normalize(ranks)\n"
    ),
}

# variant -> (code, runner outcome kind); "exception" candidates never run to
# completion, "wrong" candidates execute but fail their assertions.
BAD_CODE = {
    "scale": {
        0: (
            "def solve(xs, factor, offset):\n"
            "    scaled = toylib.scale(factor, xs)\n"
            "    return toylib.shift(scaled, offset)\n",
            "exception",
        ),
    },
    "clip": {
        0: (
            "def solve(xs, lo, hi):\n"
            "    return toylib.clip(xs, hi, lo)\n",
            "wrong",
        ),
        1: (
            "def solve(xs, lo, hi):\n"
            "    return toylib.clip(xs, bounds=(lo, hi))\n",
            "exception",
        ),
    },
    "mix": {
        0: (
            "def solve(a, b, alpha):\n"
            "    return toylib.mix(a, b)\n",
            "exception",
        ),
    },
    "rank": {
        0: (
            "def solve(xs):\n"
            "    return toylib.normalize(toylib.rank(xs))\n",
            "wrong",
        ),
    },
}

_REQUIREMENTS = {
    "scale": (
        "Scale the measurement list by the given factor with toylib.scale and "
        "then shift every value by the given offset using toylib.shift. "
        "Implement solve(xs, factor, offset).",
        "Multiply the sensor readings by a calibration factor via toylib.scale, "
        "then raise them all by a fixed offset with toylib.shift. "
        "Implement solve(xs, factor, offset).",
    ),
    "clip": (
        "Bound the signal values into the interval [lo, hi] using toylib.clip. "
        "Implement solve(xs, lo, hi).",
        "Constrain each temperature sample to stay between lo and hi with "
        "toylib.clip. Implement solve(xs, lo, hi).",
    ),
    "mix": (
        "Blend the two channel lists with toylib.mix using blend weight alpha. "
        "Implement solve(a, b, alpha).",
        "Crossfade two audio envelope lists via toylib.mix with mixing "
        "coefficient alpha. Implement solve(a, b, alpha).",
    ),
    "rank": (
        "Rank the scores with toylib.rank and turn the one-based ranks into "
        "weights that sum to one using toylib.normalize. Implement solve(xs).",
        "Compute dense ranks of the ratings via toylib.rank and normalize the "
        "one-based ranks into a distribution with toylib.normalize. "
        "Implement solve(xs).",
    ),
}

_TESTS = {
    ("scale", 0): (
        "assert solve([1.0, 2.0], 2.0, 1.0) == [3.0, 5.0]",
        "assert solve([0.0], 5.0, -1.0) == [-1.0]",
        "assert solve([], 3.0, 3.0) == []",
    ),
    ("scale", 1): (
        "assert solve([2.0, 4.0], 0.5, 2.0) == [3.0, 4.0]",
        "assert solve([-1.0], 3.0, 0.0) == [-3.0]",
        "assert solve([], 1.0, 0.0) == []",
    ),
    ("clip", 0): (
        "assert solve([1.0, 9.0, 5.0], 2.0, 6.0) == [2.0, 6.0, 5.0]",
        "assert solve([0.0], -1.0, 1.0) == [0.0]",
        "assert solve([7.0], 0.0, 5.0) == [5.0]",
    ),
    ("clip", 1): (
        "assert solve([12.0, -4.0], 0.0, 10.0) == [10.0, 0.0]",
        "assert solve([3.0], 3.0, 3.0) == [3.0]",
        "assert solve([], 0.0, 1.0) == []",
    ),
    ("mix", 0): (
        "assert solve([1.0, 0.0], [0.0, 1.0], 1.0) == [1.0, 0.0]",
        "assert solve([2.0], [4.0], 0.5) == [3.0]",
        "assert solve([], [], 0.3) == []",
    ),
    ("mix", 1): (
        "assert solve([1.0], [3.0], 0.25) == [2.5]",
        "assert solve([0.0, 2.0], [2.0, 0.0], 0.0) == [2.0, 0.0]",
        "assert solve([], [], 0.9) == []",
    ),
    ("rank", 0): (
        "assert solve([10.0, 20.0]) == [1/3, 2/3]",
        "assert solve([5.0]) == [1.0]",
        "assert solve([3.0, 1.0, 2.0]) == [0.5, 1/6, 1/3]",
    ),
    ("rank", 1): (
        "assert solve([2.0, 1.0]) == [2/3, 1/3]",
        "assert solve([7.0]) == [1.0]",
        "assert solve([1.0, 3.0, 2.0]) == [1/6, 0.5, 1/3]",
    ),
}


def make_catalog() -> LibraryCatalog:
    return LibraryCatalog(dict(CATALOG_APIS), library="toylib")


def make_tasks() -> list[TaskRecord]:
    tasks = []
    for segment in (0, 1):
        for pair in PAIRS:
            gold = sorted(
                {KEY_API[pair]}
                | ({"toylib.shift"} if pair == "scale" else set())
                | ({"toylib.normalize"} if pair == "rank" else set())
            )
            tasks.append(
                TaskRecord(
                    task_id=f"toylib/{pair}-{segment + 1}",
                    requirement=_REQUIREMENTS[pair][segment],
                    tests=_TESTS[(pair, segment)],
                    gold_apis=tuple(gold),
                    entry_point="solve",
                )
            )
    # Stream order: the four segment-1 tasks, then the four segment-2 tasks.
    return tasks


def _runner_response(kind: str, tests_total: int, pair: str) -> dict:
    if kind == "pass":
        return {
            "executed": True,
            "tests_passed": tests_total,
            "tests_total": tests_total,
            "traceback": None,
            "timed_out": False,
            "wall_time_ms": 12,
        }
    if kind == "wrong":
        return {
            "executed": True,
            "tests_passed": 1,
            "tests_total": tests_total,
            "traceback": (
                "Traceback (most recent call last):\n"
                '  File "<test>", line 1, in <module>\n'
                "AssertionError: unexpected result from solve()\n"
            ),
            "timed_out": False,
            "wall_time_ms": 14,
        }
    if kind == "exception":
        return {
            "executed": False,
            "tests_passed": 0,
            "tests_total": tests_total,
            "traceback": (
                "Traceback (most recent call last):\n"
                '  File "<test>", line 1, in <module>\n'
                '  File "<candidate>", line 2, in solve\n'
                f"TypeError: {KEY_API[pair]}() received invalid arguments\n"
            ),
            "timed_out": False,
            "wall_time_ms": 9,
        }
    raise ValueError(f"unknown runner outcome kind {kind!r}")


def make_runner_fixtures(tasks: list[TaskRecord]) -> dict[str, dict]:
    """Scripted runner responses for every (candidate, tests) pair a run can see."""
    fixtures: dict[str, dict] = {}
    by_pair: dict[str, list[TaskRecord]] = {pair: [] for pair in PAIRS}
    for task in tasks:
        pair = task.task_id.split("/")[1].rsplit("-", 1)[0]
        by_pair[pair].append(task)
    for pair, pair_tasks in by_pair.items():
        for task in pair_tasks:
            tests = list(task.tests)
            total = len(tests)
            # Keys use the code as code extraction will deliver it (the final
            # fence strips the trailing newline).
            fixtures[stub_fixture_key(GOOD_CODE[pair].rstrip("\n"), tests)] = _runner_response(
                "pass", total, pair
            )
            for code, kind in BAD_CODE[pair].values():
                fixtures[stub_fixture_key(code.rstrip("\n"), tests)] = _runner_response(
                    kind, total, pair
                )
    return fixtures


class ToylibRuleBackend:
    """Prompt-driven oracle used only to capture fixtures.

    Generation prompts yield the pair's good candidate exactly when the key
    API's guideline sentinel is present; reflection prompts return the
    scripted guidelines; routing answers ADD for novel text and DISCARD for
    text already listed.
    """

    def __init__(self, tasks: list[TaskRecord]):
        self._by_requirement = {task.requirement: task for task in tasks}

    def complete(self, request: ChatRequest, sample_index: int) -> str:
        prompt = request.messages[-1]["content"]
        if "Distill one concise task-level usage guideline" in prompt:
            return TASK_GUIDELINE
        if "Write one concise usage guideline for" in prompt:
            match = re.match(r"API: (\S+)", prompt)
            api = match.group(1) if match else ""
            return KEY_GUIDELINES.get(api, "")
        if "Answer with a single line: DISCARD or ADD or DELETE" in prompt:
            listing = prompt.split("Existing guidelines (by index):", 1)[1]
            listing = listing.split("Candidate guideline:", 1)[0]
            candidate = prompt.split("Candidate guideline:", 1)[1].split("Rules:", 1)[0]
            return "DISCARD" if candidate.strip() in listing else "ADD"
        return self._generate(prompt, sample_index)

    def _generate(self, prompt: str, sample_index: int) -> str:
        task = next(
            (t for req, t in self._by_requirement.items() if req in prompt), None
        )
        if task is None:
            raise MemcoderError("rule backend saw a prompt for no known task")
        pair = task.task_id.split("/")[1].rsplit("-", 1)[0]
        if KEY_GUIDELINES[KEY_API[pair]] in prompt:
            code = GOOD_CODE[pair]
        else:
            variants = BAD_CODE[pair]
            code, _ = variants[sample_index if sample_index in variants else 0]
        return f"Here is the solution:\n\n```python\n{code}```\n"


def run_config(mode: str = "memcoder") -> RunConfig:
    """The canonical configuration the bundled fixtures were captured under."""
    return RunConfig(
        mode=mode,
        n_samples=N_SAMPLES,
        model=MODEL_NAME,
        embed_dimension=EMBED_DIMENSION,
    )


@dataclass
class ToylibBundle:
    catalog: LibraryCatalog
    tasks: list[TaskRecord]
    runner_fixtures: dict[str, dict]
    llm_fixtures: dict[str, str]


def _capture_mode(
    mode: str,
    catalog: LibraryCatalog,
    tasks: list[TaskRecord],
    runner_fixtures: dict[str, dict],
    templates: TemplateSet,
) -> dict[str, str]:
    provider = DeterministicProvider(EMBED_DIMENSION)
    catalog.build_index(provider)
    config = run_config(mode)
    store = MemoryStore(catalog, config.weight_params())
    backend = CaptureBackend(ToylibRuleBackend(tasks))
    engine = Engine(
        store=store,
        provider=provider,
        llm=backend,
        runner=StubRunner(runner_fixtures),
        templates=templates,
        config=config,
    )
    engine.run_stream(tasks)
    return backend.captured


def build_bundle(modes: tuple[str, ...] = MODES) -> ToylibBundle:
    """Generate the complete offline bundle, capturing fixtures for `modes`."""
    catalog = make_catalog()
    tasks = make_tasks()

    # The segment-2 flip requires doc retrieval to surface each task's key
    # API; verify that before freezing anything.
    provider = DeterministicProvider(EMBED_DIMENSION)
    catalog.build_index(provider)
    from .retrieval import retrieve_docs

    for task in tasks[4:]:
        pair = task.task_id.split("/")[1].rsplit("-", 1)[0]
        docs = retrieve_docs(catalog, provider, task.requirement, 5)
        if KEY_API[pair] not in docs:
            raise MemcoderError(
                f"{task.task_id}: key API {KEY_API[pair]} not doc-retrieved; "
                "requirement wording needs adjustment"
            )

    runner_fixtures = make_runner_fixtures(tasks)
    templates = TemplateSet.load()
    llm_fixtures: dict[str, str] = {}
    for mode in modes:
        llm_fixtures.update(_capture_mode(mode, catalog, tasks, runner_fixtures, templates))
    return ToylibBundle(
        catalog=catalog,
        tasks=tasks,
        runner_fixtures=runner_fixtures,
        llm_fixtures=llm_fixtures,
    )


def scripted_engine(bundle: ToylibBundle, mode: str) -> Engine:
    """A fully offline engine over the bundle: scripted LLM + stub runner."""
    provider = DeterministicProvider(EMBED_DIMENSION)
    bundle.catalog.build_index(provider)
    config = run_config(mode)
    return Engine(
        store=MemoryStore(bundle.catalog, config.weight_params()),
        provider=provider,
        llm=ScriptedBackend(bundle.llm_fixtures),
        runner=StubRunner(bundle.runner_fixtures),
        templates=TemplateSet.load(),
        config=config,
    )


def segment_pass_at_1(results: list[TaskResult]) -> tuple[float, float]:
    """Mean Pass@1 of the first four and last four tasks."""
    from .metrics import estimator

    def mean(chunk: list[TaskResult]) -> float:
        return sum(estimator(r.n_samples, r.c_pass, 1) for r in chunk) / len(chunk)

    return mean(results[:4]), mean(results[4:])


def write_bundle(out_dir: str) -> dict[str, str]:
    """Write catalog, benchmark, and both fixture files; returns the paths."""
    bundle = build_bundle()
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "catalog": os.path.join(out_dir, "catalog.json"),
        "benchmark": os.path.join(out_dir, "benchmark.jsonl"),
        "llm_fixtures": os.path.join(out_dir, "llm_fixtures.json"),
        "runner_fixtures": os.path.join(out_dir, "runner_fixtures.json"),
    }
    catalog_payload = {
        "library": bundle.catalog.library,
        "apis": {
            name: {
                "signature": doc.signature,
                "description": doc.description,
                **({"source": doc.source} if doc.source else {}),
            }
            for name, doc in sorted(bundle.catalog.apis.items())
        },
    }
    with open(paths["catalog"], "w", encoding="utf-8") as fh:
        json.dump(catalog_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["benchmark"], "w", encoding="utf-8") as fh:
        for task in bundle.tasks:
            record = {
                "task_id": task.task_id,
                "requirement": task.requirement,
                "tests": list(task.tests),
                "gold_apis": list(task.gold_apis or ()),
                "entry_point": task.entry_point,
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=True))
            fh.write("\n")
    with open(paths["llm_fixtures"], "w", encoding="utf-8") as fh:
        json.dump(bundle.llm_fixtures, fh, indent=0, sort_keys=True)
        fh.write("\n")
    with open(paths["runner_fixtures"], "w", encoding="utf-8") as fh:
        json.dump(bundle.runner_fixtures, fh, indent=0, sort_keys=True)
        fh.write("\n")
    return paths


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "benchmarks/toylib"
    written = write_bundle(target)
    for name, path in written.items():
        print(f"{name}: {path}")
