"""The closed loop: forward retrieval+generation, execution, backward
reflection+routing+weight updates, per task and across the task stream.

Per task, the retrieval snapshot is taken once before any sample, so the n
samples stay exchangeable for the unbiased estimators; all memory writes from
those samples are applied afterwards, in sample order. Across the stream,
tasks run strictly in order and the memory state left by task i is the input
state of task i+1. With the scripted backends everything here is bit-for-bit
replayable.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass

from .config import RunConfig
from .errors import BenchmarkFormatError, GatewayError
from .execution import ExecutionFeedback, Outcome, execute_candidate, synthetic_failure
from .gateway import ChatRequest
from .generation import (
    EVOLVING_MODES,
    GUIDELINE_MODES,
    ContextConfig,
    ExtractionError,
    GenerationContext,
    build_context,
    fit_context_to_budget,
    generate_candidate,
    prompt_tokens,
    render_prompt,
)
from .memory import Add, Delete, Discard, MemoryStore, SnippetRecord, TaskMemoryEntry
from .reflector import extract_invoked_apis, reflect_api, reflect_task, route_guideline
from .retrieval import order_candidate_entries, retrieve_docs, retrieve_similar_tasks
from .templates import TemplateSet

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    requirement: str
    tests: tuple[str, ...]
    gold_apis: tuple[str, ...] | None = None
    entry_point: str | None = None

    def __post_init__(self) -> None:
        if not self.task_id:
            raise BenchmarkFormatError("task_id must be non-empty")
        if not self.requirement:
            raise BenchmarkFormatError(f"{self.task_id}: requirement must be non-empty")
        if not self.tests:
            raise BenchmarkFormatError(f"{self.task_id}: tests must be non-empty")

    @classmethod
    def from_dict(cls, raw: dict) -> "TaskRecord":
        gold = raw.get("gold_apis")
        return cls(
            task_id=str(raw.get("task_id", "")),
            requirement=str(raw.get("requirement", "")),
            tests=tuple(raw.get("tests", ())),
            gold_apis=tuple(gold) if gold is not None else None,
            entry_point=raw.get("entry_point"),
        )


def load_benchmark(path: str) -> list[TaskRecord]:
    """Parse a JSON-lines benchmark file; ids must be unique."""
    tasks: list[TaskRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BenchmarkFormatError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            task = TaskRecord.from_dict(raw)
            if task.task_id in seen:
                raise BenchmarkFormatError(f"{path}:{lineno}: duplicate task_id {task.task_id!r}")
            seen.add(task.task_id)
            tasks.append(task)
    if not tasks:
        raise BenchmarkFormatError(f"{path}: benchmark is empty")
    return tasks


@dataclass(frozen=True)
class SampleResult:
    code: str
    feedback: ExecutionFeedback
    prompt_tokens: int
    completion_tokens: int

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "feedback": self.feedback.to_dict(),
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


@dataclass
class MemoryDelta:
    task_entries_added: int = 0
    snippets_added: int = 0
    guidelines_added: int = 0
    guidelines_deleted: int = 0
    discards: int = 0
    weight_updates: int = 0

    def to_dict(self) -> dict:
        return dict(vars(self))


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    n_samples: int
    samples: tuple[SampleResult, ...]
    c_pass: int
    c_exec: int
    used_guideline_ids: tuple[tuple[str, int], ...]
    memory_delta: MemoryDelta

    def __post_init__(self) -> None:
        if not 0 <= self.c_pass <= self.c_exec <= self.n_samples:
            raise ValueError(
                f"{self.task_id}: need 0 <= c_pass <= c_exec <= n_samples, "
                f"got {self.c_pass}, {self.c_exec}, {self.n_samples}"
            )

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "n_samples": self.n_samples,
            "c_pass": self.c_pass,
            "c_exec": self.c_exec,
            "samples": [s.to_dict() for s in self.samples],
            "used_guideline_ids": [list(pair) for pair in self.used_guideline_ids],
            "memory_delta": self.memory_delta.to_dict(),
        }


@dataclass
class Engine:
    """Bundles the collaborating modules for one run."""

    store: MemoryStore
    provider: object
    llm: object
    runner: object
    templates: TemplateSet
    config: RunConfig

    # -- forward ---------------------------------------------------------

    def _build_task_context(self, task: TaskRecord, mode: str) -> GenerationContext:
        cfg = self.config
        if mode == "vanilla":
            return GenerationContext((), (), task.requirement, frozenset())
        if mode == "oracle":
            if not task.gold_apis:
                raise BenchmarkFormatError(
                    f"{task.task_id}: oracle mode needs gold_apis on the task record"
                )
            missing = [a for a in task.gold_apis if a not in self.store.catalog]
            if missing:
                raise BenchmarkFormatError(
                    f"{task.task_id}: gold_apis not in catalog: {', '.join(missing)}"
                )
            entries = [self.store.api_profile(a) for a in task.gold_apis]
            return build_context(task.requirement, [], entries, ContextConfig(0, 0))

        doc_apis = retrieve_docs(self.store.catalog, self.provider, task.requirement, cfg.k_doc)
        retrieved = (
            []
            if mode == "no_task_mem"
            else retrieve_similar_tasks(self.store, self.provider, task.requirement, cfg.k_task)
        )
        entries = order_candidate_entries(self.store, doc_apis, retrieved)
        if mode == "accum":
            context_cfg = ContextConfig(
                guidelines_per_api=cfg.guidelines_per_api,
                snippets_per_block=cfg.accum_snippet_cap,
                successful_snippets_only=False,
            )
        else:
            context_cfg = ContextConfig(
                guidelines_per_api=cfg.guidelines_per_api,
                snippets_per_block=cfg.snippets_per_block,
                successful_snippets_only=True,
            )
        context = build_context(task.requirement, retrieved, entries, context_cfg)
        return fit_context_to_budget(context, self.templates, cfg.token_budget)

    def _generate_samples(
        self, task: TaskRecord, context: GenerationContext, mode: str, n_samples: int
    ) -> list[SampleResult]:
        messages = render_prompt(context, mode, self.templates)
        request = ChatRequest(
            messages=tuple(messages),
            model=self.config.model,
            temperature=self.config.temperature,
            top_p=self.config.top_p,
            max_tokens=self.config.max_tokens,
        )
        in_tokens = prompt_tokens(messages)
        samples: list[SampleResult] = []
        for index in range(n_samples):
            try:
                candidate = generate_candidate(self.llm, request, index)
            except (GatewayError, ExtractionError) as exc:
                samples.append(
                    SampleResult(
                        code="",
                        feedback=synthetic_failure(
                            f"generation failure: {exc}", tests_total=len(task.tests)
                        ),
                        prompt_tokens=in_tokens,
                        completion_tokens=0,
                    )
                )
                continue
            feedback = execute_candidate(
                candidate.code, list(task.tests), self.config.timeout_ms, self.runner
            )
            samples.append(
                SampleResult(
                    code=candidate.code,
                    feedback=feedback,
                    prompt_tokens=candidate.prompt_tokens,
                    completion_tokens=candidate.completion_tokens,
                )
            )
        return samples

    # -- backward --------------------------------------------------------

    def _evolve_sample(
        self,
        task: TaskRecord,
        sample: SampleResult,
        requirement_embedding,
        used: frozenset[tuple[str, int]],
        mode: str,
        seq: int,
        delta: MemoryDelta,
    ) -> None:
        store = self.store
        invoked = extract_invoked_apis(sample.code, store.catalog) if sample.code else set()
        if mode == "accum":
            apis = ", ".join(sorted(invoked)) if invoked else "(none)"
            guideline = f"APIs used: {apis}; outcome: {sample.feedback.status.value}"
        else:
            guideline = reflect_task(
                task.requirement, sample.code, sample.feedback, invoked, self.llm, self.templates
            )
        store.insert_task_entry(
            TaskMemoryEntry(
                entry_id=0,
                requirement=task.requirement,
                requirement_embedding=requirement_embedding,
                code=sample.code,
                feedback=sample.feedback,
                used_apis=frozenset(invoked),
                task_guideline=guideline,
                created_seq=seq,
            )
        )
        delta.task_entries_added += 1

        cap = self.config.accum_snippet_cap if mode == "accum" else self.config.snippet_cap
        error = sample.feedback.traceback
        if sample.feedback.status is Outcome.FAILURE and not error:
            error = (
                f"tests failed ({sample.feedback.tests_passed}/"
                f"{sample.feedback.tests_total} passed)"
            )
        for api in sorted(invoked):
            store.append_snippet(
                api,
                SnippetRecord(
                    code=sample.code,
                    outcome=sample.feedback.status,
                    error_message=error if sample.feedback.status is Outcome.FAILURE else None,
                    source_seq=seq,
                ),
                cap,
            )
            delta.snippets_added += 1

        if mode != "accum":
            for api in sorted(invoked):
                doc = store.catalog.apis[api]
                candidate = reflect_api(
                    api, doc, sample.code, sample.feedback, self.llm, self.templates
                )
                if candidate is None:
                    continue
                existing = list(store.api_profile(api).guidelines)
                action = route_guideline(candidate, doc, existing, self.llm, self.templates)
                store.apply_routing_action(api, action)
                if isinstance(action, Add):
                    delta.guidelines_added += 1
                elif isinstance(action, Delete):
                    delta.guidelines_deleted += 1
                    delta.guidelines_added += 1
                elif isinstance(action, Discard):
                    delta.discards += 1

        if mode in GUIDELINE_MODES and used:
            # A routing Delete earlier in this task may have removed an
            # injected guideline; its credit goes with it.
            alive = {
                (api, g.guideline_id)
                for api, entry in store.api_entries.items()
                for g in entry.guidelines
            }
            survivors = used & alive
            if survivors:
                store.update_guideline_weights(survivors, sample.feedback.status)
                delta.weight_updates += len(survivors)

    # -- public ops ------------------------------------------------------

    def run_task(
        self, task: TaskRecord, n_samples: int | None = None, mode: str | None = None
    ) -> TaskResult:
        """One closed-loop pass over a task: generate n samples, execute them,
        then evolve memory from each sample in order."""
        n = n_samples if n_samples is not None else self.config.n_samples
        mode = mode or self.config.mode
        context = self._build_task_context(task, mode)
        samples = self._generate_samples(task, context, mode, n)

        delta = MemoryDelta()
        if mode in EVOLVING_MODES:
            seq = self.store.begin_task()
            requirement_embedding = self.provider.embed(task.requirement)
            for sample in samples:
                self._evolve_sample(
                    task,
                    sample,
                    requirement_embedding,
                    context.used_guideline_ids,
                    mode,
                    seq,
                    delta,
                )
        return TaskResult(
            task_id=task.task_id,
            n_samples=n,
            samples=tuple(samples),
            c_pass=sum(1 for s in samples if s.feedback.status is Outcome.SUCCESS),
            c_exec=sum(1 for s in samples if s.feedback.executed),
            used_guideline_ids=tuple(sorted(context.used_guideline_ids)),
            memory_delta=delta,
        )

    def run_stream(
        self, tasks: list[TaskRecord], snapshot_out: str | None = None
    ) -> list[TaskResult]:
        """Process tasks strictly in order, persisting the snapshot as it evolves."""
        ordered = list(tasks)
        if self.config.shuffle:
            random.Random(self.config.seed).shuffle(ordered)
        results: list[TaskResult] = []
        last_durable: str | None = None
        for task in ordered:
            results.append(self.run_task(task))
            if snapshot_out is not None:
                try:
                    self.store.save_snapshot(snapshot_out)
                    last_durable = snapshot_out
                except OSError as exc:
                    raise OSError(
                        f"snapshot write failed after {task.task_id} "
                        f"(last durable snapshot: {last_durable or 'none'}): {exc}"
                    ) from exc
        return results


# -- result and manifest files ----------------------------------------------


def write_results(results: list[TaskResult], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_dict(), sort_keys=True, ensure_ascii=True))
            fh.write("\n")


def read_result_counts(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise BenchmarkFormatError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
    return rows


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(
    config: RunConfig,
    template_version: str,
    input_paths: dict[str, str | None],
    output_paths: dict[str, str],
) -> dict:
    return {
        "manifest_version": MANIFEST_VERSION,
        "config": config.to_dict(),
        "template_version": template_version,
        "inputs": {
            name: (file_sha256(path) if path else None) for name, path in input_paths.items()
        },
        "outputs": {name: file_sha256(path) for name, path in output_paths.items()},
    }
