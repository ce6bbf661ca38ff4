"""Context assembly and prompt rendering for the forward generation pass.

The context concatenates, in order: blocks from retrieved task memories
(code, feedback, orchestration guideline), per-API profile blocks (doc,
snippets, weighted guidelines), and finally the current requirement. Run
modes reshape what the rendered prompt actually contains:

  memcoder     everything
  vanilla      requirement only, no reference material at all
  oracle       gold API docs only (retrieval bypassed by the caller)
  no_task_mem  drops the task blocks
  no_api_mem   keeps docs but strips guidelines and snippets
  accum        raw snippet trajectories without distilled guidelines

Rendering is a pure function of (context, mode, templates), so identical
inputs produce byte-identical prompts.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

from .errors import MemcoderError
from .memory import ApiMemoryEntry, Guideline, SnippetRecord, TaskMemoryEntry
from .execution import ExecutionFeedback, Outcome
from .retrieval import select_guidelines
from .templates import TemplateSet, render

MODES = ("memcoder", "vanilla", "oracle", "no_task_mem", "no_api_mem", "accum")

# Modes whose prompts inject API guidelines; only these incur weight updates.
GUIDELINE_MODES = frozenset({"memcoder"})
# Modes in which the backward evolution phase runs at all.
EVOLVING_MODES = frozenset({"memcoder", "no_task_mem", "no_api_mem", "accum"})

TRACEBACK_TAIL_LINES = 10


class ExtractionError(MemcoderError):
    """No code could be extracted from the model response."""


@dataclass(frozen=True)
class TaskBlock:
    code: str
    feedback_summary: str
    task_guideline: str


@dataclass(frozen=True)
class ApiBlock:
    api_name: str
    doc_text: str
    snippets: tuple[SnippetRecord, ...]
    guidelines: tuple[Guideline, ...]


@dataclass(frozen=True)
class GenerationContext:
    task_blocks: tuple[TaskBlock, ...]
    api_blocks: tuple[ApiBlock, ...]
    requirement: str
    used_guideline_ids: frozenset[tuple[str, int]]


@dataclass(frozen=True)
class CandidateCode:
    code: str
    raw_response: str
    prompt_tokens: int
    completion_tokens: int

    def __post_init__(self) -> None:
        if not self.code:
            raise ValueError("extracted candidate code must be non-empty")
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counters must be non-negative")


@dataclass(frozen=True)
class ContextConfig:
    """Knobs for context assembly (not for rendering)."""

    guidelines_per_api: int = 3
    snippets_per_block: int = 1
    successful_snippets_only: bool = True


def summarize_feedback(feedback: ExecutionFeedback) -> str:
    """Compact feedback line; failed runs keep only the traceback tail."""
    counts = f"{feedback.tests_passed}/{feedback.tests_total} tests passed"
    if feedback.status is Outcome.SUCCESS:
        return f"Success ({counts})"
    summary = f"Failure ({counts})"
    if feedback.timed_out:
        summary += ", timed out"
    if feedback.traceback:
        tail = feedback.traceback.strip().splitlines()[-TRACEBACK_TAIL_LINES:]
        summary += "\n" + "\n".join(tail)
    return summary


def _select_snippets(
    entry: ApiMemoryEntry, count: int, successes_only: bool
) -> tuple[SnippetRecord, ...]:
    pool = entry.snippets
    if successes_only:
        pool = [s for s in pool if s.outcome is Outcome.SUCCESS]
    # Most recent first; entries are stored in stream order.
    return tuple(reversed(pool[-count:])) if count > 0 else ()


def build_context(
    requirement: str,
    retrieved_tasks: list[TaskMemoryEntry],
    candidate_api_entries: list[ApiMemoryEntry],
    config: ContextConfig | None = None,
) -> GenerationContext:
    """Assemble the full context; mode filtering happens at render time.

    candidate_api_entries must already be in context order (doc-rank order,
    then task-derived extras alphabetically -- see
    retrieval.order_candidate_entries).
    """
    cfg = config or ContextConfig()
    names = [e.api_name for e in candidate_api_entries]
    if len(set(names)) != len(names):
        raise ValueError("candidate API entries contain duplicates")

    task_blocks = tuple(
        TaskBlock(
            code=entry.code,
            feedback_summary=summarize_feedback(entry.feedback),
            task_guideline=entry.task_guideline,
        )
        for entry in retrieved_tasks
    )
    api_blocks = []
    used: set[tuple[str, int]] = set()
    for entry in candidate_api_entries:
        selected = select_guidelines(entry, cfg.guidelines_per_api)
        used.update((entry.api_name, g.guideline_id) for g in selected)
        api_blocks.append(
            ApiBlock(
                api_name=entry.api_name,
                doc_text=entry.doc.text(),
                snippets=_select_snippets(
                    entry, cfg.snippets_per_block, cfg.successful_snippets_only
                ),
                guidelines=tuple(selected),
            )
        )
    return GenerationContext(
        task_blocks=task_blocks,
        api_blocks=tuple(api_blocks),
        requirement=requirement,
        used_guideline_ids=frozenset(used),
    )


def _render_task_blocks(blocks: tuple[TaskBlock, ...], with_guidelines: bool) -> str:
    if not blocks:
        return ""
    parts = ["## Similar solved tasks\n"]
    for i, block in enumerate(blocks, start=1):
        parts.append(f"### Prior task {i}")
        if with_guidelines and block.task_guideline:
            parts.append(f"Guideline: {block.task_guideline}")
        parts.append("Code:\n```\n" + block.code + "\n```")
        parts.append("Feedback: " + block.feedback_summary)
        parts.append("")
    return "\n".join(parts) + "\n"


def _render_api_blocks(
    blocks: tuple[ApiBlock, ...], with_guidelines: bool, with_snippets: bool
) -> str:
    if not blocks:
        return ""
    parts = ["## API reference\n"]
    for block in blocks:
        parts.append(f"### {block.api_name}")
        parts.append(block.doc_text)
        if with_guidelines and block.guidelines:
            parts.append("Usage guidelines:")
            parts.extend(f"- {g.text}" for g in block.guidelines)
        if with_snippets and block.snippets:
            parts.append("Recorded invocations:")
            for snippet in block.snippets:
                label = snippet.outcome.value
                if snippet.outcome is Outcome.FAILURE and snippet.error_message:
                    label += f": {snippet.error_message.strip().splitlines()[-1]}"
                parts.append(f"[{label}]\n```\n{snippet.code}\n```")
        parts.append("")
    return "\n".join(parts) + "\n"


def render_prompt(context: GenerationContext, mode: str, templates: TemplateSet) -> list[dict]:
    """Render the system+user message list for one generation call."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if mode == "vanilla":
        task_text, api_text = "", ""
    elif mode == "oracle":
        if not context.api_blocks:
            raise ValueError("oracle mode needs gold API docs in the context")
        task_text = ""
        api_text = _render_api_blocks(context.api_blocks, False, False)
    elif mode == "no_task_mem":
        task_text = ""
        api_text = _render_api_blocks(context.api_blocks, True, True)
    elif mode == "no_api_mem":
        task_text = _render_task_blocks(context.task_blocks, True)
        api_text = _render_api_blocks(context.api_blocks, False, False)
    elif mode == "accum":
        task_text = _render_task_blocks(context.task_blocks, False)
        api_text = _render_api_blocks(context.api_blocks, False, True)
    else:  # memcoder
        task_text = _render_task_blocks(context.task_blocks, True)
        api_text = _render_api_blocks(context.api_blocks, True, True)
    user = render(
        templates.user,
        {
            "task_blocks": task_text,
            "api_blocks": api_text,
            "requirement": context.requirement,
        },
    )
    return [
        {"role": "system", "content": templates.system},
        {"role": "user", "content": user},
    ]


_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def extract_code(raw_response: str) -> str:
    """Content of the last fenced code block; whole trimmed text if unfenced."""
    if not raw_response or not raw_response.strip():
        raise ExtractionError("empty model response")
    matches = _FENCE_RE.findall(raw_response)
    if matches:
        return matches[-1].rstrip("\n")
    return raw_response.strip()


def generate_candidate(llm, request, sample_index: int) -> CandidateCode:
    """One gateway call plus extraction and token bookkeeping."""
    raw = llm.complete(request, sample_index)
    return CandidateCode(
        code=extract_code(raw),
        raw_response=raw,
        prompt_tokens=prompt_tokens(list(request.messages)),
        completion_tokens=estimate_tokens(raw),
    )


def estimate_tokens(text: str) -> int:
    """Rough token count (chars/4); a budget heuristic, not a tokenizer."""
    return math.ceil(len(text) / 4)


def prompt_tokens(messages: list[dict]) -> int:
    return sum(estimate_tokens(m["content"]) for m in messages)


def fit_context_to_budget(
    context: GenerationContext, templates: TemplateSet, budget: int | None
) -> GenerationContext:
    """Trim the context until the fullest rendering fits the token budget.

    Task blocks go first (from the low-similarity end), then snippets; the
    guidelines are never dropped.
    """
    if budget is None:
        return context
    ctx = context

    def over() -> bool:
        return prompt_tokens(render_prompt(ctx, "memcoder", templates)) > budget

    while over() and ctx.task_blocks:
        ctx = replace(ctx, task_blocks=ctx.task_blocks[:-1])
    while over():
        for i in range(len(ctx.api_blocks) - 1, -1, -1):
            block = ctx.api_blocks[i]
            if block.snippets:
                trimmed = replace(block, snippets=block.snippets[:-1])
                blocks = ctx.api_blocks[:i] + (trimmed,) + ctx.api_blocks[i + 1 :]
                ctx = replace(ctx, api_blocks=blocks)
                break
        else:
            break  # nothing droppable remains
    return ctx
