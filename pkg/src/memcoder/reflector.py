"""Backward-phase reflection: invoked-API identification, guideline
distillation, and routing decisions.

API identification is lexical: dotted identifier chains in the candidate are
matched against catalog names (longest match wins), so syntactically broken
candidates still yield a sound, catalog-filtered set. Both reflection calls
go through the LLM gateway; a gateway failure falls back to a mechanical
summary at the task level and to "no candidate" at the API level, so the
stream never blocks on reflection.

The routing call must answer one line -- DISCARD, ADD, or DELETE <index>
(indices as listed in the prompt, starting at 0). Unparseable output defaults
to Discard: ambiguity must never corrupt memory. A Delete naming an index
that does not exist degrades to Add, since the invalidation claim cannot be
verified against anything.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import GatewayError
from .gateway import ChatRequest
from .generation import summarize_feedback
from .memory import Add, ApiDoc, Delete, Discard, Guideline, LibraryCatalog, RoutingAction
from .execution import ExecutionFeedback
from .templates import TemplateSet, render

_CHAIN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*")
_ROUTE_RE = re.compile(r"^\s*(DISCARD|ADD|DELETE(?:\s+(-?\d+))?)\s*$", re.IGNORECASE)


@dataclass
class ReflectionOutcome:
    """Everything the backward phase distilled for one sample."""

    task_guideline: str
    invoked_apis: set[str]
    api_candidates: dict[str, str] = field(default_factory=dict)
    actions: dict[str, RoutingAction] = field(default_factory=dict)


def extract_invoked_apis(code: str, catalog: LibraryCatalog) -> set[str]:
    """Catalog APIs referenced in the code, by lexical longest-match scanning.

    Every dotted identifier chain is checked against the catalog; within one
    chain a longer match shadows any shorter match it contains. Names absent
    from the catalog never appear in the result.
    """
    names = catalog.apis.keys()
    found: set[str] = set()
    for chain_match in _CHAIN_RE.finditer(code):
        parts = chain_match.group(0).split(".")
        n = len(parts)
        matched_spans: list[tuple[int, int]] = []
        # Longest sub-chains first so shorter contained matches are shadowed.
        for length in range(n, 0, -1):
            for start in range(0, n - length + 1):
                span = (start, start + length)
                if any(a <= span[0] and span[1] <= b for a, b in matched_spans):
                    continue
                candidate = ".".join(parts[span[0] : span[1]])
                if candidate in names:
                    found.add(candidate)
                    matched_spans.append(span)
    return found


def _feedback_text(feedback: ExecutionFeedback) -> str:
    return feedback.traceback.strip() if feedback.traceback else "all tests passed"


def reflect_task(
    requirement: str,
    code: str,
    feedback: ExecutionFeedback,
    invoked_apis: set[str],
    llm,
    templates: TemplateSet,
) -> str:
    """Distill the cross-API orchestration guideline for one trajectory.

    Never returns empty: on any gateway failure the mechanical fallback
    summary is used, so every task entry carries a guideline.
    """
    apis = ", ".join(sorted(invoked_apis)) if invoked_apis else "(none)"
    prompt = render(
        templates.reflect_task,
        {
            "requirement": requirement,
            "code": code,
            "outcome": feedback.status.value,
            "feedback": _feedback_text(feedback),
            "apis": apis,
        },
    )
    request = ChatRequest(messages=({"role": "user", "content": prompt},))
    try:
        text = llm.complete(request, 0).strip()
    except GatewayError:
        text = ""
    if not text:
        text = f"APIs used: {apis}; outcome: {feedback.status.value}. {summarize_feedback(feedback).splitlines()[0]}"
    return text


def reflect_api(
    api_name: str,
    doc: ApiDoc,
    code: str,
    feedback: ExecutionFeedback,
    llm,
    templates: TemplateSet,
) -> str | None:
    """Candidate guideline for one invoked API, or None when there is nothing to say."""
    prompt = render(
        templates.reflect_api,
        {
            "api_name": api_name,
            "doc": doc.text(),
            "code": code,
            "outcome": feedback.status.value,
            "feedback": _feedback_text(feedback),
        },
    )
    request = ChatRequest(messages=({"role": "user", "content": prompt},))
    try:
        text = llm.complete(request, 0).strip()
    except GatewayError:
        return None
    return text or None


def route_guideline(
    candidate: str,
    doc: ApiDoc,
    existing: list[Guideline],
    llm,
    templates: TemplateSet,
) -> RoutingAction:
    """One LLM call deciding Discard / Add / Delete for a candidate guideline."""
    if not candidate.strip():
        raise ValueError("cannot route an empty candidate guideline")
    listing = (
        "\n".join(f"{i}: {g.text}" for i, g in enumerate(existing)) if existing else "(none)"
    )
    prompt = render(
        templates.route,
        {"doc": doc.text(), "existing": listing, "candidate": candidate},
    )
    request = ChatRequest(messages=({"role": "user", "content": prompt},))
    try:
        answer = llm.complete(request, 0)
    except GatewayError:
        return Discard()
    match = _ROUTE_RE.match(answer.strip().splitlines()[0] if answer.strip() else "")
    if match is None:
        return Discard()
    verb = match.group(1).upper()
    if verb == "DISCARD":
        return Discard()
    if verb == "ADD":
        return Add(candidate)
    index_text = match.group(2)
    if index_text is None:
        return Discard()  # DELETE without an index is unparseable
    index = int(index_text)
    if 0 <= index < len(existing):
        return Delete(existing[index].guideline_id, candidate)
    return Add(candidate)  # out-of-range target: the invalidation is unverifiable
