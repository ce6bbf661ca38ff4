"""Context assembly, mode rendering, code extraction, token budgeting."""

from __future__ import annotations

import pytest

from conftest import failure_feedback, make_catalog, success_feedback
from memcoder.embedding import DeterministicProvider
from memcoder.generation import (
    ContextConfig,
    ExtractionError,
    GenerationContext,
    build_context,
    extract_code,
    fit_context_to_budget,
    render_prompt,
    summarize_feedback,
)
from memcoder.memory import Add, MemoryStore, SnippetRecord, TaskMemoryEntry
from memcoder.execution import Outcome
from memcoder.retrieval import order_candidate_entries, select_guidelines

PROVIDER = DeterministicProvider(32)

TASK_SENTINEL = "SENTINEL-TASK-GUIDELINE"
API_SENTINEL = "SENTINEL-API-GUIDELINE"


def insert_task(store, requirement, used, seq, guideline=TASK_SENTINEL, feedback=None):
    return store.insert_task_entry(
        TaskMemoryEntry(
            entry_id=0,
            requirement=requirement,
            requirement_embedding=PROVIDER.embed(requirement),
            code=f"code for {requirement}",
            feedback=feedback or success_feedback(),
            used_apis=frozenset(used),
            task_guideline=guideline,
            created_seq=seq,
        )
    )


@pytest.fixture()
def loaded_store():
    store = MemoryStore(make_catalog())
    store.apply_routing_action("lib.alpha", Add(API_SENTINEL))
    store.append_snippet(
        "lib.alpha",
        SnippetRecord("lib.alpha(7)", Outcome.SUCCESS, None, source_seq=1),
        cap=4,
    )
    insert_task(store, "use alpha on the list", {"lib.alpha"}, seq=1)
    return store


def memcoder_context(store, requirement="apply alpha to data"):
    retrieved = store.task_entries[:]
    entries = order_candidate_entries(store, ["lib.alpha", "lib.beta"], retrieved)
    return build_context(requirement, retrieved, entries, ContextConfig())


def user_text(context, mode, templates) -> str:
    return render_prompt(context, mode, templates)[1]["content"]


# -- build_context -------------------------------------------------------------


def test_cold_start_context(store):
    entries = order_candidate_entries(store, ["lib.alpha", "lib.beta"], [])
    context = build_context("fresh requirement", [], entries, ContextConfig())
    assert context.task_blocks == ()
    assert [b.api_name for b in context.api_blocks] == ["lib.alpha", "lib.beta"]
    assert context.requirement == "fresh requirement"
    assert context.used_guideline_ids == frozenset()


def test_union_propagates_task_apis(loaded_store):
    retrieved = loaded_store.task_entries[:]
    entries = order_candidate_entries(loaded_store, ["lib.beta"], retrieved)
    context = build_context("r", retrieved, entries, ContextConfig())
    assert [b.api_name for b in context.api_blocks] == ["lib.beta", "lib.alpha"]


def test_top_n_guidelines_and_used_ids(store):
    for i, weight_moves in enumerate([0, 2, 1, 3]):
        store.apply_routing_action("lib.alpha", Add(f"guideline {i}"))
        gid = store.api_entries["lib.alpha"].guidelines[-1].guideline_id
        for _ in range(weight_moves):
            store.update_guideline_weights({("lib.alpha", gid)}, Outcome.SUCCESS)
    entries = order_candidate_entries(store, ["lib.alpha"], [])
    context = build_context("r", [], entries, ContextConfig(guidelines_per_api=3))
    block = context.api_blocks[0]
    expected = select_guidelines(store.api_entries["lib.alpha"], 3)
    assert list(block.guidelines) == expected
    assert context.used_guideline_ids == {
        ("lib.alpha", g.guideline_id) for g in expected
    }


def test_most_recent_successful_snippet_selected(store):
    for seq, outcome in ((1, Outcome.SUCCESS), (2, Outcome.FAILURE), (3, Outcome.SUCCESS)):
        store.append_snippet(
            "lib.alpha",
            SnippetRecord(
                f"snippet {seq}",
                outcome,
                "boom" if outcome is Outcome.FAILURE else None,
                source_seq=seq,
            ),
            cap=4,
        )
    entries = order_candidate_entries(store, ["lib.alpha"], [])
    context = build_context("r", [], entries, ContextConfig(snippets_per_block=1))
    assert [s.code for s in context.api_blocks[0].snippets] == ["snippet 3"]


# -- render_prompt ---------------------------------------------------------------


def test_vanilla_contains_requirement_only(loaded_store, templates):
    context = memcoder_context(loaded_store)
    text = user_text(context, "vanilla", templates)
    assert "apply alpha to data" in text
    assert "lib.alpha" not in text  # no catalog text at all
    assert TASK_SENTINEL not in text and API_SENTINEL not in text


def test_no_api_mem_keeps_docs_drops_guidelines(loaded_store, templates):
    context = memcoder_context(loaded_store)
    text = user_text(context, "no_api_mem", templates)
    assert "lib.alpha(x)" in text  # doc text present
    assert API_SENTINEL not in text
    assert "Recorded invocations" not in text
    assert TASK_SENTINEL in text  # task memory still present


def test_no_task_mem_drops_task_blocks(loaded_store, templates):
    context = memcoder_context(loaded_store)
    text = user_text(context, "no_task_mem", templates)
    assert TASK_SENTINEL not in text
    assert "Similar solved tasks" not in text
    assert API_SENTINEL in text


def test_accum_injects_snippets_without_guidelines(loaded_store, templates):
    context = memcoder_context(loaded_store)
    text = user_text(context, "accum", templates)
    assert API_SENTINEL not in text and TASK_SENTINEL not in text
    assert "lib.alpha(7)" in text  # raw snippet present


def test_memcoder_injects_each_guideline_exactly_once(loaded_store, templates):
    context = memcoder_context(loaded_store)
    text = user_text(context, "memcoder", templates)
    assert text.count(API_SENTINEL) == 1
    assert text.count(TASK_SENTINEL) == 1


def test_guideline_provenance_matches_used_ids(loaded_store, templates):
    context = memcoder_context(loaded_store)
    text = user_text(context, "memcoder", templates)
    rendered = [
        g.text
        for block in context.api_blocks
        for g in block.guidelines
    ]
    assert all(g in text for g in rendered)
    assert len(rendered) == len(context.used_guideline_ids)


def test_block_order_task_api_requirement(loaded_store, templates):
    context = memcoder_context(loaded_store)
    text = user_text(context, "memcoder", templates)
    task_pos = text.index("Similar solved tasks")
    api_pos = text.index("API reference")
    req_pos = text.index("apply alpha to data")
    assert task_pos < api_pos < req_pos


def test_prompt_is_deterministic(loaded_store, templates):
    context = memcoder_context(loaded_store)
    a = render_prompt(context, "memcoder", templates)
    b = render_prompt(context, "memcoder", templates)
    assert a == b


def test_oracle_requires_api_blocks(templates):
    context = GenerationContext((), (), "r", frozenset())
    with pytest.raises(ValueError, match="gold"):
        render_prompt(context, "oracle", templates)


def test_unknown_mode_rejected(templates):
    context = GenerationContext((), (), "r", frozenset())
    with pytest.raises(ValueError, match="unknown mode"):
        render_prompt(context, "nope", templates)


# -- extract_code ------------------------------------------------------------------


def test_extracts_fenced_block():
    assert extract_code("```\nx=1\n```") == "x=1"


def test_extracts_last_of_two_blocks():
    raw = "first:\n```python\na=1\n```\nthen:\n```python\nb=2\n```"
    assert extract_code(raw) == "b=2"


def test_unfenced_falls_back_to_trimmed_text():
    assert extract_code("  just code  \n") == "just code"


def test_empty_response_is_extraction_error():
    with pytest.raises(ExtractionError):
        extract_code("   \n")


# -- feedback summaries / budget ------------------------------------------------------


def test_failure_summary_truncates_traceback():
    long_traceback = "\n".join(f"line {i}" for i in range(40))
    feedback = failure_feedback()
    feedback = type(feedback)(
        status=feedback.status,
        executed=feedback.executed,
        tests_passed=feedback.tests_passed,
        tests_total=feedback.tests_total,
        traceback=long_traceback,
        wall_time_ms=feedback.wall_time_ms,
        timed_out=feedback.timed_out,
    )
    summary = summarize_feedback(feedback)
    assert "line 39" in summary and "line 29" not in summary


def test_budget_drops_task_blocks_before_snippets_and_never_guidelines(
    loaded_store, templates
):
    for i in range(4):
        insert_task(loaded_store, f"filler requirement number {i}", set(), seq=2 + i)
    context = memcoder_context(loaded_store)
    assert len(context.task_blocks) == 5
    full_size = len(user_text(context, "memcoder", templates))

    trimmed = fit_context_to_budget(context, templates, budget=full_size // 8)
    assert len(trimmed.task_blocks) < len(context.task_blocks)
    assert trimmed.used_guideline_ids == context.used_guideline_ids
    text = user_text(trimmed, "memcoder", templates)
    assert API_SENTINEL in text  # guidelines survived

    tiny = fit_context_to_budget(context, templates, budget=1)
    assert tiny.task_blocks == ()
    assert all(not b.snippets for b in tiny.api_blocks)
    assert API_SENTINEL in user_text(tiny, "memcoder", templates)


def test_no_budget_means_untouched(loaded_store, templates):
    context = memcoder_context(loaded_store)
    assert fit_context_to_budget(context, templates, None) is context
