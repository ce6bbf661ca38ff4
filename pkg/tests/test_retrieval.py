"""Retrieval tests against exhaustive-sort oracles, tie-breaks included."""

from __future__ import annotations

import random

import pytest

from conftest import make_catalog, success_feedback
from memcoder.embedding import DeterministicProvider, cosine_similarity
from memcoder.errors import ConfigError
from memcoder.memory import (
    Add,
    ApiDoc,
    Guideline,
    ApiMemoryEntry,
    LibraryCatalog,
    MemoryStore,
    TaskMemoryEntry,
)
from memcoder.retrieval import (
    build_candidate_api_set,
    order_candidate_entries,
    retrieve_docs,
    retrieve_similar_tasks,
    select_guidelines,
)

PROVIDER = DeterministicProvider(64)


def insert_task(store: MemoryStore, requirement: str, used: set[str], seq: int) -> int:
    return store.insert_task_entry(
        TaskMemoryEntry(
            entry_id=0,
            requirement=requirement,
            requirement_embedding=PROVIDER.embed(requirement),
            code="pass",
            feedback=success_feedback(),
            used_apis=frozenset(used),
            task_guideline="g",
            created_seq=seq,
        )
    )


def task_oracle(store: MemoryStore, query: str, k: int) -> list[int]:
    """Exhaustive scoring + stable sort on (-similarity, entry_id)."""
    q = PROVIDER.embed(query)
    scored = sorted(
        ((cosine_similarity(q, e.requirement_embedding), e.entry_id) for e in store.task_entries),
        key=lambda pair: (-pair[0], pair[1]),
    )
    return [entry_id for _, entry_id in scored[:k]]


# -- retrieve_similar_tasks -----------------------------------------------------


def test_empty_store_returns_empty(store):
    assert retrieve_similar_tasks(store, PROVIDER, "anything", 3) == []


def test_k_beyond_store_size(store):
    insert_task(store, "sort the list", set(), 1)
    insert_task(store, "reverse the string", set(), 2)
    entries = retrieve_similar_tasks(store, PROVIDER, "sort the items", 5)
    assert len(entries) == 2


def test_top3_of_5_matches_bruteforce(store):
    requirements = [
        "scale the values by a factor",
        "scale the list by two",
        "clip values to bounds",
        "rank the scores ascending",
        "blend two channels with alpha",
    ]
    for i, requirement in enumerate(requirements):
        insert_task(store, requirement, set(), i + 1)
    got = [e.entry_id for e in retrieve_similar_tasks(store, PROVIDER, "scale values by factor", 3)]
    assert got == task_oracle(store, "scale values by factor", 3)


def test_similarity_tie_breaks_to_smaller_entry_id(store):
    insert_task(store, "identical requirement", set(), 1)
    insert_task(store, "identical requirement", set(), 2)
    got = [e.entry_id for e in retrieve_similar_tasks(store, PROVIDER, "identical requirement", 1)]
    assert got == [1]


def test_k_zero(store):
    insert_task(store, "whatever", set(), 1)
    assert retrieve_similar_tasks(store, PROVIDER, "whatever", 0) == []


# -- retrieve_docs ---------------------------------------------------------------


def indexed_catalog(names: list[str]) -> LibraryCatalog:
    catalog = make_catalog(names)
    catalog.build_index(PROVIDER)
    return catalog


def test_single_api_catalog():
    catalog = indexed_catalog(["solo.api"])
    assert retrieve_docs(catalog, PROVIDER, "anything at all", 5) == ["solo.api"]


def test_exact_doc_text_ranks_first():
    catalog = indexed_catalog(["lib.alpha", "lib.beta", "lib.gamma"])
    query = catalog.apis["lib.beta"].text()
    assert retrieve_docs(catalog, PROVIDER, query, 3)[0] == "lib.beta"


def test_top5_of_6_matches_bruteforce():
    names = [f"lib.api{i}" for i in range(6)]
    catalog = indexed_catalog(names)
    query = "do the api3 thing to x"
    q = PROVIDER.embed(query)
    expected = [
        name
        for _, name in sorted(
            ((cosine_similarity(q, v), n) for n, v in catalog.doc_embeddings.items()),
            key=lambda pair: (-pair[0], pair[1]),
        )[:5]
    ]
    assert retrieve_docs(catalog, PROVIDER, query, 5) == expected


def test_unindexed_catalog_is_a_config_error():
    catalog = make_catalog()
    with pytest.raises(ConfigError, match="index"):
        retrieve_docs(catalog, PROVIDER, "q", 1)


# -- candidate set ---------------------------------------------------------------


def fake_task(used: set[str]) -> TaskMemoryEntry:
    return TaskMemoryEntry(
        entry_id=1,
        requirement="r",
        requirement_embedding=PROVIDER.embed("r"),
        code="c",
        feedback=success_feedback(),
        used_apis=frozenset(used),
        task_guideline="g",
        created_seq=1,
    )


def test_union_with_no_tasks():
    assert build_candidate_api_set(["f", "g"], []) == {"f", "g"}


def test_union_adds_task_apis():
    assert build_candidate_api_set(["f"], [fake_task({"f", "h"})]) == {"f", "h"}


def test_union_oracle():
    tasks = [fake_task({"b", "c"}), fake_task({"d"})]
    assert build_candidate_api_set(["a", "b"], tasks) == {"a", "b", "c", "d"}


def test_union_is_superset_of_docs():
    for docs in (["a"], ["a", "b"], []):
        got = build_candidate_api_set(docs, [fake_task({"z"})])
        assert set(docs) <= got


def test_order_doc_rank_then_lexicographic(store):
    store.insert_task_entry(fake_task({"lib.gamma", "lib.beta"}))
    ordered = order_candidate_entries(
        store, ["lib.beta"], [store.task_entries[0]]
    )
    assert [e.api_name for e in ordered] == ["lib.beta", "lib.gamma"]


# -- select_guidelines -------------------------------------------------------------


def entry_with_weights(weights: list[float]) -> ApiMemoryEntry:
    doc = ApiDoc("f(x)", "doc")
    return ApiMemoryEntry(
        api_name="f",
        doc=doc,
        guidelines=[
            Guideline(guideline_id=i + 1, text=f"g{i + 1}", weight=w, origin_seq=i + 1)
            for i, w in enumerate(weights)
        ],
    )


def test_select_from_empty():
    assert select_guidelines(entry_with_weights([]), 3) == []


def test_select_orders_by_weight():
    entry = entry_with_weights([2.0, 0.1, 1.0])
    chosen = select_guidelines(entry, 2)
    assert [g.weight for g in chosen] == [2.0, 1.0]


def test_weight_tie_prefers_older():
    entry = entry_with_weights([1.0, 1.0])
    chosen = select_guidelines(entry, 1)
    assert chosen[0].origin_seq == 1


def test_select_never_duplicates_or_invents():
    entry = entry_with_weights([0.5, 0.7, 0.7, 2.0])
    chosen = select_guidelines(entry, 10)
    assert len(chosen) == 4
    assert len({g.guideline_id for g in chosen}) == 4
    assert all(g in entry.guidelines for g in chosen)


# -- randomized oracle sweep -------------------------------------------------------


def test_random_small_stores_match_oracles():
    rng = random.Random(2024)
    words = ["scale", "clip", "rank", "mix", "shift", "merge", "align", "sort"]
    for trial in range(30):
        store = MemoryStore(make_catalog())
        n_entries = rng.randint(0, 12)
        for i in range(n_entries):
            requirement = " ".join(rng.choices(words, k=rng.randint(1, 5)))
            insert_task(store, requirement, set(), i + 1)
        query = " ".join(rng.choices(words, k=3))
        k = rng.randint(0, 6)
        got = [e.entry_id for e in retrieve_similar_tasks(store, PROVIDER, query, k)]
        assert got == task_oracle(store, query, k), f"trial {trial}"
