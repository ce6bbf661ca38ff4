"""Dual-source retrieval over the memory store and the documentation catalog.

One path matches the requirement against historical task requirements
(task-to-task similarity); the other matches it against static API docs.
The candidate API set is the union of both. All orderings are fully
deterministic: similarity ties break toward the smaller entry id, doc ties
toward the lexicographically smaller API name, and guideline weight ties
toward the older guideline.
"""

from __future__ import annotations

from .embedding import cosine_similarity
from .errors import ConfigError
from .memory import ApiMemoryEntry, Guideline, LibraryCatalog, MemoryStore, TaskMemoryEntry


def retrieve_similar_tasks(
    store: MemoryStore, provider, requirement_text: str, k_task: int
) -> list[TaskMemoryEntry]:
    """Top-k historical tasks by requirement similarity, best first."""
    if k_task < 0:
        raise ValueError(f"k_task must be >= 0, got {k_task}")
    if k_task == 0 or not store.task_entries:
        return []
    query = provider.embed(requirement_text)
    scored = [
        (cosine_similarity(query, entry.requirement_embedding), entry)
        for entry in store.task_entries
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1].entry_id))
    return [entry for _, entry in scored[:k_task]]


def retrieve_docs(
    catalog: LibraryCatalog, provider, requirement_text: str, k_doc: int
) -> list[str]:
    """Top-k API names by similarity between the requirement and each doc."""
    if k_doc < 1:
        raise ValueError(f"k_doc must be >= 1, got {k_doc}")
    if not catalog.doc_embeddings:
        raise ConfigError("catalog has no document index; call build_index first")
    query = provider.embed(requirement_text)
    scored = [
        (cosine_similarity(query, vector), name)
        for name, vector in catalog.doc_embeddings.items()
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [name for _, name in scored[:k_doc]]


def build_candidate_api_set(
    doc_apis: list[str], retrieved_tasks: list[TaskMemoryEntry]
) -> set[str]:
    """Union of doc-retrieved APIs and the APIs used by retrieved tasks."""
    candidates = set(doc_apis)
    for entry in retrieved_tasks:
        candidates.update(entry.used_apis)
    return candidates


def order_candidate_entries(
    store: MemoryStore, doc_apis: list[str], retrieved_tasks: list[TaskMemoryEntry]
) -> list[ApiMemoryEntry]:
    """Candidate API profiles in context order.

    Doc-retrieved APIs keep their rank order (most query-relevant earliest in
    context); APIs contributed only by task memories follow alphabetically.
    """
    extras = sorted(build_candidate_api_set([], retrieved_tasks) - set(doc_apis))
    return [store.api_profile(name) for name in list(doc_apis) + extras]


def select_guidelines(entry: ApiMemoryEntry, n: int) -> list[Guideline]:
    """Top-n guidelines by weight, heaviest first; older wins on equal weight."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    ranked = sorted(entry.guidelines, key=lambda g: (-g.weight, g.origin_seq, g.guideline_id))
    return ranked[:n]
