"""The multi-dimensional evolving memory store.

Two dimensions live here. Task-level entries capture one historical task each:
requirement (embedded once at insert), generated code, execution feedback, the
catalog APIs it invoked, and a cross-API orchestration guideline. API-level
entries maintain an evolving per-API profile: the static catalog doc, a capped
FIFO of code snippet records, and weighted usage guidelines.

Guidelines evolve through three routing actions (Discard / Add / Delete-and-
replace) and a reward/penalty weight update with a strict positive floor:
penalized guidelines sink to the lowest retrieval priority but are never
erased. Snapshots round-trip the entire store, ordering and counters included.

Single-writer contract: one evolution step mutates the store at a time; reads
may interleave between steps.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

from .embedding import NORM_TOLERANCE, EmbeddingVector
from .errors import SnapshotError, UnknownApiError, UnknownGuidelineError
from .execution import ExecutionFeedback, Outcome

SNAPSHOT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class WeightParams:
    """Reward/penalty step sizes and the weight floor for guideline updates."""

    w_init: float = 1.0
    delta_plus: float = 0.2
    delta_minus: float = 0.3
    w_min: float = 0.1

    def __post_init__(self) -> None:
        if self.delta_plus <= 0 or self.delta_minus <= 0:
            raise ValueError("reward and penalty step sizes must be positive")
        if self.w_min <= 0:
            raise ValueError("weight floor must be positive")
        if self.w_init < self.w_min:
            raise ValueError("initial weight cannot sit below the floor")


@dataclass(frozen=True)
class ApiDoc:
    """Static documentation record for one API: signature, description, optional source."""

    signature: str
    description: str
    source: str | None = None

    def text(self) -> str:
        parts = [self.signature, self.description]
        if self.source:
            parts.append(self.source)
        return "\n".join(parts)


class LibraryCatalog:
    """The target library's static documentation set, keyed by canonical API name."""

    def __init__(self, apis: dict[str, ApiDoc], library: str = ""):
        if not apis:
            raise ValueError("catalog must contain at least one API")
        self.library = library
        self.apis = dict(apis)
        self.doc_embeddings: dict[str, EmbeddingVector] = {}

    def __contains__(self, api_name: str) -> bool:
        return api_name in self.apis

    def names(self) -> list[str]:
        return sorted(self.apis)

    def build_index(self, provider) -> None:
        """Embed every doc's text once; retrieval scans these vectors."""
        self.doc_embeddings = {
            name: provider.embed(doc.text()) for name, doc in self.apis.items()
        }

    def content_hash(self) -> str:
        payload = json.dumps(
            {
                "library": self.library,
                "apis": {
                    name: {
                        "signature": doc.signature,
                        "description": doc.description,
                        "source": doc.source,
                    }
                    for name, doc in sorted(self.apis.items())
                },
            },
            sort_keys=True,
            ensure_ascii=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_json_file(cls, path: str) -> "LibraryCatalog":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        apis = {
            name: ApiDoc(
                signature=entry["signature"],
                description=entry["description"],
                source=entry.get("source"),
            )
            for name, entry in raw["apis"].items()
        }
        return cls(apis, library=raw.get("library", ""))


@dataclass(frozen=True)
class SnippetRecord:
    """One archived invocation of an API: the code, its outcome, the error if any."""

    code: str
    outcome: Outcome
    error_message: str | None
    source_seq: int

    def __post_init__(self) -> None:
        if self.outcome is Outcome.FAILURE and not self.error_message:
            raise ValueError("failed snippet records must carry an error message")


@dataclass(frozen=True)
class Guideline:
    guideline_id: int
    text: str
    weight: float
    origin_seq: int


@dataclass
class ApiMemoryEntry:
    """Evolving profile of one API: static doc, snippet records, weighted guidelines."""

    api_name: str
    doc: ApiDoc
    snippets: list[SnippetRecord] = field(default_factory=list)
    guidelines: list[Guideline] = field(default_factory=list)


@dataclass(frozen=True)
class TaskMemoryEntry:
    """One historical task: requirement index plus its execution footprint.

    entry_id is assigned by the store at insert; construct with entry_id=0.
    """

    entry_id: int
    requirement: str
    requirement_embedding: EmbeddingVector
    code: str
    feedback: ExecutionFeedback
    used_apis: frozenset[str]
    task_guideline: str
    created_seq: int


# Routing actions -------------------------------------------------------------


@dataclass(frozen=True)
class Discard:
    """The candidate guideline is redundant; memory stays bit-identical."""


@dataclass(frozen=True)
class Add:
    """Store a novel guideline at the initial weight."""

    text: str


@dataclass(frozen=True)
class Delete:
    """Remove an invalidated guideline and store its correction at the initial weight."""

    target_id: int
    replacement_text: str


RoutingAction = Discard | Add | Delete


class MemoryStore:
    """Owner of both memory dimensions, their invariants, and persistence."""

    def __init__(self, catalog: LibraryCatalog, params: WeightParams | None = None):
        self.catalog = catalog
        self.params = params or WeightParams()
        self.task_entries: list[TaskMemoryEntry] = []
        self.api_entries: dict[str, ApiMemoryEntry] = {}
        self.seq_counter = 0
        self._next_guideline_id = 1

    # -- task stream bookkeeping ------------------------------------------

    def begin_task(self) -> int:
        """Advance the task-stream position; returns the new 1-based position."""
        self.seq_counter += 1
        return self.seq_counter

    # -- task-level memory ---------------------------------------------------

    def insert_task_entry(self, entry: TaskMemoryEntry) -> int:
        """Append one task entry; the store assigns its id. Returns the id.

        Rejects entries whose used_apis escaped reflector filtering (names
        absent from the catalog) and embeddings that lost unit norm.
        """
        ghosts = sorted(a for a in entry.used_apis if a not in self.catalog)
        if ghosts:
            raise UnknownApiError(f"used_apis not in catalog: {', '.join(ghosts)}")
        norm = math.sqrt(math.fsum(v * v for v in entry.requirement_embedding.values))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError("requirement embedding must be unit-norm")
        if self.task_entries and entry.created_seq < self.task_entries[-1].created_seq:
            raise ValueError("created_seq must be non-decreasing across inserts")
        entry_id = len(self.task_entries) + 1
        self.task_entries.append(replace(entry, entry_id=entry_id))
        self.seq_counter = max(self.seq_counter, entry.created_seq)
        return entry_id

    # -- API-level memory ------------------------------------------------

    def api_profile(self, api_name: str) -> ApiMemoryEntry:
        """The profile for a cataloged API, materialized on first access.

        Untouched APIs get a transient doc-only view; the entry is registered
        (and thus persisted) only once a mutation lands on it.
        """
        if api_name not in self.catalog:
            raise UnknownApiError(f"unknown API: {api_name!r}")
        existing = self.api_entries.get(api_name)
        if existing is not None:
            return existing
        return ApiMemoryEntry(api_name=api_name, doc=self.catalog.apis[api_name])

    def _materialize(self, api_name: str) -> ApiMemoryEntry:
        if api_name not in self.catalog:
            raise UnknownApiError(f"unknown API: {api_name!r}")
        return self.api_entries.setdefault(
            api_name, ApiMemoryEntry(api_name=api_name, doc=self.catalog.apis[api_name])
        )

    def apply_routing_action(self, api_name: str, action: RoutingAction) -> None:
        """Apply one routing decision to an API's guideline collection.

        Discard never touches the store. Add appends at w_init, except that a
        textual duplicate of an existing guideline folds into Discard. Delete
        replaces: the target is removed and the correction stored at w_init.
        """
        if isinstance(action, Discard):
            if api_name not in self.catalog:
                raise UnknownApiError(f"unknown API: {api_name!r}")
            return
        entry = self._materialize(api_name)
        if isinstance(action, Add):
            self._add_guideline(entry, action.text)
        elif isinstance(action, Delete):
            index = next(
                (i for i, g in enumerate(entry.guidelines) if g.guideline_id == action.target_id),
                None,
            )
            if index is None:
                raise UnknownGuidelineError(
                    f"API {api_name!r} has no guideline id {action.target_id}"
                )
            del entry.guidelines[index]
            self._add_guideline(entry, action.replacement_text)
        else:
            raise TypeError(f"not a routing action: {action!r}")

    def _add_guideline(self, entry: ApiMemoryEntry, text: str) -> None:
        if not text.strip():
            raise ValueError("guideline text must be non-empty")
        if any(g.text == text for g in entry.guidelines):
            return  # idempotent add keeps memory compact
        entry.guidelines.append(
            Guideline(
                guideline_id=self._next_guideline_id,
                text=text,
                weight=self.params.w_init,
                origin_seq=self.seq_counter,
            )
        )
        self._next_guideline_id += 1

    def update_guideline_weights(
        self,
        used: set[tuple[str, int]],
        outcome: Outcome,
        params: WeightParams | None = None,
    ) -> None:
        """Reward or penalize exactly the guidelines that were injected.

        Success adds the reward step; Failure subtracts the penalty step but
        clamps at the floor, so a bad guideline is kept at the lowest retrieval
        priority rather than erased. Guidelines outside `used` are untouched.
        """
        p = params or self.params
        located: list[tuple[ApiMemoryEntry, int]] = []
        for api_name, guideline_id in sorted(used):
            if api_name not in self.catalog:
                raise UnknownApiError(f"unknown API: {api_name!r}")
            entry = self.api_entries.get(api_name)
            index = None
            if entry is not None:
                index = next(
                    (i for i, g in enumerate(entry.guidelines) if g.guideline_id == guideline_id),
                    None,
                )
            if entry is None or index is None:
                raise UnknownGuidelineError(
                    f"API {api_name!r} has no guideline id {guideline_id}"
                )
            located.append((entry, index))
        for entry, index in located:
            g = entry.guidelines[index]
            if outcome is Outcome.SUCCESS:
                new_weight = g.weight + p.delta_plus
            else:
                new_weight = max(p.w_min, g.weight - p.delta_minus)
            entry.guidelines[index] = replace(g, weight=new_weight)

    def append_snippet(self, api_name: str, record: SnippetRecord, cap: int) -> None:
        """Append one snippet record, evicting the oldest beyond the cap (FIFO)."""
        if cap < 1:
            raise ValueError(f"snippet cap must be >= 1, got {cap}")
        entry = self._materialize(api_name)
        entry.snippets.append(record)
        while len(entry.snippets) > cap:
            del entry.snippets[0]

    # -- persistence -------------------------------------------------------

    def to_snapshot_dict(self) -> dict:
        return {
            "schema_version": SNAPSHOT_SCHEMA_VERSION,
            "seq_counter": self.seq_counter,
            "guideline_seq": self._next_guideline_id,
            "weight_params": {
                "w_init": self.params.w_init,
                "delta_plus": self.params.delta_plus,
                "delta_minus": self.params.delta_minus,
                "w_min": self.params.w_min,
            },
            "catalog_ref": {
                "library": self.catalog.library,
                "sha256": self.catalog.content_hash(),
            },
            "task_entries": [
                {
                    "entry_id": e.entry_id,
                    "requirement": e.requirement,
                    "requirement_embedding": list(e.requirement_embedding.values),
                    "code": e.code,
                    "feedback": e.feedback.to_dict(),
                    "used_apis": sorted(e.used_apis),
                    "task_guideline": e.task_guideline,
                    "created_seq": e.created_seq,
                }
                for e in self.task_entries
            ],
            "api_entries": [
                {
                    "api_name": entry.api_name,
                    "snippets": [
                        {
                            "code": s.code,
                            "outcome": s.outcome.value,
                            "error_message": s.error_message,
                            "source_seq": s.source_seq,
                        }
                        for s in entry.snippets
                    ],
                    "guidelines": [
                        {
                            "guideline_id": g.guideline_id,
                            "text": g.text,
                            "weight": g.weight,
                            "origin_seq": g.origin_seq,
                        }
                        for g in entry.guidelines
                    ],
                }
                for _, entry in sorted(self.api_entries.items())
            ],
        }

    def save_snapshot(self, path: str) -> None:
        payload = json.dumps(self.to_snapshot_dict(), sort_keys=True, ensure_ascii=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)
            fh.write("\n")

    @classmethod
    def load_snapshot(cls, path: str, catalog: LibraryCatalog) -> "MemoryStore":
        """Rebuild a store from a snapshot, re-checking every invariant.

        The catalog is supplied by the caller (snapshots record only a
        reference to it); any record that violates an invariant names itself
        in the raised SnapshotError.
        """
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"snapshot {path!r} is not valid JSON: {exc}") from exc
        try:
            return cls.from_snapshot_dict(raw, catalog)
        except SnapshotError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SnapshotError(f"snapshot {path!r} is malformed: {exc}") from exc

    @classmethod
    def from_snapshot_dict(cls, raw: dict, catalog: LibraryCatalog) -> "MemoryStore":
        if raw.get("schema_version") != SNAPSHOT_SCHEMA_VERSION:
            raise SnapshotError(
                f"unsupported snapshot schema_version {raw.get('schema_version')!r}"
            )
        wp = raw["weight_params"]
        params = WeightParams(
            w_init=wp["w_init"],
            delta_plus=wp["delta_plus"],
            delta_minus=wp["delta_minus"],
            w_min=wp["w_min"],
        )
        store = cls(catalog, params)
        store.seq_counter = int(raw["seq_counter"])
        store._next_guideline_id = int(raw["guideline_seq"])

        last_id = 0
        for te in raw["task_entries"]:
            entry_id = int(te["entry_id"])
            if entry_id <= last_id:
                raise SnapshotError(
                    f"task entry ids must be strictly increasing (saw {entry_id} after {last_id})"
                )
            last_id = entry_id
            used = frozenset(te["used_apis"])
            ghosts = sorted(a for a in used if a not in catalog)
            if ghosts:
                raise SnapshotError(
                    f"task entry {entry_id}: used_apis not in catalog: {', '.join(ghosts)}"
                )
            try:
                embedding = EmbeddingVector(tuple(float(v) for v in te["requirement_embedding"]))
            except ValueError as exc:
                raise SnapshotError(f"task entry {entry_id}: {exc}") from exc
            store.task_entries.append(
                TaskMemoryEntry(
                    entry_id=entry_id,
                    requirement=te["requirement"],
                    requirement_embedding=embedding,
                    code=te["code"],
                    feedback=ExecutionFeedback.from_dict(te["feedback"]),
                    used_apis=used,
                    task_guideline=te["task_guideline"],
                    created_seq=int(te["created_seq"]),
                )
            )

        seen_gids: set[int] = set()
        for ae in raw["api_entries"]:
            name = ae["api_name"]
            if name not in catalog:
                raise SnapshotError(f"API entry {name!r} is not in the catalog")
            if name in store.api_entries:
                raise SnapshotError(f"duplicate API entry {name!r}")
            entry = ApiMemoryEntry(api_name=name, doc=catalog.apis[name])
            for s in ae["snippets"]:
                try:
                    entry.snippets.append(
                        SnippetRecord(
                            code=s["code"],
                            outcome=Outcome(s["outcome"]),
                            error_message=s.get("error_message"),
                            source_seq=int(s["source_seq"]),
                        )
                    )
                except ValueError as exc:
                    raise SnapshotError(f"API entry {name!r}: bad snippet: {exc}") from exc
            texts: set[str] = set()
            for g in ae["guidelines"]:
                gid = int(g["guideline_id"])
                weight = float(g["weight"])
                if gid in seen_gids:
                    raise SnapshotError(f"API entry {name!r}: duplicate guideline id {gid}")
                seen_gids.add(gid)
                if weight < params.w_min:
                    raise SnapshotError(
                        f"API entry {name!r}: guideline {gid} weight {weight} "
                        f"is below the floor {params.w_min}"
                    )
                if g["text"] in texts:
                    raise SnapshotError(f"API entry {name!r}: duplicate guideline text")
                texts.add(g["text"])
                entry.guidelines.append(
                    Guideline(
                        guideline_id=gid,
                        text=g["text"],
                        weight=weight,
                        origin_seq=int(g["origin_seq"]),
                    )
                )
            store.api_entries[name] = entry
        return store
