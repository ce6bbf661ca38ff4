"""memcoder: an evolving-memory engine for private-library code generation.

The engine closes the loop generation -> execution -> feedback -> reflection
-> memory update over a stream of tasks, retrieving static API documentation
together with task-level and API-level usage guidelines distilled from its
own execution history.
"""

from .config import RunConfig
from .embedding import DeterministicProvider, EmbeddingVector, cosine_similarity
from .execution import ExecutionFeedback, Outcome, StubRunner, SubprocessRunner
from .gateway import ChatRequest, HttpBackend, ScriptedBackend
from .loop import Engine, TaskRecord, TaskResult, load_benchmark
from .memory import (
    Add,
    ApiDoc,
    ApiMemoryEntry,
    Delete,
    Discard,
    Guideline,
    LibraryCatalog,
    MemoryStore,
    SnippetRecord,
    TaskMemoryEntry,
    WeightParams,
)
from .metrics import InstanceCounts, MetricReport, aggregate, estimator

__version__ = "0.1.0"

__all__ = [
    "Add",
    "ApiDoc",
    "ApiMemoryEntry",
    "ChatRequest",
    "Delete",
    "DeterministicProvider",
    "Discard",
    "EmbeddingVector",
    "Engine",
    "ExecutionFeedback",
    "Guideline",
    "HttpBackend",
    "InstanceCounts",
    "LibraryCatalog",
    "MemoryStore",
    "MetricReport",
    "Outcome",
    "RunConfig",
    "ScriptedBackend",
    "SnippetRecord",
    "StubRunner",
    "SubprocessRunner",
    "TaskMemoryEntry",
    "TaskRecord",
    "TaskResult",
    "WeightParams",
    "aggregate",
    "cosine_similarity",
    "estimator",
    "load_benchmark",
]
