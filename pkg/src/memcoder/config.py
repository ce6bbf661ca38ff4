"""Run configuration: every engine knob in one place, with library defaults.

Defaults follow the reference setup: top-5 doc retrieval, 3 guidelines and 1
successful snippet per API, n=10 samples at temperature 0.7 / top_p 0.95 with
a 4096-token generation cap. The weight-update step sizes and the snippet
retention cap are engine defaults (configurable; no published values exist).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError
from .gateway import DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, DEFAULT_TOP_P
from .generation import MODES
from .memory import WeightParams


@dataclass(frozen=True)
class RunConfig:
    mode: str = "memcoder"
    n_samples: int = 10
    k_task: int = 3
    k_doc: int = 5
    guidelines_per_api: int = 3
    snippets_per_block: int = 1
    snippet_cap: int = 4
    accum_snippet_cap: int = 16
    w_init: float = 1.0
    delta_plus: float = 0.2
    delta_minus: float = 0.3
    w_min: float = 0.1
    timeout_ms: int = 10_000
    token_budget: int | None = None
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS
    model: str = ""
    seed: int | None = None
    shuffle: bool = False

    # Paths; None means "not configured".
    benchmark_path: str | None = None
    catalog_path: str | None = None
    snapshot_in: str | None = None
    snapshot_out: str | None = None
    templates_dir: str | None = None
    llm_fixtures_path: str | None = None
    runner_path: str | None = None
    runner_fixtures_path: str | None = None
    embedder: str = "test"
    embed_dimension: int = 256

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.k_task < 0 or self.k_doc < 1:
            raise ConfigError("need k_task >= 0 and k_doc >= 1")
        if self.guidelines_per_api < 0 or self.snippets_per_block < 0:
            raise ConfigError("guideline and snippet counts must be >= 0")
        if self.snippet_cap < 1 or self.accum_snippet_cap < 1:
            raise ConfigError("snippet caps must be >= 1")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be positive")
        try:
            self.weight_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def weight_params(self) -> WeightParams:
        return WeightParams(
            w_init=self.w_init,
            delta_plus=self.delta_plus,
            delta_minus=self.delta_minus,
            w_min=self.w_min,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**raw)
