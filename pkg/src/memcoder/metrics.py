"""Unbiased Pass@k / Exec@k estimation and benchmark-level aggregation.

For one instance with n samples of which c succeed, the probability that a
random size-k subset contains at least one success is

    1 - C(n-c, k) / C(n, k)

evaluated here in exact integer arithmetic (math.comb plus Fraction), so no
floating cancellation occurs for any n. By the C(m, k) = 0 convention for
m < k the estimate is exactly 1 whenever n - c < k. Benchmark scores are the
arithmetic mean over instances, for c = passes (Pass@k) and c = executed
samples (Exec@k); since passing implies executing, Pass@k <= Exec@k always.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

DEFAULT_KS = (1, 3, 5)


def estimator_exact(n: int, c: int, k: int) -> Fraction:
    """Exact rational value of the at-least-one-in-k estimator."""
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return 1 - Fraction(math.comb(n - c, k), math.comb(n, k))


def estimator(n: int, c: int, k: int) -> float:
    """Float value of the unbiased estimator, in [0, 1]."""
    return float(estimator_exact(n, c, k))


@dataclass(frozen=True)
class InstanceCounts:
    task_id: str
    n: int
    c_pass: int
    c_exec: int

    def __post_init__(self) -> None:
        if not 0 <= self.c_pass <= self.c_exec <= self.n:
            raise ValueError(
                f"{self.task_id}: need 0 <= c_pass <= c_exec <= n, "
                f"got {self.c_pass}, {self.c_exec}, {self.n}"
            )


@dataclass(frozen=True)
class MetricReport:
    n_samples: int
    instance_count: int
    pass_at: dict[int, float]
    exec_at: dict[int, float]
    rows: tuple[InstanceCounts, ...]

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "instances": self.instance_count,
            "pass_at_k": {str(k): round(100 * v, 2) for k, v in self.pass_at.items()},
            "exec_at_k": {str(k): round(100 * v, 2) for k, v in self.exec_at.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_table(self) -> str:
        """Aligned text table, percentages with two decimals."""
        ks = sorted(self.pass_at)
        headers = ["Metric"] + [f"@{k}" for k in ks]
        lines = [
            ("Pass", [self.pass_at[k] for k in ks]),
            ("Exec", [self.exec_at[k] for k in ks]),
        ]
        width = max(8, *(len(h) for h in headers))
        out = ["".join(h.rjust(width) for h in headers)]
        for name, values in lines:
            out.append(name.rjust(width) + "".join(f"{100 * v:.2f}".rjust(width) for v in values))
        out.append(f"({self.instance_count} instances, n={self.n_samples})")
        return "\n".join(out)

    def to_csv_rows(self) -> list[str]:
        rows = ["task_id,n,c_pass,c_exec"]
        rows.extend(f"{r.task_id},{r.n},{r.c_pass},{r.c_exec}" for r in self.rows)
        return rows


def aggregate(counts: list[InstanceCounts], ks: tuple[int, ...] = DEFAULT_KS) -> MetricReport:
    """Mean per-instance estimator values across a benchmark run."""
    if not counts:
        raise ValueError("no instances to aggregate")
    if not ks:
        raise ValueError("no k values requested")
    ns = {row.n for row in counts}
    if len(ns) != 1:
        raise ValueError(f"instances disagree on n: {sorted(ns)}")
    n = ns.pop()
    for k in ks:
        if not 1 <= k <= n:
            raise ValueError(f"k={k} out of range for n={n}")
    m = len(counts)
    pass_at = {
        k: float(sum(estimator_exact(n, row.c_pass, k) for row in counts) / m) for k in ks
    }
    exec_at = {
        k: float(sum(estimator_exact(n, row.c_exec, k) for row in counts) / m) for k in ks
    }
    return MetricReport(
        n_samples=n,
        instance_count=m,
        pass_at=pass_at,
        exec_at=exec_at,
        rows=tuple(counts),
    )
