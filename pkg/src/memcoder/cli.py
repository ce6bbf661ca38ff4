"""Command-line interface: run streams, evaluate results, inspect memory,
and replay run manifests.

Every flag falls back to an environment variable (MEMCODER_<FLAG>) and then
to its documented default. Exit codes: 0 success, 2 configuration error,
3 I/O error, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

from .config import RunConfig
from .embedding import DeterministicProvider, HttpProvider
from .errors import BenchmarkFormatError, ConfigError, InvariantError, MemcoderError
from .execution import StubRunner, SubprocessRunner
from .gateway import HttpBackend, ScriptedBackend
from .generation import MODES
from .loop import (
    Engine,
    build_manifest,
    file_sha256,
    load_benchmark,
    read_result_counts,
    write_results,
)
from .memory import LibraryCatalog, MemoryStore
from .metrics import DEFAULT_KS, InstanceCounts, aggregate
from .templates import TemplateSet

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVARIANT = 4


def _formatter(prog: str) -> argparse.HelpFormatter:
    # Pinned width keeps --help output stable for the golden-file test.
    return argparse.HelpFormatter(prog, width=96)


def _env_name(flag: str) -> str:
    return "MEMCODER_" + flag.strip("-").upper().replace("-", "_")


def _add(parser: argparse.ArgumentParser, flag: str, *, required: bool = False, **kwargs):
    """add_argument with env-var fallback and a self-documenting help line."""
    env = _env_name(flag)
    env_value = os.environ.get(env)
    if env_value is not None:
        kwargs["default"] = env_value
        required = False
    default = kwargs.get("default")
    note = f" [env {env}"
    if not required:
        note += f"; default {default!r}" if default is not None else "; no default"
    note += "]"
    kwargs["help"] = kwargs.get("help", "") + note
    if kwargs.get("action") in ("store_true",):
        kwargs.pop("type", None)
    parser.add_argument(flag, required=required, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memcoder",
        formatter_class=_formatter,
        description=(
            "Evolving-memory engine for private-library code generation: retrieve docs "
            "and usage guidelines, generate candidates, execute them in a sandbox, and "
            "evolve memory from the feedback."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser(
        "run",
        formatter_class=_formatter,
        help="process a benchmark stream through the closed loop",
    )
    _add(run, "--benchmark", required=True, help="benchmark JSONL file")
    _add(run, "--catalog", required=True, help="library catalog JSON file")
    _add(run, "--out", required=True, help="output directory for results/snapshot/manifest")
    _add(run, "--mode", default="memcoder", choices=MODES, help="run mode")
    _add(run, "--n-samples", default=10, type=int, help="samples per task")
    _add(run, "--k-task", default=3, type=int, help="similar historical tasks to retrieve")
    _add(run, "--k-doc", default=5, type=int, help="API docs to retrieve")
    _add(run, "--guidelines-per-api", default=3, type=int, help="guidelines injected per API")
    _add(run, "--snippets-per-block", default=1, type=int, help="snippets injected per API")
    _add(run, "--snippet-cap", default=4, type=int, help="snippet records retained per API")
    _add(run, "--accum-snippet-cap", default=16, type=int, help="snippet cap in accum mode")
    _add(run, "--w-init", default=1.0, type=float, help="initial guideline weight")
    _add(run, "--delta-plus", default=0.2, type=float, help="guideline reward step")
    _add(run, "--delta-minus", default=0.3, type=float, help="guideline penalty step")
    _add(run, "--w-min", default=0.1, type=float, help="guideline weight floor")
    _add(run, "--timeout-ms", default=10_000, type=int, help="per-candidate execution timeout")
    _add(run, "--token-budget", default=None, type=int, help="prompt token cap (off when unset)")
    _add(run, "--temperature", default=0.7, type=float, help="sampling temperature")
    _add(run, "--top-p", default=0.95, type=float, help="nucleus sampling mass")
    _add(run, "--max-tokens", default=4096, type=int, help="generation length cap")
    _add(run, "--model", default="", help="model name for the LLM backend")
    _add(run, "--seed", default=None, type=int, help="shuffle seed")
    _add(run, "--shuffle", action="store_true", default=False, help="seed-ordered task shuffle")
    _add(run, "--snapshot-in", default=None, help="memory snapshot to continue from")
    _add(run, "--templates", default=None, help="prompt template directory override")
    _add(run, "--fixtures", default=None, help="scripted LLM fixtures (JSON); enables offline runs")
    _add(run, "--runner", default=None, help="runner executable path, or 'stub'")
    _add(run, "--runner-fixtures", default=None, help="stub runner fixtures (JSON)")
    _add(run, "--embedder", default="test", choices=("test", "http"), help="embedding provider")
    _add(run, "--embed-dimension", default=256, type=int, help="test-provider dimension")

    ev = sub.add_parser(
        "eval",
        formatter_class=_formatter,
        help="compute Pass@k / Exec@k from a results file",
    )
    ev.add_argument("results", help="results JSONL file produced by `memcoder run`")
    _add(ev, "--ks", default="1,3,5", help="comma-separated k values")
    _add(ev, "--json", default=None, help="report JSON path (default: <results>.metrics.json)")
    _add(ev, "--csv", default=None, help="write per-instance rows as CSV")
    _add(ev, "--figures", default=None, help="directory for rendered report figures")

    mem = sub.add_parser(
        "memory",
        formatter_class=_formatter,
        help="inspect or export a memory snapshot",
    )
    mem.add_argument("subcommand", choices=("inspect", "export"))
    mem.add_argument("snapshot", help="snapshot JSON file")
    _add(mem, "--catalog", required=True, help="library catalog JSON file")
    _add(mem, "--output", default=None, help="export destination (default: stdout)")

    rp = sub.add_parser(
        "replay",
        formatter_class=_formatter,
        help="re-execute a run manifest and diff the outputs",
    )
    rp.add_argument("manifest", help="manifest JSON file from a previous run")
    _add(rp, "--out", default=None, help="output directory (default: temp dir)")
    return parser


# -- run ---------------------------------------------------------------------


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        mode=args.mode,
        n_samples=args.n_samples,
        k_task=args.k_task,
        k_doc=args.k_doc,
        guidelines_per_api=args.guidelines_per_api,
        snippets_per_block=args.snippets_per_block,
        snippet_cap=args.snippet_cap,
        accum_snippet_cap=args.accum_snippet_cap,
        w_init=args.w_init,
        delta_plus=args.delta_plus,
        delta_minus=args.delta_minus,
        w_min=args.w_min,
        timeout_ms=args.timeout_ms,
        token_budget=args.token_budget,
        temperature=args.temperature,
        top_p=args.top_p,
        max_tokens=args.max_tokens,
        model=args.model,
        seed=args.seed,
        shuffle=bool(args.shuffle),
        benchmark_path=args.benchmark,
        catalog_path=args.catalog,
        snapshot_in=args.snapshot_in,
        templates_dir=args.templates,
        llm_fixtures_path=args.fixtures,
        runner_path=args.runner,
        runner_fixtures_path=args.runner_fixtures,
        embedder=args.embedder,
        embed_dimension=args.embed_dimension,
    )


def _build_engine(config: RunConfig) -> Engine:
    if config.benchmark_path is None or config.catalog_path is None:
        raise ConfigError("a run needs --benchmark and --catalog")
    catalog = LibraryCatalog.from_json_file(config.catalog_path)
    if config.embedder == "test":
        provider = DeterministicProvider(config.embed_dimension)
    else:
        provider = HttpProvider()
    catalog.build_index(provider)

    if config.snapshot_in:
        store = MemoryStore.load_snapshot(config.snapshot_in, catalog)
    else:
        store = MemoryStore(catalog, config.weight_params())

    if config.llm_fixtures_path:
        llm = ScriptedBackend.from_file(config.llm_fixtures_path)
    else:
        llm = HttpBackend(model=config.model)

    if config.runner_path is None:
        raise ConfigError("no runner configured: pass --runner PATH or --runner stub")
    if config.runner_path == "stub":
        if not config.runner_fixtures_path:
            raise ConfigError("--runner stub needs --runner-fixtures")
        runner = StubRunner.from_file(config.runner_fixtures_path)
    else:
        runner = SubprocessRunner(config.runner_path)

    templates = TemplateSet.load(config.templates_dir)
    return Engine(
        store=store,
        provider=provider,
        llm=llm,
        runner=runner,
        templates=templates,
        config=config,
    )


def _execute_run(config: RunConfig, out_dir: str) -> dict[str, str]:
    """Run the stream and write results + snapshot + manifest into out_dir."""
    engine = _build_engine(config)
    tasks = load_benchmark(config.benchmark_path)
    if config.mode == "oracle":
        missing = [t.task_id for t in tasks if not t.gold_apis]
        if missing:
            raise ConfigError(f"oracle mode needs gold_apis on every task; missing: {missing}")
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "results": os.path.join(out_dir, "results.jsonl"),
        "snapshot": os.path.join(out_dir, "snapshot.json"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
    results = engine.run_stream(tasks, snapshot_out=paths["snapshot"])
    engine.store.save_snapshot(paths["snapshot"])
    write_results(results, paths["results"])
    manifest = build_manifest(
        config,
        engine.templates.version,
        input_paths={
            "benchmark": config.benchmark_path,
            "catalog": config.catalog_path,
            "llm_fixtures": config.llm_fixtures_path,
            "runner_fixtures": config.runner_fixtures_path,
            "snapshot_in": config.snapshot_in,
        },
        output_paths={"results": paths["results"], "snapshot": paths["snapshot"]},
    )
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return paths


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    paths = _execute_run(config, args.out)
    report_rows = len(load_benchmark(config.benchmark_path))
    print(f"processed {report_rows} tasks in mode {config.mode}")
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------


def _counts_from_results(path: str) -> list[InstanceCounts]:
    rows = read_result_counts(path)
    counts = []
    for row in rows:
        try:
            counts.append(
                InstanceCounts(
                    task_id=row["task_id"],
                    n=int(row["n_samples"]),
                    c_pass=int(row["c_pass"]),
                    c_exec=int(row["c_exec"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise BenchmarkFormatError(f"{path}: malformed result row: {exc}") from exc
    return counts


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        ks = tuple(int(k) for k in str(args.ks).split(","))
    except ValueError as exc:
        raise ConfigError(f"--ks must be comma-separated integers: {args.ks!r}") from exc
    counts = _counts_from_results(args.results)
    try:
        report = aggregate(counts, ks or DEFAULT_KS)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(report.to_table())
    json_path = args.json or (args.results + ".metrics.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    print(f"report JSON: {json_path}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("\n".join(report.to_csv_rows()))
            fh.write("\n")
        print(f"per-instance CSV: {args.csv}")
    if args.figures:
        from .figures import render_report_figures

        for path in render_report_figures(report, args.figures):
            print(f"figure: {path}")
    return EXIT_OK


# -- memory -------------------------------------------------------------------


def _weight(value: float) -> str:
    return f"{value:g}"


def inspect_text(store: MemoryStore) -> str:
    lines = [
        f"{len(store.task_entries)} task entries, {len(store.api_entries)} API entries, "
        f"seq={store.seq_counter}"
    ]
    for name, entry in sorted(store.api_entries.items()):
        successes = sum(1 for s in entry.snippets if s.outcome.value == "Success")
        lines.append(
            f"{name}: {len(entry.guidelines)} guidelines, {len(entry.snippets)} snippets "
            f"({successes} success)"
        )
        for g in sorted(entry.guidelines, key=lambda g: (-g.weight, g.origin_seq, g.guideline_id)):
            lines.append(f"  w={_weight(g.weight)} (id {g.guideline_id}, seq {g.origin_seq}): {g.text}")
    return "\n".join(lines)


def export_digest(store: MemoryStore) -> str:
    """Human-readable digest: guidelines grouped under API headers."""
    lines = [f"# Usage guideline digest: {store.catalog.library or 'library'}", ""]
    lines.append(
        f"{len(store.task_entries)} task entries, {len(store.api_entries)} API profiles."
    )
    for name, entry in sorted(store.api_entries.items()):
        if not entry.guidelines:
            continue
        lines.append("")
        lines.append(f"## {name}")
        for g in sorted(entry.guidelines, key=lambda g: (-g.weight, g.origin_seq, g.guideline_id)):
            lines.append(f"- (w={_weight(g.weight)}) {g.text}")
    task_lines = [e.task_guideline for e in store.task_entries if e.task_guideline]
    if task_lines:
        lines.append("")
        lines.append("## Cross-API orchestration")
        seen: set[str] = set()
        for text in task_lines:
            if text not in seen:
                seen.add(text)
                lines.append(f"- {text}")
    return "\n".join(lines) + "\n"


def cmd_memory(args: argparse.Namespace) -> int:
    catalog = LibraryCatalog.from_json_file(args.catalog)
    store = MemoryStore.load_snapshot(args.snapshot, catalog)
    if args.subcommand == "inspect":
        print(inspect_text(store))
        return EXIT_OK
    digest = export_digest(store)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(digest)
        print(f"digest: {args.output}")
    else:
        print(digest, end="")
    return EXIT_OK


# -- replay --------------------------------------------------------------------


def cmd_replay(args: argparse.Namespace) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    config = RunConfig.from_dict(manifest["config"])
    out_dir = args.out or tempfile.mkdtemp(prefix="memcoder-replay-")
    paths = _execute_run(config, out_dir)
    recorded = manifest["outputs"]
    mismatched = []
    for name in sorted(recorded):
        actual = file_sha256(paths[name])
        status = "identical" if actual == recorded[name] else "DIFFERS"
        if actual != recorded[name]:
            mismatched.append(name)
        print(f"{name}: {status}")
    if mismatched:
        print(f"replay mismatch in: {', '.join(mismatched)} (outputs in {out_dir})")
        return EXIT_INVARIANT
    print(f"replay identical (outputs in {out_dir})")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": cmd_run,
        "eval": cmd_eval,
        "memory": cmd_memory,
        "replay": cmd_replay,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BenchmarkFormatError as exc:
        print(f"benchmark error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MemcoderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
