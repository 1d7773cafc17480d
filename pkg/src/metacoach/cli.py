"""Command-line entry point.

Subcommands mirror the pipeline stages: plan, generate, validate, stats,
bench, score, report. Every artifact-producing run gets its own directory
under the output root with a manifest recording config and file digests,
so any result on disk can be traced back to exactly what produced it.

Exit codes: 0 success, 1 usage or configuration, 2 data, 3 backend.
Errors print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import copy
import datetime
import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Callable, Final, Sequence

from .backends import BackendSpec
from .bench import (
    PromptMode,
    emit_report,
    read_predictions,
    report_from_json,
    run_benchmark,
    score_run,
    template_fingerprint,
    write_predictions,
)
from .dialogue import (
    Conversation,
    EmptyDataset,
    SchemaError,
    corpus_stats,
    extract_benchmark_instances,
    read_conversations,
    read_problems,
    write_conversations,
)
from .engine import EngineConfig, EngineMode, generate_corpus
from .errors import BackendError, ConfigError, DataError
from .planner import (
    InfeasiblePlan,
    PlannerConfig,
    build_plan,
    read_plan_rows,
    sample_profile,
    write_plan_rows,
)
from .seeding import derive_seed
from .validation import load_lexicon, report_to_json, rows_to_csv, validate_corpus

_CONFIG_DEFAULTS: Final[dict] = {
    "seed": 0,
    "paths": {
        "out_dir": "runs",
        "lexicon": None,
    },
    "planner": {
        "min_events": 4,
        "max_events": 8,
        "ni_target": [0.35, 0.50],
        "max_gaps": 2,
        "continue_prompt_rate": 0.05,
    },
    "engine": {
        "mode": "simulator",
        "delayed_threshold": 3,
        "max_turns": 24,
    },
    "backend": {
        "kind": "template",
        "endpoint": "",
        "model": "local",
        "auth_env": None,
        "timeout_s": 60.0,
        "max_retries": 2,
        "backoff_s": 0.25,
        "cache_path": "",
        "mock_response": "MOVE: NO_INTERVENTION",
        "mock_script": [],
    },
    "benchmark": {
        "mode": "full",
        "concurrency": 1,
        "dataset": "all",
    },
}


def _merge_config(defaults: dict, override: dict, where: str = "config") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {where}.{key}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _merge_config(defaults[key], value, f"{where}.{key}")
        else:
            merged[key] = value
    return merged


def load_config(path: str | Path | None) -> dict:
    """Defaults merged with the JSON config file; unknown keys rejected."""
    if path is None:
        return copy.deepcopy(_CONFIG_DEFAULTS)
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"config file not found: {file}")
    try:
        loaded = json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {file} is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ConfigError(f"config file {file} must hold a JSON object")
    return _merge_config(_CONFIG_DEFAULTS, loaded)


def _apply_flags(config: dict, args: argparse.Namespace) -> dict:
    # flags win over file values
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is not None:
        config["paths"]["out_dir"] = args.out
    if args.workers is not None:
        config["benchmark"]["concurrency"] = args.workers
    if args.dataset is not None:
        config["benchmark"]["dataset"] = args.dataset
    if args.mode is not None:
        config["benchmark"]["mode"] = args.mode
    if args.backend is not None:
        config["backend"]["kind"] = args.backend
    return config


def _planner_config(config: dict) -> PlannerConfig:
    cfg = config["planner"]
    target = cfg["ni_target"]
    if not (isinstance(target, (list, tuple)) and len(target) == 2):
        raise ConfigError("planner.ni_target must be [low, high]")
    return PlannerConfig(
        min_events=int(cfg["min_events"]),
        max_events=int(cfg["max_events"]),
        ni_target=(float(target[0]), float(target[1])),
        max_gaps=int(cfg["max_gaps"]),
        continue_prompt_rate=float(cfg["continue_prompt_rate"]),
    )


def _engine_config(config: dict) -> EngineConfig:
    cfg = config["engine"]
    try:
        mode = EngineMode(cfg["mode"])
    except ValueError as exc:
        raise ConfigError(f"unknown engine mode {cfg['mode']!r}") from exc
    return EngineConfig(
        mode=mode,
        seed=int(config["seed"]),
        delayed_threshold=int(cfg["delayed_threshold"]),
        max_turns=int(cfg["max_turns"]),
    )


def _backend_spec(config: dict) -> BackendSpec:
    cfg = config["backend"]
    script = cfg["mock_script"]
    if not isinstance(script, (list, tuple)):
        raise ConfigError("backend.mock_script must be a list of [key, text] pairs")
    pairs = []
    for item in script:
        if not (isinstance(item, (list, tuple)) and len(item) == 2):
            raise ConfigError("backend.mock_script entries must be [key, text] pairs")
        pairs.append((str(item[0]), str(item[1])))
    return BackendSpec(
        kind=str(cfg["kind"]),
        endpoint=str(cfg["endpoint"]),
        model=str(cfg["model"]),
        auth_env=cfg["auth_env"],
        timeout_s=float(cfg["timeout_s"]),
        max_retries=int(cfg["max_retries"]),
        backoff_s=float(cfg["backoff_s"]),
        cache_path=str(cfg["cache_path"]),
        mock_script=tuple(pairs),
        mock_response=str(cfg["mock_response"]),
    )


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class _RunDir:
    """One run's artifact directory: outputs, logs, and a final manifest.

    Tracks everything it writes, so a failed run can delete its partial
    outputs instead of leaving misleading files behind.
    """

    def __init__(self, root: Path, subcommand: str) -> None:
        stamp = datetime.datetime.now(datetime.timezone.utc)
        base = f"{subcommand}-{stamp.strftime('%Y%m%d-%H%M%S-%f')}"
        path = root / base
        bump = 1
        while path.exists():
            bump += 1
            path = root / f"{base}-{bump}"
        path.mkdir(parents=True)
        self.path = path
        self.run_id = path.name
        self.subcommand = subcommand
        self.timestamp = stamp.isoformat()
        self._written: list[Path] = []
        self.outputs: dict[str, str] = {}

    def emit_text(self, name: str, text: str) -> Path:
        target = self.path / name
        target.write_text(text, encoding="utf-8")
        self._written.append(target)
        self.outputs[name] = _digest_file(target)
        return target

    def emit_via(self, name: str, writer: Callable[[Path], None]) -> Path:
        target = self.path / name
        writer(target)
        self._written.append(target)
        self.outputs[name] = _digest_file(target)
        return target

    def adopt(self, target: Path) -> None:
        """Register a file some library call already wrote into this run."""
        self._written.append(target)
        self.outputs[target.name] = _digest_file(target)

    def write_manifest(
        self,
        config: dict,
        inputs: dict[str, Path],
        backend: BackendSpec | None = None,
        template: dict | None = None,
        extras: dict | None = None,
    ) -> Path:
        manifest = {
            "run_id": self.run_id,
            "timestamp": self.timestamp,
            "subcommand": self.subcommand,
            "seed": config["seed"],
            "config_sha256": _config_digest(config),
            "template": template,
            "backend": backend.redacted() if backend is not None else None,
            "inputs": {
                label: {"path": str(p), "sha256": _digest_file(p)}
                for label, p in inputs.items()
            },
            "outputs": self.outputs,
        }
        if extras:
            manifest.update(extras)
        target = self.path / "manifest.json"
        target.write_text(
            json.dumps(manifest, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        self._written.append(target)
        return target

    def abort(self) -> None:
        for target in self._written:
            try:
                target.unlink()
            except OSError:
                pass
        try:
            self.path.rmdir()
        except OSError:
            pass


def _filter_dataset(conversations: list[Conversation], which: str) -> list[Conversation]:
    if which == "all":
        return conversations
    return [c for c in conversations if c.problem.dataset == which]


def _summary(run: _RunDir, **extras: Any) -> None:
    line = {"run_id": run.run_id, "dir": str(run.path), **extras}
    print(json.dumps(line, ensure_ascii=False))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_plan(config: dict, args: argparse.Namespace, run: _RunDir) -> None:
    source = Path(args.input)
    problems = read_problems(source)
    which = config["benchmark"]["dataset"]
    if which != "all":
        problems = [p for p in problems if p.dataset == which]
    if not problems:
        raise EmptyDataset("no problems to plan for")
    spec = _backend_spec(config)
    planner_cfg = _planner_config(config)
    seed = int(config["seed"])
    rows = []
    skipped: list[dict] = []
    for problem in problems:
        profile = sample_profile(seed, problem.id)
        try:
            plan = build_plan(
                problem,
                profile,
                spec,
                planner_cfg,
                seed=derive_seed(seed, "plan", problem.id),
            )
        except InfeasiblePlan as exc:
            skipped.append({"problem_id": problem.id, "reason": str(exc)})
            continue
        rows.append((problem, plan))
    if not rows:
        raise EmptyDataset("every plan was infeasible under this config")
    run.emit_via("plans.jsonl", lambda p: write_plan_rows(p, rows))
    log = "".join(
        f"infeasible {item['problem_id']}: {item['reason']}\n" for item in skipped
    )
    run.emit_text("plan.log", log or "all plans admissible\n")
    run.write_manifest(
        config,
        inputs={"problems": source},
        backend=spec,
        extras={"planned": len(rows), "infeasible": skipped},
    )
    _summary(run, planned=len(rows), infeasible=len(skipped))


def _cmd_generate(config: dict, args: argparse.Namespace, run: _RunDir) -> None:
    source = Path(args.input)
    rows = read_plan_rows(source)
    if not rows:
        raise EmptyDataset("no plan rows to generate from")
    engine_cfg = _engine_config(config)
    backend = None
    if engine_cfg.mode is EngineMode.BACKEND:
        backend = _backend_spec(config)
    conversations, gen_manifest = generate_corpus(rows, engine_cfg, backend=backend)
    run.emit_via(
        "conversations.jsonl", lambda p: write_conversations(p, conversations)
    )
    run.write_manifest(
        config,
        inputs={"plans": source},
        backend=backend,
        extras={"generation": gen_manifest},
    )
    _summary(run, conversations=len(conversations), generation=gen_manifest)


def _cmd_validate(config: dict, args: argparse.Namespace, run: _RunDir) -> None:
    source = Path(args.input)
    conversations = _filter_dataset(
        read_conversations(source), config["benchmark"]["dataset"]
    )
    if not conversations:
        raise EmptyDataset("no conversations to validate")
    lexicon = load_lexicon(config["paths"]["lexicon"])
    rows, aggregates = validate_corpus(conversations, lexicon)
    payload = report_to_json(rows, aggregates)
    run.emit_text(
        "validation_report.json", json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
    )
    run.emit_text("validation_rows.csv", rows_to_csv(rows))
    run.write_manifest(config, inputs={"conversations": source})
    _summary(run, aggregates=aggregates)


def _cmd_stats(config: dict, args: argparse.Namespace, run: _RunDir) -> None:
    source = Path(args.input)
    conversations = _filter_dataset(
        read_conversations(source), config["benchmark"]["dataset"]
    )
    if not conversations:
        raise EmptyDataset("no conversations to describe")
    stats = corpus_stats(conversations)
    print(json.dumps(stats, indent=2, ensure_ascii=False))
    run.emit_text("stats.json", json.dumps(stats, indent=2, ensure_ascii=False) + "\n")
    run.write_manifest(config, inputs={"conversations": source})
    _summary(run)


def _cmd_bench(config: dict, args: argparse.Namespace, run: _RunDir) -> None:
    source = Path(args.input)
    conversations = _filter_dataset(
        read_conversations(source), config["benchmark"]["dataset"]
    )
    instances = extract_benchmark_instances(conversations)
    if not instances:
        raise EmptyDataset("no benchmark instances in the input")
    try:
        mode = PromptMode(config["benchmark"]["mode"])
    except ValueError as exc:
        raise ConfigError(
            f"unknown benchmark mode {config['benchmark']['mode']!r}"
        ) from exc
    spec = _backend_spec(config)
    predictions = run_benchmark(
        instances, spec, mode, concurrency=int(config["benchmark"]["concurrency"])
    )
    run.emit_via("predictions.jsonl", lambda p: write_predictions(predictions, p))
    failures = sum(1 for p in predictions if not p.ok)
    run.write_manifest(
        config,
        inputs={"conversations": source},
        backend=spec,
        template=template_fingerprint(mode),
        extras={"instances": len(instances), "parse_failures": failures},
    )
    _summary(run, instances=len(instances), parse_failures=failures)


def _cmd_score(config: dict, args: argparse.Namespace, run: _RunDir) -> None:
    pred_path = Path(args.input)
    conv_path = Path(args.conversations)
    predictions = read_predictions(pred_path)
    conversations = _filter_dataset(
        read_conversations(conv_path), config["benchmark"]["dataset"]
    )
    instances = extract_benchmark_instances(conversations)
    try:
        mode = PromptMode(config["benchmark"]["mode"])
    except ValueError as exc:
        raise ConfigError(
            f"unknown benchmark mode {config['benchmark']['mode']!r}"
        ) from exc
    report = score_run(predictions, instances, template_fingerprint(mode))
    paths = emit_report(report, run.path)
    for path in paths.values():
        run.adopt(path)
    run.write_manifest(
        config,
        inputs={"predictions": pred_path, "conversations": conv_path},
        template=template_fingerprint(mode),
    )
    _summary(
        run,
        overall_accuracy=report.overall_accuracy,
        ni_detection=report.ni_detection,
        invalid=report.invalid.n,
    )


def _cmd_report(config: dict, args: argparse.Namespace, run: _RunDir) -> None:
    source = Path(args.input)
    try:
        payload = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source} is not valid JSON: {exc}") from exc
    report = report_from_json(payload)
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    paths = emit_report(report, run.path, formats)
    for path in paths.values():
        run.adopt(path)
    run.write_manifest(config, inputs={"report": source})
    _summary(run, formats=list(paths))


_COMMANDS: Final[dict[str, Callable[[dict, argparse.Namespace, _RunDir], None]]] = {
    "plan": _cmd_plan,
    "generate": _cmd_generate,
    "validate": _cmd_validate,
    "stats": _cmd_stats,
    "bench": _cmd_bench,
    "score": _cmd_score,
    "report": _cmd_report,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; route through ConfigError
    # so usage problems land on exit code 1 like other config mistakes.
    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(f"usage: {message}")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="base RNG seed")
    common.add_argument("--out", default=None, help="output root directory")
    common.add_argument("--workers", type=int, default=None, help="worker count")
    common.add_argument(
        "--dataset",
        choices=["gsm8k", "math", "aime", "all"],
        default=None,
        help="restrict to one source dataset",
    )
    common.add_argument(
        "--mode", choices=["full", "minimal"], default=None, help="prompt mode"
    )
    common.add_argument(
        "--backend",
        choices=["http", "template", "mock", "replay"],
        default=None,
        help="backend kind override",
    )
    parser = _Parser(
        prog="metacoach",
        description="Plan, generate, validate, and benchmark coaching dialogues.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    helps = {
        "plan": ("problems JSONL", "build one pedagogical plan per problem"),
        "generate": ("plans JSONL", "generate conversations from plans"),
        "validate": ("conversations JSONL", "run the validator suite"),
        "stats": ("conversations JSONL", "print corpus statistics"),
        "bench": ("conversations JSONL", "run the move-prediction benchmark"),
        "score": ("predictions JSONL", "score predictions against gold moves"),
        "report": ("benchmark report JSON", "re-emit a stored report"),
    }
    for name, (input_help, blurb) in helps.items():
        p = sub.add_parser(name, parents=[common], help=blurb)
        p.add_argument("input", help=input_help)
        if name == "score":
            p.add_argument(
                "conversations", help="conversations JSONL the predictions came from"
            )
        if name == "report":
            p.add_argument(
                "--formats", default="json,csv,md", help="comma-separated formats"
            )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    run: _RunDir | None = None
    try:
        args = parser.parse_args(argv)
        config = _apply_flags(load_config(args.config), args)
        out_root = Path(config["paths"]["out_dir"])
        run = _RunDir(out_root, args.subcommand)
        _COMMANDS[args.subcommand](config, args, run)
        return 0
    except FileNotFoundError as exc:
        if run is not None:
            run.abort()
        _print_error(ConfigError(f"file not found: {exc.filename or exc}"), 1)
        return 1
    except ConfigError as exc:
        if run is not None:
            run.abort()
        _print_error(exc, 1)
        return 1
    except DataError as exc:
        if run is not None:
            run.abort()
        _print_error(exc, 2)
        return 2
    except BackendError as exc:
        if run is not None:
            run.abort()
        _print_error(exc, 3)
        return 3


def _print_error(exc: Exception, code: int) -> None:
    payload = {
        "error": {"type": type(exc).__name__, "message": str(exc)},
        "exit_code": code,
    }
    print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
