"""Coach-move prediction benchmark: prompt building, scoring, reports.

Each benchmark instance is one coach decision point. The harness renders a
prompt from a versioned template, asks a backend for the next move, and
scores predictions against the gold labels with per-move and per-category
breakdowns. Invalid outputs are first-class: they get their own confusion
column and count against accuracy, never toward any real move.
"""

from __future__ import annotations

import hashlib
import json
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Final, Iterable, Sequence

import numpy as np

from .backends import (
    BackendError,
    BackendSpec,
    ChatMessage,
    GenerationRequest,
    SamplingParams,
    build_backend,
)
from .dialogue import BenchmarkInstance, EmptyDataset, Role, SchemaError, Turn
from .errors import ConfigError, DataError
from .taxonomy import (
    FACTOR_OF_MOVE,
    MOVE_EXAMPLES,
    MOVE_FUNCTIONS,
    CoachMove,
    MaiFactor,
    ParseFailure,
    parse_move_label,
)

__all__ = [
    "PromptMode",
    "Prediction",
    "MoveStats",
    "InvalidStats",
    "DatasetStats",
    "BenchmarkReport",
    "IdMismatch",
    "MOVE_ORDER",
    "FACTOR_ORDER",
    "CONFUSION_COLUMNS",
    "CATEGORY_COLUMNS",
    "INVALID_LABEL",
    "template_text",
    "template_fingerprint",
    "render_history",
    "build_prompt",
    "extract_move",
    "run_benchmark",
    "score_run",
    "bias_pp",
    "fold_category_confusion",
    "report_to_json",
    "report_from_json",
    "report_to_csv",
    "report_to_markdown",
    "emit_report",
    "write_predictions",
    "read_predictions",
]


class IdMismatch(DataError):
    """Prediction ids do not cover the instance ids exactly."""


class PromptMode(Enum):
    FULL = "full"
    MINIMAL = "minimal"


_TEMPLATE_FILES: Final[dict[PromptMode, str]] = {
    PromptMode.FULL: "full_v1.txt",
    PromptMode.MINIMAL: "minimal_v1.txt",
}

MOVE_ORDER: Final[tuple[CoachMove, ...]] = tuple(CoachMove)
FACTOR_ORDER: Final[tuple[MaiFactor, ...]] = tuple(MaiFactor)
INVALID_LABEL: Final[str] = "Invalid"
CONFUSION_COLUMNS: Final[tuple[str, ...]] = tuple(
    m.canonical_name for m in MOVE_ORDER
) + (INVALID_LABEL,)
CATEGORY_COLUMNS: Final[tuple[str, ...]] = tuple(f.value for f in FACTOR_ORDER) + (
    INVALID_LABEL,
)

_MOVE_LINE: Final = re.compile(r"^\s*MOVE:\s*(.+?)\s*$", re.MULTILINE)


@lru_cache(maxsize=None)
def template_text(mode: PromptMode) -> str:
    """Raw template body for ``mode``, straight from the versioned file."""
    name = _TEMPLATE_FILES[mode]
    return (
        resources.files("metacoach").joinpath("templates", name).read_text("utf-8")
    )


def template_fingerprint(mode: PromptMode) -> dict:
    """Identity of the prompt template, recorded in every report."""
    text = template_text(mode)
    return {
        "mode": mode.value,
        "file": _TEMPLATE_FILES[mode],
        "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
    }


def _move_definitions() -> str:
    lines = []
    for move in MOVE_ORDER:
        factor = FACTOR_OF_MOVE[move].value.capitalize()
        lines.append(
            f"{move.canonical_name} ({factor}): {MOVE_FUNCTIONS[move]}."
            f' Example: "{MOVE_EXAMPLES[move]}"'
        )
    return "\n".join(lines)


def _move_names() -> str:
    return "\n".join(m.canonical_name for m in MOVE_ORDER)


def render_history(history: Sequence[Turn]) -> str:
    """Transcript block shown to the predictor. Coach turns include their
    move label so the model sees the coaching record so far."""
    lines = []
    for turn in history:
        if turn.role is Role.STUDENT:
            lines.append(f"Student: {turn.text}")
        elif turn.role is Role.SYSTEM:
            lines.append(f"System: {turn.text}")
        else:
            lines.append(f"Coach [{turn.move.canonical_name}]: {turn.text}".rstrip())
    return "\n".join(lines)


def build_prompt(instance: BenchmarkInstance, mode: PromptMode = PromptMode.FULL) -> str:
    """Deterministic prompt for one decision point.

    Depends only on the instance, the mode, and the template file version;
    no clock, no RNG.
    """
    template = string.Template(template_text(mode))
    return template.substitute(
        problem=instance.context.problem.statement,
        history=render_history(instance.context.history),
        move_definitions=_move_definitions(),
        move_names=_move_names(),
    )


def extract_move(raw: str) -> CoachMove | ParseFailure:
    """Pull the predicted move out of raw model output.

    Takes the last ``MOVE:`` line when present; otherwise tries the whole
    stripped text as a bare label. Never raises.
    """
    found = _MOVE_LINE.findall(raw)
    label = found[-1] if found else raw.strip()
    return parse_move_label(label)


@dataclass(frozen=True, slots=True)
class Prediction:
    instance_id: str
    raw_output: str
    parsed: CoachMove | ParseFailure
    latency_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return isinstance(self.parsed, CoachMove)


def run_benchmark(
    instances: Iterable[BenchmarkInstance],
    backend,
    mode: PromptMode = PromptMode.FULL,
    *,
    concurrency: int = 1,
    sampling: SamplingParams | None = None,
) -> list[Prediction]:
    """Collect one prediction per instance, in input order.

    ``backend`` is a BackendSpec or any object with a ``complete`` method.
    A per-instance backend failure becomes a ParseFailure prediction with
    the error note; only configuration errors abort the run. Concurrency
    is honored for http backends; deterministic kinds run sequentially so
    recorded caches stay byte-stable.
    """
    items = list(instances)
    if not items:
        raise EmptyDataset("no benchmark instances to run")
    if concurrency < 1:
        raise ConfigError(f"concurrency must be >= 1, got {concurrency}")
    threaded = False
    if isinstance(backend, BackendSpec):
        threaded = backend.kind == "http" and concurrency > 1
        backend = build_backend(backend)
    params = sampling if sampling is not None else SamplingParams()

    def one(instance: BenchmarkInstance) -> Prediction:
        prompt = build_prompt(instance, mode)
        request = GenerationRequest(
            messages=(ChatMessage(role="user", content=prompt),),
            sampling=params,
            tag=instance.instance_id,
        )
        try:
            response = backend.complete(request)
        except BackendError as exc:
            note = f"backend error: {exc}"
            return Prediction(
                instance_id=instance.instance_id,
                raw_output=note,
                parsed=ParseFailure(note),
                latency_ms=0.0,
            )
        return Prediction(
            instance_id=instance.instance_id,
            raw_output=response.text,
            parsed=extract_move(response.text),
            latency_ms=response.latency_ms,
        )

    if threaded:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            return list(pool.map(one, items))
    return [one(instance) for instance in items]


@dataclass(frozen=True, slots=True)
class MoveStats:
    accuracy: float | None
    n: int
    gt_share: float
    pred_share: float
    bias: float


@dataclass(frozen=True, slots=True)
class InvalidStats:
    n: int
    pred_share: float


@dataclass(frozen=True, slots=True)
class DatasetStats:
    n: int
    overall_accuracy: float
    ni_detection: float | None


@dataclass(frozen=True)
class BenchmarkReport:
    n: int
    overall_accuracy: float
    ni_detection: float | None
    per_move: dict[CoachMove, MoveStats]
    invalid: InvalidStats
    move_confusion: tuple[tuple[int, ...], ...]
    category_confusion: tuple[tuple[int, ...], ...]
    per_dataset: dict[str, DatasetStats]
    template: dict | None = None


def bias_pp(gt_share: float, pred_share: float) -> float:
    """Prediction bias in percentage points: share predicted minus share
    in the gold labels. Positive means over-predicted."""
    return pred_share - gt_share


def fold_category_confusion(
    move_confusion: Sequence[Sequence[int]],
) -> tuple[tuple[int, ...], ...]:
    """Collapse the 11x12 move confusion into factors. Invalid keeps its
    own predicted column, so the result is 5x6."""
    matrix = np.asarray(move_confusion, dtype=np.int64)
    if matrix.shape != (len(MOVE_ORDER), len(MOVE_ORDER) + 1):
        raise DataError(f"move confusion must be 11x12, got {matrix.shape}")
    folded = np.zeros((len(FACTOR_ORDER), len(FACTOR_ORDER) + 1), dtype=np.int64)
    findex = {factor: i for i, factor in enumerate(FACTOR_ORDER)}
    for i, gold in enumerate(MOVE_ORDER):
        gi = findex[FACTOR_OF_MOVE[gold]]
        for j, pred in enumerate(MOVE_ORDER):
            folded[gi, findex[FACTOR_OF_MOVE[pred]]] += matrix[i, j]
        folded[gi, -1] += matrix[i, -1]
    return tuple(tuple(int(x) for x in row) for row in folded)


def score_run(
    predictions: Sequence[Prediction],
    instances: Sequence[BenchmarkInstance],
    template_info: dict | None = None,
) -> BenchmarkReport:
    """Score predictions against gold moves.

    Prediction ids must cover instance ids exactly, else IdMismatch. A
    ParseFailure counts as incorrect and lands in the Invalid confusion
    column only. Shares are percentages over all scored instances.
    """
    items = list(instances)
    if not items:
        raise EmptyDataset("no instances to score")
    inst_ids = [inst.instance_id for inst in items]
    if len(set(inst_ids)) != len(inst_ids):
        raise IdMismatch("duplicate instance ids in the gold set")
    by_id: dict[str, Prediction] = {}
    for pred in predictions:
        if pred.instance_id in by_id:
            raise IdMismatch(f"duplicate prediction for {pred.instance_id!r}")
        by_id[pred.instance_id] = pred
    missing = set(inst_ids) - set(by_id)
    extra = set(by_id) - set(inst_ids)
    if missing or extra:
        raise IdMismatch(
            f"{len(missing)} instances without predictions, "
            f"{len(extra)} predictions without instances"
            + (f" (e.g. {sorted(missing | extra)[0]!r})" if missing or extra else "")
        )

    n = len(items)
    width = len(MOVE_ORDER)
    midx = {move: i for i, move in enumerate(MOVE_ORDER)}
    confusion = np.zeros((width, width + 1), dtype=np.int64)
    ds_totals: dict[str, list[int]] = {}
    for inst in items:
        parsed = by_id[inst.instance_id].parsed
        row = midx[inst.gold_move]
        col = width if isinstance(parsed, ParseFailure) else midx[parsed]
        confusion[row, col] += 1
        # per-dataset tallies: [n, correct, ni_n, ni_correct]
        tally = ds_totals.setdefault(inst.dataset, [0, 0, 0, 0])
        hit = col == row
        tally[0] += 1
        tally[1] += int(hit)
        if inst.gold_move is CoachMove.NO_INTERVENTION:
            tally[2] += 1
            tally[3] += int(hit)

    row_n = confusion.sum(axis=1)
    col_n = confusion.sum(axis=0)
    overall = float(np.trace(confusion[:, :width])) / n
    per_move: dict[CoachMove, MoveStats] = {}
    for i, move in enumerate(MOVE_ORDER):
        gold_count = int(row_n[i])
        gt_share = 100.0 * gold_count / n
        pred_share = 100.0 * int(col_n[i]) / n
        per_move[move] = MoveStats(
            accuracy=(int(confusion[i, i]) / gold_count) if gold_count else None,
            n=gold_count,
            gt_share=gt_share,
            pred_share=pred_share,
            bias=bias_pp(gt_share, pred_share),
        )
    invalid_n = int(col_n[width])
    per_dataset = {
        name: DatasetStats(
            n=tally[0],
            overall_accuracy=tally[1] / tally[0],
            ni_detection=(tally[3] / tally[2]) if tally[2] else None,
        )
        for name, tally in sorted(ds_totals.items())
    }
    move_matrix = tuple(tuple(int(x) for x in row) for row in confusion)
    return BenchmarkReport(
        n=n,
        overall_accuracy=overall,
        ni_detection=per_move[CoachMove.NO_INTERVENTION].accuracy,
        per_move=per_move,
        invalid=InvalidStats(n=invalid_n, pred_share=100.0 * invalid_n / n),
        move_confusion=move_matrix,
        category_confusion=fold_category_confusion(move_matrix),
        per_dataset=per_dataset,
        template=template_info,
    )


def report_to_json(report: BenchmarkReport) -> dict:
    return {
        "n": report.n,
        "overall_accuracy": report.overall_accuracy,
        "ni_detection": report.ni_detection,
        "per_move": {
            move.canonical_name: {
                "accuracy": stats.accuracy,
                "n": stats.n,
                "gt_share": stats.gt_share,
                "pred_share": stats.pred_share,
                "bias": stats.bias,
            }
            for move, stats in report.per_move.items()
        },
        "invalid": {"n": report.invalid.n, "pred_share": report.invalid.pred_share},
        "move_confusion": {
            "gold": list(CONFUSION_COLUMNS[:-1]),
            "predicted": list(CONFUSION_COLUMNS),
            "counts": [list(row) for row in report.move_confusion],
        },
        "category_confusion": {
            "gold": list(CATEGORY_COLUMNS[:-1]),
            "predicted": list(CATEGORY_COLUMNS),
            "counts": [list(row) for row in report.category_confusion],
        },
        "per_dataset": {
            name: {
                "n": stats.n,
                "overall_accuracy": stats.overall_accuracy,
                "ni_detection": stats.ni_detection,
            }
            for name, stats in report.per_dataset.items()
        },
        "template": report.template,
    }


def report_from_json(payload: dict) -> BenchmarkReport:
    try:
        per_move = {}
        for move in MOVE_ORDER:
            cell = payload["per_move"][move.canonical_name]
            per_move[move] = MoveStats(
                accuracy=cell["accuracy"],
                n=cell["n"],
                gt_share=cell["gt_share"],
                pred_share=cell["pred_share"],
                bias=cell["bias"],
            )
        per_dataset = {
            name: DatasetStats(
                n=cell["n"],
                overall_accuracy=cell["overall_accuracy"],
                ni_detection=cell["ni_detection"],
            )
            for name, cell in payload["per_dataset"].items()
        }
        return BenchmarkReport(
            n=payload["n"],
            overall_accuracy=payload["overall_accuracy"],
            ni_detection=payload["ni_detection"],
            per_move=per_move,
            invalid=InvalidStats(
                n=payload["invalid"]["n"],
                pred_share=payload["invalid"]["pred_share"],
            ),
            move_confusion=tuple(
                tuple(int(x) for x in row)
                for row in payload["move_confusion"]["counts"]
            ),
            category_confusion=tuple(
                tuple(int(x) for x in row)
                for row in payload["category_confusion"]["counts"]
            ),
            per_dataset=per_dataset,
            template=payload.get("template"),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"benchmark report: {exc}") from exc


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def report_to_csv(report: BenchmarkReport) -> str:
    lines = ["move,accuracy,n,gt_share,pred_share,bias"]
    for move in MOVE_ORDER:
        stats = report.per_move[move]
        lines.append(
            f"{move.canonical_name},{_fmt(stats.accuracy)},{stats.n},"
            f"{stats.gt_share:.4f},{stats.pred_share:.4f},{stats.bias:.4f}"
        )
    return "\n".join(lines) + "\n"


def report_to_markdown(report: BenchmarkReport) -> str:
    head = [
        "| Move | Accuracy | n | GT share % | Pred share % | Bias (pp) |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    body = []
    for move in MOVE_ORDER:
        stats = report.per_move[move]
        body.append(
            f"| {move.canonical_name} | {_fmt(stats.accuracy)} | {stats.n} "
            f"| {stats.gt_share:.1f} | {stats.pred_share:.1f} | {stats.bias:+.1f} |"
        )
    valid_share = 100.0 - report.invalid.pred_share
    body.append(
        f"| All | {report.overall_accuracy:.4f} | {report.n} "
        f"| 100.0 | {valid_share:.1f} | {-report.invalid.pred_share:+.1f} |"
    )
    tail = [
        "",
        f"Invalid outputs: {report.invalid.n} "
        f"({report.invalid.pred_share:.1f}% of predictions)",
        f"NI detection rate: {_fmt(report.ni_detection) or 'n/a'}",
    ]
    return "\n".join(head + body + tail) + "\n"


def emit_report(
    report: BenchmarkReport,
    out_dir: str | Path,
    formats: Sequence[str] = ("json", "csv", "md"),
) -> dict[str, Path]:
    """Write the report in the requested formats; returns format -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    writers = {
        "json": lambda: json.dumps(report_to_json(report), indent=2) + "\n",
        "csv": lambda: report_to_csv(report),
        "md": lambda: report_to_markdown(report),
    }
    paths: dict[str, Path] = {}
    for fmt in formats:
        if fmt not in writers:
            raise ConfigError(f"unknown report format {fmt!r}; have {sorted(writers)}")
        path = out / f"benchmark_report.{fmt}"
        path.write_text(writers[fmt](), encoding="utf-8")
        paths[fmt] = path
    return paths


def write_predictions(predictions: Sequence[Prediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pred in predictions:
            row = {
                "instance_id": pred.instance_id,
                "raw_output": pred.raw_output,
                "parsed_move": (
                    pred.parsed.canonical_name if pred.ok else None
                ),
                "latency_ms": pred.latency_ms,
            }
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_predictions(path: str | Path) -> list[Prediction]:
    rows: list[Prediction] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: not JSON: {exc}") from exc
            try:
                label = record["parsed_move"]
                raw = record["raw_output"]
                if label is None:
                    parsed: CoachMove | ParseFailure = ParseFailure(raw)
                else:
                    parsed = parse_move_label(label)
                    if isinstance(parsed, ParseFailure):
                        raise SchemaError(
                            f"{path}:{lineno}: bad move label {label!r}"
                        )
                rows.append(
                    Prediction(
                        instance_id=record["instance_id"],
                        raw_output=raw,
                        parsed=parsed,
                        latency_ms=float(record["latency_ms"]),
                    )
                )
            except KeyError as exc:
                raise SchemaError(f"{path}:{lineno}: missing field {exc}") from exc
    return rows
