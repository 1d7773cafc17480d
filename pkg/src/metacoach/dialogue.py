"""Dialogue data model: problems, turns, conversations, benchmark instances.

Wire format is JSONL, one conversation per line, UTF-8. Parsing is lenient
about unknown fields and strict about everything else; serialization followed
by parsing is the identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Final, Iterable

from .errors import DataError
from .taxonomy import (
    Calibration,
    CoachMove,
    HelpSeeking,
    LearnerProfile,
    ParseFailure,
    parse_move_label,
)

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .planner import PedagogicalPlan

__all__ = [
    "DATASETS",
    "Role",
    "Problem",
    "Turn",
    "Conversation",
    "DialogueContext",
    "BenchmarkInstance",
    "SchemaError",
    "LabelError",
    "OrderError",
    "EmptyDataset",
    "HELP_REQUEST_SIGNAL",
    "parse_conversation",
    "serialize_conversation",
    "read_conversations",
    "write_conversations",
    "read_problems",
    "write_problems",
    "move_distribution",
    "extract_benchmark_instances",
    "corpus_stats",
]

DATASETS: Final[tuple[str, ...]] = ("gsm8k", "math", "aime")

# Signal tag that licenses a System turn directly after a Student turn.
HELP_REQUEST_SIGNAL: Final[str] = "help_request"


class SchemaError(DataError):
    """Record is missing a field or a field has the wrong shape."""


class LabelError(DataError):
    """A move label failed to parse."""


class OrderError(DataError):
    """Turn indices or role alternation are broken."""


class EmptyDataset(DataError):
    """An operation that needs data got none."""


class Role(Enum):
    STUDENT = "student"
    COACH = "coach"
    SYSTEM = "system"


@dataclass(frozen=True, slots=True)
class Problem:
    id: str
    dataset: str
    statement: str
    reference_answer: str

    def __post_init__(self) -> None:
        if self.dataset not in DATASETS:
            raise SchemaError(f"unknown dataset {self.dataset!r}")


@dataclass(frozen=True, slots=True)
class Turn:
    """One utterance. Coach turns carry a move; NO_INTERVENTION coach turns
    carry empty text. ``signals`` is advisory - validators recompute."""

    index: int
    role: Role
    text: str
    move: CoachMove | None = None
    signals: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if (self.role is Role.COACH) != (self.move is not None):
            raise SchemaError(
                f"turn {self.index}: move must be present iff role is coach"
            )


def _check_turn_order(turns: tuple[Turn, ...]) -> None:
    for pos, turn in enumerate(turns):
        if turn.index != pos:
            raise OrderError(f"turn indices must be consecutive from 0, got {turn.index} at {pos}")
    if turns and turns[0].role is not Role.STUDENT:
        raise OrderError("conversations start with a student turn")
    for prev, cur in zip(turns, turns[1:]):
        if prev.role is Role.STUDENT:
            ok = cur.role is Role.COACH or (
                cur.role is Role.SYSTEM and HELP_REQUEST_SIGNAL in prev.signals
            )
        elif prev.role is Role.SYSTEM:
            ok = cur.role is Role.COACH
        else:
            ok = cur.role is Role.STUDENT
        if not ok:
            raise OrderError(
                f"turn {cur.index}: role {cur.role.value} cannot follow {prev.role.value}"
            )


@dataclass(frozen=True, slots=True)
class Conversation:
    id: str
    problem: Problem
    profile: LearnerProfile
    turns: tuple[Turn, ...]
    plan: "PedagogicalPlan | None" = None

    def __post_init__(self) -> None:
        _check_turn_order(self.turns)

    def coach_turns(self) -> tuple[Turn, ...]:
        return tuple(t for t in self.turns if t.role is Role.COACH)


@dataclass(frozen=True, slots=True)
class DialogueContext:
    """History visible to a move predictor at one coach decision point.

    The history normally ends at a Student turn; when help was just
    delivered it ends at the System turn that followed the request, so the
    predictor can see the delivery.
    """

    problem: Problem
    history: tuple[Turn, ...]

    def __post_init__(self) -> None:
        if not self.history:
            raise SchemaError("context history is empty")
        last = self.history[-1]
        if last.role is Role.COACH:
            raise SchemaError("context history must end at a student or system turn")


@dataclass(frozen=True, slots=True)
class BenchmarkInstance:
    instance_id: str
    context: DialogueContext
    gold_move: CoachMove

    @property
    def dataset(self) -> str:
        return self.context.problem.dataset


def _require(record: dict, key: str, kind: type, where: str) -> Any:
    if key not in record:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = record[key]
    if kind is not object and not isinstance(value, kind):
        raise SchemaError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def _parse_enum(value: str, enum: type[Enum], where: str) -> Any:
    for member in enum:
        if member.value == value:
            return member
    raise SchemaError(f"{where}: unknown value {value!r} for {enum.__name__}")


def parse_conversation(record: dict) -> Conversation:
    """Parse one wire-format conversation record. Unknown fields are ignored."""
    if not isinstance(record, dict):
        raise SchemaError("conversation record must be an object")
    conv_id = _require(record, "id", str, "conversation")
    dataset = _require(record, "dataset", str, conv_id)
    if dataset not in DATASETS:
        raise SchemaError(f"{conv_id}: unknown dataset {dataset!r}")

    problem_rec = _require(record, "problem", dict, conv_id)
    problem = Problem(
        id=str(problem_rec.get("id", conv_id)),
        dataset=dataset,
        statement=_require(problem_rec, "statement", str, f"{conv_id}.problem"),
        reference_answer=_require(
            problem_rec, "reference_answer", str, f"{conv_id}.problem"
        ),
    )

    profile_rec = _require(record, "profile", dict, conv_id)
    profile = LearnerProfile(
        calibration=_parse_enum(
            _require(profile_rec, "calibration", str, f"{conv_id}.profile"),
            Calibration,
            f"{conv_id}.profile",
        ),
        help_seeking=_parse_enum(
            _require(profile_rec, "help_seeking", str, f"{conv_id}.profile"),
            HelpSeeking,
            f"{conv_id}.profile",
        ),
    )

    plan = None
    if record.get("plan") is not None:
        from .planner import plan_from_dict

        plan = plan_from_dict(record["plan"], where=conv_id)

    turns_rec = _require(record, "turns", list, conv_id)
    turns = []
    for i, turn_rec in enumerate(turns_rec):
        where = f"{conv_id}.turns[{i}]"
        if not isinstance(turn_rec, dict):
            raise SchemaError(f"{where}: turn must be an object")
        role = _parse_enum(_require(turn_rec, "role", str, where), Role, where)
        move = None
        if role is Role.COACH:
            label = _require(turn_rec, "move", str, where)
            parsed = parse_move_label(label)
            if isinstance(parsed, ParseFailure):
                raise LabelError(f"{where}: unparseable move label {label!r}")
            move = parsed
        elif turn_rec.get("move") is not None:
            raise SchemaError(f"{where}: non-coach turn carries a move")
        signals_rec = turn_rec.get("signals", [])
        if not isinstance(signals_rec, list) or not all(
            isinstance(s, str) for s in signals_rec
        ):
            raise SchemaError(f"{where}: signals must be a list of strings")
        turns.append(
            Turn(
                index=_require(turn_rec, "index", int, where),
                role=role,
                text=_require(turn_rec, "text", str, where),
                move=move,
                signals=tuple(signals_rec),
            )
        )

    return Conversation(
        id=conv_id, problem=problem, profile=profile, turns=tuple(turns), plan=plan
    )


def serialize_conversation(conv: Conversation) -> dict:
    """Wire-format record; ``parse_conversation`` inverts it exactly."""
    record: dict[str, Any] = {
        "id": conv.id,
        "dataset": conv.problem.dataset,
        "problem": {
            "id": conv.problem.id,
            "statement": conv.problem.statement,
            "reference_answer": conv.problem.reference_answer,
        },
        "profile": {
            "calibration": conv.profile.calibration.value,
            "help_seeking": conv.profile.help_seeking.value,
        },
    }
    if conv.plan is not None:
        from .planner import plan_to_dict

        record["plan"] = plan_to_dict(conv.plan)
    record["turns"] = [
        {
            "index": t.index,
            "role": t.role.value,
            "text": t.text,
            **({"move": t.move.canonical_name} if t.move is not None else {}),
            "signals": list(t.signals),
        }
        for t in conv.turns
    ]
    return record


def read_conversations(path: str | Path) -> list[Conversation]:
    conversations = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                conversations.append(parse_conversation(record))
            except DataError as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from exc
    return conversations


def write_conversations(path: str | Path, conversations: Iterable[Conversation]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for conv in conversations:
            handle.write(json.dumps(serialize_conversation(conv), ensure_ascii=False))
            handle.write("\n")


def read_problems(path: str | Path) -> list[Problem]:
    """Problems file: one {"id", "dataset", "statement", "reference_answer"}
    object per line."""
    problems = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}: invalid JSON ({exc})") from exc
            problems.append(
                Problem(
                    id=_require(record, "id", str, where),
                    dataset=_require(record, "dataset", str, where),
                    statement=_require(record, "statement", str, where),
                    reference_answer=_require(record, "reference_answer", str, where),
                )
            )
    return problems


def write_problems(path: str | Path, problems: Iterable[Problem]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for prob in problems:
            row = {
                "id": prob.id,
                "dataset": prob.dataset,
                "statement": prob.statement,
                "reference_answer": prob.reference_answer,
            }
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def move_distribution(
    conversations: Iterable[Conversation],
) -> dict[CoachMove, tuple[int, float]]:
    """Count and share of each move over all coach turns.

    Shares sum to 1 over the eleven moves. Raises EmptyDataset when there is
    nothing to count.
    """
    counts = {move: 0 for move in CoachMove}
    total = 0
    for conv in conversations:
        for turn in conv.coach_turns():
            assert turn.move is not None
            counts[turn.move] += 1
            total += 1
    if total == 0:
        raise EmptyDataset("no coach turns to count")
    return {move: (n, n / total) for move, n in counts.items()}


def extract_benchmark_instances(
    conversations: Iterable[Conversation],
) -> list[BenchmarkInstance]:
    """One instance per coach turn: everything before the turn is context,
    the turn's move is gold. NO_INTERVENTION turns are decision points too."""
    instances = []
    for conv in conversations:
        ordinal = 0
        for j, turn in enumerate(conv.turns):
            if turn.role is not Role.COACH:
                continue
            assert turn.move is not None
            instances.append(
                BenchmarkInstance(
                    instance_id=f"{conv.id}#{ordinal:02d}",
                    context=DialogueContext(
                        problem=conv.problem, history=conv.turns[:j]
                    ),
                    gold_move=turn.move,
                )
            )
            ordinal += 1
    return instances


def corpus_stats(conversations: Iterable[Conversation]) -> dict:
    """Conversation/turn counts per dataset plus the move distribution."""
    conversations = list(conversations)
    per_dataset: dict[str, dict[str, int]] = {}
    for conv in conversations:
        bucket = per_dataset.setdefault(
            conv.problem.dataset, {"conversations": 0, "turns": 0}
        )
        bucket["conversations"] += 1
        bucket["turns"] += len(conv.turns)
    distribution = {
        move.canonical_name: {"count": n, "share": share}
        for move, (n, share) in move_distribution(conversations).items()
    }
    return {
        "datasets": per_dataset,
        "total": {
            "conversations": sum(d["conversations"] for d in per_dataset.values()),
            "turns": sum(d["turns"] for d in per_dataset.values()),
        },
        "move_distribution": distribution,
    }
