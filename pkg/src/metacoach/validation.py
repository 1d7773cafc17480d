"""Pedagogy validators: recomputed signals, contingency, adherence, coverage.

All signal detection recomputes from turn text against an editable lexicon
(data/signal_lexicon.json); stored signal tags on turns are deliberately
ignored so a generator cannot grade its own homework. The one exception is
turn-order validation inside the dialogue model, which uses stored tags -
that split is what lets the unrequested-hint injection below produce a
structurally legal conversation that the validators still flag.

Contingency judges each detected signal against an appropriateness table:
  hedge/impasse  -> {UP, CC, SA, RS, MG, MP}; NI passes only when the prior
                    student turn carried no difficulty signal (restraint is
                    allowed once, not twice in a row)
  help_request   -> an immediate System delivery, or {PR, MG, MP}
  solution       -> {RO, CC}
A System turn whose preceding student turn shows no recomputed help_request
is recorded as an unsolicited delivery and is never contingent.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Final, Iterable, Sequence

from .dialogue import Conversation, HELP_REQUEST_SIGNAL, Role, Turn
from .errors import DataError
from .taxonomy import CoachMove, MaiFactor, mai_factor_of

__all__ = [
    "SIGNAL_CATEGORIES",
    "Verdict",
    "ConversationVerdict",
    "ResponseJudgment",
    "ContingencyReport",
    "AdherenceReport",
    "CoverageReport",
    "ConversationValidation",
    "MissingPlan",
    "NoCoachTurns",
    "NoInjectionSite",
    "load_lexicon",
    "detect_signal_tags",
    "detect_difficulty_signals",
    "check_contingency",
    "check_adherence",
    "mai_coverage",
    "ni_rate",
    "validate_conversation",
    "validate_corpus",
    "report_to_json",
    "rows_to_csv",
    "inject_move_swap",
    "inject_wrong_move_after_signal",
    "inject_unrequested_hint",
]

SIGNAL_CATEGORIES: Final[tuple[str, ...]] = (
    "hedge",
    "impasse",
    "help_request",
    "solution",
)

_DIFFICULTY: Final[frozenset[str]] = frozenset({"hedge", "impasse"})

_STRUGGLE_RESPONSES: Final[frozenset[CoachMove]] = frozenset(
    {
        CoachMove.UNCERTAINTY_PROBE,
        CoachMove.CHECK_CONSISTENCY,
        CoachMove.STRATEGY_ALTERNATIVE,
        CoachMove.REPRESENTATION_SHIFT,
        CoachMove.MONITOR_GOAL,
        CoachMove.MONITOR_PLAN,
    }
)
_REQUEST_RESPONSES: Final[frozenset[CoachMove]] = frozenset(
    {CoachMove.PROMPT_RESOURCE, CoachMove.MONITOR_GOAL, CoachMove.MONITOR_PLAN}
)
_SOLUTION_RESPONSES: Final[frozenset[CoachMove]] = frozenset(
    {CoachMove.REFLECT_OUTCOME, CoachMove.CHECK_CONSISTENCY}
)


class MissingPlan(DataError):
    """Adherence needs the plan the conversation was generated from."""


class NoCoachTurns(DataError):
    pass


class NoInjectionSite(DataError):
    """The conversation has no position where this violation can be planted."""


class Verdict(Enum):
    CONTINGENT = "contingent"
    NON_CONTINGENT = "non_contingent"


class ConversationVerdict(Enum):
    CONTINGENT = "contingent"
    NON_CONTINGENT = "non_contingent"
    NO_SIGNALS = "no_signals"


@lru_cache(maxsize=8)
def _default_lexicon() -> dict[str, tuple[str, ...]]:
    raw = resources.files("metacoach").joinpath("data/signal_lexicon.json").read_text(
        encoding="utf-8"
    )
    return _coerce_lexicon(json.loads(raw))


def _coerce_lexicon(record: dict) -> dict[str, tuple[str, ...]]:
    lexicon: dict[str, tuple[str, ...]] = {}
    for category in SIGNAL_CATEGORIES:
        terms = record.get(category, ())
        lexicon[category] = tuple(str(t).lower() for t in terms)
    return lexicon


def load_lexicon(path: str | Path | None = None) -> dict[str, tuple[str, ...]]:
    """The signal wordlist; ``None`` loads the packaged default."""
    if path is None:
        return _default_lexicon()
    with open(path, encoding="utf-8") as handle:
        return _coerce_lexicon(json.load(handle))


def detect_signal_tags(
    text: str, lexicon: dict[str, tuple[str, ...]] | None = None
) -> tuple[str, ...]:
    """Signal categories whose terms appear in ``text`` (case-insensitive
    substring), in canonical category order, at most once each."""
    lex = lexicon or _default_lexicon()
    low = text.lower()
    return tuple(
        category
        for category in SIGNAL_CATEGORIES
        if any(term in low for term in lex[category])
    )


def detect_difficulty_signals(
    conv: Conversation, lexicon: dict[str, tuple[str, ...]] | None = None
) -> list[tuple[int, str]]:
    """(turn index, category) pairs recomputed from student turn text."""
    found: list[tuple[int, str]] = []
    for turn in conv.turns:
        if turn.role is not Role.STUDENT:
            continue
        for tag in detect_signal_tags(turn.text, lexicon):
            found.append((turn.index, tag))
    return found


@dataclass(frozen=True, slots=True)
class ResponseJudgment:
    signal_turn: int
    signal: str
    coach_turn: int
    move: CoachMove | None
    verdict: Verdict


@dataclass(frozen=True, slots=True)
class ContingencyReport:
    signals_found: tuple[tuple[int, str], ...]
    responses: tuple[ResponseJudgment, ...]
    conversation_verdict: ConversationVerdict


@dataclass(frozen=True, slots=True)
class AdherenceReport:
    aligned: bool
    mismatch: tuple[int, CoachMove | None, CoachMove | None] | None = None


@dataclass(frozen=True, slots=True)
class CoverageReport:
    factors_present: frozenset[MaiFactor]


def _next_coach(turns: Sequence[Turn], after: int) -> Turn | None:
    for turn in turns[after + 1 :]:
        if turn.role is Role.COACH:
            return turn
    return None


def _prev_student(turns: Sequence[Turn], before: int) -> Turn | None:
    for turn in reversed(turns[:before]):
        if turn.role is Role.STUDENT:
            return turn
    return None


def check_contingency(
    conv: Conversation, lexicon: dict[str, tuple[str, ...]] | None = None
) -> ContingencyReport:
    lex = lexicon or _default_lexicon()
    turns = conv.turns
    tags_by_turn = {
        t.index: set(detect_signal_tags(t.text, lex))
        for t in turns
        if t.role is Role.STUDENT
    }
    signals = detect_difficulty_signals(conv, lex)
    responses: list[ResponseJudgment] = []

    for idx, tag in signals:
        if tag in _DIFFICULTY:
            coach = _next_coach(turns, idx)
            if coach is None:
                responses.append(
                    ResponseJudgment(idx, tag, -1, None, Verdict.NON_CONTINGENT)
                )
                continue
            move = coach.move
            if move in _STRUGGLE_RESPONSES:
                verdict = Verdict.CONTINGENT
            elif move is CoachMove.NO_INTERVENTION:
                prior = _prev_student(turns, idx)
                # Restraint once: silence answers a first signal, not a repeat.
                prior_struggling = prior is not None and (
                    tags_by_turn.get(prior.index, set()) & _DIFFICULTY
                )
                verdict = (
                    Verdict.NON_CONTINGENT if prior_struggling else Verdict.CONTINGENT
                )
            else:
                verdict = Verdict.NON_CONTINGENT
            responses.append(ResponseJudgment(idx, tag, coach.index, move, verdict))
        elif tag == "help_request":
            if idx + 1 < len(turns) and turns[idx + 1].role is Role.SYSTEM:
                responses.append(
                    ResponseJudgment(idx, tag, idx + 1, None, Verdict.CONTINGENT)
                )
                continue
            coach = _next_coach(turns, idx)
            if coach is None:
                responses.append(
                    ResponseJudgment(idx, tag, -1, None, Verdict.NON_CONTINGENT)
                )
                continue
            verdict = (
                Verdict.CONTINGENT
                if coach.move in _REQUEST_RESPONSES
                else Verdict.NON_CONTINGENT
            )
            responses.append(ResponseJudgment(idx, tag, coach.index, coach.move, verdict))
        else:  # solution
            coach = _next_coach(turns, idx)
            if coach is None:
                responses.append(
                    ResponseJudgment(idx, tag, -1, None, Verdict.NON_CONTINGENT)
                )
                continue
            verdict = (
                Verdict.CONTINGENT
                if coach.move in _SOLUTION_RESPONSES
                else Verdict.NON_CONTINGENT
            )
            responses.append(ResponseJudgment(idx, tag, coach.index, coach.move, verdict))

    for turn in turns:
        if turn.role is not Role.SYSTEM:
            continue
        prior = _prev_student(turns, turn.index)
        requested = prior is not None and "help_request" in tags_by_turn.get(
            prior.index, set()
        )
        if not requested:
            responses.append(
                ResponseJudgment(
                    prior.index if prior else -1,
                    "unsolicited_delivery",
                    turn.index,
                    None,
                    Verdict.NON_CONTINGENT,
                )
            )

    if not signals and not responses:
        verdict = ConversationVerdict.NO_SIGNALS
    elif all(r.verdict is Verdict.CONTINGENT for r in responses):
        verdict = ConversationVerdict.CONTINGENT
    else:
        verdict = ConversationVerdict.NON_CONTINGENT
    return ContingencyReport(
        signals_found=tuple(signals),
        responses=tuple(responses),
        conversation_verdict=verdict,
    )


def check_adherence(conv: Conversation) -> AdherenceReport:
    """Exact, order-sensitive match of non-NI coach moves against the plan."""
    if conv.plan is None:
        raise MissingPlan(f"conversation {conv.id} carries no plan")
    observed = [
        t.move
        for t in conv.turns
        if t.role is Role.COACH and t.move is not CoachMove.NO_INTERVENTION
    ]
    expected = [e.move for e in conv.plan.trajectory]
    for i in range(max(len(observed), len(expected))):
        exp = expected[i] if i < len(expected) else None
        obs = observed[i] if i < len(observed) else None
        if exp is not obs:
            return AdherenceReport(aligned=False, mismatch=(i, exp, obs))
    return AdherenceReport(aligned=True)


def mai_coverage(conv: Conversation) -> CoverageReport:
    factors = {
        mai_factor_of(t.move)
        for t in conv.turns
        if t.role is Role.COACH and t.move is not None
    }
    factors.discard(MaiFactor.DIALOGUE)
    return CoverageReport(factors_present=frozenset(factors))


def ni_rate(conv: Conversation) -> float:
    coach_moves = [t.move for t in conv.turns if t.role is Role.COACH]
    if not coach_moves:
        raise NoCoachTurns(f"conversation {conv.id} has no coach turns")
    ni = sum(1 for m in coach_moves if m is CoachMove.NO_INTERVENTION)
    return ni / len(coach_moves)


# ---------------------------------------------------------------------------
# Corpus-level aggregation


@dataclass(frozen=True, slots=True)
class ConversationValidation:
    conversation_id: str
    dataset: str
    contingency: ContingencyReport
    adherence: AdherenceReport | None
    coverage: CoverageReport
    ni: float


def validate_conversation(
    conv: Conversation, lexicon: dict[str, tuple[str, ...]] | None = None
) -> ConversationValidation:
    return ConversationValidation(
        conversation_id=conv.id,
        dataset=conv.problem.dataset,
        contingency=check_contingency(conv, lexicon),
        adherence=check_adherence(conv) if conv.plan is not None else None,
        coverage=mai_coverage(conv),
        ni=ni_rate(conv),
    )


def validate_corpus(
    convs: Iterable[Conversation], lexicon: dict[str, tuple[str, ...]] | None = None
) -> tuple[list[ConversationValidation], dict]:
    """Per-conversation verdicts plus dataset aggregates.

    Contingency counts only conversations with at least one detected signal;
    adherence counts only conversations carrying plans.
    """
    rows = [validate_conversation(c, lexicon) for c in convs]
    with_signals = [
        r
        for r in rows
        if r.contingency.conversation_verdict is not ConversationVerdict.NO_SIGNALS
    ]
    contingent = sum(
        1
        for r in with_signals
        if r.contingency.conversation_verdict is ConversationVerdict.CONTINGENT
    )
    with_plan = [r for r in rows if r.adherence is not None]
    aligned = sum(1 for r in with_plan if r.adherence.aligned)
    coverage = {
        factor.value: (
            sum(1 for r in rows if factor in r.coverage.factors_present) / len(rows)
            if rows
            else 0.0
        )
        for factor in (
            MaiFactor.PLANNING,
            MaiFactor.MONITORING,
            MaiFactor.DEBUGGING,
            MaiFactor.EVALUATION,
        )
    }
    aggregates = {
        "contingency_rate": contingent / len(with_signals) if with_signals else None,
        "adherence_rate": aligned / len(with_plan) if with_plan else None,
        "coverage": coverage,
        "mean_ni_rate": sum(r.ni for r in rows) / len(rows) if rows else None,
    }
    return rows, aggregates


def report_to_json(rows: list[ConversationValidation], aggregates: dict) -> dict:
    return {
        "aggregates": aggregates,
        "conversations": [
            {
                "id": r.conversation_id,
                "dataset": r.dataset,
                "contingency": r.contingency.conversation_verdict.value,
                "non_contingent_responses": [
                    {
                        "signal_turn": j.signal_turn,
                        "signal": j.signal,
                        "coach_turn": j.coach_turn,
                        "move": j.move.canonical_name if j.move else None,
                    }
                    for j in r.contingency.responses
                    if j.verdict is Verdict.NON_CONTINGENT
                ],
                "aligned": None if r.adherence is None else r.adherence.aligned,
                "mismatch": (
                    None
                    if r.adherence is None or r.adherence.mismatch is None
                    else {
                        "position": r.adherence.mismatch[0],
                        "expected": (
                            r.adherence.mismatch[1].canonical_name
                            if r.adherence.mismatch[1]
                            else None
                        ),
                        "observed": (
                            r.adherence.mismatch[2].canonical_name
                            if r.adherence.mismatch[2]
                            else None
                        ),
                    }
                ),
                "factors": sorted(f.value for f in r.coverage.factors_present),
                "ni_rate": r.ni,
            }
            for r in rows
        ],
    }


def rows_to_csv(rows: list[ConversationValidation]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["conversation_id", "dataset", "contingency", "aligned", "ni_rate", "factors"]
    )
    for r in rows:
        writer.writerow(
            [
                r.conversation_id,
                r.dataset,
                r.contingency.conversation_verdict.value,
                "" if r.adherence is None else str(r.adherence.aligned).lower(),
                f"{r.ni:.4f}",
                ";".join(sorted(f.value for f in r.coverage.factors_present)),
            ]
        )
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Violation injection (for validator sensitivity tests)

_NON_NI_MOVES: Final[tuple[CoachMove, ...]] = tuple(
    m for m in CoachMove if m is not CoachMove.NO_INTERVENTION
)


def _rebuild(conv: Conversation, turns: list[Turn]) -> Conversation:
    renumbered = [replace(t, index=i) for i, t in enumerate(turns)]
    return Conversation(
        id=conv.id,
        problem=conv.problem,
        profile=conv.profile,
        turns=tuple(renumbered),
        plan=conv.plan,
    )


def inject_move_swap(conv: Conversation, rng: random.Random) -> Conversation:
    """Replace one non-NI coach move that answers a signal-free student turn.

    Breaks adherence only: the swapped position is not judged by contingency
    because the preceding student turn shows no recomputed signal.
    """
    turns = list(conv.turns)
    candidates = []
    for i, turn in enumerate(turns):
        if turn.role is not Role.COACH or turn.move is CoachMove.NO_INTERVENTION:
            continue
        prior = _prev_student(turns, i)
        if prior is not None and not detect_signal_tags(prior.text):
            candidates.append(i)
    if not candidates:
        raise NoInjectionSite(f"{conv.id}: no unjudged non-NI coach turn to swap")
    pos = rng.choice(candidates)
    original = turns[pos].move
    replacement = rng.choice([m for m in _NON_NI_MOVES if m is not original])
    turns[pos] = replace(turns[pos], move=replacement)
    return _rebuild(conv, turns)


def inject_wrong_move_after_signal(
    conv: Conversation, rng: random.Random
) -> Conversation:
    """Answer one detected signal with CONTINUE_PROMPT, which no signal admits."""
    report = check_contingency(conv)
    candidates = [j for j in report.responses if j.move is not None]
    if not candidates:
        raise NoInjectionSite(f"{conv.id}: no coach-move response to corrupt")
    target = rng.choice(candidates)
    turns = list(conv.turns)
    turns[target.coach_turn] = replace(
        turns[target.coach_turn], move=CoachMove.CONTINUE_PROMPT
    )
    return _rebuild(conv, turns)


def inject_unrequested_hint(conv: Conversation, rng: random.Random) -> Conversation:
    """Insert a System delivery after a student turn that never asked.

    The stored signal tag is forged so the dialogue grammar accepts the turn
    order; the validators recompute from text and flag the delivery.
    """
    turns = list(conv.turns)
    candidates = []
    for i, turn in enumerate(turns):
        if (
            turn.role is Role.STUDENT
            and not detect_signal_tags(turn.text)
            and i + 1 < len(turns)
            and turns[i + 1].role is Role.COACH
        ):
            candidates.append(i)
    if not candidates:
        raise NoInjectionSite(f"{conv.id}: no quiet student turn to follow")
    pos = rng.choice(candidates)
    student = turns[pos]
    turns[pos] = replace(
        student, signals=tuple(student.signals) + (HELP_REQUEST_SIGNAL,)
    )
    delivery = Turn(
        index=pos + 1,
        role=Role.SYSTEM,
        text="Scaffolding hint: rewrite the key phrase as an equation in words before computing.",
        move=None,
        signals=(),
    )
    turns.insert(pos + 1, delivery)
    return _rebuild(conv, turns)
