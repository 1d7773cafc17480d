"""Dialogue generation: realize a pedagogical plan as a conversation.

The walk is plan-driven. Each trajectory event contributes a student signal
turn and the planned coach move; silence is the complement - quiet-work
student turns paired with NO_INTERVENTION fill the gaps so the NI share of
coach turns lands inside the plan's target band exactly. Help runs through a
state machine: hints exist before the dialogue does, and a System turn
delivers one only when a student turn explicitly asks. Every conversation
closes with the reflection exchange and one final NO_INTERVENTION, the
coach's explicit sign-off.

Two modes. The simulator draws every utterance from the seeded template
banks, so equal seeds give byte-equal conversations. Backend mode asks a
generation backend for each utterance and checks the text against the beat's
signal requirements (the validators recompute signals from text, so a student
turn that fails to show its planned signal would break the corpus); after two
corrective retries the conversation is discarded, never silently repaired.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Final

from . import banks
from .backends import BackendSpec, ChatMessage, GenerationRequest, build_backend
from .dialogue import Conversation, HELP_REQUEST_SIGNAL, Problem, Role, Turn
from .errors import BackendError, ConfigError, DataError
from .planner import (
    PedagogicalPlan,
    REQUEST_EFFECT,
    ni_band_counts,
    preferred_hint_kind,
    split_tagged,
    validate_plan,
)
from .seeding import derive_seed, seeded_rng
from .taxonomy import (
    CoachMove,
    HelpQuality,
    HintType,
    LearnerProfile,
    hint_remedy_for,
)
from .validation import detect_signal_tags

__all__ = [
    "EngineMode",
    "EngineConfig",
    "HelpState",
    "PlanCursor",
    "InadmissiblePlan",
    "PlanDivergence",
    "TurnBudgetExceeded",
    "NoSuchHint",
    "step_help_state",
    "simulate_student_turn",
    "generate_dialogue",
    "generate_corpus",
]


class EngineMode(Enum):
    SIMULATOR = "simulator"
    BACKEND = "backend"


class InadmissiblePlan(DataError):
    """generate_dialogue requires a plan that passes validate_plan."""


class PlanDivergence(BackendError):
    """Backend text could not be coerced to the plan within bounded retries."""


class TurnBudgetExceeded(DataError):
    """No NI pacing fits the plan inside max_turns; the draw is discarded."""


class NoSuchHint(DataError):
    """The plan has no hint of the requested type."""


@dataclass(frozen=True, slots=True)
class EngineConfig:
    mode: EngineMode = EngineMode.SIMULATOR
    seed: int = 0
    delayed_threshold: int = 3
    max_turns: int = 24

    def __post_init__(self) -> None:
        if self.max_turns < 2:
            raise ConfigError("max_turns must be >= 2")
        if self.delayed_threshold < 1:
            raise ConfigError("delayed_threshold must be >= 1")


@dataclass(frozen=True, slots=True)
class HelpState:
    attempts_made: int = 0
    stuck_turns: int = 0
    pending_request: HintType | None = None
    hints_delivered: tuple[tuple[HintType, int], ...] = ()
    classification_log: tuple[HelpQuality, ...] = ()


def _hint_for(plan: PedagogicalPlan, kind: HintType):
    for hint in plan.analysis.hints:
        if hint.kind is kind:
            return hint
    raise NoSuchHint(f"plan has no {kind.value} hint")


def _requested_kind(text: str, plan: PedagogicalPlan) -> HintType:
    low = text.lower()
    for kind in HintType:
        if kind.value in low:
            return kind
    return HintType(preferred_hint_kind(plan.analysis))


def step_help_state(
    state: HelpState,
    student_turn: Turn,
    plan: PedagogicalPlan,
    delayed_threshold: int = 3,
) -> tuple[HelpState, Turn | None, HelpQuality | None]:
    """Advance help bookkeeping by one student turn.

    Non-request turns count as attempts (and extend or reset the stuck
    streak). A request turn is classified first - Premature before any
    attempt, Delayed after a long stuck streak, Mismatched when the requested
    hint type has no matching gap - and answered with a System turn carrying
    the plan's pre-generated hint of that type. A request for a type the plan
    holds no hint for gets an apology System turn and counts as Mismatched.
    """
    if HELP_REQUEST_SIGNAL not in student_turn.signals:
        struggling = "impasse" in student_turn.signals
        new_state = replace(
            state,
            attempts_made=state.attempts_made + 1,
            stuck_turns=state.stuck_turns + 1 if struggling else 0,
        )
        return new_state, None, None

    kind = _requested_kind(student_turn.text, plan)
    gap_remedies = {
        hint_remedy_for(g.kind) for g in plan.analysis.gaps
    } - {None}
    if state.attempts_made == 0:
        quality = HelpQuality.PREMATURE
    elif state.stuck_turns >= delayed_threshold:
        quality = HelpQuality.DELAYED
    elif kind not in gap_remedies:
        quality = HelpQuality.MISMATCHED
    else:
        quality = HelpQuality.APPROPRIATE

    delivered = state.hints_delivered
    try:
        hint = _hint_for(plan, kind)
    except NoSuchHint:
        quality = HelpQuality.MISMATCHED
        text = banks.system_apology_line(kind.value)
    else:
        text = banks.system_hint_line(kind.value, hint.text)
        delivered = delivered + ((kind, student_turn.index + 1),)

    system_turn = Turn(index=student_turn.index + 1, role=Role.SYSTEM, text=text)
    new_state = replace(
        state,
        stuck_turns=0,
        pending_request=None,
        hints_delivered=delivered,
        classification_log=state.classification_log + (quality,),
    )
    return new_state, system_turn, quality


@dataclass(frozen=True, slots=True)
class PlanCursor:
    """Position of one student utterance: which problem, which beat, where."""

    problem: Problem
    beat: str
    turn_index: int
    hint_kind: str = "scaffolding"


def simulate_student_turn(
    profile: LearnerProfile, cursor: PlanCursor, seed: int
) -> Turn:
    """One deterministic student turn; stored signals recomputed from text."""
    rng = seeded_rng(
        seed, "student", cursor.problem.id, str(cursor.turn_index), cursor.beat
    )
    text = banks.student_line(
        profile.calibration,
        cursor.beat,
        rng,
        cursor.problem.statement,
        cursor.problem.reference_answer,
        cursor.hint_kind,
    )
    return Turn(
        index=cursor.turn_index,
        role=Role.STUDENT,
        text=text,
        signals=detect_signal_tags(text),
    )


# Signal categories each beat must and must not show; backend text that
# misses these would silently corrupt the corpus labels.
_BEAT_REQUIRED: Final[dict[str, frozenset[str]]] = {
    "hedging": frozenset({"hedge"}),
    "localized_confusion": frozenset({"impasse"}),
    "stuck": frozenset({"impasse"}),
    "help_request": frozenset({"help_request"}),
    "solution_ready": frozenset({"solution"}),
}
_BEAT_TOLERATED: Final[dict[str, frozenset[str]]] = {
    "hedging": frozenset({"hedge", "impasse"}),
    "localized_confusion": frozenset({"hedge", "impasse"}),
    "stuck": frozenset({"hedge", "impasse"}),
    "help_request": frozenset({"help_request"}),
    "solution_ready": frozenset({"solution"}),
}


def _beat_text_ok(beat: str, text: str) -> bool:
    tags = set(detect_signal_tags(text))
    required = _BEAT_REQUIRED.get(beat, frozenset())
    tolerated = _BEAT_TOLERATED.get(beat, frozenset())
    return required <= tags and tags <= tolerated


class _Generation:
    """One conversation in progress; owns turn list, help state, backend."""

    def __init__(
        self,
        problem: Problem,
        plan: PedagogicalPlan,
        config: EngineConfig,
        backend,
    ) -> None:
        self.problem = problem
        self.plan = plan
        self.config = config
        self.backend = backend
        self.conv_id = (
            f"{problem.id}-{plan.profile.calibration.value}"
            f"-{plan.profile.help_seeking.value}-s{config.seed}"
        )
        self.turns: list[Turn] = []
        self.state = HelpState()
        self.just_delivered = False

    # -- text sourcing ------------------------------------------------------

    def _student_text(self, beat: str, index: int, hint_kind: str) -> str:
        if self.config.mode is EngineMode.SIMULATOR:
            cursor = PlanCursor(
                problem=self.problem, beat=beat, turn_index=index, hint_kind=hint_kind
            )
            return simulate_student_turn(
                self.plan.profile, cursor, derive_seed(self.config.seed, self.conv_id)
            ).text
        payload = {
            "seed": derive_seed(self.config.seed, "turn", self.conv_id, str(index)),
            "beat": beat,
            "calibration": self.plan.profile.calibration.value,
            "statement": self.problem.statement,
            "reference_answer": self.problem.reference_answer,
            "hint_kind": hint_kind,
        }
        messages = [
            ChatMessage(
                role="system",
                content="TASK: student_utterance\n"
                "Write the student's next turn: one short utterance, first person.",
            ),
            ChatMessage(
                role="user",
                content=f"Beat: {beat}.\nINPUT: {json.dumps(payload, ensure_ascii=False)}",
            ),
        ]
        for _ in range(3):
            request = GenerationRequest(messages=tuple(messages), tag="student_utterance")
            text = self.backend.complete(request).text.strip()
            if _beat_text_ok(beat, text):
                return text
            messages.append(
                ChatMessage(
                    role="user",
                    content=f"Rejected: the turn must read as the beat {beat!r} "
                    "(show exactly the difficulty wording that beat implies, and "
                    "no other difficulty wording). Rewrite the single turn.",
                )
            )
        raise PlanDivergence(
            f"{self.conv_id}: student turn for beat {beat!r} failed text checks"
        )

    def _coach_text(self, move: CoachMove, index: int) -> str:
        if move is CoachMove.NO_INTERVENTION:
            return ""
        if self.config.mode is EngineMode.SIMULATOR:
            rng = seeded_rng(
                self.config.seed, "coach", self.conv_id, str(index), move.name
            )
            return banks.coach_line(move, rng)
        payload = {
            "seed": derive_seed(self.config.seed, "turn", self.conv_id, str(index)),
            "move": move.name,
        }
        messages = [
            ChatMessage(
                role="system",
                content="TASK: coach_utterance\n"
                "Write the coach's next turn for the named move: one question or "
                "prompt. Never state domain facts, never reveal any answer.",
            ),
            ChatMessage(
                role="user",
                content=f"Move: {move.name}.\nINPUT: {json.dumps(payload)}",
            ),
        ]
        banned = [self.problem.reference_answer] + [
            h.text for h in self.plan.analysis.hints
        ]
        for _ in range(3):
            request = GenerationRequest(messages=tuple(messages), tag="coach_utterance")
            text = self.backend.complete(request).text.strip()
            if text and not any(b and b in text for b in banned):
                return text
            messages.append(
                ChatMessage(
                    role="user",
                    content="Rejected: the coach prompt must be non-empty and must "
                    "not contain the answer or hint wording. Rewrite it.",
                )
            )
        raise PlanDivergence(
            f"{self.conv_id}: coach turn for {move.name} failed purity checks"
        )

    # -- turn emission ------------------------------------------------------

    def emit_student(self, beat: str, hint_kind: str) -> None:
        index = len(self.turns)
        text = self._student_text(beat, index, hint_kind)
        turn = Turn(
            index=index, role=Role.STUDENT, text=text, signals=detect_signal_tags(text)
        )
        self.turns.append(turn)
        self.state, system_turn, _ = step_help_state(
            self.state, turn, self.plan, self.config.delayed_threshold
        )
        if system_turn is not None:
            self.turns.append(system_turn)
        self.just_delivered = system_turn is not None

    def emit_coach(self, move: CoachMove) -> None:
        index = len(self.turns)
        self.turns.append(
            Turn(index=index, role=Role.COACH, text=self._coach_text(move, index), move=move)
        )


def _pacing(
    plan: PedagogicalPlan, config: EngineConfig, conv_id: str
) -> tuple[int, set[int], int, int]:
    """Choose the NI count and which events get a quiet-work pair before them.

    Solves the share equation exactly: with k planned moves and n NI turns,
    the NI share is n / (n + k), so n ranges over the band's integer window,
    clipped by the turn budget and the available quiet slots.
    """
    k = len(plan.trajectory)
    in_event = [
        i
        for i, e in enumerate(plan.trajectory)
        if split_tagged(e.signal)[0] == HELP_REQUEST_SIGNAL
    ]
    effect_events = [
        i
        for i, e in enumerate(plan.trajectory)
        if split_tagged(e.effect)[0] == REQUEST_EFFECT
    ]
    p = len(effect_events)
    e_in = len(in_event)
    n_lo, n_hi = ni_band_counts(k, plan.ni_target)
    # Opening the dialogue with a quiet attempt would contradict an
    # ask-before-attempting event, so slot 0 is excluded for those plans.
    allowed = [i for i in range(k) if not (i == 0 and i in in_event)]
    budget_cap = (config.max_turns + 3 - p - e_in) // 2 - k
    lo = max(n_lo, 1 + p)
    hi = min(n_hi, budget_cap, len(allowed) + 1 + p)
    if lo > hi:
        raise TurnBudgetExceeded(
            f"{conv_id}: no NI count in band {plan.ni_target} fits "
            f"{k} events inside {config.max_turns} turns"
        )
    rng = seeded_rng(config.seed, "pace", conv_id)
    n_ni = rng.randint(lo, hi)
    quiet = set(rng.sample(allowed, n_ni - 1 - p))
    return n_ni, quiet, p, e_in


def generate_dialogue(
    problem: Problem,
    plan: PedagogicalPlan,
    config: EngineConfig = EngineConfig(),
    backend=None,
) -> Conversation:
    """Realize one plan as a conversation.

    The non-NI coach move sequence equals the plan trajectory exactly; NI
    turns are placed by the pacing solver; the reflection exchange and a
    closing NO_INTERVENTION end the dialogue.
    """
    report = validate_plan(plan)
    if not report.ok:
        raise InadmissiblePlan(
            f"plan rejected: {'; '.join(v.message for v in report.violations)}"
        )
    if config.mode is EngineMode.BACKEND:
        if backend is None:
            raise ConfigError("backend mode needs a backend")
        if isinstance(backend, BackendSpec):
            backend = build_backend(backend)

    gen = _Generation(problem, plan, config, backend)
    _, quiet, _, _ = _pacing(plan, config, gen.conv_id)
    planned_kind = preferred_hint_kind(plan.analysis)

    ro_index: int | None = None
    for i, event in enumerate(plan.trajectory):
        if i in quiet:
            beat = "post_hint" if gen.just_delivered else "work"
            gen.emit_student(beat, planned_kind)
            gen.emit_coach(CoachMove.NO_INTERVENTION)
        signal_tag, _, _ = split_tagged(event.signal)
        beat = signal_tag if signal_tag in banks.STUDENT_BEATS else "work"
        gen.emit_student(beat, planned_kind)
        if event.move is CoachMove.REFLECT_OUTCOME:
            ro_index = len(gen.turns)
        gen.emit_coach(event.move)
        effect_tag, effect_arg, _ = split_tagged(event.effect)
        if effect_tag == REQUEST_EFFECT:
            gen.emit_student("help_request", effect_arg or planned_kind)
            gen.emit_coach(CoachMove.NO_INTERVENTION)

    gen.emit_student("reflection", planned_kind)
    gen.emit_coach(CoachMove.NO_INTERVENTION)

    if ro_index is not None and ro_index > config.max_turns:
        raise TurnBudgetExceeded(
            f"{gen.conv_id}: {ro_index} turns before the closing reflection"
        )

    conv = Conversation(
        id=gen.conv_id,
        problem=problem,
        profile=plan.profile,
        turns=tuple(gen.turns),
        plan=plan,
    )
    realized = [
        t.move
        for t in conv.turns
        if t.role is Role.COACH and t.move is not CoachMove.NO_INTERVENTION
    ]
    if realized != [e.move for e in plan.trajectory]:
        raise PlanDivergence(f"{gen.conv_id}: realized moves diverge from the plan")
    return conv


def generate_corpus(
    rows: list[tuple[Problem, PedagogicalPlan]],
    config: EngineConfig = EngineConfig(),
    backend=None,
) -> tuple[list[Conversation], dict]:
    """Generate one conversation per (problem, plan) row.

    Failed generations (plan divergence, turn budget) are dropped and
    counted, never repaired; the manifest makes dropped work observable.
    """
    if config.mode is EngineMode.BACKEND and isinstance(backend, BackendSpec):
        backend = build_backend(backend)
    conversations: list[Conversation] = []
    discarded = 0
    divergences = 0
    for problem, plan in rows:
        try:
            conversations.append(generate_dialogue(problem, plan, config, backend))
        except PlanDivergence:
            discarded += 1
            divergences += 1
        except TurnBudgetExceeded:
            discarded += 1
    manifest = {
        "seed": config.seed,
        "mode": config.mode.value,
        "discarded": discarded,
        "plan_divergences": divergences,
    }
    return conversations, manifest
