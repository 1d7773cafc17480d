"""Pedagogical planning: problem analysis and intervention trajectories.

A plan is built before any dialogue exists: the analysis names the gaps a
problem is likely to expose, pre-generates hints, and writes four support
blocks; the trajectory is an ordered list of anticipated events, each a
(event, signal, move, effect) chain. Deliberate silence is never stored as an
event - decision points not covered by an event resolve to NO_INTERVENTION at
generation time.

Event/signal/effect strings are "tag: description" (request effects carry the
hint kind: "requests_help(scaffolding): ..."), so downstream code dispatches
on the tag while humans read the description.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Final, Iterable

from .backends import BackendSpec, ChatMessage, GenerationRequest, build_backend
from .dialogue import Problem, SchemaError
from .errors import DataError
from .seeding import seeded_rng
from .taxonomy import (
    VALID_PROFILES,
    Calibration,
    CoachMove,
    GapType,
    HelpSeeking,
    HintType,
    LearnerProfile,
    ParseFailure,
    hint_remedy_for,
    parse_move_label,
    validate_profile,
)

__all__ = [
    "GapFinding",
    "Hint",
    "Supports",
    "ProblemAnalysis",
    "TrajectoryEvent",
    "PedagogicalPlan",
    "PlannerConfig",
    "PlanViolation",
    "PlanReport",
    "ValidationError",
    "InfeasiblePlan",
    "NI_TARGET_DEFAULT",
    "analyze_problem",
    "construct_trajectory",
    "build_plan",
    "sample_profile",
    "validate_plan",
    "planned_ni_share",
    "ni_band_counts",
    "split_tagged",
    "preferred_hint_kind",
    "plan_to_dict",
    "plan_from_dict",
    "read_plan_rows",
    "write_plan_rows",
]

NI_TARGET_DEFAULT: Final[tuple[float, float]] = (0.35, 0.50)


class ValidationError(DataError):
    """Backend analysis output could not be coerced into a valid analysis."""


class InfeasiblePlan(DataError):
    """Constraints cannot be met under the given planner config."""


@dataclass(frozen=True, slots=True)
class GapFinding:
    kind: GapType
    description: str


@dataclass(frozen=True, slots=True)
class Hint:
    kind: HintType
    text: str


@dataclass(frozen=True, slots=True)
class Supports:
    planning: str
    monitoring: str
    debugging: str
    evaluation: str


@dataclass(frozen=True, slots=True)
class ProblemAnalysis:
    gaps: tuple[GapFinding, ...]
    supports: Supports
    hints: tuple[Hint, ...]


@dataclass(frozen=True, slots=True)
class TrajectoryEvent:
    """One anticipated decision point: what happens, what the student shows,
    what the coach does, what should follow."""

    event: str
    signal: str
    move: CoachMove
    effect: str


@dataclass(frozen=True, slots=True)
class PedagogicalPlan:
    profile: LearnerProfile
    analysis: ProblemAnalysis
    trajectory: tuple[TrajectoryEvent, ...]
    ni_target: tuple[float, float] = NI_TARGET_DEFAULT


@dataclass(frozen=True, slots=True)
class PlannerConfig:
    min_events: int = 4
    max_events: int = 8
    ni_target: tuple[float, float] = NI_TARGET_DEFAULT
    max_gaps: int = 2
    continue_prompt_rate: float = 0.05


@dataclass(frozen=True, slots=True)
class PlanViolation:
    code: str
    message: str
    index: int | None = None


@dataclass(frozen=True, slots=True)
class PlanReport:
    violations: tuple[PlanViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


_TAG_RE = re.compile(r"^\s*([a-z_]+)(?:\(([a-z_]+)\))?\s*(?::\s*(.*))?$", re.DOTALL)


def split_tagged(text: str) -> tuple[str, str | None, str]:
    """Split "tag(arg): description" into (tag, arg, description)."""
    match = _TAG_RE.match(text)
    if not match:
        return text.strip(), None, ""
    tag, arg, desc = match.groups()
    return tag, arg, (desc or "").strip()


def preferred_hint_kind(analysis: ProblemAnalysis) -> str:
    """Hint kind a scripted request should ask for: one that exists."""
    kinds = [h.kind for h in analysis.hints]
    if HintType.SCAFFOLDING in kinds:
        return HintType.SCAFFOLDING.value
    if kinds:
        return kinds[0].value
    return HintType.SCAFFOLDING.value


# ---------------------------------------------------------------------------
# Problem analysis via a generation backend


_ANALYSIS_SYSTEM = (
    "TASK: problem_analysis\n"
    "You analyze one math problem for coaching purposes. Respond ONLY with "
    "labeled lines in this exact format:\n"
    "GAP: <knowledge_gap|strategy_gap|monitoring_gap|execution_gap> | <description>\n"
    "PLANNING_SUPPORT: <one line>\n"
    "MONITORING_SUPPORT: <one line>\n"
    "DEBUGGING_SUPPORT: <one line>\n"
    "EVALUATION_SUPPORT: <one line>\n"
    "HINT: <content|scaffolding> | <hint text>\n"
    "Every knowledge_gap needs a content hint; every strategy_gap needs a "
    "scaffolding hint. All four *_SUPPORT lines are required."
)

_GAP_LINE = re.compile(r"^GAP:\s*(\w+)\s*\|\s*(.+)$")
_HINT_LINE = re.compile(r"^HINT:\s*(\w+)\s*\|\s*(.+)$")
_SUPPORT_LINE = re.compile(r"^(PLANNING|MONITORING|DEBUGGING|EVALUATION)_SUPPORT:\s*(.+)$")


def _parse_analysis(text: str, max_gaps: int) -> ProblemAnalysis:
    gaps: list[GapFinding] = []
    hints: list[Hint] = []
    supports = {"PLANNING": "", "MONITORING": "", "DEBUGGING": "", "EVALUATION": ""}
    for line in text.splitlines():
        line = line.strip()
        if m := _GAP_LINE.match(line):
            kind_raw, desc = m.groups()
            try:
                kind = GapType(kind_raw)
            except ValueError as exc:
                raise ValidationError(f"unknown gap kind {kind_raw!r}") from exc
            if len(gaps) < max_gaps:
                gaps.append(GapFinding(kind=kind, description=desc.strip()))
        elif m := _HINT_LINE.match(line):
            kind_raw, hint_text = m.groups()
            try:
                hkind = HintType(kind_raw)
            except ValueError as exc:
                raise ValidationError(f"unknown hint kind {kind_raw!r}") from exc
            hints.append(Hint(kind=hkind, text=hint_text.strip()))
        elif m := _SUPPORT_LINE.match(line):
            supports[m.group(1)] = m.group(2).strip()

    missing = [k for k, v in supports.items() if not v]
    if missing:
        raise ValidationError(f"missing support blocks: {missing}")
    if not gaps:
        raise ValidationError("analysis names no gaps")
    hint_kinds = {h.kind for h in hints}
    for gap in gaps:
        remedy = hint_remedy_for(gap.kind)
        if remedy is not None and remedy not in hint_kinds:
            raise ValidationError(
                f"gap {gap.kind.value} has no {remedy.value} hint"
            )
    return ProblemAnalysis(
        gaps=tuple(gaps),
        supports=Supports(
            planning=supports["PLANNING"],
            monitoring=supports["MONITORING"],
            debugging=supports["DEBUGGING"],
            evaluation=supports["EVALUATION"],
        ),
        hints=tuple(hints),
    )


def analyze_problem(
    problem: Problem, backend, config: PlannerConfig = PlannerConfig()
) -> ProblemAnalysis:
    """Produce the pre-dialogue analysis of one problem.

    ``backend`` is a BackendSpec or any object with a ``complete`` method.
    The template backend suffices offline and is byte-deterministic. One
    retry is attempted when the output is missing required sections.
    """
    if isinstance(backend, BackendSpec):
        backend = build_backend(backend)
    payload = json.dumps(
        {"statement": problem.statement, "reference_answer": problem.reference_answer},
        ensure_ascii=False,
    )
    messages = [
        ChatMessage(role="system", content=_ANALYSIS_SYSTEM),
        ChatMessage(
            role="user",
            content=f"Analyze this problem.\nINPUT: {payload}",
        ),
    ]
    last_error: ValidationError | None = None
    for attempt in range(2):
        request = GenerationRequest(messages=tuple(messages), tag="problem_analysis")
        response = backend.complete(request)
        try:
            return _parse_analysis(response.text, config.max_gaps)
        except ValidationError as exc:
            last_error = exc
            messages.append(
                ChatMessage(
                    role="user",
                    content=f"Your previous output was rejected ({exc}). "
                    "Re-emit ALL labeled lines in the required format.",
                )
            )
    raise ValidationError(f"analysis failed after retry: {last_error}")


# ---------------------------------------------------------------------------
# Trajectory construction

_EVENT_DESC: Final[dict[str, tuple[str, ...]]] = {
    "vague_start": (
        "the student opens without naming the goal",
        "work begins before the target quantity is stated",
    ),
    "restates_problem": (
        "the student restates the givens without a plan",
        "the setup is read back but no strategy is named",
    ),
    "progress_report": (
        "a stretch of quiet work reaches a natural checkpoint",
        "several steps pass without the student taking stock",
    ),
    "confident_claim": (
        "an unverified value is treated as settled",
        "the student commits to a base quantity without checking it",
    ),
    "hedging": (
        "the student hesitates between two interpretations",
        "confidence drops at the key phrase",
    ),
    "localized_confusion": (
        "the student isolates exactly which step is unclear",
        "one named sub-step resists while the rest is solid",
    ),
    "stuck": (
        "the same approach is repeated and stalls",
        "forward progress stops at the setup",
    ),
    "unproductive_persistence": (
        "the student grinds on a dead-end approach without asking for anything",
        "repetition without re-planning, and no request for support",
    ),
    "trailing_off": (
        "the student's narration trails off mid-step",
        "momentum fades without an explicit difficulty",
    ),
    "solution_ready": (
        "a complete answer is on the table",
        "the student declares the computation finished",
    ),
    "help_request": (
        "the student asks for support before attempting the problem",
        "an immediate request for assistance arrives",
    ),
}

_SIGNAL_DESC: Final[dict[str, tuple[str, ...]]] = {
    "vague_start": ("an aimless opening line", "reading without direction"),
    "restates_problem": ("a restatement with no stated approach",),
    "progress_report": ("a status summary of completed steps",),
    "confident_claim": ("a confident assertion with an unchecked base",),
    "hedging": ("hedged wording about the next step",),
    "localized_confusion": ("a precise statement of where understanding stops",),
    "stuck": ("an explicit impasse at the same point",),
    "unproductive_persistence": ("the same calculation repeated verbatim",),
    "trailing_off": ("a trailing, noncommittal utterance",),
    "solution_ready": ("a declared final result",),
    "help_request": ("a direct request for assistance",),
}

_EFFECT_FOR_MOVE: Final[dict[CoachMove, tuple[str, str]]] = {
    CoachMove.MONITOR_GOAL: ("restates_goal", "the student names the target quantity"),
    CoachMove.MONITOR_PLAN: ("articulates_plan", "the student states the next steps"),
    CoachMove.CHECK_PROGRESS: ("acknowledges_progress", "the student takes stock and continues"),
    CoachMove.CHECK_CONSISTENCY: ("corrects_course", "the student re-checks the flagged value"),
    CoachMove.UNCERTAINTY_PROBE: ("articulates_confusion", "the student pins down the unclear step"),
    CoachMove.STRATEGY_ALTERNATIVE: ("tries_alternative", "the student switches approach"),
    CoachMove.REPRESENTATION_SHIFT: ("reframes_problem", "the student re-represents the setup"),
    CoachMove.PROMPT_RESOURCE: ("requests_help", "the student asks for a stored hint"),
    CoachMove.REFLECT_OUTCOME: ("reflects", "the student reviews what worked"),
    CoachMove.CONTINUE_PROMPT: ("resumes_work", "the student keeps going"),
}

_SIGNAL_FOR_MOVE: Final[dict[CoachMove, str]] = {
    CoachMove.MONITOR_GOAL: "vague_start",
    CoachMove.MONITOR_PLAN: "restates_problem",
    CoachMove.CHECK_PROGRESS: "progress_report",
    CoachMove.CHECK_CONSISTENCY: "confident_claim",
    CoachMove.STRATEGY_ALTERNATIVE: "stuck",
    CoachMove.REPRESENTATION_SHIFT: "stuck",
    CoachMove.PROMPT_RESOURCE: "unproductive_persistence",
    CoachMove.CONTINUE_PROMPT: "trailing_off",
    CoachMove.REFLECT_OUTCOME: "solution_ready",
}

_PAD_POOL: Final[tuple[CoachMove, ...]] = (
    CoachMove.MONITOR_PLAN,
    CoachMove.CHECK_PROGRESS,
    CoachMove.MONITOR_GOAL,
    CoachMove.CHECK_CONSISTENCY,
)

REQUEST_EFFECT: Final[str] = "requests_help"


def _make_event(
    move: CoachMove, signal_tag: str, rng, effect_override: str | None = None
) -> TrajectoryEvent:
    event_desc = rng.choice(_EVENT_DESC[signal_tag])
    signal_desc = rng.choice(_SIGNAL_DESC[signal_tag])
    if effect_override is not None:
        effect = effect_override
    else:
        tag, desc = _EFFECT_FOR_MOVE[move]
        effect = f"{tag}: {desc}"
    return TrajectoryEvent(
        event=f"{signal_tag}: {event_desc}",
        signal=f"{signal_tag}: {signal_desc}",
        move=move,
        effect=effect,
    )


def construct_trajectory(
    profile: LearnerProfile,
    analysis: ProblemAnalysis,
    config: PlannerConfig = PlannerConfig(),
    seed: int = 0,
) -> tuple[TrajectoryEvent, ...]:
    """Assemble the profile-conditioned event sequence.

    Conditioning rules: over-confident learners get at least one
    CHECK_CONSISTENCY at an unverified claim; under-confident learners get an
    UNCERTAINTY_PROBE at hedging; well-calibrated learners see UNCERTAINTY_PROBE
    only at localized confusion. Avoidant learners get an internal-strategy
    move (SA/RS) before any PROMPT_RESOURCE, with the request arriving late;
    dependent learners open with a premature request answered by a
    non-debugging redirect and never see PROMPT_RESOURCE; executive learners
    request help themselves mid-flow, so delivery happens without a prompt.
    Exactly one REFLECT_OUTCOME closes every trajectory.
    """
    if not validate_profile(profile.calibration, profile.help_seeking):
        raise InfeasiblePlan(
            f"invalid profile ({profile.calibration.value}, {profile.help_seeking.value})"
        )
    rng = seeded_rng(
        seed, "trajectory", profile.calibration.value, profile.help_seeking.value
    )
    hint_kind = preferred_hint_kind(analysis)
    request_effect = (
        f"{REQUEST_EFFECT}({hint_kind}): the student asks for a {hint_kind} hint"
    )

    dependent_open: TrajectoryEvent | None = None
    core: list[TrajectoryEvent] = []
    tail: list[TrajectoryEvent] = []

    if profile.calibration is Calibration.OVER_CONFIDENT:
        core.append(_make_event(CoachMove.CHECK_CONSISTENCY, "confident_claim", rng))
    elif profile.calibration is Calibration.UNDER_CONFIDENT:
        core.append(_make_event(CoachMove.UNCERTAINTY_PROBE, "hedging", rng))
    else:
        # Optional unless an executive request needs a carrier event.
        if profile.help_seeking is HelpSeeking.EXECUTIVE or rng.random() < 0.5:
            core.append(
                _make_event(CoachMove.UNCERTAINTY_PROBE, "localized_confusion", rng)
            )

    if profile.help_seeking is HelpSeeking.AVOIDANT:
        redirect = rng.choice(
            (CoachMove.STRATEGY_ALTERNATIVE, CoachMove.REPRESENTATION_SHIFT)
        )
        core.append(_make_event(redirect, "stuck", rng))
        tail.append(
            _make_event(
                CoachMove.PROMPT_RESOURCE,
                "unproductive_persistence",
                rng,
                effect_override=request_effect,
            )
        )
    elif profile.help_seeking is HelpSeeking.DEPENDENT:
        redirect = rng.choice((CoachMove.MONITOR_GOAL, CoachMove.MONITOR_PLAN))
        dependent_open = _make_event(redirect, "help_request", rng)

    mandatory = (1 if dependent_open else 0) + len(core) + len(tail) + 1
    if config.max_events < mandatory:
        raise InfeasiblePlan(
            f"profile needs {mandatory} events but max_events={config.max_events}"
        )
    length = rng.randint(config.min_events, config.max_events)
    length = max(length, mandatory)

    pads: list[TrajectoryEvent] = []
    for _ in range(length - mandatory):
        if rng.random() < config.continue_prompt_rate:
            move = CoachMove.CONTINUE_PROMPT
        else:
            move = rng.choice(_PAD_POOL)
        pads.append(_make_event(move, _SIGNAL_FOR_MOVE[move], rng))

    openers = [p for p in pads if p.move in (CoachMove.MONITOR_GOAL, CoachMove.MONITOR_PLAN)][:1]
    middle = core + [p for p in pads if p not in openers]
    rng.shuffle(middle)

    sequence: list[TrajectoryEvent] = []
    if dependent_open is not None:
        sequence.append(dependent_open)
    sequence.extend(openers)
    sequence.extend(middle)
    sequence.extend(tail)

    if profile.help_seeking is HelpSeeking.EXECUTIVE:
        carrier = None
        for i in range(len(sequence) - 1, -1, -1):
            tag, _, _ = split_tagged(sequence[i].signal)
            if tag in ("hedging", "localized_confusion", "stuck", "confident_claim"):
                carrier = i
                break
        assert carrier is not None, "executive profiles always have a carrier event"
        old = sequence[carrier]
        sequence[carrier] = TrajectoryEvent(
            event=old.event, signal=old.signal, move=old.move, effect=request_effect
        )

    sequence.append(_make_event(CoachMove.REFLECT_OUTCOME, "solution_ready", rng))
    return tuple(sequence)


def build_plan(
    problem: Problem,
    profile: LearnerProfile,
    backend,
    config: PlannerConfig = PlannerConfig(),
    seed: int = 0,
) -> PedagogicalPlan:
    """analyze_problem + construct_trajectory in one step."""
    analysis = analyze_problem(problem, backend, config)
    trajectory = construct_trajectory(profile, analysis, config, seed)
    return PedagogicalPlan(
        profile=profile,
        analysis=analysis,
        trajectory=trajectory,
        ni_target=config.ni_target,
    )


def sample_profile(seed: int, problem_id: str) -> LearnerProfile:
    """Uniform draw over the eight admissible profiles, keyed by problem id
    so a corpus re-run assigns the same learner to the same problem."""
    rng = seeded_rng(seed, "profile", problem_id)
    return VALID_PROFILES[rng.randrange(len(VALID_PROFILES))]


# ---------------------------------------------------------------------------
# NI pacing arithmetic shared with the dialogue engine


def ni_band_counts(n_events: int, ni_target: tuple[float, float]) -> tuple[int, int]:
    """Inclusive range of total NO_INTERVENTION turns that puts the NI share
    inside ``ni_target`` for a trajectory of ``n_events`` non-NI moves.

    share = n_ni / (n_ni + n_events), so n_ni ranges over
    ceil(lo*k/(1-lo)) ... floor(hi*k/(1-hi)).
    """
    lo, hi = ni_target
    k = n_events
    n_min = math.ceil(lo * k / (1 - lo) - 1e-9)
    n_max = math.floor(hi * k / (1 - hi) + 1e-9)
    if n_min > n_max:
        raise InfeasiblePlan(f"no NI count satisfies target {ni_target} for {k} events")
    return n_min, n_max


def planned_ni_share(plan: PedagogicalPlan) -> float:
    """Expected NI share under default pacing (midpoint of the feasible band)."""
    k = len(plan.trajectory)
    n_min, n_max = ni_band_counts(k, plan.ni_target)
    n_mid = (n_min + n_max) // 2
    return n_mid / (n_mid + k)


# ---------------------------------------------------------------------------
# Plan validation

_DEBUGGING_MOVES: Final[frozenset[CoachMove]] = frozenset(
    {CoachMove.STRATEGY_ALTERNATIVE, CoachMove.REPRESENTATION_SHIFT, CoachMove.PROMPT_RESOURCE}
)


def validate_plan(plan: PedagogicalPlan) -> PlanReport:
    """Check every admissibility rule; empty violations means admissible."""
    violations: list[PlanViolation] = []

    if not validate_profile(plan.profile.calibration, plan.profile.help_seeking):
        violations.append(
            PlanViolation(
                code="invalid_profile",
                message=f"({plan.profile.calibration.value}, "
                f"{plan.profile.help_seeking.value}) is not a valid profile",
            )
        )

    lo, hi = plan.ni_target
    if not (0 <= lo < hi <= 1):
        violations.append(
            PlanViolation(code="bad_ni_target", message=f"ni_target {plan.ni_target} is not a band in [0, 1]")
        )

    seen_strategy = False
    first_request_index: int | None = None
    ro_positions: list[int] = []
    for i, ev in enumerate(plan.trajectory):
        for part, value in (
            ("event", ev.event),
            ("signal", ev.signal),
            ("effect", ev.effect),
        ):
            if not value.strip():
                violations.append(
                    PlanViolation(
                        code="empty_event_field",
                        message=f"event {i} has an empty {part}",
                        index=i,
                    )
                )
        if ev.move is CoachMove.PROMPT_RESOURCE and not seen_strategy:
            violations.append(
                PlanViolation(
                    code="pr_before_strategy",
                    message="PROMPT_RESOURCE precedes any SA/RS event",
                    index=i,
                )
            )
        if ev.move in (CoachMove.STRATEGY_ALTERNATIVE, CoachMove.REPRESENTATION_SHIFT):
            seen_strategy = True
        signal_tag, _, _ = split_tagged(ev.signal)
        if signal_tag == "help_request" and first_request_index is None:
            first_request_index = i
        if ev.move is CoachMove.REFLECT_OUTCOME:
            ro_positions.append(i)

    if (
        first_request_index is not None
        and plan.profile.help_seeking is HelpSeeking.DEPENDENT
        and plan.trajectory[first_request_index].move in _DEBUGGING_MOVES
    ):
        violations.append(
            PlanViolation(
                code="dependent_immediate_pr",
                message="dependent learner's first help request is answered by a debugging move",
                index=first_request_index,
            )
        )

    if len(ro_positions) != 1 or (
        plan.trajectory and ro_positions != [len(plan.trajectory) - 1]
    ):
        violations.append(
            PlanViolation(
                code="ro_closure",
                message="trajectory must end with exactly one REFLECT_OUTCOME",
            )
        )

    hint_kinds = {h.kind for h in plan.analysis.hints}
    for gap in plan.analysis.gaps:
        remedy = hint_remedy_for(gap.kind)
        if remedy is not None and remedy not in hint_kinds:
            violations.append(
                PlanViolation(
                    code="uncovered_gap",
                    message=f"gap {gap.kind.value} has no {remedy.value} hint",
                )
            )

    supports = plan.analysis.supports
    for name in ("planning", "monitoring", "debugging", "evaluation"):
        if not getattr(supports, name).strip():
            violations.append(
                PlanViolation(code="missing_support", message=f"support block {name!r} is empty")
            )

    return PlanReport(violations=tuple(violations))


# ---------------------------------------------------------------------------
# Wire format


def plan_to_dict(plan: PedagogicalPlan) -> dict:
    return {
        "profile": {
            "calibration": plan.profile.calibration.value,
            "help_seeking": plan.profile.help_seeking.value,
        },
        "analysis": {
            "gaps": [
                {"kind": g.kind.value, "description": g.description}
                for g in plan.analysis.gaps
            ],
            "supports": {
                "planning": plan.analysis.supports.planning,
                "monitoring": plan.analysis.supports.monitoring,
                "debugging": plan.analysis.supports.debugging,
                "evaluation": plan.analysis.supports.evaluation,
            },
            "hints": [{"kind": h.kind.value, "text": h.text} for h in plan.analysis.hints],
        },
        "trajectory": [
            {"event": e.event, "signal": e.signal, "move": e.move.canonical_name, "effect": e.effect}
            for e in plan.trajectory
        ],
        "ni_target": [plan.ni_target[0], plan.ni_target[1]],
    }


def plan_from_dict(record: dict, where: str = "plan") -> PedagogicalPlan:
    try:
        profile = LearnerProfile(
            calibration=Calibration(record["profile"]["calibration"]),
            help_seeking=HelpSeeking(record["profile"]["help_seeking"]),
        )
        analysis_rec = record["analysis"]
        supports_rec = analysis_rec["supports"]
        analysis = ProblemAnalysis(
            gaps=tuple(
                GapFinding(kind=GapType(g["kind"]), description=g["description"])
                for g in analysis_rec["gaps"]
            ),
            supports=Supports(
                planning=supports_rec["planning"],
                monitoring=supports_rec["monitoring"],
                debugging=supports_rec["debugging"],
                evaluation=supports_rec["evaluation"],
            ),
            hints=tuple(
                Hint(kind=HintType(h["kind"]), text=h["text"])
                for h in analysis_rec["hints"]
            ),
        )
        trajectory = []
        for i, e in enumerate(record["trajectory"]):
            parsed = parse_move_label(e["move"])
            if isinstance(parsed, ParseFailure):
                raise SchemaError(f"{where}.trajectory[{i}]: bad move {e['move']!r}")
            trajectory.append(
                TrajectoryEvent(
                    event=e["event"], signal=e["signal"], move=parsed, effect=e["effect"]
                )
            )
        ni_target = tuple(record.get("ni_target", NI_TARGET_DEFAULT))
        if len(ni_target) != 2:
            raise SchemaError(f"{where}: ni_target must be [lo, hi]")
        return PedagogicalPlan(
            profile=profile,
            analysis=analysis,
            trajectory=tuple(trajectory),
            ni_target=(float(ni_target[0]), float(ni_target[1])),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed plan record ({exc})") from exc


def read_plan_rows(path: str | Path) -> list[tuple[Problem, PedagogicalPlan]]:
    """Read a plans file: one {"problem": ..., "plan": ...} object per line."""
    rows = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            try:
                prob_rec = record["problem"]
                problem = Problem(
                    id=str(prob_rec["id"]),
                    dataset=prob_rec["dataset"],
                    statement=prob_rec["statement"],
                    reference_answer=prob_rec["reference_answer"],
                )
                plan = plan_from_dict(record["plan"], where=f"{path}:{lineno}")
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"{path}:{lineno}: malformed plan row ({exc})") from exc
            rows.append((problem, plan))
    return rows


def write_plan_rows(
    path: str | Path, rows: Iterable[tuple[Problem, PedagogicalPlan]]
) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for problem, plan in rows:
            record = {
                "problem": {
                    "id": problem.id,
                    "dataset": problem.dataset,
                    "statement": problem.statement,
                    "reference_answer": problem.reference_answer,
                },
                "plan": plan_to_dict(plan),
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
