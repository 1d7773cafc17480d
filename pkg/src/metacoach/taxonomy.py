"""Coach-move taxonomy, learner profiles, and label parsing.

Eleven coach actions partition into five metacognitive factors (planning,
monitoring, debugging, evaluation, dialogue management). Deliberate silence
(NO_INTERVENTION) is a first-class action: restraint is a pedagogical choice,
not an absence of data.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Final

__all__ = [
    "CoachMove",
    "MaiFactor",
    "Calibration",
    "HelpSeeking",
    "LearnerProfile",
    "GapType",
    "HintType",
    "HelpQuality",
    "ParseFailure",
    "MOVE_FUNCTIONS",
    "MOVE_EXAMPLES",
    "MOVE_PRECEDENCE",
    "FACTOR_OF_MOVE",
    "VALID_PROFILES",
    "mai_factor_of",
    "parse_move_label",
    "validate_profile",
    "hint_remedy_for",
    "prompt_remedy_for",
]


class CoachMove(Enum):
    """The eleven coach actions. Value is the two-letter wire code."""

    MONITOR_GOAL = "MG"
    MONITOR_PLAN = "MP"
    CHECK_PROGRESS = "CP"
    CHECK_CONSISTENCY = "CC"
    UNCERTAINTY_PROBE = "UP"
    STRATEGY_ALTERNATIVE = "SA"
    REPRESENTATION_SHIFT = "RS"
    PROMPT_RESOURCE = "PR"
    REFLECT_OUTCOME = "RO"
    CONTINUE_PROMPT = "CT"
    NO_INTERVENTION = "NI"

    @property
    def code(self) -> str:
        return self.value

    @property
    def canonical_name(self) -> str:
        """Full wire-format label, e.g. ``MONITOR_GOAL``."""
        return self.name


class MaiFactor(Enum):
    """Metacognitive factor each move serves."""

    PLANNING = "planning"
    MONITORING = "monitoring"
    DEBUGGING = "debugging"
    EVALUATION = "evaluation"
    DIALOGUE = "dialogue"


_M = CoachMove

FACTOR_OF_MOVE: Final[dict[CoachMove, MaiFactor]] = {
    _M.MONITOR_GOAL: MaiFactor.PLANNING,
    _M.MONITOR_PLAN: MaiFactor.PLANNING,
    _M.CHECK_PROGRESS: MaiFactor.MONITORING,
    _M.CHECK_CONSISTENCY: MaiFactor.MONITORING,
    _M.UNCERTAINTY_PROBE: MaiFactor.MONITORING,
    _M.STRATEGY_ALTERNATIVE: MaiFactor.DEBUGGING,
    _M.REPRESENTATION_SHIFT: MaiFactor.DEBUGGING,
    _M.PROMPT_RESOURCE: MaiFactor.DEBUGGING,
    _M.REFLECT_OUTCOME: MaiFactor.EVALUATION,
    _M.CONTINUE_PROMPT: MaiFactor.DIALOGUE,
    _M.NO_INTERVENTION: MaiFactor.DIALOGUE,
}

MOVE_FUNCTIONS: Final[dict[CoachMove, str]] = {
    _M.MONITOR_GOAL: "Elicit goal awareness",
    _M.MONITOR_PLAN: "Elicit strategy awareness",
    _M.CHECK_PROGRESS: "Prompt progress tracking",
    _M.CHECK_CONSISTENCY: "Surface contradictions",
    _M.UNCERTAINTY_PROBE: "Localize confusion",
    _M.STRATEGY_ALTERNATIVE: "Invite a different approach",
    _M.REPRESENTATION_SHIFT: "Suggest re-framing the problem",
    _M.PROMPT_RESOURCE: "Prompt help-seeking awareness",
    _M.REFLECT_OUTCOME: "Prompt retrospective reflection",
    _M.CONTINUE_PROMPT: "Neutral nudge to continue",
    _M.NO_INTERVENTION: "Preserve productive flow",
}

MOVE_EXAMPLES: Final[dict[CoachMove, str]] = {
    _M.MONITOR_GOAL: "What are you trying to find?",
    _M.MONITOR_PLAN: "What's your approach?",
    _M.CHECK_PROGRESS: "How's it going?",
    _M.CHECK_CONSISTENCY: "Does that fit with what you said?",
    _M.UNCERTAINTY_PROBE: "What's making you hesitate?",
    _M.STRATEGY_ALTERNATIVE: "What else could you try?",
    _M.REPRESENTATION_SHIFT: "Would a diagram help?",
    _M.PROMPT_RESOURCE: "What would help you move forward?",
    _M.REFLECT_OUTCOME: "What worked here?",
    _M.CONTINUE_PROMPT: "Keep going.",
    _M.NO_INTERVENTION: "(silence)",
}

# Tie-break order when several selection rules fire at the same decision
# point: interventions that surface errors or confusion outrank redirects,
# which outrank progress bookkeeping and nudges.
MOVE_PRECEDENCE: Final[tuple[CoachMove, ...]] = (
    _M.CHECK_CONSISTENCY,
    _M.UNCERTAINTY_PROBE,
    _M.STRATEGY_ALTERNATIVE,
    _M.REPRESENTATION_SHIFT,
    _M.PROMPT_RESOURCE,
    _M.MONITOR_GOAL,
    _M.MONITOR_PLAN,
    _M.CHECK_PROGRESS,
    _M.CONTINUE_PROMPT,
)


def mai_factor_of(move: CoachMove) -> MaiFactor:
    """Factor the move serves; total over all eleven moves."""
    return FACTOR_OF_MOVE[move]


class Calibration(Enum):
    """How the learner's confidence tracks their actual state."""

    OVER_CONFIDENT = "over_confident"
    UNDER_CONFIDENT = "under_confident"
    WELL_CALIBRATED = "well_calibrated"


class HelpSeeking(Enum):
    """The learner's help-seeking stance."""

    AVOIDANT = "avoidant"
    EXECUTIVE = "executive"
    DEPENDENT = "dependent"


@dataclass(frozen=True, slots=True)
class LearnerProfile:
    """A calibration/help-seeking pair. May encode an invalid combination;
    validity is checked by :func:`validate_profile`, not at construction."""

    calibration: Calibration
    help_seeking: HelpSeeking


def validate_profile(calibration: Calibration, help_seeking: HelpSeeking) -> bool:
    """True for the eight coherent pairs.

    An over-confident learner does not delegate work to others while believing
    they need no help, so (over_confident, executive) is contradictory.
    """
    return not (
        calibration is Calibration.OVER_CONFIDENT
        and help_seeking is HelpSeeking.EXECUTIVE
    )


VALID_PROFILES: Final[tuple[LearnerProfile, ...]] = tuple(
    LearnerProfile(c, h)
    for c in Calibration
    for h in HelpSeeking
    if validate_profile(c, h)
)


class GapType(Enum):
    """What kind of deficit the problem is likely to expose."""

    KNOWLEDGE_GAP = "knowledge_gap"
    STRATEGY_GAP = "strategy_gap"
    MONITORING_GAP = "monitoring_gap"
    EXECUTION_GAP = "execution_gap"


class HintType(Enum):
    CONTENT = "content"
    SCAFFOLDING = "scaffolding"


class HelpQuality(Enum):
    """Classification of a learner's help request at delivery time."""

    APPROPRIATE = "appropriate"
    PREMATURE = "premature"
    DELAYED = "delayed"
    MISMATCHED = "mismatched"


_HINT_REMEDY: Final[dict[GapType, HintType]] = {
    GapType.KNOWLEDGE_GAP: HintType.CONTENT,
    GapType.STRATEGY_GAP: HintType.SCAFFOLDING,
}

_PROMPT_REMEDY: Final[dict[GapType, frozenset[CoachMove]]] = {
    GapType.MONITORING_GAP: frozenset({_M.CHECK_CONSISTENCY}),
    GapType.EXECUTION_GAP: frozenset({_M.CHECK_CONSISTENCY, _M.CHECK_PROGRESS}),
}


def hint_remedy_for(gap: GapType) -> HintType | None:
    """Hint type that remedies the gap, if hints are the remedy at all."""
    return _HINT_REMEDY.get(gap)


def prompt_remedy_for(gap: GapType) -> frozenset[CoachMove]:
    """Coach moves that remedy the gap in-dialogue (empty if hints do)."""
    return _PROMPT_REMEDY.get(gap, frozenset())


@dataclass(frozen=True, slots=True)
class ParseFailure:
    """Unparseable move label; carries the raw text for audit."""

    raw: str


_BY_CODE: Final[dict[str, CoachMove]] = {m.code: m for m in CoachMove}
_BY_NAME: Final[dict[str, CoachMove]] = {m.name: m for m in CoachMove}
_DECORATION = re.compile(r"^[\s\[\]()<>{}\"'`*_.:,;!-]+|[\s\[\]()<>{}\"'`*_.:,;!-]+$")


def parse_move_label(text: str) -> CoachMove | ParseFailure:
    """Parse a move label; never raises, never guesses.

    Accepts the two-letter code or the full move name (underscored or
    spaced), case-insensitively, with surrounding whitespace and
    bracket/quote decoration stripped. Anything else - partial matches,
    prose, more than one label - is a :class:`ParseFailure`. ``CP`` is
    strictly CHECK_PROGRESS, never an abbreviation of CONTINUE_PROMPT.

    Examples
    --------
    >>> parse_move_label(" [no_intervention] ")
    <CoachMove.NO_INTERVENTION: 'NI'>
    >>> parse_move_label("ni")
    <CoachMove.NO_INTERVENTION: 'NI'>
    >>> parse_move_label("GIVE_ANSWER")
    ParseFailure(raw='GIVE_ANSWER')
    """
    if not isinstance(text, str):
        return ParseFailure(raw=str(text))
    stripped = _DECORATION.sub("", text)
    normalized = re.sub(r"[\s-]+", "_", stripped).upper()
    move = _BY_CODE.get(normalized) or _BY_NAME.get(normalized)
    if move is not None:
        return move
    return ParseFailure(raw=text)
