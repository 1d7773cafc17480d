"""Surface-text banks for simulated students, coach questions, problem
analyses, and the rule-based move policy.

Authoring discipline: student lines for neutral beats must not contain any
difficulty-lexicon term (the validators recompute signals from text, and a
stray "maybe" in a work turn would register as a hedge), while signal beats
must contain their category's terms. Coach lines are fixed questions with no
interpolation, so they can never leak answers or hint text.
"""

from __future__ import annotations

import random
import re
from typing import Final

from .taxonomy import Calibration, CoachMove

__all__ = [
    "coach_line",
    "student_line",
    "system_hint_line",
    "system_apology_line",
    "render_analysis",
    "predict_move_label",
    "focus_phrase",
    "number_fragments",
    "STUDENT_BEATS",
]

# Terms the default validator lexicon treats as signals; neutral beats and
# interpolated fragments are screened against these.
_RESERVED: Final[tuple[str, ...]] = (
    "not sure",
    "maybe",
    "i think?",
    "confused",
    "stuck",
    "don't know how",
    "pausing",
    "hint",
    "help",
    "could you",
    "final answer",
    "i'm finished",
    "that completes",
)

_M = CoachMove

COACH_LINES: Final[dict[CoachMove, tuple[str, ...]]] = {
    _M.MONITOR_GOAL: (
        "What are you trying to find?",
        "In your own words, what is the goal here?",
        "Before going further: what exactly does the problem ask for?",
        "What would a complete answer look like?",
    ),
    _M.MONITOR_PLAN: (
        "What's your approach?",
        "What's your plan for the next few steps?",
        "Which strategy are you using here?",
        "How do you intend to get from here to the answer?",
    ),
    _M.CHECK_PROGRESS: (
        "How's it going?",
        "Where are you relative to the goal?",
        "What's done so far, and what's left?",
        "How far along are you?",
    ),
    _M.CHECK_CONSISTENCY: (
        "Does that fit with what you said?",
        "Does this step agree with your earlier work?",
        "How does that line up with the problem statement?",
        "Is that consistent with the value you used before?",
    ),
    _M.UNCERTAINTY_PROBE: (
        "What's making you hesitate?",
        "Which part feels uncertain?",
        "Can you point at the exact step that is unclear?",
        "What specifically is the sticking point?",
    ),
    _M.STRATEGY_ALTERNATIVE: (
        "What else could you try?",
        "Is there another way to set this up?",
        "What's a different route to the same goal?",
        "If this path is blocked, what is an alternative?",
    ),
    _M.REPRESENTATION_SHIFT: (
        "Would a diagram help?",
        "Could you write that relationship as an equation in words?",
        "What happens if you try it with a smaller number first?",
        "Is there another way to represent this situation?",
    ),
    _M.PROMPT_RESOURCE: (
        "What would help you move forward?",
        "What kind of support would be useful right now?",
        "If you could ask for one thing here, what would it be?",
        "What resource would unblock you?",
    ),
    _M.REFLECT_OUTCOME: (
        "What worked here?",
        "What will you carry forward from this problem?",
        "Looking back, which decision mattered most?",
        "What would you do differently next time?",
    ),
    _M.CONTINUE_PROMPT: (
        "Keep going.",
        "Go on.",
        "Continue.",
        "You're on it - keep going.",
    ),
    # Silence is represented as an empty coach turn.
    _M.NO_INTERVENTION: ("",),
}

# Student beat banks. Placeholders: {x} working fragment, {a}/{b} sub-parts,
# {focus} key phrase, {ans} final value, {kind} hint kind, {t} takeaway.
STUDENT_BEATS: Final[dict[str, tuple[str, ...]]] = {
    "vague_start": (
        "Alright, reading through the problem now.",
        "Okay, let me look at what this one is asking.",
        "Starting on this problem.",
        "Let me take this from the top.",
    ),
    "restates_problem": (
        "So the problem gives {a} and asks about {b}.",
        "Restating it: we have {a}, and the question is about {b}.",
        "The setup is {a}; the target involves {b}.",
        "Given {a}, the task is to work out {b}.",
    ),
    "work": (
        "Working the next step: combining {x}.",
        "Computing with {x} now.",
        "Setting that up using {x}.",
        "Carrying the calculation forward with {x}.",
    ),
    "progress_report": (
        "Quick status: the setup with {a} is done, the part with {b} is next.",
        "Partway through - {a} is handled, moving toward {b}.",
        "Checkpoint: finished the step with {a}; starting on {b}.",
        "So far so good: {a} done, {b} remaining.",
    ),
    "confident_claim": (
        "The base here is {x}, so the rest follows directly.",
        "That part is settled; {x} is the value to carry through.",
        "No need to double-check that - {x} carries straight through.",
        "The value is {x}; moving on.",
    ),
    "hedging": (
        "Maybe the next step uses {x}, but I'm not sure.",
        "I'm not sure whether {x} is the right base here.",
        "Maybe I should combine {x} first... I'm not sure that's right.",
        "This could be {x}. I think? It might be off.",
    ),
    "localized_confusion": (
        "I understand {a}, but I'm stuck on {b}.",
        "The part with {a} makes sense; I'm stuck on how {b} fits.",
        "I can do {a}. Where I'm stuck is {b}.",
        "Everything up to {a} is fine - I'm stuck at {b}.",
    ),
    "stuck": (
        "I'm stuck at the same point as before.",
        "Still going in circles - I don't know how to get past this step.",
        "I keep hitting a wall here; I'm stuck on the setup.",
        "I'm stuck. Same dead end again.",
    ),
    "unproductive_persistence": (
        "Trying the same calculation a third time; same result.",
        "Going over the same steps once more from the top.",
        "Same approach again - the numbers come out the same way.",
        "Repeating the procedure hasn't changed anything.",
    ),
    "trailing_off": (
        "Hmm.",
        "Okay...",
        "Right, so...",
        "Let me see...",
    ),
    "help_request": (
        "Could I get a {kind} hint here? Specifically about {x}.",
        "A {kind} hint would be useful now - something about {x}.",
        "Requesting a {kind} hint: what should I look at for {x}?",
        "If there is a {kind} hint available about {x}, I'd like it.",
    ),
    "post_hint": (
        "Okay, applying that: working through {x} again.",
        "Right - with that framing, {x} falls into place.",
        "That clarifies things; redoing the step with {x}.",
        "Following that guidance, {x} works out.",
    ),
    "solution_ready": (
        "So my final answer is {ans}.",
        "That gives {ans} - my final answer.",
        "Everything checks out; my final answer is {ans}.",
        "My final answer: {ans}.",
    ),
    "reflection": (
        "Main takeaway: {t}. Next time I'll watch for that first.",
        "What worked was {t}; I'll reuse that pattern.",
        "Lesson learned: {t} - checking the wording early pays off.",
        "Carrying forward: {t}.",
    ),
}

_CAL_PREFIX: Final[dict[Calibration, tuple[str, ...]]] = {
    Calibration.OVER_CONFIDENT: ("Obviously, ", "Clearly, ", "Easy: ", "No question: "),
    Calibration.UNDER_CONFIDENT: ("I suppose ", "Perhaps ", "Hopefully ", "My guess: "),
    Calibration.WELL_CALIBRATED: ("", "", "", ""),
}

# Beats whose wording is the signal itself; calibration prefixes would dilute
# or contaminate them, so they render bare.
_BARE_BEATS: Final[frozenset[str]] = frozenset(
    {
        "hedging",
        "localized_confusion",
        "stuck",
        "help_request",
        "solution_ready",
        "trailing_off",
        "unproductive_persistence",
    }
)


def _sanitize(fragment: str) -> str:
    low = fragment.lower()
    if any(term in low for term in _RESERVED):
        return "the next step"
    return fragment


def number_fragments(statement: str) -> list[str]:
    """Numeric tokens from a problem statement, for safe interpolation."""
    return re.findall(r"\$?\d[\d,]*(?:\.\d+)?%?", statement)[:4]


def focus_phrase(statement: str) -> str:
    """The clause a hint should point at: a percent-change phrase if present,
    else the first number-bearing clause, else a generic fallback."""
    match = re.search(
        r"(?:increas|decreas|rais|reduc|grow|improv|chang)\w*[^.,;\n]*?\d[\d,.]*\s*%",
        statement,
        re.IGNORECASE,
    )
    if match:
        return _sanitize(match.group(0).strip())
    for clause in re.split(r"[.;\n]", statement):
        if re.search(r"\d", clause):
            return _sanitize(clause.strip())
    return "the key relationship in the problem"


def _slots(statement: str, reference_answer: str, kind: str = "scaffolding") -> dict[str, str]:
    numbers = number_fragments(statement) or ["the given values"]
    a = numbers[0]
    b = numbers[1] if len(numbers) > 1 else "the target quantity"
    x = " and ".join(numbers[:2]) if len(numbers) > 1 else a
    return {
        "a": _sanitize(a),
        "b": _sanitize(b),
        "x": _sanitize(x),
        "focus": focus_phrase(statement),
        "ans": _sanitize(reference_answer) or "the computed value",
        "kind": kind,
        "t": "rewriting the tricky phrase as an equation before computing",
    }


def student_line(
    calibration: Calibration,
    beat: str,
    rng: random.Random,
    statement: str,
    reference_answer: str,
    hint_kind: str = "scaffolding",
) -> str:
    """One student utterance for a beat, in the learner's voice."""
    bases = STUDENT_BEATS[beat]
    text = rng.choice(bases).format(**_slots(statement, reference_answer, hint_kind))
    if beat not in _BARE_BEATS:
        prefix = rng.choice(_CAL_PREFIX[calibration])
        if prefix:
            text = prefix + text[0].lower() + text[1:]
    return text


def coach_line(move: CoachMove, rng: random.Random) -> str:
    return rng.choice(COACH_LINES[move])


def system_hint_line(kind: str, text: str) -> str:
    return f"{kind.capitalize()} hint: {text}"


def system_apology_line(kind: str) -> str:
    return f"No {kind} hint is stored for this problem. Keep working from your last step."


def render_analysis(statement: str, reference_answer: str) -> str:
    """Deterministic problem analysis in the labeled-line exchange format."""
    focus = focus_phrase(statement)
    has_percent = "%" in statement
    lines = [
        f'GAP: strategy_gap | Mapping the phrase "{focus}" onto the correct base quantity.',
    ]
    if has_percent:
        lines.append(
            "GAP: knowledge_gap | A percent change applies to the original amount unless the wording says otherwise."
        )
    else:
        lines.append(
            "GAP: monitoring_gap | Intermediate results are carried forward without being re-checked."
        )
    lines += [
        "PLANNING_SUPPORT: Restate the target quantity and list the given values before computing anything.",
        f'MONITORING_SUPPORT: After each step, compare the running result against the phrase "{focus}".',
        "DEBUGGING_SUPPORT: If two totals disagree, recompute the base quantity of the change first.",
        "EVALUATION_SUPPORT: Check the final value against the question actually asked, then name the step that mattered most.",
        f'HINT: scaffolding | Focus on the phrase "{focus}". Rewrite it as an equation in words before plugging in numbers.',
    ]
    if has_percent:
        lines.append(
            "HINT: content | An increase of N% means new value = original + (N/100) * original."
        )
    return "\n".join(lines)


_ANSWER_CUES: Final[tuple[str, ...]] = ("final answer", "i'm finished", "that completes")
_REQUEST_CUES: Final[tuple[str, ...]] = ("hint", "could you", "help")
_IMPASSE_CUES: Final[tuple[str, ...]] = ("stuck", "don't know how", "pausing")
_HEDGE_CUES: Final[tuple[str, ...]] = ("not sure", "maybe", "i think?", "confused")


def predict_move_label(prompt: str) -> str:
    """Rule-based next-move policy over a rendered benchmark prompt.

    Reads the most recent dialogue line; used by the template backend so the
    whole benchmark loop runs offline.
    """
    lines = [l for l in prompt.splitlines() if l.strip()]
    last_student = ""
    last_is_system = False
    for line in lines:
        if line.startswith("Student:"):
            last_student = line.lower()
            last_is_system = False
        elif line.startswith("System:"):
            last_is_system = True
        elif line.startswith("Coach"):
            last_is_system = False
    if last_is_system:
        return CoachMove.NO_INTERVENTION.canonical_name
    if any(cue in last_student for cue in _ANSWER_CUES):
        return CoachMove.REFLECT_OUTCOME.canonical_name
    if any(cue in last_student for cue in _REQUEST_CUES):
        return CoachMove.MONITOR_PLAN.canonical_name
    if any(cue in last_student for cue in _IMPASSE_CUES):
        return CoachMove.STRATEGY_ALTERNATIVE.canonical_name
    if any(cue in last_student for cue in _HEDGE_CUES):
        return CoachMove.UNCERTAINTY_PROBE.canonical_name
    return CoachMove.NO_INTERVENTION.canonical_name
