"""Tour of the coach-move taxonomy.

Eleven moves, five regulation factors, and the learner profiles the planner
works against. Run it: python3 demos/01_taxonomy_tour.py
"""

from metacoach import (
    FACTOR_OF_MOVE,
    MOVE_EXAMPLES,
    MOVE_FUNCTIONS,
    VALID_PROFILES,
    CoachMove,
    ParseFailure,
    parse_move_label,
)


def main() -> None:
    print("The eleven coach moves")
    print("=" * 72)
    for move in CoachMove:
        factor = FACTOR_OF_MOVE[move].value
        print(f"{move.value}  {move.canonical_name:<22} [{factor}]")
        print(f"      purpose: {MOVE_FUNCTIONS[move]}")
        print(f"      example: {MOVE_EXAMPLES[move]!r}")
    print()

    print("Label parsing is forgiving about decoration, strict about meaning")
    print("=" * 72)
    for label in (
        "MONITOR_PLAN",
        "mp",
        "  **Reflect_Outcome**. ",
        "CP",
        "CT",
        "continue the dialogue",  # prose, not a label
        "MONITOR",  # ambiguous prefix
    ):
        parsed = parse_move_label(label)
        shown = (
            f"ParseFailure({parsed.raw!r})"
            if isinstance(parsed, ParseFailure)
            else parsed.canonical_name
        )
        print(f"{label!r:>28} -> {shown}")
    print()

    print("Learner profiles the planner accepts")
    print("=" * 72)
    # over-confident students do not hand their work off wholesale, so that
    # calibration never pairs with executive help seeking
    for profile in VALID_PROFILES:
        print(f"  {profile.calibration.value:<16} x {profile.help_seeking.value}")
    print(f"  ({len(VALID_PROFILES)} admissible pairs)")


if __name__ == "__main__":
    main()
