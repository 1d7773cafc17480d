"""Plan a tutoring trajectory, realize it as a dialogue, then validate it.

The full authoring loop on three word problems:

  analyze -> plan -> generate -> validate

Run it: python3 demos/02_plan_generate_validate.py
"""

from metacoach import (
    BackendSpec,
    EngineConfig,
    Problem,
    Role,
    build_plan,
    generate_corpus,
    ni_rate,
    sample_profile,
    validate_corpus,
    validate_plan,
)

PROBLEMS = [
    Problem(
        id="demo-001",
        dataset="gsm8k",
        statement=(
            "A bakery sells 240 rolls a day. 15% are returned unsold. "
            "How many rolls stay sold each day?"
        ),
        reference_answer="204",
    ),
    Problem(
        id="demo-002",
        dataset="gsm8k",
        statement=(
            "Nina reads 12 pages each weekday and 30 pages on Saturday. "
            "How many pages does she read in a week?"
        ),
        reference_answer="90",
    ),
    Problem(
        id="demo-003",
        dataset="math",
        statement=(
            "A tank holds 180 liters and drains 20% per hour. "
            "How many liters remain after one hour?"
        ),
        reference_answer="144",
    ),
]

SEED = 7


def show_plan(problem: Problem) -> tuple[Problem, object]:
    profile = sample_profile(SEED, problem.id)
    plan = build_plan(problem, profile, BackendSpec(kind="template"), seed=SEED)
    report = validate_plan(plan)
    print(f"{problem.id}: {profile.calibration.value} / {profile.help_seeking.value}")
    print(f"  gaps: {', '.join(g.kind.value for g in plan.analysis.gaps)}")
    print(f"  hints on hand: {', '.join(h.kind.value for h in plan.analysis.hints)}")
    print(f"  admissible: {report.ok}")
    for event in plan.trajectory:
        print(f"    {event.signal:<34} -> {event.move.canonical_name}")
    print()
    return problem, plan


def main() -> None:
    print("Planning")
    print("=" * 72)
    rows = [show_plan(p) for p in PROBLEMS]

    print("Generation (seeded simulator: equal seeds, equal bytes)")
    print("=" * 72)
    conversations, manifest = generate_corpus(rows, EngineConfig(seed=SEED))
    print(f"generated {len(conversations)} conversations, manifest {manifest}\n")

    conv = conversations[0]
    print(f"Transcript of {conv.id}")
    print("-" * 72)
    for turn in conv.turns:
        if turn.role is Role.COACH:
            label = turn.move.canonical_name
            print(f"  coach [{label}] {turn.text}")
        elif turn.role is Role.SYSTEM:
            print(f"  system        {turn.text}")
        else:
            tags = f"  <- {','.join(turn.signals)}" if turn.signals else ""
            print(f"  student       {turn.text}{tags}")
    print(f"  (NI share of coach turns: {ni_rate(conv):.2f})\n")

    print("Validation")
    print("=" * 72)
    rows_out, aggregates = validate_corpus(conversations)
    for row in rows_out:
        print(
            f"  {row.conversation_id}: "
            f"contingency={row.contingency.conversation_verdict.value} "
            f"aligned={row.adherence.aligned} ni={row.ni:.2f}"
        )
    print(f"  aggregates: {aggregates}")


if __name__ == "__main__":
    main()
