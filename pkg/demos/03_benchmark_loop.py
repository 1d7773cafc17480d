"""Run the coach-move prediction benchmark end to end.

Every coach turn in a conversation is one decision point: given the problem
and the dialogue so far, which move comes next? This script builds a small
gold corpus, shows the prompt a predictor sees, runs two backends over the
instances, and prints the scored comparison.

Run it: python3 demos/03_benchmark_loop.py
"""

from metacoach import (
    BackendSpec,
    CoachMove,
    EngineConfig,
    PromptMode,
    build_plan,
    build_prompt,
    extract_benchmark_instances,
    generate_corpus,
    report_to_markdown,
    run_benchmark,
    sample_profile,
    score_run,
)
from metacoach.dialogue import Problem

SEED = 21


def small_corpus():
    problems = [
        Problem(
            id=f"bench-{i:03d}",
            dataset="gsm8k",
            statement=(
                f"A crate holds {10 + i} boxes with {3 + i % 4} jars each. "
                f"{10 + 5 * (i % 3)}% of the jars crack in transit. "
                "How many jars arrive whole?"
            ),
            reference_answer=str(
                (10 + i) * (3 + i % 4) * (100 - (10 + 5 * (i % 3))) // 100
            ),
        )
        for i in range(6)
    ]
    rows = [
        (
            p,
            build_plan(
                p,
                sample_profile(SEED, p.id),
                BackendSpec(kind="template"),
                seed=SEED + i,
            ),
        )
        for i, p in enumerate(problems)
    ]
    conversations, _ = generate_corpus(rows, EngineConfig(seed=SEED))
    return conversations


def main() -> None:
    conversations = small_corpus()
    instances = extract_benchmark_instances(conversations)
    print(f"{len(conversations)} conversations -> {len(instances)} decision points\n")

    print("One full prompt, as the predictor sees it")
    print("=" * 72)
    print(build_prompt(instances[2], PromptMode.FULL))
    print("=" * 72)
    print()

    # rule-based reference predictor: reads the dialogue, picks a move
    template = BackendSpec(kind="template")
    predictions = run_benchmark(instances, template, PromptMode.FULL)
    report = score_run(predictions, instances)

    # degenerate baseline: answers REFLECT_OUTCOME no matter what
    always_ro = BackendSpec(kind="mock", mock_response="MOVE: REFLECT_OUTCOME")
    baseline = score_run(run_benchmark(instances, always_ro), instances)

    print("Rule-based predictor")
    print(report_to_markdown(report))
    print(
        f"Constant-reflection baseline: accuracy {baseline.overall_accuracy:.3f}, "
        f"NI detection {baseline.ni_detection:.3f}"
    )
    ro_share = report.per_move[CoachMove.REFLECT_OUTCOME].gt_share
    print(
        f"(the baseline can only ever match the REFLECT_OUTCOME share, "
        f"{ro_share:.1f}% here)"
    )


if __name__ == "__main__":
    main()
