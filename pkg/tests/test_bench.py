"""Prompt construction, benchmark running, scoring, report serialization."""

import hashlib
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metacoach.backends import BackendSpec
from metacoach.bench import (
    CATEGORY_COLUMNS,
    CONFUSION_COLUMNS,
    MOVE_ORDER,
    IdMismatch,
    Prediction,
    PromptMode,
    bias_pp,
    build_prompt,
    emit_report,
    extract_move,
    fold_category_confusion,
    read_predictions,
    report_from_json,
    report_to_csv,
    report_to_json,
    report_to_markdown,
    run_benchmark,
    score_run,
    template_fingerprint,
    template_text,
    write_predictions,
)
from metacoach.dialogue import (
    BenchmarkInstance,
    DialogueContext,
    EmptyDataset,
    Role,
    SchemaError,
    Turn,
    extract_benchmark_instances,
)
from metacoach.errors import ConfigError, DataError
from metacoach.taxonomy import FACTOR_OF_MOVE, CoachMove, ParseFailure

from .conftest import TEMPLATE_SPEC, make_problem, worked_example

_INSTANCES = extract_benchmark_instances([worked_example()])


def _synthetic(pairs: list[tuple[int, int]]) -> tuple[list, list]:
    """Instances and predictions from (gold index, predicted index) pairs;
    a predicted index of 11 means unparseable output."""
    instances, predictions = [], []
    for k, (g, p) in enumerate(pairs):
        problem = make_problem(k % 5)
        instances.append(
            BenchmarkInstance(
                instance_id=f"i{k:03d}",
                context=DialogueContext(
                    problem=problem,
                    history=(Turn(0, Role.STUDENT, "Working the first step."),),
                ),
                gold_move=MOVE_ORDER[g],
            )
        )
        parsed = ParseFailure("junk") if p == len(MOVE_ORDER) else MOVE_ORDER[p]
        raw = "junk" if p == len(MOVE_ORDER) else f"MOVE: {MOVE_ORDER[p].canonical_name}"
        predictions.append(Prediction(instance_id=f"i{k:03d}", raw_output=raw, parsed=parsed))
    return instances, predictions


def test_template_fingerprints_identify_the_prompt() -> None:
    full = template_fingerprint(PromptMode.FULL)
    minimal = template_fingerprint(PromptMode.MINIMAL)
    assert full["mode"] == "full" and minimal["mode"] == "minimal"
    assert full["sha256"] != minimal["sha256"]
    assert full == template_fingerprint(PromptMode.FULL)
    digest = hashlib.sha256(template_text(PromptMode.FULL).encode()).hexdigest()
    assert full["sha256"] == digest


def test_full_prompt_carries_definitions_and_context() -> None:
    instance = _INSTANCES[2]  # the probe after the hedged impasse
    prompt = build_prompt(instance, PromptMode.FULL)
    assert instance.context.problem.statement in prompt
    assert "MONITOR_GOAL (Planning):" in prompt
    assert "~35-50%" in prompt
    assert "Student: " in prompt
    assert "Coach [NO_INTERVENTION]" in prompt
    for key in ("$problem", "$history", "$move_definitions", "$move_names"):
        assert key not in prompt  # every placeholder resolved


def test_minimal_prompt_lists_bare_move_names_only() -> None:
    instance = _INSTANCES[0]
    prompt = build_prompt(instance, PromptMode.MINIMAL)
    lines = prompt.split("\n")
    for move in MOVE_ORDER:
        assert move.canonical_name in lines
    assert "Example:" not in prompt
    assert "(Planning)" not in prompt
    assert len(prompt) < len(build_prompt(instance, PromptMode.FULL))


def test_post_hint_context_shows_the_delivery() -> None:
    instance = _INSTANCES[3]  # gold NI right after the scaffolding delivery
    assert instance.gold_move is CoachMove.NO_INTERVENTION
    prompt = build_prompt(instance)
    assert "System: Scaffolding hint:" in prompt


def test_history_rendering_formats_each_role() -> None:
    from metacoach.bench import render_history

    history = (
        Turn(0, Role.STUDENT, "First pass done."),
        Turn(1, Role.COACH, "", move=CoachMove.NO_INTERVENTION),
        Turn(2, Role.STUDENT, "Could you give me a hint?", signals=("help_request",)),
        Turn(3, Role.SYSTEM, "Scaffolding hint: restate the target."),
    )
    assert render_history(history) == (
        "Student: First pass done.\n"
        "Coach [NO_INTERVENTION]:\n"
        "Student: Could you give me a hint?\n"
        "System: Scaffolding hint: restate the target."
    )


def test_extract_move_takes_the_last_move_line() -> None:
    raw = "Thinking it over.\nMOVE: CHECK_PROGRESS\nwait, no.\nMOVE: monitor_plan."
    assert extract_move(raw) is CoachMove.MONITOR_PLAN
    assert extract_move("  REFLECT_OUTCOME  ") is CoachMove.REFLECT_OUTCOME
    assert extract_move("MOVE: **UP**") is CoachMove.UNCERTAINTY_PROBE
    failure = extract_move("The coach should probably wait and see.")
    assert isinstance(failure, ParseFailure)


def test_run_benchmark_input_validation() -> None:
    with pytest.raises(EmptyDataset):
        run_benchmark([], TEMPLATE_SPEC)
    with pytest.raises(ConfigError, match="concurrency"):
        run_benchmark(_INSTANCES, TEMPLATE_SPEC, concurrency=0)


def test_run_benchmark_is_ordered_and_deterministic() -> None:
    first = run_benchmark(_INSTANCES, TEMPLATE_SPEC)
    second = run_benchmark(_INSTANCES, TEMPLATE_SPEC)
    assert first == second
    assert [p.instance_id for p in first] == [i.instance_id for i in _INSTANCES]
    assert all(p.ok for p in first)


def test_backend_failure_becomes_a_parse_failure_row(tmp_path) -> None:
    cache = tmp_path / "empty.jsonl"
    cache.write_text("")
    spec = BackendSpec(kind="replay", cache_path=str(cache))
    predictions = run_benchmark(_INSTANCES, spec)
    assert len(predictions) == len(_INSTANCES)
    for pred in predictions:
        assert not pred.ok
        assert pred.raw_output.startswith("backend error:")
        assert pred.latency_ms == 0.0


def test_gold_echo_scores_perfectly() -> None:
    instances = _INSTANCES
    predictions = [
        Prediction(
            instance_id=i.instance_id,
            raw_output=f"MOVE: {i.gold_move.canonical_name}",
            parsed=i.gold_move,
        )
        for i in instances
    ]
    report = score_run(predictions, instances)
    assert report.overall_accuracy == 1.0
    assert report.ni_detection == 1.0
    assert report.invalid.n == 0
    assert all(s.n == 0 or s.accuracy == 1.0 for s in report.per_move.values())
    assert report.per_dataset["gsm8k"].overall_accuracy == 1.0


def test_score_run_id_mismatches() -> None:
    instances, predictions = _synthetic([(0, 0), (1, 1), (2, 2)])
    with pytest.raises(IdMismatch, match="without predictions"):
        score_run(predictions[:-1], instances)
    with pytest.raises(IdMismatch, match="without instances"):
        score_run(predictions, instances[:-1])
    with pytest.raises(IdMismatch, match="duplicate prediction"):
        score_run(predictions + [predictions[0]], instances)
    with pytest.raises(IdMismatch, match="duplicate instance"):
        score_run(predictions, instances + [instances[0]])


def test_parse_failure_counts_against_accuracy() -> None:
    instances, predictions = _synthetic([(0, 0), (10, 11), (10, 10)])
    report = score_run(predictions, instances)
    assert report.overall_accuracy == pytest.approx(2 / 3)
    assert report.invalid.n == 1
    assert report.invalid.pred_share == pytest.approx(100 / 3)
    ni = report.per_move[CoachMove.NO_INTERVENTION]
    assert ni.n == 2 and ni.accuracy == pytest.approx(0.5)
    assert report.ni_detection == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 10), st.integers(0, 11)), min_size=1, max_size=60
    )
)
def test_scoring_matches_a_naive_recount(pairs: list[tuple[int, int]]) -> None:
    instances, predictions = _synthetic(pairs)
    report = score_run(predictions, instances)
    n = len(pairs)
    hits = sum(1 for g, p in pairs if g == p)
    assert report.n == n
    assert report.overall_accuracy == pytest.approx(hits / n)
    for i, move in enumerate(MOVE_ORDER):
        gold_n = sum(1 for g, _ in pairs if g == i)
        pred_n = sum(1 for _, p in pairs if p == i)
        stats = report.per_move[move]
        assert stats.n == gold_n
        assert stats.gt_share == pytest.approx(100.0 * gold_n / n)
        assert stats.pred_share == pytest.approx(100.0 * pred_n / n)
        assert stats.bias == pytest.approx(bias_pp(stats.gt_share, stats.pred_share))
        if gold_n:
            assert stats.accuracy == pytest.approx(
                sum(1 for g, p in pairs if g == i and p == i) / gold_n
            )
        else:
            assert stats.accuracy is None
        for j in range(12):
            expected = sum(1 for g, p in pairs if g == i and p == j)
            assert report.move_confusion[i][j] == expected
    assert report.invalid.n == sum(1 for _, p in pairs if p == 11)
    # shares over gold sum to one hundred; bias sums to minus the invalid share
    assert sum(s.gt_share for s in report.per_move.values()) == pytest.approx(100.0)
    assert sum(s.bias for s in report.per_move.values()) == pytest.approx(
        -report.invalid.pred_share
    )


def test_category_fold_aggregates_by_factor() -> None:
    instances, predictions = _synthetic([(0, 3), (3, 3), (10, 11), (8, 8)])
    report = score_run(predictions, instances)
    folded = fold_category_confusion(report.move_confusion)
    assert folded == report.category_confusion
    assert len(folded) == 5 and all(len(row) == 6 for row in folded)
    total = sum(sum(row) for row in folded)
    assert total == report.n
    # factor totals match a recount through FACTOR_OF_MOVE
    for fi, factor in enumerate(CATEGORY_COLUMNS[:-1]):
        expected = sum(
            1
            for inst in instances
            if FACTOR_OF_MOVE[inst.gold_move].value == factor
        )
        assert sum(folded[fi]) == expected


def test_category_fold_rejects_bad_shapes() -> None:
    with pytest.raises(DataError, match="11x12"):
        fold_category_confusion([[0] * 11] * 11)


def test_report_json_round_trip() -> None:
    instances, predictions = _synthetic([(0, 0), (5, 7), (10, 11), (10, 10), (8, 8)])
    report = score_run(predictions, instances, template_info={"mode": "full"})
    payload = json.loads(json.dumps(report_to_json(report)))
    assert report_from_json(payload) == report
    assert payload["template"] == {"mode": "full"}
    assert payload["move_confusion"]["predicted"] == list(CONFUSION_COLUMNS)


def test_report_from_json_rejects_missing_fields() -> None:
    instances, predictions = _synthetic([(0, 0)])
    payload = report_to_json(score_run(predictions, instances))
    del payload["per_move"]["MONITOR_GOAL"]
    with pytest.raises(SchemaError):
        report_from_json(payload)


def test_report_csv_and_markdown_shapes() -> None:
    instances, predictions = _synthetic([(0, 0), (10, 11)])
    report = score_run(predictions, instances)
    csv_text = report_to_csv(report)
    lines = csv_text.strip().split("\n")
    assert lines[0] == "move,accuracy,n,gt_share,pred_share,bias"
    assert len(lines) == 12
    # unseen moves have no accuracy, rendered as the empty cell
    row = dict(zip((l.split(",")[0] for l in lines[1:]), lines[1:]))
    assert row["CHECK_PROGRESS"].split(",")[1] == ""

    md = report_to_markdown(report)
    assert md.count("\n|") >= 12
    assert "Invalid outputs: 1" in md
    assert "NI detection rate:" in md


def test_emit_report_writes_requested_formats(tmp_path) -> None:
    instances, predictions = _synthetic([(0, 0), (1, 1)])
    report = score_run(predictions, instances)
    paths = emit_report(report, tmp_path / "out")
    assert set(paths) == {"json", "csv", "md"}
    for fmt, path in paths.items():
        assert path.name == f"benchmark_report.{fmt}"
        assert path.read_text()
    stored = json.loads(paths["json"].read_text())
    assert report_from_json(stored) == report
    with pytest.raises(ConfigError, match="unknown report format"):
        emit_report(report, tmp_path / "out2", formats=("json", "pdf"))


def test_predictions_jsonl_round_trip(tmp_path) -> None:
    predictions = [
        Prediction("a#00", "MOVE: CHECK_PROGRESS", CoachMove.CHECK_PROGRESS, 12.5),
        Prediction("a#01", "mumbling", ParseFailure("mumbling"), 0.0),
    ]
    path = tmp_path / "preds.jsonl"
    write_predictions(predictions, path)
    rows = [json.loads(line) for line in path.read_text().strip().split("\n")]
    assert rows[0]["parsed_move"] == "CHECK_PROGRESS"
    assert rows[1]["parsed_move"] is None
    assert read_predictions(path) == predictions


def test_read_predictions_rejects_bad_labels(tmp_path) -> None:
    path = tmp_path / "preds.jsonl"
    path.write_text(
        json.dumps(
            {
                "instance_id": "a#00",
                "raw_output": "x",
                "parsed_move": "NOT_A_MOVE",
                "latency_ms": 0.0,
            }
        )
        + "\n"
    )
    with pytest.raises(SchemaError, match="bad move label"):
        read_predictions(path)
    path.write_text('{"instance_id": "a#00"}\n')
    with pytest.raises(SchemaError, match="missing field"):
        read_predictions(path)
