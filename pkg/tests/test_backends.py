"""Backend protocol: specs, hashing, template/mock/http, record and replay."""

import json

import pytest

from metacoach.backends import (
    PRESETS,
    AuthMissing,
    BackendSpec,
    CacheMiss,
    ChatMessage,
    GenerationRequest,
    HttpBackend,
    HttpStatusError,
    MockBackend,
    RecordingBackend,
    ReplayBackend,
    SamplingParams,
    TemplateBackend,
    build_backend,
    complete,
    preset_sampling,
    record_replay,
    request_hash,
)
from metacoach.errors import ConfigError


def _request(text: str, tag: str = "") -> GenerationRequest:
    return GenerationRequest(messages=(ChatMessage(role="user", content=text),), tag=tag)


def test_sampling_params_bounds() -> None:
    assert SamplingParams().temperature == 0.0
    for bad in (
        dict(temperature=-0.1),
        dict(top_p=0.0),
        dict(top_p=1.5),
        dict(top_k=0),
        dict(max_tokens=0),
    ):
        with pytest.raises(ConfigError):
            SamplingParams(**bad)


def test_sampling_presets() -> None:
    assert preset_sampling("gpt-oss").temperature == 1.0
    assert all(isinstance(p, SamplingParams) for p in PRESETS.values())
    with pytest.raises(ConfigError, match="unknown sampling preset"):
        preset_sampling("nonesuch")


def test_request_hash_ignores_tag_only() -> None:
    base = request_hash("m", _request("same text", tag="a"))
    assert base == request_hash("m", _request("same text", tag="b"))
    assert base != request_hash("other-model", _request("same text", tag="a"))
    assert base != request_hash("m", _request("different text", tag="a"))
    assert len(base) == 64 and int(base, 16) >= 0


def test_backend_spec_validation() -> None:
    with pytest.raises(ConfigError, match="unknown backend kind"):
        BackendSpec(kind="psychic")
    with pytest.raises(ConfigError, match="needs an endpoint"):
        BackendSpec(kind="http")
    with pytest.raises(ConfigError, match="needs a cache_path"):
        BackendSpec(kind="replay")


def test_redacted_spec_never_carries_token_material(monkeypatch) -> None:
    monkeypatch.setenv("SOME_TOKEN", "secret-value")
    spec = BackendSpec(
        kind="http", endpoint="http://x.test/v1", auth_env="SOME_TOKEN"
    )
    view = spec.redacted()
    assert view == {
        "kind": "http",
        "endpoint": "http://x.test/v1",
        "model": "local",
        "auth_env": "SOME_TOKEN",
        "cache_path": "",
    }
    assert "secret-value" not in json.dumps(view)


def test_build_backend_dispatch(tmp_path) -> None:
    assert isinstance(build_backend(BackendSpec(kind="template")), TemplateBackend)
    assert isinstance(build_backend(BackendSpec(kind="mock")), MockBackend)
    assert isinstance(
        build_backend(BackendSpec(kind="http", endpoint="http://x.test")), HttpBackend
    )
    recorder = build_backend(BackendSpec(kind="template", cache_path=str(tmp_path / "c.jsonl")))
    assert isinstance(recorder, RecordingBackend)
    assert isinstance(recorder.inner, TemplateBackend)


def test_template_backend_predicts_without_task_header() -> None:
    backend = TemplateBackend(BackendSpec(kind="template"))
    response = backend.complete(_request("Student: My final answer is 12."))
    assert response.text == "MOVE: REFLECT_OUTCOME"
    assert response.latency_ms == 0.0


def test_template_backend_task_dispatch() -> None:
    backend = TemplateBackend(BackendSpec(kind="template"))
    payload = {"statement": "Take 20% off 50 lamps.", "reference_answer": "40"}
    request = GenerationRequest(
        messages=(
            ChatMessage(role="system", content="TASK: problem_analysis\nAnalyze."),
            ChatMessage(role="user", content=f"INPUT: {json.dumps(payload)}"),
        )
    )
    text = backend.complete(request).text
    assert "GAP:" in text and "HINT:" in text

    unknown = GenerationRequest(
        messages=(
            ChatMessage(role="system", content="TASK: juggle\nGo."),
            ChatMessage(role="user", content='INPUT: {"x": 1}'),
        )
    )
    assert backend.complete(unknown).text.startswith("ERROR: unknown task")


def test_template_backend_student_task_shows_the_beat() -> None:
    backend = TemplateBackend(BackendSpec(kind="template"))
    payload = {"seed": 3, "beat": "hedging", "calibration": "under_confident"}
    request = GenerationRequest(
        messages=(
            ChatMessage(role="system", content="TASK: student_utterance\nWrite it."),
            ChatMessage(role="user", content=f"Beat: hedging.\nINPUT: {json.dumps(payload)}"),
        )
    )
    from metacoach.validation import detect_signal_tags

    assert "hedge" in detect_signal_tags(backend.complete(request).text)


def test_mock_backend_scripted_and_default() -> None:
    scripted_request = _request("scripted input")
    key = request_hash("local", scripted_request)
    spec = BackendSpec(
        kind="mock",
        mock_script=((key, "the scripted reply"),),
        mock_response="fallback",
    )
    backend = MockBackend(spec)
    assert backend.complete(scripted_request).text == "the scripted reply"
    assert backend.complete(_request("anything else")).text == "fallback"


def test_one_shot_complete_helper() -> None:
    response = complete(
        BackendSpec(kind="mock", mock_response="hi"), _request("x")
    )
    assert response.text == "hi"


# -- recording and replay ----------------------------------------------------


def test_record_then_replay_round_trip(tmp_path) -> None:
    cache = tmp_path / "cache.jsonl"
    spec = record_replay(BackendSpec(kind="template"), cache)
    assert spec.cache_path == str(cache)
    backend = build_backend(spec)
    first = backend.complete(_request("Student: My final answer is 12."))
    second = backend.complete(_request("Student: I'm stuck on this."))
    backend.complete(_request("Student: My final answer is 12."))  # duplicate
    lines = cache.read_text().strip().split("\n")
    assert len(lines) == 2  # dedup: the repeat writes nothing

    replay = build_backend(BackendSpec(kind="replay", cache_path=str(cache)))
    assert isinstance(replay, ReplayBackend)
    assert replay.complete(_request("Student: My final answer is 12.")).text == first.text
    assert replay.complete(_request("Student: I'm stuck on this.")).text == second.text
    with pytest.raises(CacheMiss):
        replay.complete(_request("never recorded"))


def test_rerun_leaves_cache_byte_identical(tmp_path) -> None:
    cache = tmp_path / "cache.jsonl"
    spec = record_replay(BackendSpec(kind="template"), cache)
    for _ in range(2):
        backend = build_backend(spec)
        backend.complete(_request("Student: Maybe this works?"))
        backend.complete(_request("Student: Could you help?"))
    blob = cache.read_bytes()
    backend = build_backend(spec)
    backend.complete(_request("Student: Could you help?"))
    assert cache.read_bytes() == blob


def test_replay_without_cache_file_is_a_config_error(tmp_path) -> None:
    with pytest.raises(ConfigError, match="replay cache not found"):
        build_backend(BackendSpec(kind="replay", cache_path=str(tmp_path / "none.jsonl")))


def test_cache_rows_store_the_canonical_request(tmp_path) -> None:
    cache = tmp_path / "cache.jsonl"
    backend = build_backend(record_replay(BackendSpec(kind="template"), cache))
    backend.complete(_request("Student: I'm stuck.", tag="probe"))
    row = json.loads(cache.read_text())
    assert row["request"]["tag"] == "probe"
    assert row["request"]["messages"][0]["content"] == "Student: I'm stuck."
    assert row["key"] == request_hash("local", _request("Student: I'm stuck."))


# -- http against the loopback stand-in ---------------------------------------


def _http_spec(loopback, **overrides) -> BackendSpec:
    fields = dict(
        kind="http",
        endpoint=loopback.endpoint,
        model="loop",
        auth_env="LOOP_TOKEN",
        max_retries=0,
        timeout_s=10.0,
    )
    fields.update(overrides)
    return BackendSpec(**fields)


def test_http_backend_round_trip(loopback, monkeypatch) -> None:
    monkeypatch.setenv("LOOP_TOKEN", loopback.token)
    backend = build_backend(_http_spec(loopback))
    response = backend.complete(_request("Student: My final answer is 12."))
    assert response.text.endswith("MOVE: REFLECT_OUTCOME")
    assert response.latency_ms > 0.0
    assert response.prompt_tokens > 0 and response.completion_tokens > 0
    assert loopback.calls == 1


def test_http_backend_rejects_bad_token_without_retry(loopback, monkeypatch) -> None:
    monkeypatch.setenv("LOOP_TOKEN", "wrong")
    backend = build_backend(_http_spec(loopback, max_retries=3))
    with pytest.raises(HttpStatusError):
        backend.complete(_request("x"))
    assert loopback.calls == 0  # auth never cleared, nothing was served


def test_http_backend_requires_the_token_variable(loopback, monkeypatch) -> None:
    monkeypatch.delenv("LOOP_TOKEN", raising=False)
    backend = build_backend(_http_spec(loopback))
    with pytest.raises(AuthMissing, match="LOOP_TOKEN"):
        backend.complete(_request("x"))


def test_recorded_http_replays_with_zero_network_calls(
    loopback, monkeypatch, tmp_path
) -> None:
    monkeypatch.setenv("LOOP_TOKEN", loopback.token)
    cache = tmp_path / "http.jsonl"
    live = build_backend(record_replay(_http_spec(loopback), cache))
    recorded = live.complete(_request("Student: I'm stuck here."))
    calls_after_record = loopback.calls
    assert calls_after_record == 1

    replay = build_backend(BackendSpec(kind="replay", model="loop", cache_path=str(cache)))
    replayed = replay.complete(_request("Student: I'm stuck here."))
    assert replayed.text == recorded.text
    assert replayed.latency_ms == recorded.latency_ms
    assert loopback.calls == calls_after_record
