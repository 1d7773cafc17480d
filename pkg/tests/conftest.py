from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from metacoach.backends import BackendSpec
from metacoach.banks import predict_move_label
from metacoach.dialogue import Conversation, Problem, Role, Turn
from metacoach.engine import EngineConfig, generate_corpus
from metacoach.planner import PedagogicalPlan, build_plan, sample_profile
from metacoach.taxonomy import Calibration, CoachMove, HelpSeeking, LearnerProfile

TEMPLATE_SPEC = BackendSpec(kind="template")

_DATASETS = ("gsm8k", "math", "aime")


def make_problem(i: int, dataset: str | None = None) -> Problem:
    rate = 10 + (i % 3) * 5
    crates = 12 + i
    per = 4 + i % 5
    total = crates * per
    kept = total * (100 - rate) // 100
    return Problem(
        id=f"prob-{i:04d}",
        dataset=dataset or _DATASETS[i % 3],
        statement=(
            f"A warehouse stacks {crates} crates with {per} lamps each. "
            f"During the move {rate}% of the lamps break. "
            f"How many lamps arrive intact? Variant {i}."
        ),
        reference_answer=str(kept),
    )


def build_rows(
    n: int, seed: int = 0
) -> list[tuple[Problem, PedagogicalPlan]]:
    rows = []
    for i in range(n):
        problem = make_problem(i)
        profile = sample_profile(seed, problem.id)
        rows.append(
            (problem, build_plan(problem, profile, TEMPLATE_SPEC, seed=seed + i))
        )
    return rows


def build_corpus(n: int, seed: int = 0) -> list[Conversation]:
    conversations, manifest = generate_corpus(build_rows(n, seed), EngineConfig(seed=seed))
    assert manifest["discarded"] == 0
    return conversations


@pytest.fixture(scope="session")
def corpus20() -> list[Conversation]:
    return build_corpus(20, seed=404)


def worked_example() -> Conversation:
    """Hand-written flip-a-house walkthrough.

    One hedged impasse answered by a probe, one student-requested
    scaffolding hint, a consistency check on the computed value, and a
    closing reflection. Gold move sequence and signal placement are pinned
    by tests; edit with care.
    """
    problem = Problem(
        id="walkthrough-001",
        dataset="gsm8k",
        statement=(
            "Dara pays $80,000 for a run-down house and spends $50,000 on "
            "renovations. The work raises the house's value by 150% of the "
            "purchase price. How much profit does she make?"
        ),
        reference_answer="70000",
    )
    t = [
        Turn(0, Role.STUDENT, (
            "Okay: purchase 80,000, repairs add 50,000, and the value climbs "
            "by 150% of the original price. I need the profit."
        )),
        Turn(1, Role.COACH, "", move=CoachMove.NO_INTERVENTION),
        Turn(2, Role.STUDENT, (
            "Total spent first: 80,000 for the house plus 50,000 of repairs "
            "is 130,000."
        )),
        Turn(3, Role.COACH, "", move=CoachMove.NO_INTERVENTION),
        Turn(4, Role.STUDENT, (
            "I'm pausing here. The 150% increase: does it apply to the "
            "80,000 or to the 130,000? I'm not sure which base to use."
        ), signals=("hedge", "impasse")),
        Turn(5, Role.COACH, "Where exactly does the doubt start?",
             move=CoachMove.UNCERTAINTY_PROBE),
        Turn(6, Role.STUDENT, (
            "Could I get a scaffolding hint here? Specifically how to set "
            "the base for the percent increase."
        ), signals=("help_request",)),
        Turn(7, Role.SYSTEM, (
            "Scaffolding hint: apply the percent increase to the original "
            "purchase price only, then compare the new value against "
            "everything spent."
        )),
        Turn(8, Role.COACH, "", move=CoachMove.NO_INTERVENTION),
        Turn(9, Role.STUDENT, (
            "So the increase is 150% of 80,000, which is 120,000. New value: "
            "80,000 + 120,000 = 200,000. Against 130,000 spent that leaves "
            "70,000."
        )),
        Turn(10, Role.COACH, "Does 200,000 square with the base you chose earlier?",
             move=CoachMove.CHECK_CONSISTENCY),
        Turn(11, Role.STUDENT, (
            "It does: the gain applies to the purchase price alone. Value "
            "200,000 minus 130,000 spent. My final answer is 70,000."
        ), signals=("solution",)),
        Turn(12, Role.COACH, "Looking back, which check unlocked it?",
             move=CoachMove.REFLECT_OUTCOME),
        Turn(13, Role.STUDENT, (
            "Pinning down the base for the percentage was the turning "
            "point. Next time I'll settle the reference amount before "
            "computing anything."
        )),
        Turn(14, Role.COACH, "", move=CoachMove.NO_INTERVENTION),
    ]
    profile = LearnerProfile(Calibration.WELL_CALIBRATED, HelpSeeking.DEPENDENT)
    return Conversation(
        id="walkthrough-001", problem=problem, profile=profile, turns=tuple(t)
    )


class _LoopbackHandler(BaseHTTPRequestHandler):
    """Chat-completions stand-in answering with the rule-based policy."""

    def do_POST(self):  # noqa: N802 - http.server API
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length))
        expected = f"Bearer {self.server.token}"  # type: ignore[attr-defined]
        if self.headers.get("Authorization", "") != expected:
            self._reply(401, {"error": "bad token"})
            return
        self.server.calls += 1  # type: ignore[attr-defined]
        user = "\n\n".join(
            m["content"] for m in body["messages"] if m["role"] == "user"
        )
        text = "Holding the floor check in mind.\nMOVE: " + predict_move_label(user)
        self._reply(
            200,
            {
                "choices": [
                    {
                        "message": {"role": "assistant", "content": text},
                        "finish_reason": "stop",
                    }
                ],
                "usage": {
                    "prompt_tokens": len(user.split()),
                    "completion_tokens": len(text.split()),
                },
            },
        )

    def _reply(self, status: int, payload: dict) -> None:
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def log_message(self, *args):
        pass


class LoopbackServer:
    def __init__(self, token: str = "loopback-token") -> None:
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _LoopbackHandler)
        self.server.token = token  # type: ignore[attr-defined]
        self.server.calls = 0  # type: ignore[attr-defined]
        self.token = token
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.server.server_address[1]}/v1/chat/completions"

    @property
    def calls(self) -> int:
        return self.server.calls  # type: ignore[attr-defined]

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture()
def loopback():
    server = LoopbackServer()
    yield server
    server.close()
