"""Metacognitive coaching toolkit: plan, generate, validate, benchmark.

The pipeline runs in stages. A planner turns a math problem plus a learner
profile into a pedagogical plan; a dialogue engine realizes the plan as a
student-coach conversation; validators check contingency, plan adherence,
factor coverage, and restraint pacing; and a benchmark harness asks any
text-generation backend to predict the coach's next move, scoring it with
per-move bias diagnostics.
"""

from .backends import (
    BackendSpec,
    ChatMessage,
    GenerationRequest,
    GenerationResponse,
    SamplingParams,
    build_backend,
    complete,
)
from .bench import (
    BenchmarkReport,
    Prediction,
    PromptMode,
    build_prompt,
    emit_report,
    report_to_markdown,
    run_benchmark,
    score_run,
)
from .dialogue import (
    BenchmarkInstance,
    Conversation,
    DialogueContext,
    Problem,
    Role,
    Turn,
    corpus_stats,
    extract_benchmark_instances,
    move_distribution,
    read_conversations,
    read_problems,
    write_conversations,
    write_problems,
)
from .engine import (
    EngineConfig,
    EngineMode,
    generate_corpus,
    generate_dialogue,
    step_help_state,
)
from .errors import BackendError, ConfigError, DataError, MetacoachError
from .planner import (
    PedagogicalPlan,
    PlannerConfig,
    ProblemAnalysis,
    analyze_problem,
    build_plan,
    construct_trajectory,
    sample_profile,
    validate_plan,
)
from .taxonomy import (
    FACTOR_OF_MOVE,
    MOVE_EXAMPLES,
    MOVE_FUNCTIONS,
    VALID_PROFILES,
    Calibration,
    CoachMove,
    HelpSeeking,
    LearnerProfile,
    MaiFactor,
    ParseFailure,
    mai_factor_of,
    parse_move_label,
)
from .validation import (
    check_adherence,
    check_contingency,
    detect_signal_tags,
    load_lexicon,
    mai_coverage,
    ni_rate,
    validate_conversation,
    validate_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BackendSpec",
    "ChatMessage",
    "GenerationRequest",
    "GenerationResponse",
    "SamplingParams",
    "build_backend",
    "complete",
    "BenchmarkReport",
    "Prediction",
    "PromptMode",
    "build_prompt",
    "emit_report",
    "report_to_markdown",
    "run_benchmark",
    "score_run",
    "BenchmarkInstance",
    "Conversation",
    "DialogueContext",
    "Problem",
    "Role",
    "Turn",
    "corpus_stats",
    "extract_benchmark_instances",
    "move_distribution",
    "read_conversations",
    "read_problems",
    "write_conversations",
    "write_problems",
    "EngineConfig",
    "EngineMode",
    "generate_corpus",
    "generate_dialogue",
    "step_help_state",
    "BackendError",
    "ConfigError",
    "DataError",
    "MetacoachError",
    "PedagogicalPlan",
    "PlannerConfig",
    "ProblemAnalysis",
    "analyze_problem",
    "build_plan",
    "construct_trajectory",
    "sample_profile",
    "validate_plan",
    "FACTOR_OF_MOVE",
    "MOVE_EXAMPLES",
    "MOVE_FUNCTIONS",
    "VALID_PROFILES",
    "Calibration",
    "CoachMove",
    "HelpSeeking",
    "LearnerProfile",
    "MaiFactor",
    "ParseFailure",
    "mai_factor_of",
    "parse_move_label",
    "check_adherence",
    "check_contingency",
    "detect_signal_tags",
    "load_lexicon",
    "mai_coverage",
    "ni_rate",
    "validate_conversation",
    "validate_corpus",
]
