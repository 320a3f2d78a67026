"""Evaluation harness: task suites, graders and reports."""
from .harness import (
    BENIGN_TOOLS,
    EvalSuite,
    EvalTask,
    GoldStep,
    SuiteReport,
    TaskResult,
    grade_data_analysis,
    grade_model_selection,
    grade_tool_sequence,
    run_suite,
)
from .suites import SUITE_NAMES, load_suite

__all__ = [
    "BENIGN_TOOLS",
    "EvalSuite",
    "EvalTask",
    "GoldStep",
    "SUITE_NAMES",
    "SuiteReport",
    "TaskResult",
    "grade_data_analysis",
    "grade_model_selection",
    "grade_tool_sequence",
    "load_suite",
    "run_suite",
]
