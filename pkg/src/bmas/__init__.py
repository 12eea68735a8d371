"""Blackboard-based LLM multi-agent problem solving.

Agents talk only through a shared blackboard; a control unit picks who acts
each round until the decider gives a solution or the round budget runs out,
in which case a cumulative-similarity vote decides.
"""

from bmas.agents import AgentGroup, AgentSpec, Role, act, build_group, generate_experts
from bmas.answers import AnswerFormat, extract_answer, judge
from bmas.backends import (
    ChatCompletionBackend,
    CompletionRequest,
    CompletionResult,
    ModelPool,
    ScriptedBackend,
    ScriptEntry,
    UsageLedger,
    pick_model,
)
from bmas.blackboard import Blackboard, Message, MessageKind, Redaction
from bmas.control import autonomous_poll, select_agents
from bmas.cycle import ControlMode, CycleConfig, Outcome, Solution, run_cycle, run_debate
from bmas.decision import CandidateAnswer, SimMetric, consensus_fraction, similarity, vote
from bmas.harness import BenchmarkItem, RunReport, load_dataset, run_benchmark
from bmas.prompts import PromptTemplates
from bmas.trace import CycleTrace

__version__ = "0.1.0"

__all__ = [
    "AgentGroup",
    "AgentSpec",
    "AnswerFormat",
    "BenchmarkItem",
    "Blackboard",
    "CandidateAnswer",
    "ChatCompletionBackend",
    "CompletionRequest",
    "CompletionResult",
    "ControlMode",
    "CycleConfig",
    "CycleTrace",
    "Message",
    "MessageKind",
    "ModelPool",
    "Outcome",
    "PromptTemplates",
    "Redaction",
    "Role",
    "RunReport",
    "ScriptEntry",
    "ScriptedBackend",
    "SimMetric",
    "Solution",
    "UsageLedger",
    "act",
    "autonomous_poll",
    "build_group",
    "consensus_fraction",
    "extract_answer",
    "generate_experts",
    "judge",
    "load_dataset",
    "pick_model",
    "run_benchmark",
    "run_cycle",
    "run_debate",
    "select_agents",
    "similarity",
    "vote",
]
