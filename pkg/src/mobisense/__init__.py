"""Generate and rule-check mobile sensing strategies from research inquiries."""

from __future__ import annotations

from .behavior import BehaviorDecomposition, BehaviorLevel, BehaviorNode, DecompositionError, validate_decomposition
from .codec import (
    ParseDiagnostic,
    Severity,
    decode_canonical,
    encode_canonical,
    parse_llm_strategy,
    render_strategy_markdown,
)
from .knowledge_base import (
    KnowledgeBase,
    KnowledgeBaseError,
    default_knowledge_base,
    load_knowledge_base,
    lookup_metric,
    lookup_model,
    lookup_sensor,
)
from .llm import LlmRequest, LlmResponse, MockBackend, MockScript, RemoteBackend
from .pipeline import Outcome, PipelineConfig, RunRecord, StepMode, generate_strategy, load_run, persist_run
from .prompts import FewShotExample, build_prompt, repair_prompt
from .strategy import Inquiry, SensingStrategy
from .validator import ValidationReport, Violation, ViolationCode, validate_strategy

__version__ = "0.1.0"

__all__ = [
    "BehaviorDecomposition",
    "BehaviorLevel",
    "BehaviorNode",
    "DecompositionError",
    "FewShotExample",
    "Inquiry",
    "KnowledgeBase",
    "KnowledgeBaseError",
    "LlmRequest",
    "LlmResponse",
    "MockBackend",
    "MockScript",
    "Outcome",
    "ParseDiagnostic",
    "PipelineConfig",
    "RemoteBackend",
    "RunRecord",
    "SensingStrategy",
    "Severity",
    "StepMode",
    "ValidationReport",
    "Violation",
    "ViolationCode",
    "build_prompt",
    "decode_canonical",
    "default_knowledge_base",
    "encode_canonical",
    "generate_strategy",
    "load_knowledge_base",
    "load_run",
    "lookup_metric",
    "lookup_model",
    "lookup_sensor",
    "parse_llm_strategy",
    "persist_run",
    "render_strategy_markdown",
    "repair_prompt",
    "validate_decomposition",
    "validate_strategy",
]
