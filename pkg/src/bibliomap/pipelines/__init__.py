"""LLM-backed cluster description pipelines."""

from .context import ContextError, build_context, build_selected_context
from .generation import GenerationError, HTTPGenerator, TermEchoGenerator, TranscriptLog
from .parsing import (
    ClusterDescription,
    ContractViolation,
    DescriptionSet,
    GroundingViolation,
    OutputError,
    OutputParseError,
    SelectionSet,
    parse_output,
)
from .prompts import PipelineKind, PromptVariant, TemplateError
from .runner import PipelineConfig, PipelineFailure, render_prompt, run_pipeline

__all__ = [
    "ClusterDescription",
    "ContextError",
    "ContractViolation",
    "DescriptionSet",
    "GenerationError",
    "GroundingViolation",
    "HTTPGenerator",
    "OutputError",
    "OutputParseError",
    "PipelineConfig",
    "PipelineFailure",
    "PipelineKind",
    "PromptVariant",
    "SelectionSet",
    "TemplateError",
    "TermEchoGenerator",
    "TranscriptLog",
    "build_context",
    "build_selected_context",
    "parse_output",
    "render_prompt",
    "run_pipeline",
]
