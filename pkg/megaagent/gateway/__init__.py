"""Uniform access to chat-completion backends.

Use :class:`ScriptedBackend` for deterministic desk runs
and :class:`HTTPBackend` for live models.
"""
from .auth import BearerAuth
from .backend import (
    Backend,
    ChatCompletionView,
    HTTPBackend,
    ScriptedBackend,
    count_tokens,
    render_tool_instructions,
)
from .gateway import ModelGateway, complete
from .scenario import ScenarioStepView, ScenarioView, ScriptedScenario
from .types import ChatRequest, ModelResponse, TokenUsage
