"""Scripted scenarios: deterministic model responses for desk runs and tests."""
import json
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from ..internal import JsonObject, JsonObjectView

StepKey = Tuple[str, int]


class ScriptedScenario:
    """Table of responses keyed by ``(agent name, per-agent call index)``.

    Lookup is total: unmapped keys resolve to ``default_response``.

    Args:
        steps: Responses keyed by ``(agent, index)``.
        default_response: Response for unmapped keys.
        latency: Seconds every scripted call sleeps before answering.
    Usage:
        >>> scenario = ScriptedScenario({("Boss", 0): "plan-A"}, default_response="OK")
        >>> scenario.lookup("Boss", 0)
        'plan-A'
        >>> scenario.lookup("Boss", 1)
        'OK'
    """

    def __init__(
        self,
        steps: Optional[Mapping[StepKey, str]] = None,
        *,
        default_response: str = "",
        latency: float = 0.0,
    ):
        if latency < 0:
            raise ValueError("latency must not be negative")
        self.steps: Dict[StepKey, str] = dict(steps or {})
        self.default_response = default_response
        self.latency = latency

    def lookup(self, agent: str, index: int) -> str:
        return self.steps.get((agent, index), self.default_response)

    def agents(self) -> List[str]:
        return sorted({agent for agent, _ in self.steps})

    @classmethod
    def from_sequences(
        cls,
        sequences: Mapping[str, Iterable[str]],
        *,
        default_response: str = "",
        latency: float = 0.0,
    ) -> "ScriptedScenario":
        """Build from per-agent response lists, indexed from zero."""
        steps = {
            (agent, index): text
            for agent, texts in sequences.items()
            for index, text in enumerate(texts)
        }
        return cls(steps, default_response=default_response, latency=latency)

    @classmethod
    def from_dict(cls, data: JsonObject) -> "ScriptedScenario":
        """Build from a parsed scenario document.

        Raises:
            :class:`~megaagent.error.MegaAgentError`: A step misses a field.
            :class:`ValueError`: Duplicate ``(agent, index)`` key.
        """
        view = ScenarioView(data)
        steps: Dict[StepKey, str] = {}
        for step in view.steps:
            key = (step.agent, step.index)
            if key in steps:
                raise ValueError(f"duplicate scenario step {key}")
            steps[key] = step.response
        return cls(steps, default_response=view.default, latency=view.latency)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ScriptedScenario":
        with open(path, encoding="utf-8") as fp:
            return cls.from_dict(json.load(fp))

    def json(self) -> JsonObject:
        data: JsonObject = {
            "default": self.default_response,
            "steps": [
                {"agent": agent, "index": index, "response": text}
                for (agent, index), text in sorted(self.steps.items())
            ],
        }
        if self.latency:
            data["latency"] = self.latency
        return data


class ScenarioStepView(JsonObjectView):
    """Scenario step."""

    @property
    def agent(self) -> str:
        """Agent name."""
        return self._get("agent")

    @property
    def index(self) -> int:
        """Per-agent call index, from zero."""
        return int(self._get("index"))

    @property
    def response(self) -> str:
        """Scripted response text."""
        return self._get("response")


class ScenarioView(JsonObjectView):
    """Scenario document."""

    @property
    def default(self) -> str:
        """Response of unmapped steps."""
        return self._get_optional("default", "")

    @property
    def latency(self) -> float:
        """Per-call latency in seconds."""
        return float(self._get_optional("latency", 0.0))

    @property
    def steps(self) -> List[ScenarioStepView]:
        """Scripted steps."""
        return self._map_list_optional("steps", ScenarioStepView) or []

