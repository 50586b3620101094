import json
import tempfile
from pathlib import Path

from megaagent import MegaAgentError
from megaagent.error import StageClosedError
from megaagent.gateway import (
    ChatRequest,
    ModelGateway,
    ScriptedBackend,
    ScriptedScenario,
    complete,
)
from megaagent.metrics import StageLabel, UsageLedger
from megaagent.runtime import EventLog
from tests import BaseTest, call


class CompleteTest(BaseTest):
    def setUp(self) -> None:
        scenario = ScriptedScenario(
            {("Alice", 0): "Reading.\n" + call("read_file", filename="a.txt")},
            default_response="Done.",
        )
        self.backend = ScriptedBackend(scenario)
        self.ledger = UsageLedger()
        self.events = EventLog()

    def test_records_usage_and_event(self):
        self.ledger.open_stage(StageLabel.Planning)
        response = complete(
            ChatRequest("Alice", "You are Alice."),
            self.backend,
            ledger=self.ledger,
            events=self.events,
        )

        assert [c.tool_name for c in response.parsed_calls] == ["read_file"]
        assert response.prose == "Reading."
        entry = self.ledger.entries[0]
        assert entry.agent == "Alice"
        assert entry.stage == StageLabel.Planning
        assert entry.usage == response.usage
        detail = self.events.records("complete")[0]["detail"]
        assert detail["stage"] == "Planning"
        assert detail["input_tokens"] == 3
        assert detail["calls"] == 1

    def test_explicit_stage(self):
        self.ledger.open_stage(StageLabel.Planning)
        self.ledger.open_stage(StageLabel.TaskSolving)
        complete(
            ChatRequest("Alice", "p"),
            self.backend,
            ledger=self.ledger,
            stage=StageLabel.TaskSolving,
        )
        assert self.ledger.entries[0].stage == StageLabel.TaskSolving

    def test_no_open_stage(self):
        with self.assertRaises(StageClosedError):
            complete(ChatRequest("Alice", "p"), self.backend, ledger=self.ledger)
        assert self.backend.call_index("Alice") == 0

    def test_gateway_counts_calls(self):
        self.ledger.open_stage(StageLabel.TaskSolving)
        gateway = ModelGateway(self.backend, ledger=self.ledger, events=self.events)
        for agent in ("Alice", "Alice", "Bob"):
            gateway.complete(ChatRequest(agent, "p"))
        assert gateway.calls("Alice") == 2
        assert gateway.calls("Bob") == 1
        assert gateway.calls() == 3
        assert self.events.count("complete") == 3


class ScenarioTest(BaseTest):
    def test_lookup_is_total(self):
        scenario = ScriptedScenario({("Boss", 0): "plan-A"}, default_response="OK")
        assert scenario.lookup("Boss", 0) == "plan-A"
        assert scenario.lookup("Boss", 1) == "OK"
        assert scenario.lookup("Nobody", 7) == "OK"
        assert scenario.agents() == ["Boss"]

    def test_file(self):
        document = {
            "default": "ACCEPT",
            "latency": 0.25,
            "steps": [
                {"agent": "Boss", "index": 0, "response": "plan"},
                {"agent": "Alice", "index": 1, "response": "second"},
            ],
        }
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "scenario.json"
            path.write_text(json.dumps(document), encoding="utf-8")
            scenario = ScriptedScenario.from_file(path)
        assert scenario.latency == 0.25
        assert scenario.lookup("Alice", 0) == "ACCEPT"
        assert scenario.lookup("Alice", 1) == "second"
        assert scenario.json()["steps"][0] == {
            "agent": "Alice",
            "index": 1,
            "response": "second",
        }

    def test_duplicate_step(self):
        step = {"agent": "Boss", "index": 0, "response": "plan"}
        with self.assertRaises(ValueError):
            ScriptedScenario.from_dict({"steps": [step, dict(step, response="other")]})

    def test_missing_field(self):
        with self.assertRaises(MegaAgentError):
            ScriptedScenario.from_dict({"steps": [{"agent": "Boss", "index": 0}]})

    def test_negative_latency(self):
        with self.assertRaises(ValueError):
            ScriptedScenario(latency=-1.0)
