import tempfile
from pathlib import Path

from megaagent import OrchestrationErrorCodes, Orchestrator
from megaagent.gateway import ScriptedBackend, ScriptedScenario
from megaagent.metrics import StageLabel
from megaagent.orchestrator import PARTIAL
from megaagent.runtime import load_log, replay
from tests import (
    BaseTest,
    call,
    employees,
    gobang_scenario,
    single_employee,
    steps,
    talk,
    terminate,
)

GOBANG_FILES = ["ai.py", "features.txt", "game_design.txt", "game_logic.py", "main.py"]


class OrchestratorTest(BaseTest):
    def _orchestrator(self, scenario, *, config=None, run_dir=None):
        return Orchestrator(
            config or self._make_config(), ScriptedBackend(scenario), run_dir=run_dir
        )

    def _events(self, orchestrator, event, **fields):
        records = orchestrator.ctx.events.records(event)
        return [
            r
            for r in records
            if all(r["detail"].get(key) == value for key, value in fields.items())
        ]

    def test_gobang(self):
        orchestrator = self._orchestrator(gobang_scenario())
        deliverable = orchestrator.run("Write a Gobang game in Python.")

        assert deliverable.complete, deliverable.diagnostic
        assert deliverable.paths() == GOBANG_FILES
        assert deliverable.summary == "\n".join(GOBANG_FILES)
        heads = orchestrator.ctx.workspace.heads()
        for f in deliverable.files:
            assert heads[f.path].head == f.hash
        assert heads["main.py"].content == "print('board ok')\n"

        directory = orchestrator.ctx.directory
        assert len(directory.agents(active_only=True)) == 7
        assert directory.get("Grace").parent == "Eve"
        assert directory.get("Eve").is_admin
        assert directory.summary().depth == 2
        assert orchestrator.ctx.gateway.calls() == 17
        assert deliverable.ledger.agent_count == 7

        reviews = [r["agent"] for r in orchestrator.ctx.events.records("validation")]
        assert reviews == ["Eve", "Boss"]
        execs = self._events(orchestrator, "tool", tool="exec_python_file")
        assert len(execs) == 2
        assert all(r["detail"]["success"] for r in execs)

    def test_gobang_ledger(self):
        deliverable = self._orchestrator(gobang_scenario()).run("Write a Gobang game.")

        report = deliverable.ledger
        planning = report.row(StageLabel.Planning)
        solving = report.row(StageLabel.TaskSolving)
        merging = report.row(StageLabel.Merging)
        assert planning.usage.input_tokens > 0
        assert planning.usage.output_tokens > 0
        assert solving.usage.total > planning.usage.total
        assert merging.usage.total == 0
        assert planning.end == solving.start
        assert solving.end == merging.start
        assert merging.end is not None
        assert report.total.total == sum(row.usage.total for row in report.rows)
        assert report.total.input_tokens > report.total.output_tokens

    def test_deterministic_hashes(self):
        first = self._orchestrator(gobang_scenario()).run("Write a Gobang game.")
        second = self._orchestrator(gobang_scenario()).run("Write a Gobang game.")
        assert first.files == second.files
        assert first.ledger.total == second.ledger.total

    def test_run_dir_artifacts_replay(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_dir = Path(tmp) / "run"
            deliverable = self._orchestrator(gobang_scenario(), run_dir=run_dir).run(
                "Write a Gobang game."
            )
            assert deliverable.complete
            for name in ("log.jsonl", "deliverable.json", "report.json", "report.txt"):
                assert (run_dir / name).exists(), name
            assert (run_dir / "workspace" / "log.jsonl").exists()
            assert (run_dir / "memory" / "Bob.jsonl").exists()

            records, truncated = load_log(run_dir / "log.jsonl")
            assert truncated is None
            result = replay(records)
            assert result.ok, [str(v) for v in result.violations]
            assert result.status == "complete"
            assert result.summary().agents == 7
            assert "Bob: Idle -> Processing" in result.transitions

            rebuilt = result.stage_report()
            for stage in StageLabel:
                assert rebuilt.row(stage).usage == deliverable.ledger.row(stage).usage

    def test_incomplete_todo_retry(self):
        sequences = single_employee(
            "Alice",
            [
                call("read_file", filename="todo_Alice.txt"),
                call(
                    "write_file",
                    filename="todo_Alice.txt",
                    content="1. write report.txt",
                ),
                terminate(),
                call("write_file", filename="report.txt", content="All good."),
                call(
                    "write_file",
                    filename="todo_Alice.txt",
                    content="1. write report.txt [done]",
                ),
                terminate(),
            ],
        )
        orchestrator = self._orchestrator(ScriptedScenario.from_sequences(sequences))
        deliverable = orchestrator.run("Write a report.")

        assert deliverable.complete, deliverable.diagnostic
        assert deliverable.paths() == ["report.txt"]
        failures = self._events(orchestrator, "failure")
        assert [r["detail"]["kind"] for r in failures] == ["IncompleteTodo"]
        actions = self._events(orchestrator, "remediation")
        assert [r["detail"]["action"] for r in actions] == ["RetryPrompt"]
        assert actions[0]["detail"]["attempts_remaining"] == 2
        terminations = orchestrator.ctx.events.records("terminate", agent="Alice")
        assert [r["detail"]["accepted"] for r in terminations] == [False, True]
        assert orchestrator.ctx.supervisor.checklist("Alice").is_complete

    def test_repetition_retry(self):
        same = call("write_file", filename="a.txt", content="x")
        sequences = single_employee("Alice", [same, same, same, "Done.", terminate()])
        orchestrator = self._orchestrator(ScriptedScenario.from_sequences(sequences))
        deliverable = orchestrator.run("Write a.txt.")

        assert deliverable.complete, deliverable.diagnostic
        assert deliverable.paths() == ["a.txt"]
        failures = self._events(orchestrator, "failure")
        assert [r["detail"]["kind"] for r in failures] == ["Repetition"]
        assert len(orchestrator.ctx.workspace.history("a.txt")) == 3
        terminations = orchestrator.ctx.events.records("terminate", agent="Alice")
        assert [r["detail"]["accepted"] for r in terminations] == [True]

    def test_refusal_recruits_replacement(self):
        sequences = {
            "Boss": [
                employees({"Alice": "You are Alice."}, beginner="Alice"),
                "ACCEPT",
            ],
            "Alice": steps(
                call("add_agent", name="Dave", description="You are Dave, a writer."),
                [talk("Dave", "Write summary.txt."), terminate()],
                "ACCEPT",
            ),
            "Dave": [
                call("read_file", filename="todo_Dave.txt"),
                call(
                    "write_file",
                    filename="todo_Dave.txt",
                    content="1. write summary.txt",
                ),
                "Sorry, I can't help with that.",
            ],
            "Dave2": [
                call("write_file", filename="summary.txt", content="Summary."),
                call("read_file", filename="todo_Dave2.txt"),
                call(
                    "write_file",
                    filename="todo_Dave2.txt",
                    content="1. write summary.txt [done]",
                ),
                terminate(),
            ],
        }
        orchestrator = self._orchestrator(ScriptedScenario.from_sequences(sequences))
        deliverable = orchestrator.run("Write a summary.")

        assert deliverable.complete, deliverable.diagnostic
        assert deliverable.paths() == ["summary.txt"]
        directory = orchestrator.ctx.directory
        assert directory.get("Dave").retired
        assert directory.get("Dave").replaced_by == "Dave2"
        assert directory.get("Dave2").parent == "Alice"
        assert directory.get("Alice").children == ["Dave2"]
        assert deliverable.ledger.agent_count == 3

        actions = self._events(orchestrator, "remediation")
        assert [r["detail"]["action"] for r in actions] == ["RecruitReplacement"]
        assert actions[0]["detail"]["target"] == "Dave2"
        spawn = self._events(orchestrator, "spawn", name="Dave2")
        assert spawn[0]["detail"]["replaces"] == "Dave"
        reviews = [r["agent"] for r in orchestrator.ctx.events.records("validation")]
        assert reviews == ["Alice", "Boss"]

    def test_boss_terminates_during_planning(self):
        scenario = ScriptedScenario.from_sequences({"Boss": [terminate()]})
        orchestrator = self._orchestrator(scenario)
        deliverable = orchestrator.run("Nothing to do.")

        assert deliverable.complete
        assert deliverable.files == []
        assert deliverable.summary == ""
        assert deliverable.ledger.row(StageLabel.TaskSolving).start is None
        assert orchestrator.ctx.gateway.calls() == 1

    def test_empty_decomposition(self):
        scenario = ScriptedScenario.from_sequences(
            {"Boss": ["I have no plan.", "Still nothing."]}
        )
        orchestrator = self._orchestrator(scenario)
        deliverable = orchestrator.run("Do something.")

        assert deliverable.status == PARTIAL
        assert "EmptyDecomposition" in deliverable.diagnostic
        failure = orchestrator.ctx.failure
        assert failure.code == OrchestrationErrorCodes.EmptyDecomposition
        assert orchestrator.ctx.gateway.calls("Boss") == 2

    def test_refusal_of_boss_aborts(self):
        scenario = ScriptedScenario.from_sequences(
            {"Boss": ["Sorry, I can't help with that."]}
        )
        orchestrator = self._orchestrator(scenario)
        deliverable = orchestrator.run("Do something.")

        assert not deliverable.complete
        assert orchestrator.ctx.failure.code == OrchestrationErrorCodes.EscalationAtRoot

    def test_deadlock_suspected(self):
        sequences = single_employee("Alice", [])
        scenario = ScriptedScenario.from_sequences(
            sequences, default_response="Working.", latency=0.5
        )
        config = self._make_config(deadlock_timeout=0.2)
        orchestrator = self._orchestrator(scenario, config=config)
        deliverable = orchestrator.run("Do something slowly.")

        assert not deliverable.complete
        failure = orchestrator.ctx.failure
        assert failure.code == OrchestrationErrorCodes.DeadlockSuspected
        assert "DeadlockSuspected" in deliverable.diagnostic

    def test_scalability(self):
        def tree(names):
            return {
                name: steps(
                    [
                        call("add_agent", name=f"{name}_{i}", description="Worker.")
                        for i in range(1, 5)
                    ],
                    [talk(f"{name}_{i}", "Start.") for i in range(1, 5)]
                    + [terminate()],
                )
                for name in names
            }

        admins = [f"A{i}" for i in range(1, 5)]
        middle = [f"{admin}_{i}" for admin in admins for i in range(1, 5)]
        sequences = {"Boss": [employees({name: "Lead a group." for name in admins})]}
        sequences.update(tree(admins))
        sequences.update(tree(middle))
        scenario = ScriptedScenario.from_sequences(sequences, default_response="ACCEPT")

        orchestrator = self._orchestrator(scenario)
        deliverable = orchestrator.run("Scale out.")

        assert deliverable.complete, deliverable.diagnostic
        summary = orchestrator.ctx.directory.summary()
        assert summary.agents == 85
        assert summary.depth == 3
        assert summary.levels == {0: 1, 1: 4, 2: 16, 3: 64}
        assert deliverable.ledger.agent_count == 85
        assert orchestrator.ctx.events.count("validation") == 21

    def _solving_time(self, serial: bool) -> float:
        workers = {f"W{i}": "Answer briefly." for i in range(16)}
        scenario = ScriptedScenario.from_sequences(
            {"Boss": [employees(workers)]}, default_response="ACCEPT", latency=0.1
        )
        config = self._make_config(serial=serial)
        orchestrator = self._orchestrator(scenario, config=config)
        deliverable = orchestrator.run("Sixteen answers.")
        assert deliverable.complete, deliverable.diagnostic
        assert orchestrator.ctx.gateway.calls() == 18
        return deliverable.ledger.row(StageLabel.TaskSolving).time

    def test_parallel_agents(self):
        parallel = self._solving_time(serial=False)
        serial = self._solving_time(serial=True)
        assert parallel <= 0.5
        assert serial >= 1.6
        assert serial / parallel >= 3
