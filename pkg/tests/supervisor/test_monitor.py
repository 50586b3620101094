from megaagent.error import (
    BackendUnavailableError,
    OrchestrationError,
    OrchestrationErrorCodes,
    ToolErrorCodes,
)
from megaagent.gateway import ModelResponse
from megaagent.runtime.cycle import CycleRecord
from megaagent.supervisor import (
    ACCEPTED,
    INCONCLUSIVE,
    REVISE,
    SUPERVISOR,
    ChecklistItem,
    Failure,
    FailureKind,
    RemediationKind,
    message_kind,
    parse_verdict,
)
from megaagent.tools import FunctionCall, ToolObservation
from tests import BaseTest, call, talk


def _cycle(agent: str, *texts: str, observations=()) -> CycleRecord:
    cycle = CycleRecord(agent, [])
    cycle.responses = [ModelResponse(text) for text in texts]
    cycle.observations = list(observations)
    return cycle


def _exec(filename: str, exit_code: int):
    fn = FunctionCall("exec_python_file", {"filename": filename})
    if exit_code == 0:
        return fn, ToolObservation("exec_python_file", "ok", exit_code=0)
    return fn, ToolObservation.failed(
        "exec_python_file",
        None,
        f"program exited with code {exit_code}",
        exit_code=exit_code,
    )


class _SupervisorTest(BaseTest):
    def setUp(self) -> None:
        self._build()

    def _build(self, sequences=None) -> None:
        self.ctx = self._make_context(sequences)
        self.supervisor = self.ctx.supervisor
        self.boss = self.ctx.spawn_agent("Boss", "meta")
        self.alice = self.ctx.spawn_agent("Alice", "You are Alice.", parent="Boss")
        self.carol = self.ctx.spawn_agent("Carol", "You are Carol.", parent="Alice")

    def _queued(self, name):
        return [
            (m.sender, message_kind(m.text), m.text)
            for m in self.ctx.directory.queue(name).peek()
        ]


class ChecklistTrackingTest(_SupervisorTest):
    def test_items_follow_commits(self):
        self.supervisor.add_checklist_item("Alice", "write the rules")
        self.supervisor.add_checklist_item("Alice", "test the rules")
        content, head = self.ctx.workspace.read("todo_Alice.txt")
        assert content == "1. write the rules\n2. test the rules\n"
        assert not self.supervisor.checklist("Alice").is_complete

        self.ctx.workspace.write(
            "todo_Alice.txt",
            "1. write the rules [done]\n2. test the rules [done]\n",
            head,
            caller="Alice",
        )
        assert self.supervisor.checklist("Alice").is_complete

    def test_authored_files(self):
        self.ctx.workspace.write("rules.txt", "five in a row", None, caller="Alice")
        self.ctx.workspace.write("main.py", "print(1)", None, caller="Alice")
        self.supervisor.add_checklist_item("Alice", "ship it")
        assert self.supervisor.authored("Alice") == ["main.py", "rules.txt"]
        assert self.supervisor.authored("Carol") == []


class VerifyFormatTest(_SupervisorTest):
    def _verify(self, agent, cycle):
        return self.supervisor.verify_format(agent, cycle)

    def test_clean_cycle(self):
        assert self._verify(self.alice, _cycle("Alice", "All good.")) is None
        verdict = self.ctx.events.records("verdict", agent="Alice")[0]["detail"]
        assert verdict == {"ok": True, "kind": None, "cause": None, "detail": None}

    def test_empty_response(self):
        failure = self._verify(self.alice, _cycle("Alice", "  "))
        assert failure.kind == FailureKind.FormatError
        assert failure.detail == "empty response"

    def test_forbidden_talk(self):
        failure = self._verify(self.carol, _cycle("Carol", talk("Boss", "Hi.")))
        assert failure.kind == FailureKind.FormatError
        assert "Boss" in failure.detail

    def test_last_run_of_each_file_counts(self):
        runs = [_exec("main.py", 1), _exec("main.py", 0)]
        fixed = _cycle("Alice", "Fixed.", observations=runs)
        assert self._verify(self.alice, fixed) is None

        runs = [_exec("main.py", 0), _exec("main.py", 2)]
        broken = _cycle("Alice", "Done.", observations=runs)
        failure = self._verify(self.alice, broken)
        assert failure.kind == FailureKind.FormatError
        assert failure.cause == FailureKind.ExecError
        assert failure.detail.startswith("main.py does not run")

    def test_loop_and_backend(self):
        cycle = _cycle("Alice", call("read_file", filename="a.txt"))
        cycle.loop_exceeded = True
        assert self._verify(self.alice, cycle).kind == FailureKind.IncompleteTodo

        cycle = _cycle("Alice")
        cycle.backend_error = BackendUnavailableError("down")
        assert self._verify(self.alice, cycle).kind == FailureKind.ExecError
        verdict = self.ctx.events.records("verdict", agent="Alice")[-1]["detail"]
        assert verdict["ok"] is False
        assert verdict["kind"] == "ExecError"


class DetectFailuresTest(_SupervisorTest):
    def test_terminate_with_open_checklist(self):
        self.supervisor.add_checklist_item("Alice", "write the rules")
        cycle = _cycle("Alice", "Bye.")
        cycle.terminate_requested = True
        failures = self.supervisor.detect_failures(self.alice, cycle)
        assert [f.kind for f in failures] == [FailureKind.IncompleteTodo]
        assert "- write the rules" in failures[0].detail

    def test_refusal_pattern(self):
        cycle = _cycle("Alice", "sorry, I CAN'T HELP with that.")
        failures = self.supervisor.detect_failures(self.alice, cycle)
        assert [f.kind for f in failures] == [FailureKind.Refusal]

    def test_repeated_text(self):
        kinds = []
        for _ in range(4):
            cycle = _cycle("Alice", "Working on it.")
            failures = self.supervisor.detect_failures(self.alice, cycle)
            kinds.append([f.kind for f in failures])
        assert kinds == [[], [], [FailureKind.Repetition], []]

    def test_repeated_call(self):
        read = call("read_file", filename="a.txt")
        observation = (
            FunctionCall("read_file", {"filename": "a.txt"}),
            ToolObservation.failed("read_file", ToolErrorCodes.NotFound, "a.txt"),
        )
        found = []
        for index in range(3):
            cycle = _cycle(
                "Alice", read, f"Attempt {index}.", observations=[observation]
            )
            failures = self.supervisor.detect_failures(self.alice, cycle)
            found.append([f.kind for f in failures])
        assert found == [[], [], [FailureKind.Repetition]]

    def test_varied_work_is_not_repetition(self):
        for index in range(5):
            cycle = _cycle("Alice", f"Step {index} done.")
            assert self.supervisor.detect_failures(self.alice, cycle) == []


class RemediationTest(_SupervisorTest):
    def test_retry_budget_then_escalation(self):
        failure = Failure(FailureKind.IncompleteTodo, "finish the rules")
        actions = [self.supervisor.remediate(self.alice, failure) for _ in range(4)]

        assert [(a.kind, a.attempts_remaining, a.target) for a in actions] == [
            (RemediationKind.RetryPrompt, 2, "Alice"),
            (RemediationKind.RetryPrompt, 1, "Alice"),
            (RemediationKind.RetryPrompt, 0, "Alice"),
            (RemediationKind.EscalateToParent, 0, "Boss"),
        ]
        assert [kind for _, kind, _ in self._queued("Alice")] == ["IncompleteTodo"] * 3
        sender, kind, text = self._queued("Boss")[0]
        assert (sender, kind) == (SUPERVISOR, "IncompleteTodo")
        assert "Alice keeps failing: finish the rules" in text
        assert self.ctx.events.count("remediation", agent="Alice") == 4
        assert self.ctx.events.count("failure", agent="Alice") == 4

    def test_budget_is_per_kind(self):
        for _ in range(3):
            self.supervisor.remediate(
                self.alice, Failure(FailureKind.IncompleteTodo, "x")
            )
        repetition = Failure(FailureKind.Repetition, "y")
        action = self.supervisor.remediate(self.alice, repetition)
        assert action.kind == RemediationKind.RetryPrompt
        assert action.attempts_remaining == 2

    def test_clean_cycle_restores_budget(self):
        failure = Failure(FailureKind.IncompleteTodo, "finish the rules")
        for _ in range(3):
            self.supervisor.settle_cycle(self.alice, [failure])
        self.supervisor.settle_cycle(self.alice, [])

        actions = self.supervisor.settle_cycle(self.alice, [failure])
        assert [(a.kind, a.attempts_remaining) for a in actions] == [
            (RemediationKind.RetryPrompt, 2)
        ]
        assert self._queued("Boss") == []

    def test_other_failures_keep_the_episode(self):
        todo = Failure(FailureKind.IncompleteTodo, "x")
        for _ in range(3):
            self.supervisor.settle_cycle(self.alice, [todo])
        actions = self.supervisor.settle_cycle(
            self.alice, [todo, Failure(FailureKind.Repetition, "y")]
        )
        assert [a.kind for a in actions] == [
            RemediationKind.EscalateToParent,
            RemediationKind.RetryPrompt,
        ]

    def test_escalation_at_root(self):
        with self.assertRaises(OrchestrationError) as ctx:
            self.supervisor.escalate(self.boss, Failure(FailureKind.FormatError, "bad"))
        assert ctx.exception.code == OrchestrationErrorCodes.EscalationAtRoot
        remediation = self.ctx.events.records("remediation", agent="Boss")[0]["detail"]
        assert remediation["target"] is None

    def test_refusal_recruits_replacement(self):
        self.supervisor.add_checklist_item("Carol", "write the AI")
        self.ctx.send("Alice", "Carol", "Start on the AI.")

        refusal = Failure(FailureKind.Refusal, "sorry")
        action = self.supervisor.remediate(self.carol, refusal)

        assert action.kind == RemediationKind.RecruitReplacement
        assert action.target == "Carol2"
        assert self.carol.retired
        assert self.ctx.directory.resolve("Carol").name == "Carol2"
        assert self.supervisor.checklist("Carol2").items == [
            ChecklistItem("write the AI", False)
        ]
        queued = self._queued("Carol2")
        assert queued[0][2] == "Start on the AI."
        assert queued[1][:2] == (SUPERVISOR, "Refusal")

    def test_refusal_of_boss_escalates(self):
        with self.assertRaises(OrchestrationError) as ctx:
            self.supervisor.remediate(self.boss, Failure(FailureKind.Refusal, "sorry"))
        assert ctx.exception.code == OrchestrationErrorCodes.EscalationAtRoot

    def test_settle_accepts_terminate(self):
        self.alice.terminate_requested = True
        assert self.supervisor.settle_cycle(self.alice, []) == []
        assert self.alice.finished
        assert self.ctx.events.records("terminate")[0]["detail"] == {"accepted": True}

    def test_settle_refuses_terminate_with_open_items(self):
        self.supervisor.add_checklist_item("Alice", "write the rules")
        self.alice.terminate_requested = True
        self.supervisor.settle_cycle(self.alice, [])
        assert not self.alice.finished
        assert not self.alice.terminate_requested
        assert self.ctx.events.records("terminate")[0]["detail"] == {"accepted": False}

    def test_settle_refusal_supersedes(self):
        failures = [
            Failure(FailureKind.IncompleteTodo, "a"),
            Failure(FailureKind.IncompleteTodo, "b"),
            Failure(FailureKind.Refusal, "sorry"),
        ]
        actions = self.supervisor.settle_cycle(self.carol, failures)
        assert [a.kind for a in actions] == [RemediationKind.RecruitReplacement]

    def test_settle_deduplicates_kinds(self):
        failures = [
            Failure(FailureKind.IncompleteTodo, "a"),
            Failure(FailureKind.IncompleteTodo, "b"),
            Failure(FailureKind.Repetition, "c"),
        ]
        actions = self.supervisor.settle_cycle(self.alice, failures)
        assert [a.kind for a in actions] == [RemediationKind.RetryPrompt] * 2
        assert len(self._queued("Alice")) == 2

    def test_sweep(self):
        self.supervisor.add_checklist_item("Alice", "write the rules")
        self.supervisor.add_checklist_item("Carol", "write the AI")
        self.ctx.send("Alice", "Carol", "busy")

        assert self.supervisor.sweep() == 1
        assert [kind for _, kind, _ in self._queued("Alice")] == ["IncompleteTodo"]
        assert len(self._queued("Carol")) == 1


class ParseVerdictTest(BaseTest):
    MEMBERS = {"Alice", "Carol"}

    def test_accept(self):
        for text in ("ACCEPT", "  accept. Great work.", "Accepted"):
            with self.subTest(text=text):
                assert parse_verdict(text, self.MEMBERS) == (ACCEPTED, [])

    def test_revise(self):
        text = "\n".join(
            [
                "REVISE:",
                "Alice: fix the board size",
                "Zed: not ours",
                "- Carol: add tests",
                "noise",
            ]
        )
        assert parse_verdict(text, self.MEMBERS) == (
            REVISE,
            [("Alice", "fix the board size"), ("Carol", "add tests")],
        )
        assert parse_verdict("REVISE: Carol: faster AI", self.MEMBERS) == (
            REVISE,
            [("Carol", "faster AI")],
        )

    def test_inconclusive(self):
        for text in ("", "Looks fine to me.", "REVISE:\nnobody: x", "REVISE: Alice:"):
            with self.subTest(text=text):
                assert parse_verdict(text, self.MEMBERS) == (INCONCLUSIVE, [])


class ValidateResultTest(_SupervisorTest):
    def setUp(self) -> None:
        pass

    def test_revise(self):
        self._build({"Alice": ["REVISE:\nCarol: add unit tests"]})
        outcome = self.supervisor.validate_result(self.alice, "outputs", "requirements")

        assert (outcome.verdict, outcome.revisions, outcome.round) == (
            REVISE,
            [("Carol", "add unit tests")],
            1,
        )
        assert self.supervisor.checklist("Carol").open_items() == [
            ChecklistItem("add unit tests", False)
        ]
        sender, kind, text = self._queued("Carol")[0]
        assert (sender, kind) == (SUPERVISOR, "IncompleteTodo")
        assert text.startswith(
            "SUPERVISOR:IncompleteTodo\nAlice asks for a revision: add unit tests"
        )
        validation = self.ctx.events.records("validation")[0]["detail"]
        assert validation == {"round": 1, "verdict": "revise", "targets": ["Carol"]}
        assert self.ctx.review_inputs("Boss") == []

    def test_accept_forwards_outputs(self):
        self._build({"Alice": ["ACCEPT", "ACCEPT"]})
        for _ in range(2):
            outcome = self.supervisor.validate_result(
                self.alice, "group outputs", "requirements"
            )
        assert (outcome.verdict, outcome.round) == (ACCEPTED, 2)
        assert self.ctx.review_inputs("Boss")[0] == (
            "Accepted work of Alice's group:\ngroup outputs"
        )

    def test_review_prompt(self):
        self._build({"Alice": ["ACCEPT"]})
        self.supervisor.validate_result(self.alice, "Carol wrote ai.py", "Build an AI.")
        assert self.ctx.gateway.calls("Alice") == 1
        assert self.ctx.ledger.entries[0].agent == "Alice"

    def test_nudge_after_unclear_answer(self):
        self._build({"Alice": ["Hmm, hard to say.", "ACCEPT"]})
        outcome = self.supervisor.validate_result(self.alice, "outputs", "requirements")
        assert outcome.verdict == ACCEPTED
        assert self.ctx.gateway.calls("Alice") == 2

    def test_inconclusive_escalates(self):
        self._build({"Alice": ["Hmm.", "Still unsure."]})
        outcome = self.supervisor.validate_result(self.alice, "outputs", "requirements")
        assert outcome.verdict == INCONCLUSIVE
        sender, kind, _ = self._queued("Boss")[0]
        assert (sender, kind) == (SUPERVISOR, "FormatError")

    def test_inconclusive_boss(self):
        self._build({"Boss": ["Hmm.", "Still unsure."]})
        with self.assertRaises(OrchestrationError) as ctx:
            self.supervisor.validate_result(self.boss, "outputs", "requirements")
        assert ctx.exception.code == OrchestrationErrorCodes.ValidationInconclusive
