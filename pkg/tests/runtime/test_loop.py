import random
from typing import List, Tuple

from megaagent import BackendUnavailableError, Config, RuntimeConfig
from megaagent.gateway import Backend, ChatRequest, TokenUsage
from megaagent.metrics import StageLabel
from megaagent.runtime import AgentState, RuntimeContext, agent_step, replay
from megaagent.supervisor import SUPERVISOR, message_kind
from tests import BaseTest, call, talk, terminate


class _RecordingBackend(Backend):
    def __init__(self, answers: List[str]):
        self.answers = list(answers)
        self.requests: List[ChatRequest] = []

    def infer(self, request: ChatRequest) -> Tuple[str, TokenUsage]:
        self.requests.append(request.copy())
        return self.answers.pop(0) if self.answers else "ok", TokenUsage(1, 1)


class _DownBackend(Backend):
    def infer(self, request):
        raise BackendUnavailableError("backend unavailable after 3 attempts")


class AgentStepTest(BaseTest):
    def _context(self, backend, config=None) -> RuntimeContext:
        ctx = RuntimeContext(config or self._make_config(), backend)
        ctx.ledger.open_stage(StageLabel.TaskSolving)
        self.addCleanup(ctx.close)
        ctx.spawn_agent("Boss", "meta")
        ctx.spawn_agent("Alice", "You are Alice.", parent="Boss")
        ctx.spawn_agent("Carol", "You are Carol.", parent="Alice")
        return ctx

    def test_empty_queue_costs_nothing(self):
        backend = _RecordingBackend([])
        ctx = self._context(backend)
        assert agent_step(ctx.directory.get("Alice"), ctx) is None
        assert backend.requests == []
        assert ctx.events.count("state") == 0

    def test_whole_queue_is_one_batch(self):
        backend = _RecordingBackend(["Noted."])
        ctx = self._context(backend)
        for text in ("first", "second", "third"):
            ctx.send("Boss", "Alice", text)
        alice = ctx.directory.get("Alice")

        cycle = agent_step(alice, ctx)

        assert [m.text for m in cycle.batch] == ["first", "second", "third"]
        assert len(backend.requests) == 1
        context = backend.requests[0].context_messages
        assert context == [("Boss", "first"), ("Boss", "second"), ("Boss", "third")]
        assert len(backend.requests[0].tool_schemas) == 6
        assert alice.state == AgentState.Idle
        assert alice.call_counter == 1
        states = [r["detail"]["to"] for r in ctx.events.records("state", agent="Alice")]
        assert states == ["Processing", "Response", "Idle"]
        assert ctx.events.count("verdict", agent="Alice") == 1
        assert ctx.is_dirty("Alice") and ctx.is_dirty("Boss")

    def test_memory_feeds_next_cycle(self):
        backend = _RecordingBackend(["The board is 15x15.", "Still 15x15."])
        ctx = self._context(backend)
        alice = ctx.directory.get("Alice")
        ctx.send("Boss", "Alice", "How big is the board?")
        agent_step(alice, ctx)
        assert [e.text for e in ctx.memory.entries("Alice")] == [
            "Boss: How big is the board?",
            "The board is 15x15.",
        ]

        ctx.send("Boss", "Alice", "Remind me the board size.")
        agent_step(alice, ctx)
        speakers = [speaker for speaker, _ in backend.requests[1].context_messages]
        assert speakers[:2] == ["memory", "memory"]
        assert speakers[-1] == "Boss"

    def test_tool_loop_and_dispatch(self):
        backend = _RecordingBackend(
            [
                call("write_file", filename="notes.txt", content="draft"),
                talk("Carol", "Please review notes.txt.") + "\nDone writing.",
            ]
        )
        ctx = self._context(backend)
        ctx.send("Boss", "Alice", "Write notes.")
        cycle = agent_step(ctx.directory.get("Alice"), ctx)

        assert len(backend.requests) == 2
        speaker, text = backend.requests[1].context_messages[-1]
        assert speaker == "tool:write_file"
        assert text.startswith("Wrote notes.txt")
        assert [c.tool_name for c in cycle.calls] == ["write_file"]
        queued = ctx.directory.queue("Carol").peek()
        assert [(m.sender, m.text) for m in queued] == [
            ("Alice", "Please review notes.txt.")
        ]
        dispatch = ctx.events.records("dispatch", agent="Alice")
        assert dispatch[0]["detail"]["recipient"] == "Carol"

    def test_parse_warning_is_fed_back(self):
        broken = '```call\n{"name": "fly", "arguments": {}}\n```'
        backend = _RecordingBackend([broken, "I will not fly."])
        ctx = self._context(backend)
        ctx.send("Boss", "Alice", "Go.")
        agent_step(ctx.directory.get("Alice"), ctx)

        speaker, text = backend.requests[1].context_messages[-1]
        assert speaker == "tool:parse"
        assert text.startswith("UnknownTool")

    def test_forbidden_talk_is_not_dispatched(self):
        backend = _RecordingBackend([talk("Boss", "Hello boss.")])
        ctx = self._context(backend)
        ctx.send("Alice", "Carol", "Start.")
        carol = ctx.directory.get("Carol")
        agent_step(carol, ctx)

        assert ctx.directory.queue("Boss").is_empty()
        verdict = ctx.events.records("verdict", agent="Carol")[0]["detail"]
        assert verdict["kind"] == "FormatError"
        queued = ctx.directory.queue("Carol").peek()
        assert message_kind(queued[0].text) == "FormatError"
        assert queued[0].sender == SUPERVISOR
        assert carol.state == AgentState.Response

    def test_function_loop_bound(self):
        config = Config(
            runtime=RuntimeConfig(max_function_call_iterations=3, poll_interval=0.01)
        )
        backend = _RecordingBackend(
            [call("read_file", filename=f"{name}.txt") for name in "abcd"]
        )
        ctx = self._context(backend, config)
        ctx.send("Boss", "Alice", "Read everything.")
        cycle = agent_step(ctx.directory.get("Alice"), ctx)

        assert cycle.loop_exceeded
        assert len(backend.requests) == 3
        queued = ctx.directory.queue("Alice").peek()
        assert message_kind(queued[0].text) == "IncompleteTodo"

    def test_backend_outage_requeues_batch(self):
        ctx = self._context(_DownBackend())
        first = ctx.send("Boss", "Alice", "one")
        second = ctx.send("Boss", "Alice", "two")
        cycle = agent_step(ctx.directory.get("Alice"), ctx)

        assert cycle.backend_error is not None
        queued = ctx.directory.queue("Alice").peek()
        assert queued[:2] == [first, second]
        assert message_kind(queued[2].text) == "ExecError"
        requeue = ctx.events.records("requeue")[0]["detail"]
        assert requeue["seqs"] == [first.sequence, second.sequence]
        assert ctx.memory.entries("Alice") == []

    def test_terminate_finishes_agent(self):
        backend = _RecordingBackend([terminate(), "never asked"])
        ctx = self._context(backend)
        ctx.send("Boss", "Alice", "Wrap up.")
        alice = ctx.directory.get("Alice")
        cycle = agent_step(alice, ctx)

        assert cycle.terminate_requested
        assert alice.finished
        assert not alice.terminate_requested
        assert len(backend.requests) == 1
        assert ctx.events.records("terminate")[0]["detail"] == {"accepted": True}

    def test_message_to_replaced_agent_is_redirected(self):
        ctx = self._context(_RecordingBackend([]))
        ctx.send("Alice", "Carol", "queued before")
        carol = ctx.directory.get("Carol")
        new = ctx.replace_agent(carol)
        message = ctx.send("Alice", "Carol", "after")

        assert message.recipient == new.name == "Carol2"
        assert [m.text for m in ctx.directory.queue("Carol2").peek()] == [
            "queued before",
            "after",
        ]
        enqueue = ctx.events.records("enqueue")[-1]["detail"]
        assert enqueue["addressed"] == "Carol"

    def test_program_timeout_reaches_owner(self):
        ctx = self._context(_RecordingBackend([]))
        ctx.notify_program_timeout("Alice")

        queued = ctx.directory.queue("Alice").peek()
        assert message_kind(queued[0].text) == "ExecError"
        assert queued[0].sender == SUPERVISOR
        event = ctx.events.records("sandbox_timeout", agent="Alice")[0]
        assert event["detail"] == {"timeout_s": ctx.config.sandbox.timeout_s}


class _EchoBackend(Backend):
    """Answers with fresh prose and checks the caller is Processing."""

    def __init__(self, inject=None):
        self.ctx = None
        self.inject = inject
        self.calls = 0

    def infer(self, request: ChatRequest) -> Tuple[str, TokenUsage]:
        agent = self.ctx.directory.get(request.agent_name)
        assert agent.state == AgentState.Processing
        self.calls += 1
        if self.inject is not None:
            self.inject(self.ctx, request)
        return f"Noted {self.calls}.", TokenUsage(1, 1)


_ROUTES = [("Boss", "Alice"), ("Alice", "Carol"), ("Carol", "Alice"), ("Alice", "Boss")]
_NAMES = ["Boss", "Alice", "Carol"]


class RandomScheduleTest(BaseTest):
    def _fresh(self, backend) -> RuntimeContext:
        ctx = RuntimeContext(self._make_config(), backend)
        backend.ctx = ctx
        ctx.ledger.open_stage(StageLabel.TaskSolving)
        ctx.spawn_agent("Boss", "meta")
        ctx.spawn_agent("Alice", "You are Alice.", parent="Boss")
        ctx.spawn_agent("Carol", "You are Carol.", parent="Alice")
        return ctx

    def _drain(self, ctx: RuntimeContext) -> None:
        for _ in range(100):
            pending = [
                name for name in _NAMES if not ctx.directory.queue(name).is_empty()
            ]
            if not pending:
                return
            for name in pending:
                agent_step(ctx.directory.get(name), ctx)
        self.fail("queues never drained")

    def test_random_schedules_replay_cleanly(self):
        rng = random.Random(2024)
        for case in range(1000):
            backend = _EchoBackend()
            ctx = self._fresh(backend)
            try:
                ctx.events.emit("orchestrator", "run", {"action": "start"})
                for _ in range(rng.randint(1, 12)):
                    if rng.random() < 0.5:
                        sender, recipient = rng.choice(_ROUTES)
                        ctx.send(sender, recipient, f"case {case} note {rng.random()}")
                    else:
                        agent_step(ctx.directory.get(rng.choice(_NAMES)), ctx)
                self._drain(ctx)
                ctx.events.emit(
                    "orchestrator", "run", {"action": "end", "status": "complete"}
                )

                records = list(enumerate(ctx.events.records(), start=1))
                result = replay(records)
                assert result.ok, (case, result.violations)
                for name in _NAMES:
                    assert ctx.directory.get(name).state == AgentState.Idle
                entered = [
                    r
                    for r in ctx.events.records("state")
                    if r["detail"]["to"] == "Processing"
                ]
                assert len(entered) == ctx.events.count("verdict")
            finally:
                ctx.close()

    def test_messages_arriving_mid_cycle_wait_for_next_batch(self):
        rng = random.Random(99)
        for case in range(200):
            before = rng.randint(1, 5)
            k = rng.randint(0, 4)
            injected = []

            def inject(ctx, request, k=k, injected=injected):
                if request.agent_name != "Alice" or injected or k == 0:
                    return
                for n in range(k):
                    injected.append(ctx.send("Boss", "Alice", f"late {n}"))

            backend = _EchoBackend(inject)
            ctx = self._fresh(backend)
            try:
                early = [ctx.send("Boss", "Alice", f"early {n}") for n in range(before)]
                alice = ctx.directory.get("Alice")

                cycle = agent_step(alice, ctx)
                assert [m.sequence for m in cycle.batch] == [
                    m.sequence for m in early
                ], case
                assert len(injected) == k

                following = agent_step(alice, ctx)
                if k == 0:
                    assert following is None
                    assert alice.state == AgentState.Idle
                else:
                    assert [m.sequence for m in following.batch] == [
                        m.sequence for m in injected
                    ], case
            finally:
                ctx.close()
