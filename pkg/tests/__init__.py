import unittest
from typing import Dict, Iterable, List, Sequence, Union

import httpx

from megaagent import Config, RuntimeConfig
from megaagent.gateway import ScriptedBackend, ScriptedScenario
from megaagent.metrics import StageLabel
from megaagent.runtime import RuntimeContext
from megaagent.tools import FunctionCall


class BaseTest(unittest.TestCase):
    @staticmethod
    def _make_response(status_code: int, content: Union[list, dict]):
        """Make mock response"""
        return httpx.Response(status_code=status_code, json=content)

    @staticmethod
    def _make_config(**runtime) -> Config:
        """Config with fast polling and a generous deadlock timeout."""
        runtime.setdefault("poll_interval", 0.01)
        runtime.setdefault("deadlock_timeout", 10.0)
        return Config(runtime=RuntimeConfig(**runtime))

    def _make_context(self, sequences=None, *, config=None, **scenario):
        ctx = RuntimeContext(
            config or self._make_config(),
            ScriptedBackend(
                ScriptedScenario.from_sequences(sequences or {}, **scenario)
            ),
        )
        ctx.ledger.open_stage(StageLabel.TaskSolving)
        self.addCleanup(ctx.close)
        return ctx


def call(name: str, /, **arguments: str) -> str:
    """Function-call block as a model writes it."""
    return FunctionCall(name, dict(arguments)).render()


def talk(recipient: str, text: str) -> str:
    return f'<talk to="{recipient}">{text}</talk>'


def terminate() -> str:
    return call("TERMINATE")


def employees(specs: Dict[str, str], beginner: str = "") -> str:
    """Boss decomposition naming ``specs`` and an optional beginner."""
    blocks = [
        f'<employee name="{name}">{body}</employee>' for name, body in specs.items()
    ]
    if beginner:
        blocks.append(f"<beginner>{beginner}</beginner>")
    return "Here is the team.\n" + "\n".join(blocks)


def steps(*parts: Union[str, Sequence[str]]) -> List[str]:
    """Response list; a sequence item is joined into one response."""
    return [part if isinstance(part, str) else "\n".join(part) for part in parts]


def gobang_sequences() -> Dict[str, List[str]]:
    """Five employees build a Gobang game; Eve recruits a tester."""
    return {
        "Boss": [
            employees(
                {
                    "Alice": "You are Alice, the game designer.",
                    "Bob": "You are Bob, the product manager.",
                    "Carol": "You are Carol, the AI developer.",
                    "David": "You are David, the game logic developer.",
                    "Eve": "You are Eve, the integrator.",
                },
                beginner="Bob",
            ),
            "ACCEPT",
        ],
        "Bob": steps(
            call(
                "write_file", filename="features.txt", content="15x15 board\nAI player"
            ),
            [talk("Alice", "Features are in features.txt."), terminate()],
        ),
        "Alice": steps(
            call(
                "write_file", filename="game_design.txt", content="Black moves first."
            ),
            [talk("Carol", "Design is in game_design.txt."), terminate()],
        ),
        "Carol": steps(
            call(
                "write_file",
                filename="ai.py",
                content="def best_move(board):\n    return 7, 7\n",
            ),
            [talk("David", "AI is in ai.py."), terminate()],
        ),
        "David": steps(
            call("write_file", filename="game_logic.py", content="SIZE = 15\n"),
            [talk("Eve", "Logic is in game_logic.py."), terminate()],
        ),
        "Eve": steps(
            call("add_agent", name="Grace", description="You are Grace, a tester."),
            call("write_file", filename="main.py", content="print('board ok')\n"),
            call("exec_python_file", filename="main.py"),
            [talk("Grace", "Please test main.py."), terminate()],
            "ACCEPT",
        ),
        "Grace": steps(
            call("exec_python_file", filename="main.py"),
            terminate(),
        ),
    }


def gobang_scenario(**kwargs) -> ScriptedScenario:
    return ScriptedScenario.from_sequences(gobang_sequences(), **kwargs)


def single_employee(name: str, work: Iterable[str], boss_review: str = "ACCEPT"):
    """Sequences of a run with one employee, who starts the work."""
    return {
        "Boss": [employees({name: f"You are {name}."}, beginner=name), boss_review],
        name: list(work),
    }
