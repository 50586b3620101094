from typing import Dict, List, Optional, Tuple

from ..gateway.types import ModelResponse
from ..tools.observation import ToolObservation
from ..tools.parser import FunctionCall, Talk
from ..tools.schemas import EXEC_PYTHON_FILE
from .messages import Message


class CycleRecord:
    """Everything one Processing cycle produced."""

    def __init__(self, agent: str, batch: List[Message]):
        self.agent = agent
        self.batch = batch
        self.responses: List[ModelResponse] = []
        self.observations: List[Tuple[FunctionCall, ToolObservation]] = []
        self.loop_exceeded = False
        self.backend_error: Optional[Exception] = None
        self.terminate_requested = False

    @property
    def calls(self) -> List[FunctionCall]:
        return [call for call, _ in self.observations]

    @property
    def talks(self) -> List[Talk]:
        return [talk for response in self.responses for talk in response.talks]

    @property
    def final_text(self) -> str:
        return self.responses[-1].text if self.responses else ""

    def texts(self) -> List[str]:
        return [response.text for response in self.responses]

    def last_exec_per_file(self) -> Dict[str, ToolObservation]:
        last: Dict[str, ToolObservation] = {}
        for call, obs in self.observations:
            if call.tool_name == EXEC_PYTHON_FILE:
                last[call.arguments["filename"]] = obs
        return last

    def batch_text(self) -> str:
        return "\n".join(f"{m.sender}: {m.text}" for m in self.batch)
