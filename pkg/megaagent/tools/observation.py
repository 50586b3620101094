from typing import Optional

from ..error import MegaAgentError, ToolErrorCodes


class ToolObservation:
    """Result of one tool invocation, fed back to the model.

    ``success`` is false exactly when ``error_detail`` is set.
    """

    def __init__(
        self,
        tool_name: str,
        output: str = "",
        *,
        error_code: Optional[ToolErrorCodes] = None,
        error_detail: Optional[str] = None,
        exit_code: Optional[int] = None,
        running: bool = False,
    ):
        self.tool_name = tool_name
        self.output = output
        self.error_code = error_code
        self.error_detail = error_detail
        self.exit_code = exit_code
        self.running = running

    @property
    def success(self) -> bool:
        return self.error_detail is None

    @classmethod
    def failed(
        cls,
        tool_name: str,
        code: Optional[ToolErrorCodes],
        detail: str,
        *,
        output: str = "",
        exit_code: Optional[int] = None,
    ) -> "ToolObservation":
        return cls(
            tool_name,
            output,
            error_code=code,
            error_detail=detail,
            exit_code=exit_code,
        )

    def render(self) -> str:
        """Observation text appended to the model context."""
        if self.success:
            return self.output or "OK"
        code = self.error_code.value if self.error_code is not None else "Error"
        text = f"{code}: {self.error_detail}"
        if self.output:
            text = f"{text}\n{self.output}"
        return text

    def __repr__(self) -> str:
        state = "ok" if self.success else f"failed {self.error_code}"
        return f"ToolObservation({self.tool_name}, {state})"


class ToolFailure(MegaAgentError):
    """Raised inside tool implementations; the executor turns it into
    a failed observation."""

    def __init__(self, code: ToolErrorCodes, detail: str):
        self.code = code
        self.detail = detail
        super().__init__(f"{code.value}: {detail}")
