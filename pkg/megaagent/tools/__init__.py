"""Function-call tools: schemas, parsing and execution."""
from .executor import ToolExecutor
from .observation import ToolFailure, ToolObservation
from .parser import (
    FunctionCall,
    ParsedResponse,
    ParseWarning,
    Talk,
    parse_calls,
    parse_response,
)
from .sandbox import Sandbox, SandboxResult
from .schemas import (
    ADD_AGENT,
    EXEC_PYTHON_FILE,
    INPUT,
    READ_FILE,
    TERMINATE,
    WRITE_FILE,
    ToolSchema,
    lookup_schema,
    registry_schemas,
    schemas_json,
)
