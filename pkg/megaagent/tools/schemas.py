"""Function-call schemas offered to every agent."""
import copy
from typing import Dict, List, Optional, Sequence, Tuple

from typing_extensions import TypedDict

from ..internal import JsonObject, JsonObjectForm

EXEC_PYTHON_FILE = "exec_python_file"
READ_FILE = "read_file"
INPUT = "input"
WRITE_FILE = "write_file"
ADD_AGENT = "add_agent"
TERMINATE = "TERMINATE"


class ParameterSpec(TypedDict):
    type: str
    description: str


class ToolSchema(JsonObjectForm):
    """Function-call schema.

    Serializes to ``{"name", "description", "parameters"}`` where
    ``parameters`` is a JSON-schema object. A schema without parameters
    (``TERMINATE``) omits the key entirely.

    Args:
        name: Function name.
        description: What the function does, shown to the model.
        parameters: Ordered ``(name, description)`` pairs; every parameter
            is a required string.
    """

    def __init__(
        self,
        name: str,
        description: str,
        parameters: Sequence[Tuple[str, str]] = (),
    ):
        data: JsonObject = {"name": name, "description": description}
        if parameters:
            properties: Dict[str, ParameterSpec] = {
                param: {"type": "string", "description": text}
                for param, text in parameters
            }
            data["parameters"] = {"type": "object", "properties": properties}
        super().__init__(data)
        self.name = name
        self.description = description
        self.parameter_names: Tuple[str, ...] = tuple(p for p, _ in parameters)

    def json(self) -> JsonObject:
        return copy.deepcopy(self._data)


_SCHEMAS: Tuple[ToolSchema, ...] = (
    ToolSchema(
        EXEC_PYTHON_FILE,
        "Execute a Python file and get the result.",
        [("filename", "The filename of the Python file to be executed.")],
    ),
    ToolSchema(
        READ_FILE,
        "Read the content of a file.",
        [("filename", "The filename to be read.")],
    ),
    ToolSchema(
        INPUT,
        "Input a string to the running Python code.",
        [("content", "The string to be input.")],
    ),
    ToolSchema(
        WRITE_FILE,
        "Write content to a file.",
        [
            ("filename", "The filename to be written."),
            ("content", "The content to be written."),
        ],
    ),
    ToolSchema(
        ADD_AGENT,
        "Recruit an agent as your subordinate.",
        [
            ("name", "Unique agent name."),
            ("description", "Agent description."),
        ],
    ),
    ToolSchema(TERMINATE, "End the conversation when all tasks are complete."),
)

_BY_NAME = {schema.name: schema for schema in _SCHEMAS}


def registry_schemas() -> List[ToolSchema]:
    """The six schemas, in registry order."""
    return list(_SCHEMAS)


def lookup_schema(name: str) -> Optional[ToolSchema]:
    """Schema registered under ``name``, if any."""
    return _BY_NAME.get(name)


def schemas_json() -> List[JsonObject]:
    """Registry serialized as a JSON-ready list."""
    return [schema.json() for schema in _SCHEMAS]
