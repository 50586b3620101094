"""Meta-prompt to deliverable: bootstrap, solve, merge."""
from .deliverable import COMPLETE, PARTIAL, Deliverable, DeliverableFile
from .orchestrator import ORCHESTRATOR, Orchestrator, build_backend, run
from .specs import (
    AgentSpec,
    Decomposition,
    MalformedTag,
    MetaPrompt,
    parse_employee_specs,
)
