"""A hierarchical multi-agent runtime driven by a single meta-prompt.

A Boss agent decomposes the meta-prompt into employees, who recruit their
own subordinates, talk to each other through message queues, write and run
files in a shared workspace and are kept on track by a supervisor.
"""
from .config import (
    Config,
    HTTPBackendConfig,
    Limits,
    RetrievalConfig,
    RuntimeConfig,
    SandboxPolicy,
    SupervisorConfig,
    Timeouts,
)
from .error import (
    BackendUnavailableError,
    InvariantViolation,
    MegaAgentError,
    OrchestrationError,
    OrchestrationErrorCodes,
    RoutingError,
    RoutingErrorCodes,
    WorkspaceError,
    WorkspaceErrorCodes,
)

from .orchestrator import Deliverable, MetaPrompt, Orchestrator, run

from .enum import MegaAgentEnum

from .__version__ import (  # noqa: F401
    __author__,
    __author_email__,
    __description__,
    __license__,
    __title__,
    __version__,
)
