"""Agent runtime: agents, queues, the message-queue routine and replay."""
from .agent import LEGAL_TRANSITIONS, ROOT_GROUP, Agent, AgentState, Role, is_valid_name
from .context import RuntimeContext
from .cycle import CycleRecord
from .directory import AgentDirectory, HierarchySummary
from .events import EventKind, EventLog, EventRecord
from .loop import agent_step, run_loop
from .messages import Message, MessageQueue, SequenceCounter
from .replay import ReplayResult, load_log, replay, stage_report
from .scheduler import Scheduler
