"""Agent registry: hierarchy, groups and routing policy.

Routing policy:

* the supervisor may address anyone;
* an Ordinary agent may address its own group and its parent;
* an Admin may address its own group, every other Admin and its parent;
* the Boss may address Admins.

Messages addressed to a replaced agent go to its replacement.
"""
import threading
from typing import Dict, Iterator, List, Optional

from ..config import RuntimeConfig
from ..error import RoutingError, RoutingErrorCodes, SpawnRefusedError
from ..supervisor.failures import SUPERVISOR
from .agent import ROOT_GROUP, Agent, Role, is_valid_name
from .messages import MessageQueue


class HierarchySummary:
    """Agent count, depth and per-level sizes."""

    def __init__(self, levels: Dict[int, int]):
        self.levels = dict(sorted(levels.items()))
        self.agents = sum(levels.values())
        self.depth = max(levels) if levels else 0

    def lines(self) -> List[str]:
        out = [f"agents: {self.agents}", f"depth: {self.depth}"]
        out.extend(f"level {level}: {size}" for level, size in self.levels.items())
        return out

    def json(self):
        return {
            "agents": self.agents,
            "depth": self.depth,
            "levels": {str(level): size for level, size in self.levels.items()},
        }


class AgentDirectory:
    """Registrar of every agent and queue of a run.

    Spawns are serialized, so the tree invariant holds after each one.
    """

    def __init__(self, config: Optional[RuntimeConfig] = None):
        self._config = config or RuntimeConfig()
        self._agents: Dict[str, Agent] = {}
        self._queues: Dict[str, MessageQueue] = {}
        self._lock = threading.RLock()
        self._boss: Optional[str] = None

    @property
    def boss(self) -> Optional[Agent]:
        with self._lock:
            return self._agents.get(self._boss) if self._boss else None

    def __contains__(self, name: str) -> bool:
        with self._lock:
            return name in self._agents

    def __iter__(self) -> Iterator[Agent]:
        return iter(self.agents())

    def __len__(self) -> int:
        with self._lock:
            return len(self._agents)

    def agents(self, *, active_only: bool = False) -> List[Agent]:
        """Agents in spawn order."""
        with self._lock:
            agents = list(self._agents.values())
        if active_only:
            agents = [agent for agent in agents if agent.active]
        return agents

    def get(self, name: str) -> Agent:
        """Registered agent.

        Raises:
            :class:`KeyError`: Unknown name.
        """
        with self._lock:
            return self._agents[name]

    def queue(self, name: str) -> MessageQueue:
        with self._lock:
            return self._queues[name]

    def resolve(self, name: str) -> Agent:
        """Agent behind ``name``, following replacements.

        Raises:
            :class:`~megaagent.error.RoutingError`: Unknown name.
        """
        with self._lock:
            agent = self._agents.get(name)
            if agent is None:
                raise RoutingError(RoutingErrorCodes.UnknownRecipient, "?", name)
            while agent.replaced_by is not None:
                agent = self._agents[agent.replaced_by]
            return agent

    def check_route(self, sender: str, recipient: str) -> Agent:
        """Recipient agent if ``sender`` may address it.

        Raises:
            :class:`~megaagent.error.RoutingError`: Unknown recipient
                or forbidden edge.
        """
        with self._lock:
            if recipient not in self._agents:
                raise RoutingError(
                    RoutingErrorCodes.UnknownRecipient, sender, recipient
                )
            target = self.resolve(recipient)
            if sender == SUPERVISOR:
                return target
            source = self.resolve(sender)
            if not self._allowed(source, target):
                raise RoutingError(
                    RoutingErrorCodes.RoutingForbidden, sender, recipient
                )
            return target

    def can_route(self, sender: str, recipient: str) -> bool:
        try:
            self.check_route(sender, recipient)
        except RoutingError:
            return False
        return True

    @staticmethod
    def _allowed(source: Agent, target: Agent) -> bool:
        if source.role == Role.Boss:
            return target.role == Role.Admin
        if target.name == source.parent:
            return True
        if source.role == Role.Admin:
            return target.group_id == source.group_id or target.role == Role.Admin
        return target.group_id == source.group_id

    def spawn(
        self,
        name: str,
        system_prompt: str,
        *,
        parent: Optional[str] = None,
    ) -> Agent:
        """Register a new agent under ``parent``.

        The first agent, spawned without a parent, is the Boss. Children
        of the Boss are Admins leading their own group; deeper children
        are Ordinary members of their parent's group. An Ordinary parent
        is promoted to Admin of a new group named after itself.

        Raises:
            :class:`~megaagent.error.SpawnRefusedError`: Invalid or taken
                name, agent limit or depth limit reached.
        """
        with self._lock:
            if not is_valid_name(name) or name == SUPERVISOR:
                raise SpawnRefusedError(f"invalid agent name {name!r}")
            if name in self._agents:
                raise SpawnRefusedError(f"agent {name} already exists")
            if len(self._agents) >= self._config.max_agents:
                raise SpawnRefusedError(
                    f"agent limit {self._config.max_agents} reached"
                )

            if parent is None:
                if self._boss is not None:
                    raise SpawnRefusedError("the Boss agent already exists")
                agent = Agent(
                    name,
                    Role.Boss,
                    parent=None,
                    group_id=ROOT_GROUP,
                    system_prompt=system_prompt,
                    level=0,
                )
                self._boss = name
            else:
                owner = self.resolve(parent)
                if owner.level >= self._config.max_hierarchy_depth:
                    raise SpawnRefusedError(
                        f"depth limit {self._config.max_hierarchy_depth} reached"
                    )
                if owner.role == Role.Boss:
                    role, group = Role.Admin, name
                else:
                    if owner.role == Role.Ordinary:
                        owner.role = Role.Admin
                        owner.group_id = owner.name
                    role, group = Role.Ordinary, owner.group_id
                agent = Agent(
                    name,
                    role,
                    parent=owner.name,
                    group_id=group,
                    system_prompt=system_prompt,
                    level=owner.level + 1,
                )
                owner.children.append(name)

            self._agents[name] = agent
            self._queues[name] = MessageQueue(name)
            return agent

    def replace(self, old: Agent, name: str) -> Agent:
        """Register ``name`` in place of ``old`` and retire ``old``.

        The replacement keeps the role, parent, group, prompt and children.
        """
        with self._lock:
            if not is_valid_name(name) or name in self._agents:
                raise SpawnRefusedError(f"agent {name} already exists")
            new = Agent(
                name,
                old.role,
                parent=old.parent,
                group_id=old.group_id,
                system_prompt=old.system_prompt,
                level=old.level,
            )
            new.children = list(old.children)
            for child in new.children:
                self._agents[child].parent = name
            if old.parent is not None:
                siblings = self._agents[old.parent].children
                siblings[siblings.index(old.name)] = name
            if old.role == Role.Boss:
                self._boss = name
            old.retired = True
            old.replaced_by = name
            old.children = []
            self._agents[name] = new
            self._queues[name] = MessageQueue(name)
            return new

    def replacement_name(self, name: str) -> str:
        """First free name among ``<name>2``, ``<name>3``, …"""
        with self._lock:
            index = 2
            while f"{name}{index}" in self._agents:
                index += 1
            return f"{name}{index}"

    def children(self, name: str) -> List[Agent]:
        with self._lock:
            return [self._agents[child] for child in self._agents[name].children]

    def subtree(self, name: str) -> List[Agent]:
        """Active descendants of ``name``, breadth first."""
        with self._lock:
            out: List[Agent] = []
            pending = list(self._agents[name].children)
            while pending:
                agent = self._agents[pending.pop(0)]
                out.append(agent)
                pending.extend(agent.children)
            return [agent for agent in out if agent.active]

    def ancestors(self, name: str) -> List[Agent]:
        """Parent chain of ``name`` up to the Boss."""
        with self._lock:
            out = []
            parent = self._agents[name].parent
            while parent is not None:
                agent = self._agents[parent]
                out.append(agent)
                parent = agent.parent
            return out

    def summary(self) -> HierarchySummary:
        levels: Dict[int, int] = {}
        for agent in self.agents(active_only=True):
            levels[agent.level] = levels.get(agent.level, 0) + 1
        return HierarchySummary(levels)

    def queues_empty(self) -> bool:
        with self._lock:
            queues = list(self._queues.values())
        return all(queue.is_empty() for queue in queues)
