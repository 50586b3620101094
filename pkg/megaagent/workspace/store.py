"""Commit-hash-versioned shared file store.

Every path has its own linear history. A commit hash is the SHA-256 of
``path NUL content NUL parent`` (empty parent for the first commit), so
identical histories always hash identically.

Writes are optimistic: a writer passes the hash it based its edit on and the
store commits only if that hash is still HEAD. Otherwise the writer gets a
:class:`ConflictReport` and HEAD is untouched. All mutations happen under one
global lock; the order of ``commit`` events in the event log is the order in
which they were applied.

On disk (when ``root`` is given)::

    root/objects/<hash>          content blobs
    root/refs/<quoted path>      HEAD pointer of each path
    root/log.jsonl               commit journal
"""
import hashlib
import logging
import os
import threading
from pathlib import Path, PurePosixPath
from typing import (
    TYPE_CHECKING,
    Callable,
    Dict,
    Iterable,
    List,
    Optional,
    Tuple,
    Union,
)
from urllib.parse import quote

from ..error import WorkspaceError, WorkspaceErrorCodes
from ..internal import JsonlWriter, read_jsonl, rfc3339_timestamp, utc_now

if TYPE_CHECKING:
    from ..runtime.events import EventLog

logger = logging.getLogger(__name__)

CommitHash = str

CommitListener = Callable[[str, CommitHash, Optional[str]], None]


def commit_digest(path: str, content: str, parent: Optional[CommitHash]) -> CommitHash:
    """Hash of a commit of ``content`` at ``path`` on top of ``parent``."""
    digest = hashlib.sha256()
    digest.update(path.encode("utf-8"))
    digest.update(b"\0")
    digest.update(content.encode("utf-8"))
    digest.update(b"\0")
    digest.update((parent or "").encode("ascii"))
    return digest.hexdigest()


def normalize_path(path: str) -> str:
    """Workspace-relative POSIX path.

    Raises:
        :class:`~megaagent.error.WorkspaceError`: Empty, absolute,
            or escaping path (:attr:`WorkspaceErrorCodes.InvalidPath`).
    """
    if not path or path.strip() != path:
        raise WorkspaceError(WorkspaceErrorCodes.InvalidPath, repr(path))
    if "\\" in path or "\0" in path:
        raise WorkspaceError(WorkspaceErrorCodes.InvalidPath, repr(path))
    pure = PurePosixPath(path)
    if pure.is_absolute() or ".." in pure.parts:
        raise WorkspaceError(WorkspaceErrorCodes.InvalidPath, repr(path))
    parts = [part for part in pure.parts if part != "."]
    if not parts:
        raise WorkspaceError(WorkspaceErrorCodes.InvalidPath, repr(path))
    return "/".join(parts)


class FileRecord:
    """HEAD state of a path."""

    __slots__ = ("path", "content", "head")

    def __init__(self, path: str, content: str, head: CommitHash):
        self.path = path
        self.content = content
        self.head = head

    def __repr__(self) -> str:
        return f"FileRecord({self.path!r}, head={self.head[:12]})"


class ConflictReport:
    """Write whose base is no longer HEAD.

    ``base_hash`` is :data:`None` for a write that assumed the path was new.
    """

    def __init__(
        self,
        path: str,
        base_hash: Optional[CommitHash],
        head_hash: CommitHash,
        base_content: str,
        head_content: str,
        attempted_content: str,
    ):
        if base_hash == head_hash:
            raise ValueError("no conflict: base is HEAD")
        self.path = path
        self.base_hash = base_hash
        self.head_hash = head_hash
        self.base_content = base_content
        self.head_content = head_content
        self.attempted_content = attempted_content

    def render(self) -> str:
        """Text shown to the agent that has to merge."""
        return (
            f"Conflict on {self.path}: it changed since you read it.\n"
            f"Your base: {self.base_hash or '(new file)'}\n"
            f"Current HEAD: {self.head_hash}\n"
            f"--- current content ---\n{self.head_content}\n"
            f"--- your content ---\n{self.attempted_content}\n"
            "Write the merged content to the same file to resolve."
        )

    def json(self):
        return {
            "path": self.path,
            "base_hash": self.base_hash,
            "head_hash": self.head_hash,
        }


WriteResult = Union[CommitHash, ConflictReport]


class Workspace:
    """Shared file store.

    Args:
        root: Directory of the on-disk layout. :data:`None` keeps
            everything in memory. An existing layout is reloaded.
        events: Event log receiving ``commit`` and ``conflict`` records.
    """

    def __init__(
        self,
        root: Optional[Union[str, Path]] = None,
        *,
        events: Optional["EventLog"] = None,
    ):
        self._lock = threading.RLock()
        self._histories: Dict[str, List[CommitHash]] = {}
        self._objects: Dict[CommitHash, str] = {}
        self._parents: Dict[CommitHash, Optional[CommitHash]] = {}
        self._tickets: Dict[Tuple[str, str], CommitHash] = {}
        self._listeners: List[CommitListener] = []
        self._events = events
        self._root = Path(root) if root is not None else None
        self._journal: Optional[JsonlWriter] = None
        if self._root is not None:
            (self._root / "objects").mkdir(parents=True, exist_ok=True)
            (self._root / "refs").mkdir(parents=True, exist_ok=True)
            self._reload()
            self._journal = JsonlWriter(self._root / "log.jsonl")

    @property
    def root(self) -> Optional[Path]:
        return self._root

    def close(self) -> None:
        if self._journal is not None:
            self._journal.close()

    def subscribe(self, listener: CommitListener) -> None:
        """Call ``listener(path, hash, caller)`` after every commit."""
        with self._lock:
            self._listeners.append(listener)

    def exists(self, path: str) -> bool:
        with self._lock:
            return normalize_path(path) in self._histories

    def read(
        self, path: str, *, caller: Optional[str] = None
    ) -> Tuple[str, CommitHash]:
        """HEAD content and hash of ``path``.

        A ``caller`` gets a write ticket for the returned hash.

        Raises:
            :class:`~megaagent.error.WorkspaceError`: Unknown path
                (:attr:`WorkspaceErrorCodes.NotFound`) or invalid path.
        """
        path = normalize_path(path)
        with self._lock:
            head = self._head(path)
            if caller is not None:
                self._tickets[(caller, path)] = head
            return self._objects[head], head

    def write(
        self,
        path: str,
        content: str,
        base_hash: Optional[CommitHash],
        *,
        caller: Optional[str] = None,
    ) -> WriteResult:
        """Commit ``content`` if ``base_hash`` is HEAD.

        Return:
            New HEAD hash, or a :class:`ConflictReport` with HEAD unchanged.
        Raises:
            :class:`~megaagent.error.WorkspaceError`: ``base_hash`` is not
                in the path's history
                (:attr:`WorkspaceErrorCodes.UnknownBaseHash`).
        """
        path = normalize_path(path)
        with self._lock:
            history = self._histories.get(path)
            if history is None:
                if base_hash is not None:
                    raise WorkspaceError(
                        WorkspaceErrorCodes.UnknownBaseHash, f"{path}@{base_hash}"
                    )
                return self._commit(path, content, None, caller)

            head = history[-1]
            if base_hash == head:
                return self._commit(path, content, head, caller)
            if base_hash is not None and base_hash not in history:
                raise WorkspaceError(
                    WorkspaceErrorCodes.UnknownBaseHash, f"{path}@{base_hash}"
                )
            report = ConflictReport(
                path,
                base_hash,
                head,
                self._objects[base_hash] if base_hash is not None else "",
                self._objects[head],
                content,
            )
            if self._events is not None:
                self._events.emit(caller or "", "conflict", report.json())
            logger.debug("conflict on %s: base %s, head %s", path, base_hash, head)
            return report

    def resolve_conflict(
        self,
        report: ConflictReport,
        merged_content: str,
        *,
        caller: Optional[str] = None,
    ) -> CommitHash:
        """Commit ``merged_content`` on top of the report's HEAD.

        Raises:
            :class:`~megaagent.error.WorkspaceError`: HEAD moved since the
                report was made (:attr:`WorkspaceErrorCodes.StaleReport`);
                ``fresh_report`` holds a report against the current HEAD.
        """
        path = normalize_path(report.path)
        with self._lock:
            head = self._head(path)
            if head != report.head_hash:
                fresh = ConflictReport(
                    path,
                    report.base_hash,
                    head,
                    report.base_content,
                    self._objects[head],
                    report.attempted_content,
                )
                raise WorkspaceError(
                    WorkspaceErrorCodes.StaleReport,
                    f"{path}: HEAD moved to {head}",
                    fresh_report=fresh,
                )
            return self._commit(path, merged_content, head, caller)

    def history(self, path: str) -> List[CommitHash]:
        """Root-to-HEAD commit chain of ``path``.

        Raises:
            :class:`~megaagent.error.WorkspaceError`: Unknown path.
        """
        path = normalize_path(path)
        with self._lock:
            self._head(path)
            return list(self._histories[path])

    def content_at(self, commit: CommitHash) -> str:
        """Content committed at ``commit``."""
        with self._lock:
            try:
                return self._objects[commit]
            except KeyError:
                raise WorkspaceError(WorkspaceErrorCodes.NotFound, commit) from None

    def heads(self) -> Dict[str, FileRecord]:
        """HEAD record of every path."""
        with self._lock:
            return {
                path: FileRecord(path, self._objects[history[-1]], history[-1])
                for path, history in sorted(self._histories.items())
            }

    def paths(self) -> List[str]:
        with self._lock:
            return sorted(self._histories)

    def ticket(self, caller: str, path: str) -> Optional[CommitHash]:
        """Hash ``caller`` last read or wrote at ``path``."""
        with self._lock:
            return self._tickets.get((caller, normalize_path(path)))

    def clear_tickets(self, caller: str) -> None:
        """Drop every write ticket of ``caller``."""
        with self._lock:
            for key in [key for key in self._tickets if key[0] == caller]:
                del self._tickets[key]

    def checkout(self, dest: Union[str, Path], *, exclude: Iterable[str] = ()) -> Path:
        """Materialize HEAD files under ``dest``."""
        dest = Path(dest)
        skip = set(exclude)
        for path, record in self.heads().items():
            if path in skip:
                continue
            target = dest.joinpath(*path.split("/"))
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(record.content, encoding="utf-8")
        return dest

    def verify(self) -> List[str]:
        """Recompute every stored hash.

        Return:
            Paths whose chain does not reproduce; empty when intact.
        """
        broken = []
        with self._lock:
            for path, history in self._histories.items():
                parent: Optional[CommitHash] = None
                for commit in history:
                    if self._parents.get(commit) != parent:
                        broken.append(path)
                        break
                    if commit_digest(path, self._objects[commit], parent) != commit:
                        broken.append(path)
                        break
                    parent = commit
        return sorted(broken)

    def _head(self, path: str) -> CommitHash:
        history = self._histories.get(path)
        if not history:
            raise WorkspaceError(WorkspaceErrorCodes.NotFound, path)
        return history[-1]

    def _commit(
        self,
        path: str,
        content: str,
        parent: Optional[CommitHash],
        caller: Optional[str],
    ) -> CommitHash:
        commit = commit_digest(path, content, parent)
        self._objects[commit] = content
        self._parents[commit] = parent
        self._histories.setdefault(path, []).append(commit)
        if caller is not None:
            self._tickets[(caller, path)] = commit
        self._persist(path, content, commit, parent, caller)
        if self._events is not None:
            self._events.emit(
                caller or "",
                "commit",
                {"path": path, "hash": commit, "parent": parent},
            )
        logger.debug("commit %s %s", path, commit[:12])
        for listener in list(self._listeners):
            listener(path, commit, caller)
        return commit

    def _persist(self, path, content, commit, parent, caller) -> None:
        if self._root is None or self._journal is None:
            return
        blob = self._root / "objects" / commit
        if not blob.exists():
            blob.write_text(content, encoding="utf-8")
        ref = self._root / "refs" / quote(path, safe="")
        tmp = ref.with_name(ref.name + ".tmp")
        tmp.write_text(commit, encoding="ascii")
        os.replace(tmp, ref)
        self._journal.append(
            {
                "ts": rfc3339_timestamp(utc_now()),
                "path": path,
                "hash": commit,
                "parent": parent,
                "agent": caller,
            }
        )

    def _reload(self) -> None:
        assert self._root is not None
        for record in read_jsonl(self._root / "log.jsonl", missing_ok=True):
            path, commit = record["path"], record["hash"]
            blob = self._root / "objects" / commit
            self._objects[commit] = blob.read_text(encoding="utf-8")
            self._parents[commit] = record.get("parent")
            self._histories.setdefault(path, []).append(commit)
        if self._histories:
            logger.info("workspace reloaded: %d paths", len(self._histories))
