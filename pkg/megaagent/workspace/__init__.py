"""Versioned shared file store with optimistic-concurrency writes."""
from .store import (
    CommitHash,
    ConflictReport,
    FileRecord,
    Workspace,
    WriteResult,
    commit_digest,
    normalize_path,
)
