"""Checklists, failure detection, remediation and group reviews."""
from .checklist import (
    Checklist,
    ChecklistItem,
    checklist_owner,
    checklist_path,
    parse_checklist,
)
from .failures import (
    SUPERVISOR,
    Failure,
    FailureKind,
    RemediationAction,
    RemediationKind,
    message_kind,
    supervisor_message,
)
from .monitor import (
    ACCEPTED,
    INCONCLUSIVE,
    REVISE,
    ReviewOutcome,
    Supervisor,
    parse_verdict,
)
