"""Stage-labelled token and time accounting."""
from .ledger import (
    LedgerEntry,
    StageLabel,
    StageReport,
    StageRow,
    UsageLedger,
    report,
)
