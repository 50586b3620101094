import json
from pathlib import Path
from typing import List, NamedTuple, Optional, Union

from ..internal import JsonObjectForm
from ..metrics.ledger import StageReport

COMPLETE = "complete"
PARTIAL = "partial"


class DeliverableFile(NamedTuple):
    path: str
    hash: str


class Deliverable(JsonObjectForm):
    """Final output of a run.

    Every listed hash was a workspace HEAD at aggregation time. A
    ``partial`` deliverable comes from an aborted run and carries the
    diagnostic.
    """

    def __init__(
        self,
        files: List[DeliverableFile],
        summary: str,
        ledger: StageReport,
        *,
        status: str = COMPLETE,
        diagnostic: Optional[str] = None,
    ):
        self.files = files
        self.summary = summary
        self.ledger = ledger
        self.status = status
        self.diagnostic = diagnostic
        super().__init__(
            {
                "files": [{"path": f.path, "hash": f.hash} for f in files],
                "summary": summary,
                "ledger": ledger.json(),
                "status": status,
                "diagnostic": diagnostic,
            }
        )

    @property
    def complete(self) -> bool:
        return self.status == COMPLETE

    def paths(self) -> List[str]:
        return [f.path for f in self.files]

    def write(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as fp:
            json.dump(self.json(), fp, indent=2, ensure_ascii=False)
            fp.write("\n")

    def __repr__(self) -> str:
        return f"Deliverable({self.status}, files={self.paths()})"
