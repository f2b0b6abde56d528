"""Audit trail of intermediate attack decisions."""

from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from rich.console import Console
from rich.table import Table


class AuditEvent(str, Enum):
    """Kinds of recorded decisions."""
    SIGMA = "sigma"
    THRESHOLD = "threshold"
    ATTACK_MODEL = "attack_model"
    DIFFERENTIAL_V1 = "differential_v1"
    DIFFERENTIAL_V2 = "differential_v2"


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, Enum):
        return value.value
    return value


class AuditRecord:
    """One recorded decision with its inputs."""

    def __init__(self, event: AuditEvent, payload: Dict[str, Any]):
        self.event = AuditEvent(event)
        self.payload = {k: _plain(v) for k, v in payload.items()}

    def to_record(self) -> Dict[str, Any]:
        """JSON-lines form."""
        return {"event": self.event.value, **self.payload}


class AuditTrail:
    """Collects intermediate distances, thresholds and attack-model diagnostics.

    Attacks append to the trail when one is passed in; the harness writes it as
    JSON lines when tracing is on and lifts the latest diagnostics into reports.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.history: List[AuditRecord] = []

    def record(self, event: AuditEvent, **payload: Any) -> None:
        if self.enabled:
            self.history.append(AuditRecord(event, payload))

    def events(self, event: AuditEvent) -> List[AuditRecord]:
        return [r for r in self.history if r.event == AuditEvent(event)]

    def latest(self, event: AuditEvent) -> Optional[Dict[str, Any]]:
        found = self.events(event)
        return dict(found[-1].payload) if found else None

    def to_records(self) -> List[Dict[str, Any]]:
        return [r.to_record() for r in self.history]

    def get_summary(self) -> Dict[str, Any]:
        """Counts per event kind plus the last few records."""
        if not self.history:
            return {"total": 0, "summary": "No decisions recorded"}

        counts: Dict[str, int] = {}
        for record in self.history:
            counts[record.event.value] = counts.get(record.event.value, 0) + 1

        return {
            "total": len(self.history),
            "event_breakdown": counts,
            "recent": [r.to_record() for r in self.history[-5:]],
        }

    def render(self, console: Console) -> None:
        summary = self.get_summary()
        table = Table(title="🔎 Audit Trail", show_header=True)
        table.add_column("Event", style="cyan")
        table.add_column("Records", justify="right", style="white")
        for event, count in summary.get("event_breakdown", {}).items():
            table.add_row(event, str(count))
        console.print(table)
