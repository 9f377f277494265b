# run_context.py

import json
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional


@dataclass
class RunEvent:
    component: str
    step: str
    elapsed: float                  # seconds since the run started
    details: Dict[str, Any]


@dataclass
class RunContext:
    """
    Event log and shared state of one command run, saved as run_context.json.
    - run_id: id of this run (e.g. "003")
    - started_at: UTC start time, ISO 8601
    - shared_state: values components publish for the run summary (best mIoU, steps, final loss)
    - events: timestamped record of what each component did
    """
    run_id: str
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    shared_state: Dict[str, Any] = field(default_factory=dict)
    events: List[RunEvent] = field(default_factory=list)
    _t0: float = field(default_factory=time.monotonic, init=False, repr=False, compare=False)

    def elapsed(self) -> float:
        return round(time.monotonic() - self._t0, 3)

    def log(self, component: str, step: str, /, **details: Any) -> RunEvent:
        """
        Record an event from a component. e.g.
        context.log("trainer", "evaluated", epoch=25, step=50, miou=0.41)
        """
        event = RunEvent(component=component, step=step, elapsed=self.elapsed(), details=details)
        self.events.append(event)
        return event

    def select(self, component: str, step: Optional[str] = None) -> List[RunEvent]:
        return [e for e in self.events if e.component == component and (step is None or e.step == step)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "started_at": self.started_at,
            "duration": self.elapsed(),
            "shared_state": self.shared_state,
            "events": [asdict(e) for e in self.events],
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, default=str)
        print(f"[info] Run context saved to {path}")


def load_run_context(path: str) -> RunContext:
    """Read a saved run_context.json back; elapsed times restart from zero."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return RunContext(
        run_id=data["run_id"],
        started_at=data["started_at"],
        shared_state=data.get("shared_state", {}),
        events=[RunEvent(**e) for e in data.get("events", [])],
    )
