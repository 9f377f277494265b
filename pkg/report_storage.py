# report_storage.py

import csv
import json
import os
from typing import Any, Dict, Optional

from metrics import ConfusionCounts, MetricsReport

LOSS_LOG_FIELDS = ["step", "lr", "loss_total", "loss_fused", "loss_interior", "loss_boundary"]


def metrics_report_to_dict(
    report: MetricsReport,
    counts: Optional[ConfusionCounts] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Plain dict (JSON-ready) with the four metrics first, then counts and run metadata."""
    data: Dict[str, Any] = report.to_dict()
    if counts is not None:
        data["counts"] = counts.to_dict()
    if extra:
        data.update(extra)
    return data


def save_report(report: MetricsReport, path: str, counts: Optional[ConfusionCounts] = None, **extra: Any) -> None:
    data = metrics_report_to_dict(report, counts, extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
    print(f"[info] Metrics report saved to {path}")


def load_report(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def save_kv_report(report: MetricsReport, path: str, counts: Optional[ConfusionCounts] = None) -> None:
    """Flat key=value record, one per line."""
    lines = [f"{k}={v:.6f}" for k, v in report.to_dict().items()]
    if counts is not None:
        lines += [f"{k}={v}" for k, v in counts.to_dict().items()]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def append_jsonl(path: str, record: Dict[str, Any]) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


class LossLog:
    """Line-delimited loss curve: step, lr, loss_total, loss_fused, loss_interior, loss_boundary."""

    def __init__(self, path: Optional[str], append: bool = False):
        self.path = path
        self.rows = []
        if path and not (append and os.path.exists(path)):
            with open(path, "w", encoding="utf-8", newline="") as f:
                csv.writer(f).writerow(LOSS_LOG_FIELDS)

    def append(self, step: int, lr: float, total: float, parts: Dict[str, float]) -> None:
        row = [step, lr, total, parts.get("fused", 0.0), parts.get("interior", 0.0), parts.get("boundary", 0.0)]
        self.rows.append(row)
        if self.path:
            with open(self.path, "a", encoding="utf-8", newline="") as f:
                csv.writer(f).writerow([row[0]] + [f"{v:.8g}" for v in row[1:]])


def read_loss_log(path: str) -> Dict[int, Dict[str, float]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return {
            int(r["step"]): {k: float(v) for k, v in r.items() if k != "step"}
            for r in csv.DictReader(f)
        }
