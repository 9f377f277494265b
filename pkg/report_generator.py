# report_generator.py

import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.lib.units import cm
from reportlab.platypus import Image, PageBreak, Paragraph, SimpleDocTemplate, Spacer, Table

from benchmarks import ReferenceResult, reference_for_variant
from metrics import ConfusionCounts, MetricsReport


@dataclass
class EvaluationReport:
    run_id: str
    variant: str
    split: str
    checkpoint: Optional[str]
    threshold: float
    miou_mode: str
    num_images: int
    metrics: MetricsReport
    counts: ConfusionCounts
    parameters: int = 0
    references: List[ReferenceResult] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.references:
            self.references = reference_for_variant(self.variant)

    def metadata(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "variant": self.variant,
            "split": self.split,
            "checkpoint": self.checkpoint,
            "threshold": self.threshold,
            "miou_mode": self.miou_mode,
            "num_images": self.num_images,
            "parameters": self.parameters,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {**self.metrics.to_dict(), "counts": self.counts.to_dict(), **self.metadata()}


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


# ---------- TEXT / MARKDOWN REPORT ----------

def generate_text_report(report: EvaluationReport) -> str:
    """Markdown evaluation report; also fine as .txt."""
    m = report.metrics
    c = report.counts
    lines: List[str] = []

    lines.append(f"# Evaluation Report: {report.variant} ({report.run_id})\n")

    lines.append("## 1. Setup")
    lines.append(f"- Split: **{report.split}** ({report.num_images} images)")
    lines.append(f"- Checkpoint: `{report.checkpoint or 'untrained'}`")
    lines.append(f"- Threshold: {report.threshold}")
    lines.append(f"- mIoU mode: {report.miou_mode}")
    lines.append(f"- Trainable parameters: {report.parameters:,}\n")

    lines.append("## 2. Metrics (%)")
    lines.append("| mIoU | Precision | Recall | F1 |")
    lines.append("|---|---|---|---|")
    lines.append(f"| {_pct(m.miou)} | {_pct(m.precision)} | {_pct(m.recall)} | {_pct(m.f1)} |\n")
    lines.append(f"Pixel counts: TP={c.tp}, FP={c.fp}, FN={c.fn}, TN={c.tn}\n")

    lines.append("## 3. Full-scale reference")
    if not report.references:
        lines.append("No reference rows for this variant.\n")
    else:
        lines.append("| Method | Dataset | mIoU | Precision | Recall | F1 |")
        lines.append("|---|---|---|---|---|---|")
        for r in report.references:
            lines.append(f"| {r.method} | {r.dataset} | {r.miou:.2f} | {r.precision:.2f} | {r.recall:.2f} | {r.f1:.2f} |")
        lines.append(
            "\nReference numbers come from 1500-epoch training on the public datasets; "
            "small synthetic runs are not expected to match them.\n"
        )

    return "\n".join(lines)


def save_text_report(report: EvaluationReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(generate_text_report(report))
    print(f"[info] Text report saved to {path}")


# ---------- PDF REPORT USING REPORTLAB ----------

def _add_page_number(canvas, doc):
    canvas.setFont("Helvetica", 9)
    canvas.drawRightString(20 * cm, 1 * cm, f"Page {canvas.getPageNumber()}")


def generate_pdf_report(report: EvaluationReport, path: str, graph_image_path: Optional[str] = None) -> None:
    """
    PDF version of the text report with page numbers. The decoder topology
    graph is appended on its own page when an image is given.
    """
    doc = SimpleDocTemplate(path, pagesize=A4)
    styles = getSampleStyleSheet()
    m = report.metrics
    c = report.counts
    story = []

    story.append(Paragraph(f"Evaluation Report: {report.variant} ({report.run_id})", styles["Title"]))
    story.append(Spacer(1, 0.5 * cm))

    story.append(Paragraph("1. Setup", styles["Heading2"]))
    for text in (
        f"Split: {report.split} ({report.num_images} images)",
        f"Checkpoint: {report.checkpoint or 'untrained'}",
        f"Threshold: {report.threshold}",
        f"mIoU mode: {report.miou_mode}",
        f"Trainable parameters: {report.parameters:,}",
    ):
        story.append(Paragraph(text, styles["Normal"]))
    story.append(Spacer(1, 0.5 * cm))

    story.append(Paragraph("2. Metrics (%)", styles["Heading2"]))
    story.append(Table([
        ["mIoU", "Precision", "Recall", "F1"],
        [_pct(m.miou), _pct(m.precision), _pct(m.recall), _pct(m.f1)],
    ]))
    story.append(Paragraph(f"Pixel counts: TP={c.tp}, FP={c.fp}, FN={c.fn}, TN={c.tn}", styles["Normal"]))
    story.append(Spacer(1, 0.5 * cm))

    story.append(Paragraph("3. Full-scale reference", styles["Heading2"]))
    if not report.references:
        story.append(Paragraph("No reference rows for this variant.", styles["Normal"]))
    else:
        rows = [["Method", "Dataset", "mIoU", "P", "R", "F1"]]
        rows += [[r.method, r.dataset, f"{r.miou:.2f}", f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.f1:.2f}"] for r in report.references]
        story.append(Table(rows))

    if graph_image_path is not None and os.path.exists(graph_image_path):
        story.append(PageBreak())
        story.append(Paragraph("Decoder topology", styles["Heading2"]))
        story.append(Image(graph_image_path, width=15 * cm, height=10 * cm))

    doc.build(story, onFirstPage=_add_page_number, onLaterPages=_add_page_number)
    print(f"[info] PDF report saved to {path}")
