import json
import os

import pytest

from graph_utils import build_decoder_digraph
from metrics import ConfusionCounts, finalize
from report_generator import EvaluationReport, generate_pdf_report, generate_text_report
from report_storage import LossLog, load_report, read_loss_log, save_kv_report, save_report
from run_context import RunContext, load_run_context
from run_utils import get_next_run_id, prepare_run_dir


@pytest.fixture
def report():
    counts = ConfusionCounts(tp=30, fp=10, fn=20, tn=940)
    return EvaluationReport(
        run_id="007",
        variant="full",
        split="test",
        checkpoint="runs/run_006/best.pt",
        threshold=0.5,
        miou_mode="pooled",
        num_images=4,
        metrics=finalize(counts),
        counts=counts,
        parameters=12345,
    )


def test_text_report_sections(report):
    text = generate_text_report(report)
    assert text.startswith("# Evaluation Report: full (007)")
    for heading in ("## 1. Setup", "## 2. Metrics (%)", "## 3. Full-scale reference"):
        assert heading in text
    assert "| 50.00 | 75.00 | 60.00 | 66.67 |" in text
    assert "TP=30, FP=10, FN=20, TN=940" in text
    assert "12,345" in text


def test_report_without_references(report):
    report.references = []
    report.variant = "custom"
    assert "No reference rows for this variant." in generate_text_report(report)


def test_pdf_report_is_written(tmp_path, report):
    path = tmp_path / "report.pdf"
    generate_pdf_report(report, str(path), graph_image_path=str(tmp_path / "missing.png"))
    assert path.read_bytes()[:4] == b"%PDF"


def test_json_and_kv_reports(tmp_path, report):
    json_path = tmp_path / "report.json"
    save_report(report.metrics, str(json_path), report.counts, **report.metadata())
    data = load_report(str(json_path))
    assert list(data)[:4] == ["miou", "precision", "recall", "f1"]
    assert data["counts"] == {"tp": 30, "fp": 10, "fn": 20, "tn": 940}
    assert data["run_id"] == "007" and data["parameters"] == 12345

    kv_path = tmp_path / "report.txt"
    save_kv_report(report.metrics, str(kv_path), report.counts)
    lines = kv_path.read_text().splitlines()
    assert lines[0] == "miou=0.500000"
    assert "tp=30" in lines


def test_loss_log_round_trip(tmp_path):
    path = str(tmp_path / "loss_log.csv")
    log = LossLog(path)
    log.append(0, 0.01, 1.5, {"fused": 0.5, "interior": 0.5, "boundary": 0.5})
    log.append(1, 0.02, 1.2, {"fused": 0.4, "interior": 0.8})

    again = LossLog(path, append=True)
    again.append(2, 0.03, 0.9, {"fused": 0.9})

    rows = read_loss_log(path)
    assert sorted(rows) == [0, 1, 2]
    assert rows[1] == pytest.approx({"lr": 0.02, "loss_total": 1.2, "loss_fused": 0.4,
                                     "loss_interior": 0.8, "loss_boundary": 0.0})


def test_run_context_saves_events(tmp_path):
    context = RunContext(run_id="001")
    context.log("trainer", "evaluated", epoch=3, miou=0.41)
    context.shared_state["best"] = {"miou": 0.41, "epoch": 3}
    path = tmp_path / "run_context.json"
    context.save(str(path))

    data = json.loads(path.read_text())
    assert data["run_id"] == "001"
    assert data["started_at"] == context.started_at and data["duration"] >= 0.0
    [event] = data["events"]
    assert list(event) == ["component", "step", "elapsed", "details"]
    assert event["component"] == "trainer" and event["step"] == "evaluated"
    assert event["details"] == {"epoch": 3, "miou": 0.41}
    assert data["shared_state"]["best"]["epoch"] == 3


def test_run_context_events_are_timed_and_selectable(tmp_path):
    context = RunContext(run_id="002")
    context.log("trainer", "start", samples=8)
    for epoch in (25, 50):
        context.log("trainer", "evaluated", epoch=epoch)
    context.log("evaluator", "done", miou=0.5)

    times = [e.elapsed for e in context.events]
    assert times == sorted(times) and times[0] >= 0.0
    assert [e.details["epoch"] for e in context.select("trainer", "evaluated")] == [25, 50]
    assert len(context.select("trainer")) == 3

    path = tmp_path / "run_context.json"
    context.save(str(path))
    again = load_run_context(str(path))
    assert again.started_at == context.started_at
    assert again.events == context.events


def test_run_ids_are_sequential(tmp_path):
    base = str(tmp_path / "runs")
    assert get_next_run_id(base) == "001"
    os.makedirs(os.path.join(base, "run_004"))
    os.makedirs(os.path.join(base, "run_notanumber"))
    assert get_next_run_id(base) == "005"

    run_id, run_dir = prepare_run_dir(None, base)
    assert run_id == "005" and os.path.isdir(run_dir)

    run_id, run_dir = prepare_run_dir(str(tmp_path / "custom"), base)
    assert run_id == "custom" and os.path.isdir(run_dir)


def test_decoder_digraph_marks_unused_nodes():
    mnim = build_decoder_digraph(3, "mnim").source
    unet = build_decoder_digraph(3, "unet").source
    assert mnim.count("doublecircle") == 3
    assert "X_0_2" in mnim and "X_2_0" in mnim
    assert "gray75" not in mnim
    assert "gray75" in unet
