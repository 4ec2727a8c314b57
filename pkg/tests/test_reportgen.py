"""Report tests: aggregation, rounding, exports, and config comparison."""

import json

import pytest

from turnbench.domain import validate_pipeline
from turnbench.presets import (
    builtin_profile_set,
    hf_ete,
    install_presets,
    quantization_llm_ete,
)
from turnbench.reportgen import (
    CSV_COLUMNS,
    InsufficientReports,
    NoMatchingTurns,
    ReportError,
    build_report,
    compare_configs,
    comparison_from_doc,
    comparison_to_doc,
    critical_path,
    export_comparison,
    export_report,
    hub_snapshot,
    report_from_doc,
    report_to_doc,
    round3,
)
from turnbench.simulate import Simulation
from turnbench.workers import ALL_KINDS

START = 1_000_000_000_000
QUANT = "QuantizationLLM_ETE"


def quant_sim(turn_count: int = 3, transcripts: list[str] | None = None) -> Simulation:
    sim = Simulation(profiles=builtin_profile_set("constant"))
    sim.put_config(quantization_llm_ete())
    sim.add_workers_per_capability(["speech2text", "emotion", "llm", "tts"])
    blob = sim.put_blob(b"pcm")
    for i in range(turn_count):
        metadata = None
        if transcripts is not None:
            metadata = {"reference_transcript": transcripts[i]}
        sim.submit_at(START + i * 1_000, QUANT, "trk", {"audio": blob}, metadata)
    sim.run()
    return sim


def quant_report(sim: Simulation, **kwargs):
    return build_report(hub_snapshot(sim.hub), QUANT, **kwargs)


def completed_ids(sim: Simulation) -> list[str]:
    return [t.task_id for t in sim.hub.query_records()["tasks"]]


def test_round3_is_half_even():
    assert round3(2.4) == 2.4
    assert round3(0.0005) == 0.0
    assert round3(0.0015) == 0.002
    assert round3(2.6665) == 2.666
    assert round3(189.0) == 189.0


def test_stage_and_end_to_end_stats_from_constant_profiles():
    report = quant_report(quant_sim(20))
    assert report.turn_count == 20
    assert report.stage("llm").worker.mean == 28.0
    assert report.stage("llm").worker.stddev == 0.0
    assert report.stage("emotion").worker.mean == 10.0
    assert report.end_to_end.mean == 60.0
    assert report.end_to_end.p95 == 60
    assert report.stage("llm").overhead.mean == 0.0


def test_critical_path_excludes_the_shorter_branch():
    report = quant_report(quant_sim(5))
    assert report.critical_path == ("speech2text", "llm", "tts")
    assert report.critical_path_mean_ms == 60.0
    assert report.overhead_mean_ms == 0.0


def test_critical_path_tie_breaks_lexicographically():
    config = hf_ete()
    weights = {"emotion": 10.0, "speech2text": 10.0, "llm": 160.0, "tts": 19.0}
    assert critical_path(config, weights) == ("emotion", "llm", "tts")
    assert sum(weights[s] for s in critical_path(config, weights)) == 189.0


def test_no_matching_turns():
    sim = quant_sim(2)
    with pytest.raises(NoMatchingTurns):
        quant_report(sim, track_id="elsewhere")
    with pytest.raises(NoMatchingTurns):
        build_report(hub_snapshot(sim.hub), QUANT, until_ts=START)


def test_unknown_config_in_snapshot():
    sim = quant_sim(1)
    with pytest.raises(ReportError, match="no configuration"):
        build_report(hub_snapshot(sim.hub), "GHOST")


def test_time_filters_are_half_open_over_capture_time():
    sim = quant_sim(3)
    report = quant_report(sim, since_ts=START + 1_000, until_ts=START + 2_000)
    assert report.turn_count == 1


def test_mean_overall_score_examples():
    sim = quant_sim(10)
    ids = completed_ids(sim)
    for task_id, score in zip(ids[:5], [2, 3, 2, 3, 2]):
        sim.hub.annotate(task_id, "rater-a", score)
    report = quant_report(sim, until_ts=START + 5_000)
    assert report.accuracy.mean_overall_score == 2.4

    for task_id in ids[:9]:
        sim.hub.annotate(task_id, "rater-b", 5)
    sim.hub.annotate(ids[9], "rater-b", 2)
    scores = [
        a.overall_score
        for a in sim.hub.list_annotations()
        if a.annotator_id == "rater-b"
    ]
    assert sorted(scores) == [2] + [5] * 9
    by_b = [s for s in quant_report(sim).accuracy.per_annotator if s.annotator_id == "rater-b"]
    assert by_b[0].mean_overall_score == 4.7


def test_accuracy_block_without_annotations():
    report = quant_report(quant_sim(2))
    acc = report.accuracy
    assert acc.annotation_count == 0
    assert acc.mean_overall_score is None
    assert acc.per_stage_mean_scores == {}
    assert acc.wer_pooled is None and acc.cer_macro is None
    assert acc.comments == () and acc.per_annotator == ()


def test_per_stage_scores_and_comments():
    sim = quant_sim(2)
    first, second = completed_ids(sim)
    sim.hub.annotate(first, "rater-a", 4, stage_scores={"llm": 4, "tts": 2})
    sim.hub.annotate(second, "rater-b", 3, stage_scores={"llm": 2}, comment="flat voice")
    acc = quant_report(sim).accuracy
    assert acc.per_stage_mean_scores == {"llm": 3.0, "tts": 2.0}
    assert [c.comment for c in acc.comments] == ["flat voice"]
    assert [a.annotator_id for a in acc.per_annotator] == ["rater-a", "rater-b"]


def test_error_rates_pooled_and_macro_differ():
    # Turn 1 transcribes perfectly against a 4-word reference; turn 2 is
    # one word wrong against a 1-word reference. Pooled: 1/5. Macro: 1/2.
    sim = quant_sim(2, transcripts=["a b c d", "x"])
    first, second = completed_ids(sim)
    sim.hub.annotate(second, "rater-a", 3, reference_transcript="y")
    acc = quant_report(sim).accuracy
    assert acc.transcript_turn_count == 2
    assert acc.wer_pooled == 0.2
    assert acc.wer_macro == 0.5
    assert acc.cer_pooled is not None


def test_annotation_reference_overrides_metadata():
    sim = quant_sim(1, transcripts=["hello world"])
    (task_id,) = completed_ids(sim)
    perfect = quant_report(sim).accuracy
    assert perfect.wer_pooled == 0.0

    sim.hub.annotate(task_id, "rater-a", 4, reference_transcript="hello word")
    corrected = quant_report(sim).accuracy
    assert corrected.wer_pooled == 0.5


def test_turns_without_references_are_left_out_of_error_rates():
    sim = quant_sim(2, transcripts=["hello world", ""])
    acc = quant_report(sim).accuracy
    assert acc.transcript_turn_count == 1


def test_generated_ts_defaults_to_newest_record():
    sim = quant_sim(3)
    report = quant_report(sim)
    newest = max(t.completed_ts for t in sim.hub.query_records()["tasks"])
    assert report.generated_ts == newest
    assert quant_report(sim, generated_ts=42).generated_ts == 42

    sim.hub.annotate(completed_ids(sim)[0], "rater-a", 4)
    annotated = quant_report(sim)
    assert annotated.generated_ts == sim.hub.list_annotations()[0].created_ts


def test_csv_export_schema():
    sim = quant_sim(4)
    report = quant_report(sim)
    lines = export_report(report, format="csv").decode().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    order = validate_pipeline(sim.hub.get_config(QUANT)).order
    assert len(lines) == 1 + len(order) + 1
    stages = [line.split(",")[1] for line in lines[1:]]
    assert stages == list(order) + ["end_to_end"]
    assert {line.split(",")[0] for line in lines[1:]} == {QUANT}
    last = lines[-1].split(",")
    assert last[2] == "4" and last[3] == "60.0"


def test_json_export_round_trips_losslessly():
    sim = quant_sim(3)
    sim.hub.annotate(completed_ids(sim)[0], "rater-a", 4, comment="ok")
    report = quant_report(sim)
    doc = json.loads(export_report(report, format="json"))
    assert report_from_doc(doc) == report
    assert report_from_doc(report_to_doc(report)) == report


def test_identical_snapshots_export_identical_bytes():
    def run() -> bytes:
        sim = quant_sim(5, transcripts=[f"turn number {i}" for i in range(5)])
        for task_id in completed_ids(sim)[:2]:
            sim.hub.annotate(task_id, "rater-a", 4, comment="fine")
        report = quant_report(sim)
        return export_report(report, "json") + export_report(report, "csv")

    assert run() == run()


def test_unknown_export_format():
    report = quant_report(quant_sim(1))
    with pytest.raises(ReportError):
        export_report(report, format="xml")


def four_config_reports():
    sim = Simulation(profiles=builtin_profile_set("constant"))
    install_presets(sim.hub)
    sim.add_workers_per_capability(list(ALL_KINDS))
    audio, video = sim.put_blob(b"pcm"), sim.put_blob(b"frames")
    names = ["GPT35_ETE", "GPT4O_ETE", QUANT, "HF_ETE"]
    for i in range(3):
        for j, name in enumerate(names):
            blobs = {"audio": audio}
            if name == "GPT4O_ETE":
                blobs["video"] = video
            sim.submit_at(START + (i * 4 + j) * 1_000, name, "trk", blobs)
    sim.run()
    snapshot = hub_snapshot(sim.hub)
    return [build_report(snapshot, name) for name in names]


def test_compare_configs_orders_by_end_to_end_mean():
    reports = four_config_reports()
    table = compare_configs(list(reversed(reports)))
    assert [r.config_name for r in table.rows] == [
        "GPT35_ETE",
        "GPT4O_ETE",
        QUANT,
        "HF_ETE",
    ]
    assert [r.e2e_mean_ms for r in table.rows] == [15.0, 45.0, 60.0, 189.0]
    assert [r.dominant_stage for r in table.rows] == ["tts", "vision_llm", "llm", "llm"]

    with pytest.raises(InsufficientReports):
        compare_configs(reports[:1])


def test_comparison_exports():
    table = compare_configs(four_config_reports())
    assert comparison_from_doc(comparison_to_doc(table)) == table
    lines = export_comparison(table, "csv").decode().splitlines()
    assert lines[0] == "config,e2e_mean_ms,e2e_p95_ms,dominant_stage,mean_overall_score"
    assert len(lines) == 5
    # No annotations anywhere: score column renders empty, not "None".
    assert lines[1].endswith(",")
    json_doc = json.loads(export_comparison(table, "json"))
    assert [r["config"] for r in json_doc["rows"]][0] == "GPT35_ETE"


def test_report_notes_are_fixed_context():
    report = quant_report(quant_sim(1))
    assert any("overhead" in note for note in report.notes)
    assert any("pooled" in note for note in report.notes)
    assert report.notes == quant_report(quant_sim(1)).notes
