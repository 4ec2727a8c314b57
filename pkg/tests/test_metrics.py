"""Alignment, error rates, and latency statistics against brute force."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turnbench.domain import StageRecord, StageState, TaskState, TurnTask
from turnbench.metrics import (
    AlignmentCounts,
    EmptyReference,
    EmptySampleSet,
    TaskNotCompleted,
    align,
    char_error_rate,
    corpus_error_rates,
    end_to_end_latency,
    latency_stats,
    mean_score,
    normalize_text,
    percentile,
    population_stddev,
    tokenize_chars,
    tokenize_words,
    word_error_rate,
)

from oracles import oracle_align

SYMBOLS = ["a", "b", "c"]


def seqs(rng: random.Random, max_len: int = 5) -> list[str]:
    return [rng.choice(SYMBOLS) for _ in range(rng.randint(0, max_len))]


def test_equal_sequences_align_with_zero_distance():
    a = align(["x", "y"], ["x", "y"])
    assert a == AlignmentCounts(
        substitutions=0, deletions=0, insertions=0, hits=2, ref_length=2
    )
    assert a.error_rate() == 0.0


def test_known_decompositions():
    # one substitution
    assert align(["a", "b"], ["a", "c"]) == AlignmentCounts(1, 0, 0, 1, 2)
    # one deletion
    assert align(["a", "b"], ["a"]) == AlignmentCounts(0, 1, 0, 1, 2)
    # one insertion
    assert align(["a"], ["a", "b"]) == AlignmentCounts(0, 0, 1, 1, 1)
    # empty against empty
    assert align([], []) == AlignmentCounts(0, 0, 0, 0, 0)
    # everything deleted / inserted
    assert align(["a", "b"], []) == AlignmentCounts(0, 2, 0, 0, 2)
    assert align([], ["a", "b"]) == AlignmentCounts(0, 0, 2, 0, 0)


def test_hits_maximized_among_minimal_alignments():
    # "a b" vs "b a": two substitutions and delete+insert both cost 2,
    # but the latter keeps one exact match.
    a = align(["a", "b"], ["b", "a"])
    assert a.distance == 2
    assert a.hits == 1
    assert (a.substitutions, a.deletions, a.insertions) == (0, 1, 1)


def test_alignment_matches_exhaustive_search_on_random_pairs():
    rng = random.Random(77)
    for _ in range(400):
        ref, hyp = seqs(rng), seqs(rng)
        a = align(ref, hyp)
        dist, hits = oracle_align(ref, hyp)
        assert a.distance == dist, (ref, hyp)
        assert a.hits == hits, (ref, hyp)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.sampled_from(SYMBOLS), max_size=8),
    st.lists(st.sampled_from(SYMBOLS), max_size=8),
)
def test_alignment_identities(ref, hyp):
    a = align(ref, hyp)
    assert a.ref_length == len(ref)
    assert a.hyp_length == len(hyp)
    assert a.hits + a.substitutions + a.deletions == len(ref)
    assert a.distance >= abs(len(ref) - len(hyp))
    assert a.distance <= max(len(ref), len(hyp))
    assert (a.distance == 0) == (ref == hyp)

    b = align(hyp, ref)
    assert b.distance == a.distance
    assert b.hits == a.hits
    assert b.substitutions == a.substitutions
    assert (b.deletions, b.insertions) == (a.insertions, a.deletions)


def test_wer_known_values():
    assert word_error_rate("the quick brown fox", "the quick brown fox") == 0.0
    # one substitution over four reference words
    assert word_error_rate("the quick brown fox", "the quick brown dog") == pytest.approx(0.25)
    # deletion + substitution over four words
    assert word_error_rate("the quick brown fox", "quick brown dog") == pytest.approx(0.5)
    # substitution + insertion over two reference words
    assert word_error_rate("hello world", "hello word there") == pytest.approx(1.0)
    # unclamped: more errors than reference words
    assert word_error_rate("hi", "oh no bye") == pytest.approx(3.0)


def test_normalization_case_whitespace_punctuation():
    assert normalize_text("  Hello,   World!  ") == "hello world"
    assert word_error_rate("Hello   World", "hello world") == 0.0
    assert word_error_rate(" hello world ", "hello world") == 0.0
    assert word_error_rate("Hello, world!", "hello world") == 0.0
    assert word_error_rate("stop; go: now?", "stop go now") == 0.0
    # apostrophes and hyphens are content, not stripped punctuation
    assert word_error_rate("don't", "dont") == 1.0


def test_cer_counts_characters_with_collapsed_spaces():
    assert char_error_rate("abc", "abc") == 0.0
    # "abc" -> "axc": one of three characters differs
    assert char_error_rate("abc", "axc") == pytest.approx(1 / 3)
    assert char_error_rate("a  b", "a b") == 0.0
    assert char_error_rate("a, b", "a b") == 0.0


def test_empty_reference_is_an_error():
    with pytest.raises(EmptyReference):
        word_error_rate("", "word")
    with pytest.raises(EmptyReference):
        word_error_rate("  ,. ", "word")
    with pytest.raises(EmptyReference):
        char_error_rate("", "x")
    # empty hypothesis against a real reference is fine: all deletions
    assert word_error_rate("word", "") == pytest.approx(1.0)
    assert word_error_rate("two words", "") == pytest.approx(1.0)


def test_tokenizers():
    assert tokenize_words("  The   QUICK fox ") == ["the", "quick", "fox"]
    assert tokenize_words("") == []
    assert tokenize_words("one, two.") == ["one", "two"]
    assert tokenize_chars("ab  C") == ["a", "b", " ", "c"]
    assert tokenize_chars("") == []


def test_corpus_rates_pooled_vs_macro():
    pairs = [
        ("a b c d", "a b c d"),  # 0/4
        ("a", "b"),  # 1/1
    ]
    rates = corpus_error_rates(pairs)
    assert rates.pair_count == 2
    assert rates.pooled == pytest.approx(1 / 5)
    assert rates.macro == pytest.approx(0.5)


def test_corpus_rates_empty_input():
    rates = corpus_error_rates([])
    assert rates.pair_count == 0
    assert rates.pooled == 0.0
    assert rates.macro == 0.0


def test_corpus_rates_reject_empty_reference():
    with pytest.raises(EmptyReference):
        corpus_error_rates([("a", "a"), ("", "b")])


def test_percentile_nearest_rank():
    data = list(range(1, 11))  # 1..10
    assert percentile(data, 0.50) == 5
    assert percentile(data, 0.95) == 10
    assert percentile(data, 1.00) == 10
    assert percentile(data, 0.10) == 1
    assert percentile([7], 0.50) == 7
    assert percentile([4, 1, 3, 2], 0.50) == 2


def test_percentile_rejects_bad_input():
    with pytest.raises(EmptySampleSet):
        percentile([], 0.5)
    with pytest.raises(ValueError):
        percentile([1], 1.5)


def test_population_stddev_known_value():
    assert population_stddev([2, 4, 4, 4, 5, 5, 7, 9]) == pytest.approx(2.0)
    assert population_stddev([3]) == 0.0


def test_latency_stats():
    s = latency_stats([10, 20, 30, 40])
    assert s.count == 4
    assert s.mean == pytest.approx(25.0)
    assert s.min == 10
    assert s.max == 40
    assert s.p50 == 20
    assert s.p95 == 40
    single = latency_stats([7])
    assert (single.count, single.stddev, single.p95) == (1, 0.0, 7)
    with pytest.raises(EmptySampleSet):
        latency_stats([])


def _completed_task() -> TurnTask:
    records = [
        StageRecord(
            task_id="t1",
            stage_id="s2t",
            state=StageState.COMPLETED,
            hub_dispatch_ts=1_010,
            hub_complete_ts=1_040,
            worker_reported_duration=25,
        ),
        StageRecord(
            task_id="t1",
            stage_id="tts",
            state=StageState.COMPLETED,
            hub_dispatch_ts=1_045,
            hub_complete_ts=1_090,
            worker_reported_duration=40,
        ),
    ]
    return TurnTask(
        task_id="t1",
        config_name="c",
        track_id="trk",
        client_capture_ts=1_000,
        state=TaskState.COMPLETED,
        stage_records=records,
        completed_ts=1_090,
    )


def test_end_to_end_latency_from_terminal_completion():
    task = _completed_task()
    assert end_to_end_latency(task) == 90
    assert task.e2e_latency_ms() == 90


def test_end_to_end_latency_requires_completion():
    task = _completed_task()
    task.state = TaskState.RUNNING
    with pytest.raises(TaskNotCompleted):
        end_to_end_latency(task)


def test_mean_score_exact_values():
    assert mean_score([2, 3, 2, 3, 2]) == pytest.approx(2.4)
    assert mean_score([5, 5, 5, 5, 5, 5, 5, 5, 5, 2]) == pytest.approx(4.7)
    with pytest.raises(EmptySampleSet):
        mean_score([])
    with pytest.raises(ValueError):
        mean_score([6])
    with pytest.raises(ValueError):
        mean_score([-1])
