"""Transcription accuracy and latency statistics.

Word and character error rates come from a Levenshtein alignment over
token sequences. The alignment minimizes edit cost and, among
minimal-cost alignments, maximizes the number of exact matches, which
pins down a unique (substitutions, deletions, insertions, hits)
decomposition for any given pair of lengths and distance:

    2 * hits + substitutions = ref_length + len(hyp) - distance

Text is normalized before tokenization: lowercased, outer whitespace
stripped, internal whitespace runs collapsed, and the punctuation set
``. , ! ? ; :`` removed. Rates are unclamped and may exceed 1.0.

Latency summaries use nearest-rank percentiles and population standard
deviation so repeated runs over the same records are bit-stable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .domain import TaskState, TurnTask


class EmptyReference(ValueError):
    """Reference text normalizes to zero tokens; the rate is undefined."""


class EmptySampleSet(ValueError):
    """No samples to summarize."""


class TaskNotCompleted(ValueError):
    """End-to-end latency is only defined for completed tasks."""


@dataclass(frozen=True)
class AlignmentCounts:
    """Minimum-edit decomposition of hypothesis against reference."""

    substitutions: int
    deletions: int
    insertions: int
    hits: int
    ref_length: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def hyp_length(self) -> int:
        return self.hits + self.substitutions + self.insertions

    def error_rate(self) -> float:
        """Distance over reference length; requires a non-empty reference."""
        if self.ref_length == 0:
            raise EmptyReference("reference has no tokens")
        return self.distance / self.ref_length


def align(ref: Sequence[str], hyp: Sequence[str]) -> AlignmentCounts:
    """Align token sequences, minimizing edit cost then maximizing hits.

    Unit costs for substitution, deletion, and insertion; either sequence
    may be empty. Among all minimal-cost alignments the one with the most
    exact matches is chosen, so ``align(a, b)`` and ``align(b, a)`` agree
    on substitutions and hits and swap deletions with insertions.
    """
    n, m = len(ref), len(hyp)
    # cost[j] / hits[j] describe the prefix pair (ref[:i], hyp[:j]) for the
    # current row i; the optimum is lexicographic (min cost, max hits).
    cost = list(range(m + 1))
    hits = [0] * (m + 1)
    for i in range(1, n + 1):
        prev_cost, prev_hits = cost[0], hits[0]
        cost[0] = i
        hits[0] = 0
        r = ref[i - 1]
        for j in range(1, m + 1):
            diag_cost, diag_hits = prev_cost, prev_hits
            prev_cost, prev_hits = cost[j], hits[j]
            if r == hyp[j - 1]:
                best_cost, best_hits = diag_cost, diag_hits + 1
            else:
                best_cost, best_hits = diag_cost + 1, diag_hits
            up_cost, up_hits = prev_cost + 1, prev_hits
            if (up_cost, -up_hits) < (best_cost, -best_hits):
                best_cost, best_hits = up_cost, up_hits
            left_cost, left_hits = cost[j - 1] + 1, hits[j - 1]
            if (left_cost, -left_hits) < (best_cost, -best_hits):
                best_cost, best_hits = left_cost, left_hits
            cost[j], hits[j] = best_cost, best_hits

    distance, h = cost[m], hits[m]
    subs = n + m - distance - 2 * h
    dels = n - h - subs
    ins = m - h - subs
    return AlignmentCounts(
        substitutions=subs, deletions=dels, insertions=ins, hits=h, ref_length=n
    )


_PUNCTUATION = re.compile(r"[.,!?;:]")
_WHITESPACE = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase, drop ``. , ! ? ; :``, collapse whitespace runs, trim."""
    text = _PUNCTUATION.sub("", text.lower())
    return _WHITESPACE.sub(" ", text).strip()


def tokenize_words(text: str) -> list[str]:
    text = normalize_text(text)
    return text.split(" ") if text else []


def tokenize_chars(text: str) -> list[str]:
    """Character tokens; collapsed single spaces participate in alignment."""
    return list(normalize_text(text))


def word_error_rate(reference: str, hypothesis: str) -> float:
    """(S + D + I) / reference length over word tokens; unclamped."""
    return align(tokenize_words(reference), tokenize_words(hypothesis)).error_rate()


def char_error_rate(reference: str, hypothesis: str) -> float:
    """Character-level analogue of :func:`word_error_rate`."""
    return align(tokenize_chars(reference), tokenize_chars(hypothesis)).error_rate()


@dataclass(frozen=True)
class CorpusErrorRates:
    """Pooled and macro-averaged error rates over (ref, hyp) pairs.

    Pooled divides total edits by total reference length; macro averages
    the per-pair rates. Both are reported since they answer different
    questions about a corpus.
    """

    pooled: float
    macro: float
    pair_count: int


def corpus_error_rates(
    pairs: Iterable[tuple[str, str]], tokenizer=tokenize_words
) -> CorpusErrorRates:
    total_dist = 0
    total_ref = 0
    rates: list[float] = []
    for ref, hyp in pairs:
        a = align(tokenizer(ref), tokenizer(hyp))
        total_dist += a.distance
        total_ref += a.ref_length
        rates.append(a.error_rate())
    if not rates:
        return CorpusErrorRates(pooled=0.0, macro=0.0, pair_count=0)
    return CorpusErrorRates(
        pooled=total_dist / total_ref,
        macro=sum(rates) / len(rates),
        pair_count=len(rates),
    )


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the sample at 1-based index ceil(q * n).

    Always a member of the sample set. For q = 0 the minimum is returned.
    """
    if not values:
        raise EmptySampleSet("percentile of an empty sequence")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q out of range: {q}")
    ordered = sorted(values)
    if q == 0.0:
        return ordered[0]
    rank = math.ceil(q * len(ordered))
    return ordered[rank - 1]


def population_stddev(values: Sequence[float]) -> float:
    if not values:
        raise EmptySampleSet("stddev of an empty sequence")
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))


@dataclass(frozen=True)
class LatencyStats:
    count: int
    mean: float
    stddev: float
    min: float
    max: float
    p50: float
    p95: float


def latency_stats(samples: Sequence[float]) -> LatencyStats:
    """Descriptive statistics over duration samples; raises on empty input."""
    if not samples:
        raise EmptySampleSet("cannot summarize zero samples")
    return LatencyStats(
        count=len(samples),
        mean=sum(samples) / len(samples),
        stddev=population_stddev(samples),
        min=min(samples),
        max=max(samples),
        p50=percentile(samples, 0.50),
        p95=percentile(samples, 0.95),
    )


def end_to_end_latency(task: TurnTask) -> int:
    """Terminal-stage completion minus hub receipt of the turn.

    Every enabled stage feeds the terminal, so the terminal's completion
    is the latest and equals the task's completion instant.
    """
    if task.state is not TaskState.COMPLETED:
        raise TaskNotCompleted(f"task {task.task_id} is {task.state.value}")
    latest = max(
        r.hub_complete_ts for r in task.stage_records if r.hub_complete_ts is not None
    )
    return latest - task.client_capture_ts


def mean_score(scores: Sequence[int]) -> float:
    """Average of integer 0-5 annotation scores."""
    if not scores:
        raise EmptySampleSet("cannot average zero scores")
    for s in scores:
        if not 0 <= s <= 5:
            raise ValueError(f"score out of range: {s}")
    return sum(scores) / len(scores)
