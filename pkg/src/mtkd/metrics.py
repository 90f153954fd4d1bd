"""Edit-distance error rates for token sequences.

The error rate of a hypothesis is its minimal edit distance to the
reference divided by the reference length, so it can exceed 1.0 for
hypotheses much longer than their references. Batch-level rates are
token-weighted by default (total edits over total reference tokens);
a plain mean of per-sentence rates is available where callers need it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence


@dataclass(frozen=True)
class EditOps:
    """Operation counts of one minimal-cost alignment."""

    substitutions: int
    insertions: int
    deletions: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def levenshtein(ref: Sequence, hyp: Sequence) -> int:
    """Minimal number of substitutions, insertions and deletions."""
    m, n = len(ref), len(hyp)
    if m == 0:
        return n
    if n == 0:
        return m
    prev = list(range(n + 1))
    for i in range(1, m + 1):
        cur = [i] + [0] * n
        ri = ref[i - 1]
        for j in range(1, n + 1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ri != hyp[j - 1]),
            )
        prev = cur
    return prev[n]


def edit_distance(ref: Sequence, hyp: Sequence) -> EditOps:
    """Minimal-cost alignment with unit costs, broken down by operation.

    The distance is unique; when several alignments achieve it, the
    backtrace prefers diagonal moves, then deletions, then insertions,
    so the reported operation split is deterministic.
    """
    m, n = len(ref), len(hyp)
    dist = [list(range(n + 1))] + [[i] + [0] * n for i in range(1, m + 1)]
    for i in range(1, m + 1):
        row = dist[i]
        up = dist[i - 1]
        ri = ref[i - 1]
        for j in range(1, n + 1):
            row[j] = min(up[j] + 1, row[j - 1] + 1, up[j - 1] + (ri != hyp[j - 1]))
    subs = ins = dels = 0
    i, j = m, n
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]) == here:
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            i -= 1
            j -= 1
        elif i > 0 and dist[i - 1][j] + 1 == here:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditOps(subs, ins, dels)


def alignment(ref: Sequence, hyp: Sequence) -> list[tuple[str, object, object]]:
    """One minimal alignment as (op, ref_token, hyp_token) steps.

    op is one of match/sub/del/ins; absent tokens are None. Uses the
    same deterministic backtrace preference as ``edit_distance``.
    """
    m, n = len(ref), len(hyp)
    dist = [list(range(n + 1))] + [[i] + [0] * n for i in range(1, m + 1)]
    for i in range(1, m + 1):
        row = dist[i]
        up = dist[i - 1]
        ri = ref[i - 1]
        for j in range(1, n + 1):
            row[j] = min(up[j] + 1, row[j - 1] + 1, up[j - 1] + (ri != hyp[j - 1]))
    steps: list[tuple[str, object, object]] = []
    i, j = m, n
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]) == here:
            op = "match" if ref[i - 1] == hyp[j - 1] else "sub"
            steps.append((op, ref[i - 1], hyp[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and dist[i - 1][j] + 1 == here:
            steps.append(("del", ref[i - 1], None))
            i -= 1
        else:
            steps.append(("ins", None, hyp[j - 1]))
            j -= 1
    steps.reverse()
    return steps


def sentence_er(ref: Sequence, hyp: Sequence) -> float:
    """Edit distance over reference length; may exceed 1.0."""
    if len(ref) == 0:
        raise ValueError("undefined ER: empty reference")
    return levenshtein(ref, hyp) / len(ref)


def er_fraction(ref: Sequence, hyp: Sequence) -> Fraction:
    """Sentence ER as an exact rational, for equality-sensitive callers."""
    if len(ref) == 0:
        raise ValueError("undefined ER: empty reference")
    return Fraction(levenshtein(ref, hyp), len(ref))


def batch_er(refs: Sequence[Sequence], hyps: Sequence[Sequence], *, mode: str = "token") -> float:
    """Batch error rate.

    mode="token": total edits over total reference tokens (default).
    mode="sentence": plain mean of per-sentence rates.
    """
    if len(refs) != len(hyps):
        raise ValueError(f"batch_er: {len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise ValueError("batch_er: empty batch")
    if mode == "token":
        total_ref = sum(len(r) for r in refs)
        if total_ref == 0:
            raise ValueError("undefined ER: empty references")
        return sum(levenshtein(r, h) for r, h in zip(refs, hyps)) / total_ref
    if mode == "sentence":
        return sum(sentence_er(r, h) for r, h in zip(refs, hyps)) / len(refs)
    raise ValueError(f"batch_er: unknown mode {mode!r}")
