"""Corpus BLEU with brevity penalty, and the blacklist-reduced variant.

Scores are on the 0-100 scale. Counting is exact: per-n clipped hits and
totals are integers summed over the corpus, combined through a geometric
mean only at the end.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple


class ClippedPrecision(NamedTuple):
    hits: int
    total: int

    @property
    def value(self) -> Fraction:
        return Fraction(self.hits, self.total) if self.total else Fraction(0)

    @property
    def zero_denominator(self) -> bool:
        return self.total == 0


def _tokens(sentence) -> list:
    if isinstance(sentence, str):
        return sentence.split()
    return list(sentence)


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def clipped_precision(hypothesis, reference, n: int) -> ClippedPrecision:
    """Hypothesis n-grams credited at most their reference count."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    hyp = _tokens(hypothesis)
    ref = _tokens(reference)
    counts = _ngrams(hyp, n)
    ref_counts = _ngrams(ref, n)
    hits = sum(min(c, ref_counts[g]) for g, c in counts.items())
    return ClippedPrecision(hits=hits, total=sum(counts.values()))


def brevity_penalty(mt_length: int, ref_length: int) -> float:
    """1 for longer hypotheses, exp(1 - ref/mt) otherwise; 0 for empty output."""
    if mt_length < 0 or ref_length < 0:
        raise ValueError("lengths must be nonnegative")
    if mt_length == 0:
        return 0.0
    if mt_length > ref_length:
        return 1.0
    return math.exp(1.0 - ref_length / mt_length)


@dataclass
class BleuReport:
    scores: dict
    precisions: dict
    brevity_penalty: float
    hyp_length: int
    ref_length: int
    empty_references: int = 0
    max_n: int = 4
    _order: tuple = field(default=(1, 2, 3, 4), repr=False)

    @property
    def bleu_1(self):
        return self.scores.get(1)

    @property
    def bleu_2(self):
        return self.scores.get(2)

    @property
    def bleu_3(self):
        return self.scores.get(3)

    @property
    def bleu_4(self):
        return self.scores.get(4)


def bleu_n(hypotheses, references, n: int = 4) -> BleuReport:
    """Corpus-level BLEU-1..BLEU-n in one report (0-100 scale)."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    hyps = [_tokens(h) for h in hypotheses]
    refs = [_tokens(r) for r in references]
    if not hyps:
        raise ValueError("empty corpus")
    if len(hyps) != len(refs):
        raise ValueError(
            f"corpus size mismatch: {len(hyps)} hypotheses vs "
            f"{len(refs)} references"
        )
    hyp_len = sum(len(h) for h in hyps)
    ref_len = sum(len(r) for r in refs)
    bp = brevity_penalty(hyp_len, ref_len)

    precisions = {}
    for k in range(1, n + 1):
        hits = total = 0
        for h, r in zip(hyps, refs):
            cp = clipped_precision(h, r, k)
            hits += cp.hits
            total += cp.total
        precisions[k] = ClippedPrecision(hits, total)

    scores = {}
    for k in range(1, n + 1):
        parts = [precisions[i].value for i in range(1, k + 1)]
        if any(p == 0 for p in parts):
            scores[k] = 0.0
        else:
            log_mean = sum(math.log(p) for p in parts) / k
            scores[k] = 100.0 * bp * math.exp(log_mean)
    return BleuReport(
        scores=scores,
        precisions={k: v.value for k, v in precisions.items()},
        brevity_penalty=bp,
        hyp_length=hyp_len,
        ref_length=ref_len,
        max_n=n,
    )


def _strip_blacklisted(tokens, excluded) -> list:
    return [t for t in tokens if t.lower() not in excluded]


def reduced_bleu_report(hypotheses, references, blacklist, n: int = 4) -> BleuReport:
    """BLEU over both streams with blacklisted surface words removed."""
    excluded = frozenset(w.lower() for w in getattr(blacklist, "words", blacklist))
    hyps = [_strip_blacklisted(_tokens(h), excluded) for h in hypotheses]
    refs = [_strip_blacklisted(_tokens(r), excluded) for r in references]
    report = bleu_n(hyps, refs, n=n)
    report.empty_references = sum(1 for r in refs if not r)
    return report


def reduced_bleu(hypotheses, references, blacklist, n: int = 4) -> float:
    return reduced_bleu_report(hypotheses, references, blacklist, n=n).scores[n]
