"""Automatic generation metrics on token id (or token string) sequences:
corpus BLEU-2, ROUGE-L F-measure, and Dist-1/2 diversity.  All values are
on a 0..100 percent scale."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass


class MetricError(ValueError):
    pass


@dataclass
class MetricReport:
    bleu2: float
    rouge_l: float
    dist1: float
    dist2: float
    bleu2_degenerate: bool = False   # some n-gram precision was zero (unsmoothed)

    def to_dict(self):
        return {"bleu2": self.bleu2, "rouge_l": self.rouge_l,
                "dist1": self.dist1, "dist2": self.dist2,
                "bleu2_degenerate": self.bleu2_degenerate}


def ngrams(seq, n):
    return [tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)]


def bleu2(candidates, references):
    """Corpus-level BLEU with uniform 1/2-gram weights, one reference each.

    Unsmoothed: a zero modified precision yields 0 (flagged separately).
    """
    if not candidates or len(candidates) != len(references):
        raise MetricError("need equally many candidates and references, at least one")
    matches = [0, 0]
    totals = [0, 0]
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in (1, 2):
            cgrams = Counter(ngrams(cand, n))
            rgrams = Counter(ngrams(ref, n))
            matches[n - 1] += sum(min(c, rgrams[g]) for g, c in cgrams.items())
            totals[n - 1] += max(sum(cgrams.values()), 0)
    if any(t == 0 for t in totals):
        return 0.0, True
    precisions = [m / t for m, t in zip(matches, totals)]
    if any(p == 0 for p in precisions):
        return 0.0, True
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / max(cand_len, 1))
    return 100.0 * bp * math.exp(0.5 * math.log(precisions[0]) + 0.5 * math.log(precisions[1])), False


def lcs_length(a, b):
    """Classic O(len(a)*len(b)) longest-common-subsequence table."""
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


ROUGE_BETA = 1.2


def rouge_l(candidates, references, beta=ROUGE_BETA):
    """Mean LCS-based F-measure over pairs."""
    if not candidates or len(candidates) != len(references):
        raise MetricError("need equally many candidates and references, at least one")
    scores = []
    for cand, ref in zip(candidates, references):
        lcs = lcs_length(cand, ref)
        if lcs == 0 or not cand or not ref:
            scores.append(0.0)
            continue
        p = lcs / len(cand)
        r = lcs / len(ref)
        scores.append((1 + beta * beta) * p * r / (r + beta * beta * p))
    return 100.0 * sum(scores) / len(scores)


def dist_n(candidates, n):
    """Distinct n-grams over total n-grams across the whole candidate set."""
    if n not in (1, 2):
        raise MetricError("dist-n supports n in {1, 2}")
    all_grams = []
    for cand in candidates:
        all_grams.extend(ngrams(cand, n))
    if not all_grams:
        raise MetricError("candidate set contains no n-grams")
    return 100.0 * len(set(all_grams)) / len(all_grams)


def evaluate(candidates, references):
    b, degenerate = bleu2(candidates, references)
    return MetricReport(
        bleu2=b,
        rouge_l=rouge_l(candidates, references),
        dist1=dist_n(candidates, 1),
        dist2=dist_n(candidates, 2),
        bleu2_degenerate=degenerate,
    )
