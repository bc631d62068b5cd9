"""Scoring generated text: BLEU-2, ROUGE-L, Dist-1/2.

BLEU-2 measures 1/2-gram precision against the reference (with a
brevity penalty), ROUGE-L rewards long common subsequences, and Dist-n
measures diversity: the fraction of distinct n-grams across all
candidates.  All are reported on a 0-100 scale.
"""

from essaygen.metrics import bleu2, dist_n, evaluate, rouge_l

references = [
    "the sun rose over the quiet harbor".split(),
    "a cold wind moved through the pines".split(),
]
candidates = [
    "the sun rose over the harbor".split(),
    "a cold wind moved through the tall pines".split(),
]

report = evaluate(candidates, references)
print("BLEU-2 :", round(report.bleu2, 2))
print("ROUGE-L:", round(report.rouge_l, 2))
print("Dist-1 :", round(report.dist1, 2))
print("Dist-2 :", round(report.dist2, 2))

# A degenerate candidate set with no 2-gram overlap gets BLEU-2 = 0 and
# the report flags it rather than smoothing silently.
score, degenerate = bleu2([["x", "y"]], [["a", "b"]])
print("no-overlap BLEU-2:", score, "(degenerate flag:", degenerate, ")")

# Repetition hurts Dist-n even when precision looks fine.
repetitive = [["the", "the", "the", "sun"]]
print("Dist-1 of 'the the the sun':", round(dist_n(repetitive, 1), 2))
print("ROUGE-L is per-pair F-measure:",
      round(rouge_l([["a", "b", "c"]], [["a", "b", "c", "d"]]), 2))
