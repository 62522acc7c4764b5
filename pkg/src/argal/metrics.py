"""Macro F1 averaged across sequences.

Each sentence is scored independently: macro F1 over the label classes that
occur in its gold or predicted sequence (classes absent from both are
skipped; a class with an empty precision+recall denominator contributes 0).
The dataset score is the unweighted mean over sentences.
"""

from __future__ import annotations

from typing import Sequence


def sequence_macro_f1(gold: Sequence, pred: Sequence) -> float:
    if len(gold) != len(pred):
        raise ValueError(f"gold length {len(gold)} != prediction length {len(pred)}")
    if not gold:
        raise ValueError("empty sequence")
    classes = sorted(set(gold) | set(pred), key=str)
    f1s = []
    for c in classes:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return sum(f1s) / len(f1s)


def macro_f1(golds: Sequence[Sequence], preds: Sequence[Sequence]) -> float:
    """Mean of per-sequence macro F1 over a dataset."""
    if len(golds) != len(preds):
        raise ValueError(f"{len(golds)} gold sequences but {len(preds)} predictions")
    if not golds:
        raise ValueError("empty sentence list")
    return sum(sequence_macro_f1(g, p) for g, p in zip(golds, preds)) / len(golds)
