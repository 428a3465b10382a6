"""Exact-match accuracy and mean character-level Levenshtein distance."""
from __future__ import annotations

from typing import Sequence

from . import kernels
from .errors import UsageError


def _check(pred: Sequence[str], gold: Sequence[str]) -> None:
    if len(pred) != len(gold):
        raise UsageError(f"{len(pred)} predictions for {len(gold)} gold forms")
    if not gold:
        raise UsageError("no forms to score")


def levenshtein(a: str, b: str) -> int:
    return kernels.distance([ord(c) for c in a], [ord(c) for c in b])


def exact_match_accuracy(pred: Sequence[str], gold: Sequence[str]) -> float:
    _check(pred, gold)
    return sum(p == g for p, g in zip(pred, gold)) / len(gold)


def mean_levenshtein(pred: Sequence[str], gold: Sequence[str]) -> float:
    _check(pred, gold)
    return sum(levenshtein(p, g) for p, g in zip(pred, gold)) / len(gold)
