"""Lemma/form character alignment and stem-region detection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import kernels
from .errors import UsageError

GAP = kernels.GAP


@dataclass(frozen=True)
class Alignment:
    pairs: tuple[tuple[int, int], ...]
    cost: int


@dataclass(frozen=True)
class StemRegion:
    lemma_start: int
    form_start: int
    length: int

    @property
    def lemma_span(self) -> tuple[int, int]:
        return self.lemma_start, self.lemma_start + self.length

    @property
    def form_span(self) -> tuple[int, int]:
        return self.form_start, self.form_start + self.length


def _codes(s: Sequence) -> list[int]:
    return [ord(c) if isinstance(c, str) else int(c) for c in s]


def align_chars(lemma: Sequence, form: Sequence) -> Alignment:
    """Minimum unit-cost alignment (match 0, substitute/insert/delete 1).

    Ties are broken during traceback in the order match, substitute,
    delete, insert, so the result is deterministic.
    """
    if not lemma or not form:
        raise UsageError("align_chars: both sequences must be non-empty")
    pairs, cost = kernels.alignment(_codes(lemma), _codes(form))
    return Alignment(tuple(pairs), cost)


def find_stem_regions(lemma: Sequence, form: Sequence, a: Alignment, min_len: int = 3) -> list[StemRegion]:
    """Maximal runs of aligned identical characters, at least ``min_len`` long."""
    regions = []
    run_start = None
    run = 0

    def close():
        if run >= min_len:
            li, fi = a.pairs[run_start]
            regions.append(StemRegion(li, fi, run))

    for k, (li, fi) in enumerate(a.pairs):
        if li != GAP and fi != GAP and lemma[li] == form[fi]:
            if run == 0:
                run_start = k
            run += 1
        else:
            close()
            run = 0
    close()
    return regions


def stem_regions(lemma: str, form: str, min_len: int = 3) -> list[StemRegion]:
    return find_stem_regions(lemma, form, align_chars(lemma, form), min_len)


def render_regions(s: str, spans: Sequence[tuple[int, int]]) -> str:
    """Bracket each span: ``render_regions("schwimmen", [(0, 4)]) == "[schw]immen"``."""
    out = []
    pos = 0
    for start, end in spans:
        out.append(s[pos:start])
        out.append("[" + s[start:end] + "]")
        pos = end
    out.append(s[pos:])
    return "".join(out)
