"""Synthetic triples by resampling the interiors of aligned stem regions.

For every stem region (a run of at least three aligned identical
characters) each interior position gets a character drawn uniformly from
the language alphabet; the same draw is written into lemma and form, so the
pair stays aligned.  Region endpoints and everything outside regions are
left alone, and no lengths change.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from .align import StemRegion, stem_regions
from .corpus import Example
from .errors import UsageError

CHUNK = 1000


def hallucinate_example(e: Example, regions: Sequence[StemRegion], alphabet: Sequence[str],
                        rng: np.random.Generator) -> Example:
    if e.form is None:
        raise UsageError(f"hallucinate: {e.lemma!r} has no form")
    if not alphabet:
        raise UsageError("hallucinate: empty alphabet")
    lemma, form = list(e.lemma), list(e.form)
    for r in regions:
        if r.length < 3:
            continue
        draws = rng.integers(len(alphabet), size=r.length - 2)
        for off, d in enumerate(draws, start=1):
            c = alphabet[d]
            lemma[r.lemma_start + off] = c
            form[r.form_start + off] = c
    return e.replace(lemma="".join(lemma), form="".join(form), is_hallucinated=True)


def _chunk(data: Sequence[Example], alphabet: Sequence[str], n: int, seed_seq: np.random.SeedSequence,
           min_len: int) -> list[Example]:
    rng = np.random.default_rng(seed_seq)
    picks = rng.integers(len(data), size=n)
    regions_cache: dict[int, list[StemRegion]] = {}
    out = []
    for i in picks:
        regions = regions_cache.get(i)
        if regions is None:
            e = data[i]
            regions = regions_cache[i] = stem_regions(e.lemma, e.form, min_len)
        out.append(hallucinate_example(data[i], regions, alphabet, rng))
    return out


def hallucinate_dataset(data: Sequence[Example], alphabet: Sequence[str], n: int = 10000,
                        seed: int = 0, min_len: int = 3, workers: int = 1) -> list[Example]:
    """``n`` hallucinated triples; bases are drawn uniformly with replacement.

    Work is cut into fixed chunks of 1000, each with its own child seed of
    ``seed``, so the result does not depend on ``workers``.
    """
    if not data:
        raise UsageError("hallucinate_dataset: empty data")
    if any(e.form is None for e in data):
        raise UsageError("hallucinate_dataset: every example needs a form")
    if n <= 0:
        return []
    sizes = [CHUNK] * (n // CHUNK) + ([n % CHUNK] if n % CHUNK else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    data, alphabet = list(data), list(alphabet)
    if workers > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk, [data] * len(sizes), [alphabet] * len(sizes), sizes, seeds,
                                  [min_len] * len(sizes)))
    else:
        parts = [_chunk(data, alphabet, k, s, min_len) for k, s in zip(sizes, seeds)]
    return [e for part in parts for e in part]
