"""A small agglutinative toy language for desk-scale experiments.

Stems are two or three consonant-vowel syllables.  Stem consonants come
from ``ptkm``; ``n``, ``s`` and ``l`` only occur in suffixes, which keeps
the set of possible stem-final syllables small (20).  Six tag bundles each
add their own suffix; the plural bundles also replace the stem-final vowel
with ``i`` (tema -> temi-).  The whole language uses 12 characters.

A corpus samples paradigm cells: a set of stems, each inflected for a few
random bundles, the way a small sample of a real inflection table looks.
"""
from __future__ import annotations

import numpy as np

from .corpus import Example

STEM_CONSONANTS = "ptkm"
CONSONANTS = "ptkmnsl"
VOWELS = "aeiou"
ALPHABET = CONSONANTS + VOWELS

SUFFIXES = {
    ("N", "ACC", "SG"): "m",
    ("N", "DAT", "SG"): "ke",
    ("N", "LOC", "SG"): "tis",
    ("N", "ACC", "PL"): "n",
    ("N", "DAT", "PL"): "pu",
    ("N", "LOC", "PL"): "las",
}
BUNDLES = tuple(SUFFIXES)
PLURAL_VOWEL = "i"


def inflect(stem: str, tags: tuple[str, ...]) -> str:
    suffix = SUFFIXES[tags]
    if "PL" in tags:
        stem = stem[:-1] + PLURAL_VOWEL
    return stem + suffix


def random_stem(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 4))
    return "".join(STEM_CONSONANTS[rng.integers(len(STEM_CONSONANTS))] + VOWELS[rng.integers(len(VOWELS))]
                   for _ in range(n))


def make_corpus(n: int, seed: int = 0, language_id: str = "toy",
                exclude: set[str] | frozenset[str] = frozenset(), cells_per_stem: int = 3) -> list[Example]:
    """``n`` distinct (stem, bundle) triples over ``ceil(n / cells_per_stem)``
    fresh stems, cells drawn uniformly without replacement."""
    if not 1 <= cells_per_stem <= len(BUNDLES):
        raise ValueError(f"cells_per_stem must lie in 1..{len(BUNDLES)}")
    rng = np.random.default_rng(seed)
    n_stems = -(-n // cells_per_stem)
    stems: list[str] = []
    seen = set(exclude)
    while len(stems) < n_stems:
        stem = random_stem(rng)
        if stem not in seen:
            seen.add(stem)
            stems.append(stem)
    cells = rng.permutation(len(stems) * len(BUNDLES))[:n]
    out = []
    for c in cells:
        stem, tags = stems[c // len(BUNDLES)], BUNDLES[c % len(BUNDLES)]
        out.append(Example(stem, tags, inflect(stem, tags), language_id))
    return out


def train_dev_split(n_train: int = 100, n_dev: int = 100, seed: int = 0,
                    language_id: str = "toy") -> tuple[list[Example], list[Example]]:
    """Dev items use stems never seen in training."""
    train = make_corpus(n_train, seed, language_id)
    dev = make_corpus(n_dev, seed + 1, language_id, exclude={e.lemma for e in train})
    return train, dev
