import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inflex.align import GAP, Alignment, StemRegion, align_chars, find_stem_regions, render_regions, stem_regions
from inflex.corpus import Example
from inflex.errors import UsageError
from inflex.hallucinate import hallucinate_dataset, hallucinate_example
from inflex.synthetic import ALPHABET, make_corpus

from oracles import alignment_cost, naive_distance

GREEK = Example("παρακάμπτω", ("V", "2", "SG", "IPFV", "PST"), "παρέκαμπτες", "ell")


def test_swiss_german_alignment():
    a = align_chars("schwimmen", "gschwommen")
    assert a.cost == 2
    assert a.pairs[0] == (GAP, 0)
    assert a.pairs[1:5] == ((0, 1), (1, 2), (2, 3), (3, 4))
    assert a.pairs[5] == (4, 5)  # i / o substitution
    regions = find_stem_regions("schwimmen", "gschwommen", a)
    assert [r.lemma_span for r in regions] == [(0, 4), (5, 9)]
    assert render_regions("schwimmen", [r.lemma_span for r in regions]) == "[schw]i[mmen]"
    assert render_regions("gschwommen", [r.form_span for r in regions]) == "g[schw]o[mmen]"


def test_greek_stem_regions():
    regions = stem_regions(GREEK.lemma, GREEK.form)
    assert regions == [StemRegion(0, 0, 3), StemRegion(6, 6, 3)]
    assert render_regions(GREEK.lemma, [r.lemma_span for r in regions]) == "[παρ]ακά[μπτ]ω"


def test_min_len_filters_short_runs():
    assert stem_regions(GREEK.lemma, GREEK.form, min_len=4) == []
    assert len(stem_regions(GREEK.lemma, GREEK.form, min_len=1)) == 3


def test_align_rejects_empty():
    with pytest.raises(UsageError):
        align_chars("", "abc")


@settings(max_examples=200, deadline=None)
@given(st.text("abcd", min_size=1, max_size=9), st.text("abcd", min_size=1, max_size=9))
def test_alignment_cost_is_edit_distance(a, b):
    al = align_chars(a, b)
    assert al.cost == naive_distance(a, b)
    assert alignment_cost(a, b, al.pairs) == al.cost


@settings(max_examples=200, deadline=None)
@given(st.text("abc", min_size=1, max_size=10), st.text("abc", min_size=1, max_size=10))
def test_regions_are_maximal_identical_runs(a, b):
    al = align_chars(a, b)
    regions = find_stem_regions(a, b, al, 3)
    for r in regions:
        assert r.length >= 3
        assert a[r.lemma_start:r.lemma_start + r.length] == b[r.form_start:r.form_start + r.length]
    for x, y in zip(regions, regions[1:]):
        # a gap or mismatch separates neighbours, so they never continue each other on both sides
        assert x.lemma_start + x.length <= y.lemma_start and x.form_start + x.length <= y.form_start
        assert (x.lemma_start + x.length, x.form_start + x.length) != (y.lemma_start, y.form_start)


def test_hallucinated_greek_keeps_endpoints_and_shares_draws():
    regions = stem_regions(GREEK.lemma, GREEK.form)
    alphabet = tuple(sorted(set(GREEK.lemma + GREEK.form)))
    h = hallucinate_example(GREEK, regions, alphabet, np.random.default_rng(5))
    assert h.is_hallucinated and h.tags == GREEK.tags
    assert len(h.lemma) == len(GREEK.lemma) and len(h.form) == len(GREEK.form)
    for i, (x, y) in enumerate(zip(GREEK.lemma, h.lemma)):
        if i not in (1, 7):
            assert x == y
    assert h.lemma[1] == h.form[1] and h.lemma[7] == h.form[7]
    assert h.form[3:6] == GREEK.form[3:6] and h.form[9:] == GREEK.form[9:]


def test_hallucinate_dataset_is_worker_independent():
    data = make_corpus(40, seed=1)
    one = hallucinate_dataset(data, ALPHABET, n=2500, seed=3, workers=1)
    two = hallucinate_dataset(data, ALPHABET, n=2500, seed=3, workers=2)
    assert one == two
    assert len(one) == 2500
    assert one != hallucinate_dataset(data, ALPHABET, n=2500, seed=4)


def test_hallucinate_dataset_edge_cases():
    data = make_corpus(5, seed=1)
    assert hallucinate_dataset(data, ALPHABET, n=0) == []
    with pytest.raises(UsageError):
        hallucinate_dataset([], ALPHABET, n=5)
    with pytest.raises(UsageError):
        hallucinate_dataset([data[0].replace(form=None)], ALPHABET, n=5)
    with pytest.raises(UsageError):
        hallucinate_example(data[0], [], (), np.random.default_rng(0))


def test_example_without_regions_is_copied_unchanged():
    e = Example("ab", ("N",), "xyz")
    h = hallucinate_example(e, stem_regions(e.lemma, e.form), ALPHABET, np.random.default_rng(0))
    assert (h.lemma, h.form, h.is_hallucinated) == ("ab", "xyz", True)
