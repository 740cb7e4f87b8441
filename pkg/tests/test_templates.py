from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from temple.templates import (
    RankingPermutation,
    TemplateLibrary,
    TransitionTemplate,
    TtVisitRecord,
    augment,
    dumps_library,
    find_closest,
    gen_tt,
    loads_library,
    pad,
    tt_distance,
    tt_update,
)

counts_st = arrays(np.int64, st.integers(1, 30), elements=st.integers(0, 50)).filter(lambda c: c.sum() > 0)


def template_st(max_len=12):
    return st.builds(
        lambda c, r: TransitionTemplate(np.sort(c)[::-1] / c.sum(), r),
        arrays(np.int64, st.integers(1, max_len), elements=st.integers(0, 20)).filter(lambda c: c.sum() > 0),
        st.floats(0, 1),
    )


def G(probs, r=0.0):
    return TransitionTemplate(np.asarray(probs, float), r)


# -- gen_tt -------------------------------------------------------------------


def test_gen_tt_worked_example():
    g, rec, sigma = gen_tt([3, 7, 0], 10)
    assert g == G([0.7, 0.3, 0.0], 1.0)
    assert rec.ordered_counts.tolist() == [7, 3, 0] and rec.reward_sum == 10
    assert sigma.rank_to_index.tolist() == [1, 0, 2]


def test_gen_tt_identity_and_stable_ties():
    assert gen_tt([5, 3, 2], 0)[2] == RankingPermutation.identity(3)
    assert gen_tt([4, 4, 2], 1)[2].rank_to_index.tolist() == [0, 1, 2]


def test_gen_tt_rejects_zero_visits():
    with pytest.raises(ValueError):
        gen_tt([0, 0], 0)


@settings(max_examples=1000)
@given(counts_st, st.integers(1, 20), st.floats(0, 1))
def test_gen_tt_scale_invariance(counts, k, r):
    r_sum = r * counts.sum()
    a = gen_tt(counts, r_sum)[0]
    b = gen_tt(k * counts, k * r_sum)[0]
    assert np.allclose(a.probs, b.probs, atol=1e-12) and a.reward == pytest.approx(b.reward)


# -- ranking permutation --------------------------------------------------------


@settings(max_examples=1000)
@given(counts_st)
def test_permutation_round_trip(counts):
    sigma = RankingPermutation.of(counts)
    assert np.array_equal(sigma.invert(sigma.apply(counts)), counts)
    v = np.arange(len(counts)) * 3
    assert np.array_equal(sigma.apply(sigma.invert(v)), v)
    ordered = sigma.apply(counts)
    assert np.all(np.diff(ordered) <= 0)
    # stability: equal values keep index order
    for i in range(len(ordered) - 1):
        if ordered[i] == ordered[i + 1]:
            assert sigma.rank_to_index[i] < sigma.rank_to_index[i + 1]


def test_permutation_validation():
    with pytest.raises(ValueError):
        RankingPermutation([0, 0, 1])


# -- tt_update ------------------------------------------------------------------


def _lib(counts, reward_sum):
    g, rec, _ = gen_tt(counts, reward_sum)
    lib = TemplateLibrary()
    lib.add(g, rec)
    return lib


def test_tt_update_worked_example():
    lib = _lib([7, 3, 0], 10)
    tt_update(0, lib, [0, 2, 8], 10)
    assert pad(lib.records[0].ordered_counts, 3).tolist() == [15, 5, 0]
    assert lib.records[0].reward_sum == 20
    assert lib.templates[0] == G([0.75, 0.25, 0.0], 1.0)


def test_tt_update_with_zero_counts_is_noop():
    lib = _lib([7, 3, 0], 10)
    before = lib.records[0].copy()
    tt_update(0, lib, [0, 0, 0], 0.0)
    assert np.array_equal(lib.records[0].ordered_counts, before.ordered_counts)


def test_repeated_updates_equal_gen_tt_of_vector():
    c = np.array([2, 9, 4, 0])
    lib = _lib(c, 3.0)
    for _ in range(10):
        tt_update(0, lib, c, 3.0)
    expected = gen_tt(c, 3.0)[0]
    assert np.allclose(pad(lib.templates[0].probs, 4), expected.probs, atol=1e-12)
    assert lib.templates[0].reward == pytest.approx(expected.reward)


def test_tt_update_uses_given_sigma_and_grows():
    lib = _lib([5, 5], 0)
    # sigma ranks [1, 9, 3] as [3, 1, 9]; pooled [8, 6, 9] is then re-sorted
    tt_update(0, lib, [1, 9, 3], 0, sigma=RankingPermutation([2, 0, 1]))
    assert lib.records[0].ordered_counts.tolist() == [9, 8, 6]
    assert lib.templates[0] == G([9 / 23, 8 / 23, 6 / 23])


@settings(max_examples=1000)
@given(st.lists(counts_st, min_size=1, max_size=8))
def test_tt_update_conserves_counts(batches):
    lib = _lib(batches[0], 0.0)
    for b in batches[1:]:
        tt_update(0, lib, b, 0.0)
    assert lib.total_counts() == sum(int(b.sum()) for b in batches)
    assert np.all(np.diff(lib.records[0].ordered_counts) <= 0)


# -- augment ------------------------------------------------------------------------


def test_augment_worked_example():
    lib = TemplateLibrary()
    lib.add(G([0.75, 0.25, 0.0], 1.0), TtVisitRecord([15, 5, 0], 20))
    counts, reward = augment(0, lib, [3, 7, 0], 10, RankingPermutation([1, 0, 2]))
    assert counts.tolist() == [5, 15, 0] and reward == 20
    ident, _ = augment(0, lib, [0, 0, 0], 0, RankingPermutation.identity(3))
    assert ident.tolist() == [15, 5, 0]


@settings(max_examples=1000)
@given(counts_st)
def test_augment_round_trip_recovers_pattern(counts):
    g, rec, sigma = gen_tt(counts, 0.0)
    lib = TemplateLibrary()
    lib.add(g, rec)
    aug, _ = augment(0, lib, counts, 0.0, sigma)
    assert np.array_equal(aug, counts)


def test_augment_rejects_mismatched_lengths():
    lib = _lib([3, 2, 1], 0)
    with pytest.raises(ValueError):
        augment(0, lib, [1, 1], 0, RankingPermutation.identity(3))
    with pytest.raises(ValueError):
        augment(0, lib, [1, 1], 0, RankingPermutation.identity(2))


# -- distance --------------------------------------------------------------------


def test_distance_golden_values():
    assert tt_distance(G([0.8, 0.2]), G([0.6, 0.2, 0.2])) == pytest.approx(math.sqrt(0.08), abs=1e-12)
    n = 4
    d = tt_distance(G([1, 0, 0, 0], 0), G([1 / n] * n, 1))
    assert d == pytest.approx(math.sqrt(3 / 4) + 1)


@settings(max_examples=1000)
@given(template_st(), template_st(), template_st())
def test_distance_metric_axioms(a, b, c):
    assert tt_distance(a, a) == 0
    assert tt_distance(a, b) == pytest.approx(tt_distance(b, a))
    assert tt_distance(a, b) >= 0
    assert tt_distance(a, c) <= tt_distance(a, b) + tt_distance(b, c) + 1e-12
    assert tt_distance(a, b) < 2
    if tt_distance(a, b) == 0:
        assert a == b


def test_padding_makes_equal_templates_indiscernible():
    assert tt_distance(G([1.0]), G([1.0, 0.0, 0.0])) == 0
    assert G([1.0]) == G([1.0, 0.0])


# -- find_closest --------------------------------------------------------------------


def test_find_closest_cases():
    lib = TemplateLibrary()
    assert find_closest(lib, G([1.0]), 0.15) is None
    g1, g2 = G([0.8, 0.2]), G([0.6, 0.2, 0.2])
    lib.add(g1, TtVisitRecord([8, 2]))
    lib.add(g2, TtVisitRecord([6, 2, 2]))
    noisy = G([0.8 - 0.05 / math.sqrt(2), 0.2 + 0.05 / math.sqrt(2)])
    assert tt_distance(noisy, g1) == pytest.approx(0.05)
    assert find_closest(lib, noisy, 0.15) == 0
    assert find_closest(lib, noisy, 0.01) is None


def test_find_closest_boundary_is_exclusive_and_ties_go_low():
    lib = TemplateLibrary()
    lib.add(G([1.0]), TtVisitRecord([1]))
    lib.add(G([0.5, 0.5]), TtVisitRecord([1, 1]))
    d = tt_distance(G([1.0]), G([0.75, 0.25]))
    assert find_closest(lib, G([0.75, 0.25]), d) is None
    assert find_closest(lib, G([0.75, 0.25]), d + 1e-9) == 0
    with pytest.raises(ValueError):
        find_closest(lib, G([1.0]), -0.1)


def test_template_validation():
    with pytest.raises(ValueError):
        G([0.2, 0.8])
    with pytest.raises(ValueError):
        G([0.5, 0.4])
    with pytest.raises(ValueError):
        G([1.0], 1.5)


# -- persistence -------------------------------------------------------------------


def test_library_text_round_trip(tmp_path):
    lib = _lib([7, 3, 0], 10)
    lib.add(*gen_tt([1, 1, 2, 0, 0], 0.5)[:2])
    back = loads_library(dumps_library(lib))
    assert back.templates == lib.templates
    assert [r.ordered_counts.tolist() for r in back.records] == [r.ordered_counts.tolist() for r in lib.records]
    lib.save(tmp_path / "lib.tsv")
    assert TemplateLibrary.load(tmp_path / "lib.tsv").templates == lib.templates


def test_library_text_rejects_malformed():
    with pytest.raises(ValueError):
        loads_library("2\t0.5,0.5\t0.0\t1\t0.0\n")
