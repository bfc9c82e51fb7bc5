import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddlssc import metrics
from ddlssc.errors import InvalidInput

from oracles import ari_by_pairs, best_map_weight, nmi_by_counting, purity_entropy_by_counting

labelings = st.lists(st.integers(1, 4), min_size=2, max_size=30)


def paired(draw_len=30):
    return st.integers(2, draw_len).flatmap(
        lambda n: st.tuples(st.lists(st.integers(0, 3), min_size=n, max_size=n),
                            st.lists(st.integers(1, 3), min_size=n, max_size=n)))


class TestHandValues:
    def test_identical(self):
        r = metrics.evaluate([0, 0, 1, 1], [1, 1, 2, 2])
        assert (r.nmi, r.ari, r.purity, r.entropy, r.oa, r.aa, r.kappa) == (1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0)
        assert r.mapping == {0: 1, 1: 2}

    def test_independent_split(self):
        pred, truth = [0, 1, 0, 1], [1, 1, 2, 2]
        assert metrics.nmi(pred, truth) == pytest.approx(0.0, abs=1e-15)
        assert metrics.ari(pred, truth) == pytest.approx(-0.5)
        assert metrics.purity_entropy(pred, truth) == (0.5, 1.0)

    def test_kappa_hand_case(self):
        # confusion [[3, 1], [1, 3]]: po = 0.75, pe = 0.5
        pred = [0, 0, 0, 1, 1, 1, 1, 0]
        truth = [1, 1, 1, 1, 2, 2, 2, 2]
        oa, aa, kappa = metrics.oa_aa_kappa(pred, truth)
        assert (oa, aa) == (0.75, 0.75)
        assert kappa == pytest.approx(0.5)

    def test_frozen_example(self):
        # values from the counting oracles on this fixed pair
        pred = [0, 0, 1, 1, 1, 2, 2, 0, 2, 1]
        truth = [1, 1, 1, 2, 2, 2, 3, 3, 3, 3]
        assert metrics.nmi(pred, truth) == pytest.approx(FROZEN["nmi"], abs=1e-12)
        assert metrics.ari(pred, truth) == pytest.approx(FROZEN["ari"], abs=1e-12)
        p, e = metrics.purity_entropy(pred, truth)
        assert (p, e) == (pytest.approx(FROZEN["purity"]), pytest.approx(FROZEN["entropy"], abs=1e-12))

    def test_single_cluster_both(self):
        assert metrics.nmi([0, 0, 0], [1, 1, 1]) == 1.0
        assert metrics.ari([0, 0, 0], [1, 1, 1]) == 1.0

    def test_single_cluster_prediction(self):
        assert metrics.nmi([0, 0, 0, 0], [1, 1, 2, 2]) == 0.0
        assert metrics.ari([0, 0, 0, 0], [1, 1, 2, 2]) == 0.0

    def test_unlabeled_dropped(self):
        assert metrics.evaluate([5, 0, 0, 1, 1], [0, 1, 1, 2, 2]).oa == 1.0

    def test_more_clusters_than_classes(self):
        mapping = metrics.best_map([0, 0, 1, 2], [1, 1, 2, 2])
        assert sorted(mapping.values()).count(metrics.UNMATCHED) == 1
        assert metrics.oa_aa_kappa([0, 0, 1, 2], [1, 1, 2, 2])[0] == 0.75

    def test_length_mismatch(self):
        with pytest.raises(InvalidInput):
            metrics.nmi([0, 1], [1, 2, 3])

    def test_all_unlabeled(self):
        with pytest.raises(InvalidInput):
            metrics.evaluate([0, 1], [0, 0])

    def test_arithmetic_average(self):
        pred, truth = [0, 0, 1, 1, 1, 2], [1, 1, 1, 2, 2, 2]
        g, a = metrics.nmi(pred, truth), metrics.nmi(pred, truth, "arithmetic")
        assert a <= g + 1e-12  # AM >= GM of the entropies

    def test_json(self):
        r = metrics.evaluate([0, 1, 1], [1, 2, 2])
        d = json.loads(r.to_json())
        assert set(d) == {"nmi", "ari", "purity", "entropy", "oa", "aa", "kappa", "mapping"}
        assert d["mapping"] == {"0": 1, "1": 2}


class TestExhaustive:
    @pytest.mark.parametrize("n", range(2, 7))
    def test_all_small_labelings(self, n):
        for pred in itertools.product(range(3), repeat=n):
            for truth in itertools.product(range(1, 4), repeat=n):
                if (n > 4) and (hash((pred, truth)) % 7):
                    continue  # thin the largest cases
                assert metrics.nmi(pred, truth) == pytest.approx(nmi_by_counting(pred, truth), abs=1e-12)
                assert metrics.ari(pred, truth) == pytest.approx(ari_by_pairs(pred, truth), abs=1e-12)
                pu, en = metrics.purity_entropy(pred, truth)
                rp, re = purity_entropy_by_counting(pred, truth)
                assert pu == pytest.approx(rp, abs=1e-12) and en == pytest.approx(re, abs=1e-12)
                mapping = metrics.best_map(pred, truth)
                hits = sum(mapping[p] == t for p, t in zip(pred, truth))
                assert hits == best_map_weight(pred, truth)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(paired())
    def test_ranges(self, pt):
        pred, truth = pt
        r = metrics.evaluate(pred, truth)
        assert 0 <= r.nmi <= 1 and -1 <= r.ari <= 1
        assert 0 < r.purity <= 1 and 0 <= r.entropy <= 1
        assert 0 <= r.oa <= 1 and 0 <= r.aa <= 1 and r.kappa <= 1

    @settings(max_examples=60, deadline=None)
    @given(paired(), st.permutations(range(4)))
    def test_relabel_invariance(self, pt, perm):
        pred, truth = pt
        renamed = [perm[p] + 10 for p in pred]
        a, b = metrics.evaluate(pred, truth), metrics.evaluate(renamed, truth)
        # AA and kappa can differ when several matchings tie for the maximum
        for key in ("nmi", "ari", "purity", "entropy", "oa"):
            assert getattr(a, key) == pytest.approx(getattr(b, key), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(paired())
    def test_symmetry(self, pt):
        pred, truth = pt
        shifted = [p + 1 for p in pred]
        assert metrics.nmi(shifted, truth) == pytest.approx(metrics.nmi(truth, shifted), abs=1e-12)
        assert metrics.ari(shifted, truth) == pytest.approx(metrics.ari(truth, shifted), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(labelings)
    def test_perfect_prediction(self, truth):
        r = metrics.evaluate([t * 3 for t in truth], truth)
        assert r.oa == 1.0 and r.purity == 1.0 and r.entropy == 0.0
        assert r.nmi == pytest.approx(1.0) and r.ari == pytest.approx(1.0)


def test_unique_matching_relabel_invariant():
    pred = [0, 0, 0, 1, 1, 2, 2, 2, 2, 1]
    truth = [1, 1, 2, 2, 2, 3, 3, 3, 1, 2]
    renamed = [{0: 7, 1: 3, 2: 5}[p] for p in pred]
    a, b = metrics.evaluate(pred, truth), metrics.evaluate(renamed, truth)
    assert (a.aa, a.kappa) == (b.aa, b.kappa)


def test_random_labels_have_near_zero_kappa():
    rng = np.random.default_rng(0)
    truth = rng.integers(1, 5, 10000)
    pred = rng.integers(0, 4, 10000)
    _, _, kappa = metrics.oa_aa_kappa(pred, truth)
    assert abs(kappa) < 0.02
    assert abs(metrics.ari(pred, truth)) < 0.01


FROZEN = {"nmi": 0.26733692039994567, "ari": -0.022727272727272745, "purity": 0.6, "entropy": 0.7261859507142915}
