import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronotag.corpus import EntityLabel, EntitySpan
from chronotag.errors import DataError
from chronotag.scoring import score_spans

PER, LOC, BOOK = EntityLabel.PERSON, EntityLabel.LOCATION, EntityLabel.BOOK


def spans(*triples):
    return [EntitySpan(a, b, lab) for a, b, lab in triples]


class TestFixtures:
    def test_perfect_prediction(self):
        gold = [spans((0, 2, PER), (5, 7, LOC))]
        res = score_spans(gold, gold, [10])
        assert res.micro.precision == res.micro.recall == res.micro.f1 == 1.0
        assert res.accuracy == 1.0

    def test_hand_counted_confusion(self):
        gold = [spans((0, 2, PER), (5, 7, LOC))]
        pred = [spans((0, 2, PER), (6, 7, LOC), (9, 10, BOOK))]
        res = score_spans(gold, pred, [12])
        assert res.micro.tp == 1 and res.micro.fp == 2 and res.micro.fn == 1
        assert res.micro.precision == pytest.approx(1 / 3)
        assert res.micro.recall == pytest.approx(1 / 2)
        assert res.micro.f1 == pytest.approx(0.4)

    def test_empty_prediction_degenerate(self):
        gold = [spans((0, 2, PER))]
        res = score_spans(gold, [[]], [5])
        assert res.micro.precision == 0.0
        assert res.micro.recall == 0.0
        assert res.micro.f1 == 0.0

    def test_per_type_breakdown(self):
        gold = [spans((0, 1, PER), (2, 3, LOC))]
        pred = [spans((0, 1, PER), (2, 3, BOOK))]
        res = score_spans(gold, pred, [4])
        assert res.per_type[PER].f1 == 1.0
        assert res.per_type[LOC].recall == 0.0
        assert res.per_type[BOOK].precision == 0.0

    def test_boundary_mismatch_is_no_match(self):
        gold = [spans((0, 3, PER))]
        pred = [spans((0, 2, PER))]
        res = score_spans(gold, pred, [5])
        assert res.micro.tp == 0

    def test_duplicate_prediction_counts_once(self):
        gold = [spans((0, 2, PER))]
        pred = [spans((0, 2, PER), (0, 2, PER))]
        res = score_spans(gold, pred, [5])
        assert res.micro.tp == 1 and res.micro.fp == 1

    def test_accuracy_counts_positions(self):
        gold = [spans((0, 2, PER))]
        pred = [[]]
        res = score_spans(gold, pred, [4])
        assert res.accuracy == pytest.approx(2 / 4)

    def test_document_count_mismatch(self):
        with pytest.raises(DataError):
            score_spans([[]], [[], []])

    def test_quality_scores_are_twelve_values(self):
        gold = [spans((0, 2, PER))]
        res = score_spans(gold, gold, [3])
        q = res.quality_scores()
        assert len(q) == 12
        assert all(0.0 <= v <= 1.0 for v in q)


def random_case(rng, n_docs=4):
    gold, pred, lengths = [], [], []
    labels = list(EntityLabel)
    for _ in range(n_docs):
        length = int(rng.integers(5, 30))
        lengths.append(length)
        docs = []
        for _ in range(int(rng.integers(0, 4))):
            a = int(rng.integers(0, length - 1))
            b = int(rng.integers(a + 1, min(a + 4, length) + 1))
            docs.append(EntitySpan(a, b, labels[int(rng.integers(0, 3))]))
        gold.append(docs)
        docs2 = []
        for _ in range(int(rng.integers(0, 4))):
            a = int(rng.integers(0, length - 1))
            b = int(rng.integers(a + 1, min(a + 4, length) + 1))
            docs2.append(EntitySpan(a, b, labels[int(rng.integers(0, 3))]))
        pred.append(docs2)
    return gold, pred, lengths


class TestProperties:
    def test_bounds_and_count_sanity(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            gold, pred, lengths = random_case(rng)
            res = score_spans(gold, pred, lengths)
            n_gold = sum(len(g) for g in gold)
            n_pred = sum(len(p) for p in pred)
            assert 0 <= res.micro.tp <= min(n_gold, n_pred)
            for v in res.quality_scores() + [res.accuracy]:
                assert 0.0 <= v <= 1.0

    def test_swapping_gold_and_pred_swaps_p_and_r(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            gold, pred, lengths = random_case(rng)
            a = score_spans(gold, pred, lengths)
            b = score_spans(pred, gold, lengths)
            assert a.micro.precision == pytest.approx(b.micro.recall)
            assert a.micro.recall == pytest.approx(b.micro.precision)
            assert a.micro.f1 == pytest.approx(b.micro.f1)

    def test_adding_correct_prediction_never_decreases_f1(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            gold, pred, lengths = random_case(rng)
            base = score_spans(gold, pred, lengths)
            # find an unmatched gold span to add
            added = False
            for i, g in enumerate(gold):
                from collections import Counter
                gc = Counter((s.start, s.end, s.label) for s in g)
                pc = Counter((s.start, s.end, s.label) for s in pred[i])
                for key, cnt in gc.items():
                    if pc[key] < cnt:
                        pred2 = [list(d) for d in pred]
                        pred2[i] = pred2[i] + [EntitySpan(*key)]
                        better = score_spans(gold, pred2, lengths)
                        assert better.micro.f1 >= base.micro.f1 - 1e-12
                        added = True
                        break
                if added:
                    break

    def test_adding_incorrect_prediction_never_increases_precision(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            gold, pred, lengths = random_case(rng)
            base = score_spans(gold, pred, lengths)
            gc = {(s.start, s.end, s.label) for s in gold[0]}
            # fabricate a span absent from gold[0]
            for a in range(lengths[0] - 1):
                cand = (a, a + 1, PER)
                if cand not in gc:
                    pred2 = [list(d) for d in pred]
                    pred2[0] = pred2[0] + [EntitySpan(*cand)]
                    worse = score_spans(gold, pred2, lengths)
                    assert worse.micro.precision <= base.micro.precision + 1e-12
                    break

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_f1_is_harmonic_mean(self, seed):
        rng = np.random.default_rng(seed)
        gold, pred, lengths = random_case(rng)
        res = score_spans(gold, pred, lengths)
        p, r = res.micro.precision, res.micro.recall
        expected = 2 * p * r / (p + r) if p + r else 0.0
        assert res.micro.f1 == pytest.approx(expected)
