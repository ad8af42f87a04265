import numpy as np
import pytest
from conftest import random_prediction_set
from hypothesis import given, settings
from hypothesis import strategies as st

from tripleset import appendix
from tripleset.decode import best_span, extract_triples
from tripleset.model import PredictionSet


def test_worked_prediction_one_decodes_to_gold_zero():
    preds = appendix.predictions()
    single = PredictionSet.from_arrays(*(t.data[1:2] for t in preds.tensors()))
    (trip,) = extract_triples(single, 15)
    assert (trip.relation, trip.sub_start, trip.sub_end, trip.obj_start, trip.obj_end) == (0, 6, 6, 12, 13)
    assert trip.confidence == pytest.approx(0.5 * 0.8 * 0.5 * 0.5 * 0.3)


def test_worked_set_discards_nothing_but_null():
    got = {t.key for t in extract_triples(appendix.predictions(), 15)}
    # predictions 0 and 2 argmax to relation 2, 1 to relation 0
    assert {k[0] for k in got} == {0, 2}


def test_best_span_respects_order():
    ps = np.array([0.0, 0.1, 0.9])
    pe = np.array([0.8, 0.1, 0.1])
    # unconstrained argmaxes would give start 2, end 0
    assert best_span(ps, pe, 0, 3) == (2, 2, pytest.approx(0.09))
    assert best_span(ps, pe, 0, 2) == (1, 1, pytest.approx(0.01))


def test_null_predictions_are_dropped():
    rel = np.array([[0.1, 0.1, 0.8], [0.6, 0.2, 0.2]])
    span = np.full((2, 4), 0.25)
    got = extract_triples(PredictionSet.from_arrays(rel, span, span, span, span), 4)
    assert len(got) == 1 and got[0].relation == 0


def test_duplicates_merge_to_max_confidence():
    rel = np.array([[0.9, 0.1], [0.6, 0.4]])
    span = np.tile(np.eye(3)[1], (2, 1))
    got = extract_triples(PredictionSet.from_arrays(rel, span, span, span, span), 3)
    assert len(got) == 1 and got[0].confidence == pytest.approx(0.9)


def test_offset_and_threshold():
    rel = np.array([[0.7, 0.3]])
    span = np.array([[0.0, 1.0, 0.0, 0.0]])
    (t,) = extract_triples(PredictionSet.from_arrays(rel, span, span, span, span), 2, offset=1)
    assert t.key == (0, 0, 0, 0, 0)
    assert extract_triples(PredictionSet.from_arrays(rel, span, span, span, span), 2, offset=1,
                           threshold=0.8) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_spans_are_ordered_and_in_range(seed, length):
    rng = np.random.default_rng(seed)
    preds = random_prediction_set(rng, 6, 3, length + 2, sharp=3.0)
    for t in extract_triples(preds, length, offset=1):
        assert 0 <= t.sub_start <= t.sub_end < length
        assert 0 <= t.obj_start <= t.obj_end < length
        assert t.relation != 2
