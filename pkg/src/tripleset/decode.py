"""Discretise a prediction set into relational triples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ExtractedTriple:
    relation: int
    sub_start: int
    sub_end: int
    obj_start: int
    obj_end: int
    confidence: float = 1.0

    @property
    def key(self) -> tuple[int, int, int, int, int]:
        return (self.relation, self.sub_start, self.sub_end, self.obj_start, self.obj_end)


def best_span(p_start: np.ndarray, p_end: np.ndarray, lo: int, hi: int) -> tuple[int, int, float]:
    """Argmax of p_start[i] * p_end[j] over lo <= i <= j < hi (first maximum wins)."""
    ps = np.asarray(p_start[lo:hi], dtype=np.float64)
    pe = np.asarray(p_end[lo:hi], dtype=np.float64)
    joint = np.triu(np.outer(ps, pe))
    flat = int(np.argmax(joint))
    i, j = divmod(flat, joint.shape[1])
    return lo + i, lo + j, float(joint[i, j])


def extract_triples(preds, sentence_length: int, null_relation: int | None = None,
                    offset: int = 0, threshold: float = 0.0) -> list[ExtractedTriple]:
    """One triple per prediction whose argmax relation is not the no-triple class.

    Pointer positions ``offset .. offset + sentence_length - 1`` are the
    candidates (offset 1 skips the start marker); returned spans are shifted
    back to token indices. Identical triples are merged, keeping the highest
    confidence. ``threshold`` drops triples with lower confidence.
    """
    out: dict[tuple, ExtractedTriple] = {}
    lo, hi = offset, offset + sentence_length
    for pred in preds:
        rel_p = np.asarray(pred.relation)
        null = len(rel_p) - 1 if null_relation is None else null_relation
        r = int(np.argmax(rel_p))
        if r == null or sentence_length < 1:
            continue
        ss, se, p_sub = best_span(pred.sub_start, pred.sub_end, lo, hi)
        os_, oe, p_obj = best_span(pred.obj_start, pred.obj_end, lo, hi)
        conf = float(rel_p[r]) * p_sub * p_obj
        if conf < threshold:
            continue
        trip = ExtractedTriple(r, ss - offset, se - offset, os_ - offset, oe - offset, conf)
        prev = out.get(trip.key)
        if prev is None or conf > prev.confidence:
            out[trip.key] = trip
    return sorted(out.values(), key=lambda t: t.key)
