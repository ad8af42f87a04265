"""Bipartite matching loss between a padded gold set and m predicted triples.

Step one builds the m x m matching cost from detached probabilities and
solves the assignment; step two sums negative log-likelihoods over the matched
pairs. The assignment is treated as a constant, so gradients flow only through
the log-probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .assignment import Assignment, hungarian
from .model import PredictionBatch, PredictionSet
from .numerics import Tensor

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class GoldTriple:
    relation: int
    sub_start: int = 0
    sub_end: int = 0
    obj_start: int = 0
    obj_end: int = 0

    def fields(self) -> tuple[int, int, int, int, int]:
        return (self.relation, self.sub_start, self.sub_end, self.obj_start, self.obj_end)


@dataclass
class GoldTripleSet:
    """m gold entries: ``n`` real triples first, then no-triple padding."""
    triples: tuple[GoldTriple, ...]
    n: int
    null_relation: int

    def __post_init__(self):
        if self.n > len(self.triples):
            raise ValueError("n exceeds the number of entries")
        for g in self.triples[self.n:]:
            if g.relation != self.null_relation:
                raise ValueError("entries after the first n must be the no-triple class")

    def __len__(self) -> int:
        return len(self.triples)

    def __getitem__(self, i: int) -> GoldTriple:
        return self.triples[i]

    def array(self) -> np.ndarray:
        """[m, 5] int array of (relation, s_start, s_end, o_start, o_end)."""
        return np.array([g.fields() for g in self.triples], dtype=np.intp).reshape(-1, 5)

    @property
    def real(self) -> np.ndarray:
        return self.array()[:, 0] != self.null_relation


def _probabilities(preds: PredictionSet) -> list[np.ndarray]:
    return [t.data for t in preds.tensors()]


def _check_indices(gold: np.ndarray, real: np.ndarray, t: int, l: int) -> None:
    rel = gold[:, 0]
    if np.any((rel < 0) | (rel >= t)):
        raise ValueError(f"relation index out of range [0, {t})")
    spans = gold[real, 1:]
    if spans.size and (spans.min() < 0 or spans.max() >= l):
        raise ValueError(f"span index out of range [0, {l})")


def match_cost(gold: GoldTriple, pred, null_relation: int) -> float:
    """Negative summed probability the prediction gives to the gold fields; 0 for no-triple."""
    probs = [np.asarray(getattr(pred, name)) for name in
             ("relation", "sub_start", "sub_end", "obj_start", "obj_end")]
    t, l = len(probs[0]), len(probs[1])
    if not 0 <= gold.relation < t:
        raise ValueError(f"relation index {gold.relation} out of range [0, {t})")
    if gold.relation == null_relation:
        return 0.0
    idx = gold.fields()
    if any(not 0 <= i < l for i in idx[1:]):
        raise ValueError(f"span indices {idx[1:]} out of range [0, {l})")
    return -float(sum(p[i] for p, i in zip(probs, idx)))


def build_cost_matrix(golds: GoldTripleSet, preds: PredictionSet) -> np.ndarray:
    """Entry (i, j) is the matching cost of gold i against prediction j."""
    if len(golds) != len(preds):
        raise ValueError(f"gold set has {len(golds)} entries but there are {len(preds)} predictions")
    gold = golds.array()
    real = gold[:, 0] != golds.null_relation
    probs = _probabilities(preds)
    _check_indices(gold, real, probs[0].shape[1], probs[1].shape[1])
    total = np.zeros((len(golds), len(preds)))
    for k, p in enumerate(probs):
        total += p[:, gold[:, k]].T
    return np.where(real[:, None], -total, 0.0)


def _nll_terms(tensors, gold: np.ndarray, real: np.ndarray, cols: np.ndarray, batch=None) -> Tensor:
    """Sum of -log p over matched pairs; spans only for real gold triples."""
    lead = () if batch is None else (batch,)
    rel = nx.index(tensors[0], lead + (cols, gold[:, 0]))
    loss = -nx.sum(nx.log(nx.clamp_min(rel, LOG_FLOOR)))
    if np.any(real):
        lead_r = () if batch is None else (batch[real],)
        for k, t in enumerate(tensors[1:], start=1):
            picked = nx.index(t, lead_r + (cols[real], gold[real, k]))
            loss = loss - nx.sum(nx.log(nx.clamp_min(picked, LOG_FLOOR)))
    return loss


def set_loss(golds: GoldTripleSet, preds: PredictionSet, assignment: Assignment | None = None,
             return_assignment: bool = False):
    """Matched negative log-likelihood of one sentence (natural log).

    ``assignment`` pins the matching instead of solving for it, which is how
    finite-difference checks hold it fixed.
    """
    if assignment is None:
        assignment = hungarian(build_cost_matrix(golds, preds))
    elif len(golds) != len(preds):
        raise ValueError(f"gold set has {len(golds)} entries but there are {len(preds)} predictions")
    gold = golds.array()
    real = gold[:, 0] != golds.null_relation
    cols = np.asarray(assignment.permutation, dtype=np.intp)
    loss = _nll_terms(preds.tensors(), gold, real, cols)
    return (loss, assignment) if return_assignment else loss


def batch_set_loss(golds: list[GoldTripleSet], batch: PredictionBatch,
                   assignments: list[Assignment] | None = None):
    """Mean per-sentence loss over a padded batch; returns (loss, assignments)."""
    if len(golds) != len(batch):
        raise ValueError(f"{len(golds)} gold sets for a batch of {len(batch)}")
    if assignments is None:
        assignments = [hungarian(build_cost_matrix(g, _detached_sentence(batch, b)))
                       for b, g in enumerate(golds)]
    gold = np.concatenate([g.array() for g in golds])
    real = np.concatenate([g.real for g in golds])
    cols = np.concatenate([np.asarray(a.permutation, dtype=np.intp) for a in assignments])
    rows = np.repeat(np.arange(len(golds)), [len(g) for g in golds])
    loss = _nll_terms(batch.tensors(), gold, real, cols, batch=rows)
    return loss * (1.0 / len(golds)), assignments


def _detached_sentence(batch: PredictionBatch, b: int) -> PredictionSet:
    l = int(batch.lengths[b])
    rel = batch.relation.data[b]
    spans = [t.data[b, :, :l] for t in batch.tensors()[1:]]
    return PredictionSet.from_arrays(rel, *spans)
