"""Micro precision / recall / F1 for extracted triples.

Predictions are matched one-to-one against the gold triples of the same
sentence. Because matching is on exact key equality, the largest one-to-one
agreement is the multiset intersection of the keys, so counting is a
``Counter`` intersection per sentence.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field

from .data import EPO, NORMAL, SEO, MatchingMode, classify_overlap

COUNT_BUCKETS = ("N=1", "N=2", "N=3", "N=4", "N>=5")
OVERLAP_BUCKETS = (NORMAL, EPO, SEO)


@dataclass
class Scores:
    precision: float
    recall: float
    f1: float
    predicted: int
    gold: int
    correct: int

    @classmethod
    def from_counts(cls, predicted: int, gold: int, correct: int) -> Scores:
        # nothing predicted -> precision 0 by convention
        p = correct / predicted if predicted else 0.0
        r = correct / gold if gold else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f, predicted, gold, correct)


@dataclass
class _Tally:
    predicted: int = 0
    gold: int = 0
    correct: int = 0

    def add(self, pred_keys, gold_keys) -> None:
        pc, gc = Counter(pred_keys), Counter(gold_keys)
        self.predicted += sum(pc.values())
        self.gold += sum(gc.values())
        self.correct += sum((pc & gc).values())

    def scores(self) -> Scores:
        return Scores.from_counts(self.predicted, self.gold, self.correct)


@dataclass
class EvalReport:
    mode: str
    overall: Scores
    entity_pair: Scores
    relation: Scores
    by_count: dict[str, Scores] = field(default_factory=dict)
    by_overlap: dict[str, Scores] = field(default_factory=dict)

    @property
    def counts(self) -> dict[str, int]:
        o = self.overall
        return {"predicted": o.predicted, "gold": o.gold, "correct": o.correct}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = self.counts
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = [("overall", self.overall), ("(s,o)", self.entity_pair), ("r", self.relation)]
        rows += [(k, v) for k, v in self.by_count.items()]
        rows += [(k, v) for k, v in self.by_overlap.items()]
        lines = [f"matching: {self.mode}",
                 f"{'subset':<10}{'P':>8}{'R':>8}{'F1':>8}{'pred':>7}{'gold':>7}{'hit':>7}"]
        for name, s in rows:
            lines.append(f"{name:<10}{s.precision:8.4f}{s.recall:8.4f}{s.f1:8.4f}"
                         f"{s.predicted:7d}{s.gold:7d}{s.correct:7d}")
        return "\n".join(lines)


def _span_key(span, mode: MatchingMode):
    # partial matching compares head words; the head is the entity's last token
    return span[1] if mode is MatchingMode.PARTIAL else tuple(span)


def _pred_fields(t):
    if hasattr(t, "subj"):
        return t.relation, tuple(t.subj), tuple(t.obj)
    return t.relation, (t.sub_start, t.sub_end), (t.obj_start, t.obj_end)


def _keys(triples, mode, relation_name):
    full, pairs, rels = [], [], []
    for t in triples:
        rel, subj, obj = _pred_fields(t)
        rel = relation_name(rel)
        s, o = _span_key(subj, mode), _span_key(obj, mode)
        full.append((rel, s, o))
        pairs.append((s, o))
        rels.append(rel)
    return full, pairs, rels


def _relation_namer(relations):
    if relations is None:
        return lambda r: r
    return lambda r: relations.names[r] if isinstance(r, int) else r


def count_bucket(n: int) -> str | None:
    if n <= 0:
        return None
    return COUNT_BUCKETS[min(n, 5) - 1]


def score(predictions, golds, mode=MatchingMode.EXACT, relations=None) -> EvalReport:
    """Score per-sentence predicted triples against gold sentences.

    ``predictions[i]`` holds ExtractedTriple (integer relations, resolved via
    ``relations`` or the corpus inventory) or data.Triple objects for
    ``golds[i]``. Count buckets use the gold triple count; sentences without
    gold triples fall in no count bucket. Buckets with no sentence are absent.
    """
    mode = MatchingMode.parse(mode)
    sentences = list(golds)
    if len(predictions) != len(sentences):
        raise ValueError(f"{len(predictions)} prediction lists for {len(sentences)} sentences")
    if relations is None:
        relations = getattr(golds, "relations", None)
    namer = _relation_namer(relations)

    overall, pair_t, rel_t = _Tally(), _Tally(), _Tally()
    by_count: dict[str, _Tally] = {}
    by_overlap: dict[str, _Tally] = {}
    for preds, sent in zip(predictions, sentences):
        pf, pp, pr = _keys(preds, mode, namer)
        gf, gp, gr = _keys(sent.triples, mode, namer)
        overall.add(pf, gf)
        pair_t.add(pp, gp)
        rel_t.add(pr, gr)
        bucket = count_bucket(len(sent.triples))
        if bucket is not None:
            by_count.setdefault(bucket, _Tally()).add(pf, gf)
        # a sentence in both EPO and SEO counts towards both
        for label in classify_overlap(sent):
            by_overlap.setdefault(label, _Tally()).add(pf, gf)

    return EvalReport(
        mode=mode.value,
        overall=overall.scores(),
        entity_pair=pair_t.scores(),
        relation=rel_t.scores(),
        by_count={k: by_count[k].scores() for k in COUNT_BUCKETS if k in by_count},
        by_overlap={k: by_overlap[k].scores() for k in OVERLAP_BUCKETS if k in by_overlap},
    )


def bucket_report(predictions, golds, bucketing: str = "triple-count",
                  mode=MatchingMode.EXACT, relations=None) -> dict[str, Scores]:
    """Micro scores within each bucket (``triple-count`` or ``overlap``)."""
    report = score(predictions, golds, mode, relations)
    if bucketing == "triple-count":
        return report.by_count
    if bucketing == "overlap":
        return report.by_overlap
    raise ValueError(f"unknown bucketing {bucketing!r}; expected 'triple-count' or 'overlap'")
