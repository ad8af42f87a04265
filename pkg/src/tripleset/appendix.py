"""The three-relation, m = 3 worked example of the matching loss, as fixtures.

:func:`verify_worked_example` rebuilds the cost matrix, the optimal
assignment and the loss from these fixtures and checks them against the
published numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import hungarian, munkres_reference
from .data import locate_entities
from .matching_loss import GoldTriple, GoldTripleSet, build_cost_matrix, set_loss
from .model import PredictionSet

SENTENCE = "Aarhus airport serves the city of Aarhus , which is led by Jacob Bundsgaard ."
RELATIONS = ("leader_name", "located_in", "capital_Of", "<none>")
NULL = 3
M = 3

GOLD = GoldTripleSet(
    (GoldTriple(0, 6, 6, 12, 13), GoldTriple(1, 0, 1, 6, 6), GoldTriple(NULL)), n=2, null_relation=NULL)
GOLD_STRINGS = (("Aarhus", "leader_name", "Jacob Bundsgaard"), ("Aarhus Airport", "located_in", "Aarhus"))


def _row(**hot) -> list[float]:
    row = [0.0] * 15
    for k, v in hot.items():
        row[int(k[1:])] = v
    return row


PREDICTIONS = {
    "relation": [[0.1, 0.3, 0.4, 0.2], [0.5, 0.25, 0.15, 0.1], [0.1, 0.3, 0.4, 0.2]],
    "sub_start": [_row(p0=0.9, p1=0.1), _row(p0=0.1, p6=0.8, p12=0.1), _row(p0=0.4, p6=0.5, p12=0.1)],
    "sub_end": [_row(p0=0.2, p1=0.8), _row(p0=0.2, p1=0.3, p6=0.5), _row(p0=0.1, p1=0.4, p5=0.5)],
    "obj_start": [_row(p0=0.1, p1=0.1, p6=0.7, p12=0.1), _row(p0=0.2, p1=0.1, p6=0.2, p12=0.5),
                  _row(p0=0.3, p1=0.1, p12=0.7)],
    "obj_end": [_row(p1=0.1, p6=0.6, p12=0.1, p13=0.2), _row(p1=0.4, p6=0.3, p13=0.3),
                _row(p1=0.2, p6=0.4, p13=0.4)],
}

EXPECTED_COSTS = np.array([[-0.4, -2.6, -2.1], [-3.3, -1.15, -1.5], [0.0, 0.0, 0.0]])
EXPECTED_PERMUTATION = (1, 0, 2)
EXPECTED_TOTAL = -5.9
EXPECTED_LOSS = 7.52
COST_TOL = 1e-9
LOSS_TOL = 0.01


def predictions(overrides: dict | None = None) -> PredictionSet:
    """The fixture predictions; ``overrides`` maps (head, query, position) -> probability."""
    arrays = {k: np.array(v, dtype=np.float64) for k, v in PREDICTIONS.items()}
    for (head, j, pos), value in (overrides or {}).items():
        arrays[head][j, pos] = value
    return PredictionSet.from_arrays(**arrays)


@dataclass
class Check:
    name: str
    expected: object
    actual: object
    passed: bool
    note: str = ""

    def line(self) -> str:
        text = f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: expected {self.expected}, got {self.actual}"
        return f"{text} ({self.note})" if self.note else text


def cost_terms(gold: GoldTriple, preds: PredictionSet, j: int) -> list[float]:
    """The five probabilities summed by a non-null cost entry."""
    p = preds[j]
    return [float(p.relation[gold.relation]), float(p.sub_start[gold.sub_start]), float(p.sub_end[gold.sub_end]),
            float(p.obj_start[gold.obj_start]), float(p.obj_end[gold.obj_end])]


def verify_worked_example(overrides: dict | None = None, echo=print) -> list[Check]:
    """Recompute every intermediate quantity and compare with the published values."""
    echo = echo or (lambda *a: None)
    checks: list[Check] = []
    tokens = SENTENCE.split()
    spans = locate_entities(tokens, ["Aarhus Airport", "Aarhus", "Jacob Bundsgaard"])
    echo(f"sentence: {SENTENCE}")
    echo(f"entity spans: {spans}")
    checks.append(Check("entity spans", {"Aarhus Airport": (0, 1), "Aarhus": (6, 6), "Jacob Bundsgaard": (12, 13)},
                        spans, spans == {"Aarhus Airport": (0, 1), "Aarhus": (6, 6), "Jacob Bundsgaard": (12, 13)}))

    preds = predictions(overrides)
    costs = build_cost_matrix(GOLD, preds)
    echo("cost matrix (rows = gold, cols = predictions):")
    for row in costs:
        echo("  " + "  ".join(f"{c:7.3f}" for c in row))
    for i in range(M):
        for j in range(M):
            want, got = EXPECTED_COSTS[i, j], costs[i, j]
            ok = abs(want - got) <= COST_TOL
            note = ""
            if not ok and GOLD.triples[i].relation != NULL:
                terms = cost_terms(GOLD.triples[i], preds, j)
                note = "fixture terms " + " + ".join(f"{x:g}" for x in terms)
            checks.append(Check(f"cost[{i},{j}]", want, round(float(got), 12), ok, note))

    trace: list = []
    ref = munkres_reference(costs, trace=trace)
    for name, mat, lines in trace:
        extra = f" ({lines} lines)" if lines is not None else ""
        echo(f"step: {name}{extra}")
        for row in mat:
            echo("  " + "  ".join(f"{c:7.3f}" for c in row))
    best = hungarian(costs)
    echo(f"assignment gold [0, 1, 2] -> predictions {list(best.permutation)}, total cost {best.total_cost:.6g}")
    checks.append(Check("assignment", list(EXPECTED_PERMUTATION), list(best.permutation),
                        best.permutation == EXPECTED_PERMUTATION))
    checks.append(Check("reference assignment agrees", list(best.permutation), list(ref.permutation),
                        ref.permutation == best.permutation))
    checks.append(Check("total cost", EXPECTED_TOTAL, round(best.total_cost, 12),
                        abs(best.total_cost - EXPECTED_TOTAL) <= COST_TOL))

    loss = set_loss(GOLD, preds).item()
    echo(f"loss (natural log): {loss:.6f}")
    checks.append(Check("loss", f"{EXPECTED_LOSS} +/- {LOSS_TOL}", round(loss, 6),
                        abs(loss - EXPECTED_LOSS) <= LOSS_TOL))
    for c in checks:
        echo(c.line())
    return checks
