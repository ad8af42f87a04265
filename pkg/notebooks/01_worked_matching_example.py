"""
Matching loss on a three-slot example
=====================================

Two gold triples plus one padding slot against three predicted triples.
"""

# %%
import numpy as np

from tripleset import appendix
from tripleset.assignment import munkres_reference
from tripleset.matching_loss import build_cost_matrix, set_loss

preds = appendix.predictions()
costs = build_cost_matrix(appendix.GOLD, preds)
print(np.round(costs, 3))

# %%
# the reference solver keeps every intermediate matrix
trace = []
best = munkres_reference(costs, trace=trace)
for step, matrix, lines in trace:
    print(step, "" if lines is None else f"({lines} lines)")
    print(np.round(matrix, 3))
print("gold -> prediction", best.permutation, "cost", round(best.total_cost, 6))

# %%
loss = set_loss(appendix.GOLD, preds)
print("loss", round(loss.item(), 6))

# %%
# entry (0, 2) term by term
print(appendix.cost_terms(appendix.GOLD[0], preds, 2))
