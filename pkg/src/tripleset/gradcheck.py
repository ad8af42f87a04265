"""Central finite-difference check of the matching-loss gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .matching_loss import batch_set_loss
from .model import SetPredictionModel


@dataclass
class CoordResult:
    param: str
    index: int
    analytic: float
    numeric: float
    rel_error: float
    ok: bool


@dataclass
class GradCheckReport:
    results: list[CoordResult] = field(default_factory=list)
    flipped: list[tuple[str, int]] = field(default_factory=list)

    @property
    def checked(self) -> int:
        return len(self.results)

    @property
    def pass_rate(self) -> float:
        return sum(r.ok for r in self.results) / max(1, len(self.results))

    def worst(self, k: int = 5) -> list[CoordResult]:
        return sorted(self.results, key=lambda r: -r.rel_error)[:k]


def compare(analytic: float, numeric: float, rel_tol: float = 1e-4, tiny: float = 1e-8,
            abs_tol: float = 1e-2) -> tuple[float, bool]:
    """Relative error; when both values are below ``tiny`` an absolute test applies."""
    scale = max(abs(analytic), abs(numeric))
    if scale < tiny:
        return 0.0, abs(analytic - numeric) < abs_tol
    err = abs(analytic - numeric) / scale
    return err, err < rel_tol


def check_gradients(model: SetPredictionModel, token_ids, golds, eps: float = 1e-5,
                    per_param: int = 8, seed: int = 0, rel_tol: float = 1e-4) -> GradCheckReport:
    """Compare backprop against (f(x+eps) - f(x-eps)) / 2eps on sampled coordinates.

    The matching is solved once at the unperturbed point and held fixed for
    both evaluations. If re-solving at either perturbed point changes the
    matching, the coordinate is recorded in ``flipped`` and not scored.
    Dropout is off throughout.
    """
    rng = np.random.default_rng(seed)
    for p in model.params.values():
        p.grad = None
    with nx.Tape() as tape:
        loss, assignments = batch_set_loss(golds, model.forward(token_ids))
        tape.backward(loss)
    grads = {n: p.grad.copy() for n, p in model.params.items()}

    def evaluate():
        out = model.forward(token_ids)
        fixed, _ = batch_set_loss(golds, out, assignments)
        _, fresh = batch_set_loss(golds, out)
        same = all(a.permutation == b.permutation for a, b in zip(assignments, fresh))
        return fixed.item(), same

    report = GradCheckReport()
    for name, p in model.params.items():
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(per_param, flat.size), replace=False)
        for k in picks:
            old = flat[k]
            flat[k] = old + eps
            up, same_up = evaluate()
            flat[k] = old - eps
            down, same_down = evaluate()
            flat[k] = old
            if not (same_up and same_down):
                report.flipped.append((name, int(k)))
                continue
            numeric = (up - down) / (2 * eps)
            analytic = float(grads[name].reshape(-1)[k])
            err, ok = compare(analytic, numeric, rel_tol)
            report.results.append(CoordResult(name, int(k), analytic, numeric, err, ok))
    for p in model.params.values():
        p.grad = None
    return report
