"""
Checking backprop through the matching loss
===========================================
"""

# %%
import numpy as np

from tripleset.gradcheck import check_gradients
from tripleset.matching_loss import GoldTriple, GoldTripleSet
from tripleset.model import ModelConfig, SetPredictionModel

cfg = ModelConfig(vocab_size=40, t=4, d=16, l_max=16, m=4, encoder_layers=1, decoder_layers=1, heads=2)
model = SetPredictionModel(cfg, seed=0)
tokens = [list(np.random.default_rng(0).integers(4, 40, 10))]
gold = GoldTripleSet((GoldTriple(0, 1, 2, 5, 5), GoldTriple(2, 7, 7, 9, 10), GoldTriple(3), GoldTriple(3)), 2, 3)

# %%
report = check_gradients(model, tokens, [gold], per_param=8)
print(f"{report.pass_rate:.1%} of {report.checked} coordinates; {len(report.flipped)} flips")
for r in report.worst(3):
    print(r.param, r.index, f"{r.rel_error:.1e}")

# %%
# key biases cancel inside the softmax, so their gradient is exactly zero
print([r for r in report.results if r.param.endswith(".bk")][:2])
