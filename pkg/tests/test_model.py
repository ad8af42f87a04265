import numpy as np
import pytest

from tripleset import numerics as nx
from tripleset.matching_loss import batch_set_loss
from tripleset.model import (CLS, SEP, UNK, ModelConfig, SetPredictionModel, load_model, parameter_group,
                             save_model)
from conftest import random_gold_set


def test_shapes_and_normalization(tiny_model):
    out = tiny_model.forward([[5, 6, 7], [8]])
    assert out.relation.shape == (2, 4, 4)
    assert out.sub_start.shape == (2, 4, 5)
    one = out.sentence(1)
    assert len(one) == 4 and one.length == 3
    for t in one.tensors():
        np.testing.assert_allclose(t.data.sum(-1), 1.0, atol=1e-12)
        assert np.all(t.data >= 0)


def test_single_sentence_paths_agree_with_batch(tiny_model):
    a = tiny_model.predict([5, 6, 7, 9])
    b = tiny_model.forward([[5, 6, 7, 9], [4, 4]]).sentence(0)
    enc = tiny_model.encode([5, 6, 7, 9])
    c = tiny_model.decode_set(enc)
    for x, y, z in zip(a.tensors(), b.tensors(), c.tensors()):
        np.testing.assert_allclose(x.data, y.data, atol=1e-12)
        np.testing.assert_allclose(x.data, z.data, atol=1e-12)


def test_padding_does_not_change_a_sentence(tiny_model):
    short = tiny_model.forward([[5, 6]]).sentence(0)
    padded = tiny_model.forward([[5, 6], list(range(4, 14))])
    assert padded.sub_end.data[0, :, 4:].max() < 1e-300
    for x, y in zip(short.tensors(), padded.sentence(0).tensors()):
        np.testing.assert_allclose(x.data, y.data, atol=1e-12)


def test_prepare_adds_markers_and_maps_unknown(tiny_model):
    ids, lengths = tiny_model.prepare([[5, 999, -1]])
    assert ids.tolist() == [[CLS, 5, UNK, UNK, SEP]] and lengths.tolist() == [5]
    with pytest.raises(ValueError, match="l_max"):
        tiny_model.prepare([list(range(15))])


def test_seeded_init_is_deterministic(tiny_config):
    a, b, c = (SetPredictionModel(tiny_config, seed=s) for s in (1, 1, 2))
    assert all(np.array_equal(a.params[n].data, b.params[n].data) for n in a.params)
    assert not np.array_equal(a.params["queries"].data, c.params["queries"].data)


def test_dropout_only_in_train_mode(tiny_model):
    x = [[5, 6, 7]]
    e1, e2 = tiny_model.forward(x), tiny_model.forward(x)
    np.testing.assert_array_equal(e1.relation.data, e2.relation.data)
    t1 = tiny_model.forward(x, train=True, rng=np.random.default_rng(0))
    assert not np.allclose(t1.relation.data, e1.relation.data)


def test_query_permutation_is_equivariant(tiny_model):
    x = [[5, 6, 7, 8]]
    base = tiny_model.forward(x)
    order = np.array([2, 0, 3, 1])
    tiny_model.params["queries"].data = tiny_model.params["queries"].data[order]
    moved = tiny_model.forward(x)
    for a, b in zip(base.tensors(), moved.tensors()):
        np.testing.assert_allclose(a.data[:, order], b.data, atol=1e-10)


def test_self_attention_is_unmasked(tiny_model):
    out = tiny_model.forward([[5, 6, 7]], keep_attention=True)
    for k in range(tiny_model.config.decoder_layers):
        w = out.attention[f"dec.{k}.self"]  # [B, heads, m, m]
        upper = w[..., np.triu_indices(4, 1)[0], np.triu_indices(4, 1)[1]]
        assert np.all(upper > 0)
        np.testing.assert_allclose(w.sum(-1), 1.0, atol=1e-12)


def test_cross_attention_carries_the_sentence(tiny_model):
    a = tiny_model.forward([[5, 6, 7]]).relation.data
    b = tiny_model.forward([[20, 21, 22]]).relation.data
    assert not np.allclose(a, b)
    for k in range(tiny_model.config.decoder_layers):
        for name in ("wv", "bv"):
            p = tiny_model.params[f"dec.{k}.cross.{name}"]
            p.data = np.zeros_like(p.data)
    a = tiny_model.forward([[5, 6, 7]]).relation.data
    b = tiny_model.forward([[20, 21, 22]]).relation.data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_gradient_reaches_every_group(tiny_model):
    rng = np.random.default_rng(0)
    sents = [[5, 6, 7, 8], [9, 10]]
    with nx.Tape() as tape:
        out = tiny_model.forward(sents)
        golds = [random_gold_set(rng, 4, 4, int(n), n=1) for n in out.lengths]
        loss, _ = batch_set_loss(golds, out)
        tape.backward(loss)
    norms = {}
    for name, p in tiny_model.params.items():
        assert p.grad is not None and p.grad.shape == p.shape, name
        norms.setdefault(parameter_group(name), 0.0)
        norms[parameter_group(name)] += float(np.sum(p.grad ** 2))
    assert set(norms) == {"encoder", "queries", "decoder", "heads"}
    assert all(v > 0 for v in norms.values())


def test_checkpoint_round_trip(tiny_model, tmp_path):
    save_model(tiny_model, tmp_path, extra={"note": 1})
    back, record = load_model(tmp_path)
    assert record["note"] == 1 and back.config == tiny_model.config
    x = [[5, 6, 7]]
    np.testing.assert_array_equal(back.forward(x).obj_end.data, tiny_model.forward(x).obj_end.data)


def test_config_validation_and_mismatch():
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=10, t=4, d=15, heads=4)
    cfg = ModelConfig(vocab_size=10, t=3, d=8, heads=2, m=2, encoder_layers=1, decoder_layers=1)
    other = ModelConfig(vocab_size=10, t=3, d=8, heads=2, m=3, encoder_layers=1, decoder_layers=1)
    with pytest.raises(ValueError, match="queries"):
        SetPredictionModel(other, SetPredictionModel(cfg).params)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg and cfg.null_relation == 2
