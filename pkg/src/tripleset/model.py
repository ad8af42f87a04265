"""Sentence encoder plus non-autoregressive triple-set decoder.

The encoder is a small post-LN transformer over whitespace token ids with
learned positions; it produces one vector per position, boundary markers
included. The decoder turns ``m`` learned query vectors into ``m`` output
embeddings through layers of (unmasked self-attention over the queries,
cross-attention into the sentence, feed-forward). Each output embedding is
read out into one candidate triple: a relation distribution and four
pointer distributions over sentence positions.

Everything is batched: sentences are right-padded and padding is masked out
of attention keys and pointer softmaxes, so padded content never leaks into
the predictions of real positions.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .numerics import Tensor

PAD, UNK, CLS, SEP = 0, 1, 2, 3
N_SPECIAL = 4
MASK_VALUE = -1e9


@dataclass
class ModelConfig:
    vocab_size: int
    t: int  # relation types, the no-triple class included (last index)
    d: int = 64
    l_max: int = 64
    m: int = 10
    encoder_layers: int = 2
    decoder_layers: int = 3
    heads: int = 4
    dropout: float = 0.1
    ff_dim: int | None = None

    def __post_init__(self):
        if self.ff_dim is None:
            self.ff_dim = 4 * self.d
        if self.d % self.heads:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.t < 2:
            raise ValueError("t must be at least 2 (one relation plus the no-triple class)")
        if self.vocab_size <= N_SPECIAL:
            raise ValueError("vocab_size must leave room for the reserved ids")
        if self.l_max < 3:
            raise ValueError("l_max must be at least 3")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def null_relation(self) -> int:
        return self.t - 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(**d)


# ---------------------------------------------------------------- parameters

def _attention_shapes(d: int) -> dict[str, tuple[int, ...]]:
    return {"wq": (d, d), "bq": (d,), "wk": (d, d), "bk": (d,),
            "wv": (d, d), "bv": (d,), "wo": (d, d), "bo": (d,)}


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, ff = cfg.d, cfg.ff_dim
    shapes: dict[str, tuple[int, ...]] = {
        "enc.tok_emb": (cfg.vocab_size, d),
        "enc.pos_emb": (cfg.l_max, d),
        "enc.emb_ln.g": (d,), "enc.emb_ln.b": (d,),
    }
    ffn = {"w1": (d, ff), "b1": (ff,), "w2": (ff, d), "b2": (d,)}
    for k in range(cfg.encoder_layers):
        p = f"enc.{k}"
        shapes.update({f"{p}.attn.{n}": s for n, s in _attention_shapes(d).items()})
        shapes.update({f"{p}.ln1.g": (d,), f"{p}.ln1.b": (d,)})
        shapes.update({f"{p}.ff.{n}": s for n, s in ffn.items()})
        shapes.update({f"{p}.ln2.g": (d,), f"{p}.ln2.b": (d,)})
    shapes["queries"] = (cfg.m, d)
    shapes.update({"dec.query_ln.g": (d,), "dec.query_ln.b": (d,)})
    for k in range(cfg.decoder_layers):
        p = f"dec.{k}"
        shapes.update({f"{p}.self.{n}": s for n, s in _attention_shapes(d).items()})
        shapes.update({f"{p}.ln1.g": (d,), f"{p}.ln1.b": (d,)})
        shapes.update({f"{p}.cross.{n}": s for n, s in _attention_shapes(d).items()})
        shapes.update({f"{p}.ln2.g": (d,), f"{p}.ln2.b": (d,)})
        shapes.update({f"{p}.ff.{n}": s for n, s in ffn.items()})
        shapes.update({f"{p}.ln3.g": (d,), f"{p}.ln3.b": (d,)})
    shapes["head.w_r"] = (cfg.t, d)
    for i in range(1, 9):
        shapes[f"head.w{i}"] = (d, d)
    for i in range(1, 5):
        shapes[f"head.v{i}"] = (d,)
    return shapes


def init_parameters(cfg: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Seeded init: normal(0, 1/sqrt(fan_in)) weights, zero biases, unit LN gains."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if name.endswith(".g"):
            data = np.ones(shape)
        elif leaf.startswith("b") and len(shape) == 1:
            data = np.zeros(shape)
        elif len(shape) == 1:  # pointer vectors v1..v4
            data = rng.normal(0.0, 1.0 / np.sqrt(cfg.d), shape)
        else:
            fan_in = shape[0] if leaf.startswith("w") and name.startswith(("enc.", "dec.")) else cfg.d
            data = rng.normal(0.0, 1.0 / np.sqrt(fan_in), shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


def parameter_group(name: str) -> str:
    """Coarse grouping used for learning rates and gradient-coverage checks."""
    if name.startswith("enc."):
        return "encoder"
    if name.startswith(("queries", "dec.query_ln")):
        return "queries"
    if name.startswith("dec."):
        return "decoder"
    return "heads"


# ---------------------------------------------------------------- outputs

@dataclass
class TriplePrediction:
    relation: np.ndarray
    sub_start: np.ndarray
    sub_end: np.ndarray
    obj_start: np.ndarray
    obj_end: np.ndarray


HEAD_NAMES = ("relation", "sub_start", "sub_end", "obj_start", "obj_end")


@dataclass
class PredictionSet:
    """The m candidate triples of one sentence; tensors keep their tape links.

    ``relation`` is [m, t]; the four pointer tensors are [m, l].
    """
    relation: Tensor
    sub_start: Tensor
    sub_end: Tensor
    obj_start: Tensor
    obj_end: Tensor

    def __len__(self) -> int:
        return self.relation.shape[0]

    def __getitem__(self, j: int) -> TriplePrediction:
        return TriplePrediction(*(getattr(self, h).data[j].copy() for h in HEAD_NAMES))

    def __iter__(self):
        return (self[j] for j in range(len(self)))

    @property
    def length(self) -> int:
        return self.sub_start.shape[1]

    def tensors(self) -> tuple[Tensor, ...]:
        return tuple(getattr(self, h) for h in HEAD_NAMES)

    def permuted(self, order) -> PredictionSet:
        order = np.asarray(order)
        return PredictionSet(*(nx.index(t, order) for t in self.tensors()))

    @classmethod
    def from_arrays(cls, relation, sub_start, sub_end, obj_start, obj_end) -> PredictionSet:
        return cls(*(Tensor(np.asarray(a, dtype=np.float64))
                     for a in (relation, sub_start, sub_end, obj_start, obj_end)))


@dataclass
class EncodedBatch:
    states: Tensor  # [B, L, d]
    token_ids: np.ndarray  # [B, L], markers included, PAD beyond each length
    lengths: np.ndarray  # [B], marker-inclusive

    @property
    def key_mask(self) -> np.ndarray:
        return np.arange(self.token_ids.shape[1])[None, :] < self.lengths[:, None]


@dataclass
class EncodedSentence:
    states: Tensor  # [l, d]
    token_ids: np.ndarray

    @property
    def length(self) -> int:
        return len(self.token_ids)


@dataclass
class PredictionBatch:
    relation: Tensor  # [B, m, t]
    sub_start: Tensor  # [B, m, L]
    sub_end: Tensor
    obj_start: Tensor
    obj_end: Tensor
    lengths: np.ndarray
    attention: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.relation.shape[0]

    def tensors(self) -> tuple[Tensor, ...]:
        return tuple(getattr(self, h) for h in HEAD_NAMES)

    def sentence(self, b: int) -> PredictionSet:
        l = int(self.lengths[b])
        rel = nx.index(self.relation, b)
        spans = [nx.index(t, (b, slice(None), slice(0, l))) for t in self.tensors()[1:]]
        return PredictionSet(rel, *spans)


# ---------------------------------------------------------------- layers

def _linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = nx.matmul(x, w)
    return y if b is None else y + b


def _split_heads(x: Tensor, heads: int) -> Tensor:
    bsz, n, d = x.shape
    return nx.transpose(nx.reshape(x, (bsz, n, heads, d // heads)), (0, 2, 1, 3))


def multi_head_attention(params, prefix: str, queries: Tensor, keys: Tensor, heads: int,
                         key_mask: np.ndarray | None = None):
    """Scaled dot-product attention; returns (output [B, Lq, d], weights [B, h, Lq, Lk])."""
    p = lambda n: params[f"{prefix}.{n}"]  # noqa: E731
    bsz, lq, d = queries.shape
    q = _split_heads(_linear(queries, p("wq"), p("bq")), heads)
    k = _split_heads(_linear(keys, p("wk"), p("bk")), heads)
    v = _split_heads(_linear(keys, p("wv"), p("bv")), heads)
    scores = nx.matmul(q, nx.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(d // heads))
    if key_mask is not None:
        bias = np.where(key_mask, 0.0, MASK_VALUE)[:, None, None, :]
        scores = scores + bias
    weights = nx.softmax(scores, axis=-1)
    ctx = nx.matmul(weights, v)
    ctx = nx.reshape(nx.transpose(ctx, (0, 2, 1, 3)), (bsz, lq, d))
    return _linear(ctx, p("wo"), p("bo")), weights


def _ffn(params, prefix: str, x: Tensor) -> Tensor:
    p = lambda n: params[f"{prefix}.{n}"]  # noqa: E731
    return _linear(nx.gelu(_linear(x, p("w1"), p("b1"))), p("w2"), p("b2"))


def _ln(params, prefix: str, x: Tensor) -> Tensor:
    return nx.layer_norm(x, params[f"{prefix}.g"], params[f"{prefix}.b"])


# ---------------------------------------------------------------- model

class SetPredictionModel:
    """Parameters plus the forward pass. Training mutates ``params`` in place."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_parameters(config, seed)
        expected = parameter_shapes(config)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ValueError(f"parameter names do not match config: missing={missing[:5]} extra={extra[:5]}")
        bad = [(n, self.params[n].shape, s) for n, s in expected.items() if self.params[n].shape != s]
        if bad:
            lines = "; ".join(f"{n}: have {have}, config expects {want}" for n, have, want in bad[:5])
            raise ValueError(f"parameter shapes do not match config: {lines}")

    # -- input preparation
    def prepare(self, sentences) -> tuple[np.ndarray, np.ndarray]:
        """Add boundary markers, map unknown ids to UNK and right-pad."""
        cfg = self.config
        seqs = []
        for toks in sentences:
            ids = np.asarray(toks, dtype=np.intp).reshape(-1)
            ids = np.where((ids < 0) | (ids >= cfg.vocab_size), UNK, ids)
            if len(ids) + 2 > cfg.l_max:
                raise ValueError(f"sentence of {len(ids)} tokens exceeds l_max={cfg.l_max} with markers")
            seqs.append(np.concatenate([[CLS], ids, [SEP]]))
        lengths = np.array([len(s) for s in seqs], dtype=np.intp)
        out = np.full((len(seqs), int(lengths.max())), PAD, dtype=np.intp)
        for i, s in enumerate(seqs):
            out[i, :len(s)] = s
        return out, lengths

    def encode_batch(self, sentences, train: bool = False, rng=None,
                     padded: tuple[np.ndarray, np.ndarray] | None = None) -> EncodedBatch:
        cfg, params = self.config, self.params
        ids, lengths = padded if padded is not None else self.prepare(sentences)
        L = ids.shape[1]
        x = nx.embedding(params["enc.tok_emb"], ids) + nx.index(params["enc.pos_emb"], slice(0, L))
        x = nx.dropout(_ln(params, "enc.emb_ln", x), cfg.dropout, rng, train)
        mask = np.arange(L)[None, :] < lengths[:, None]
        for k in range(cfg.encoder_layers):
            p = f"enc.{k}"
            a, _ = multi_head_attention(params, f"{p}.attn", x, x, cfg.heads, mask)
            x = _ln(params, f"{p}.ln1", x + nx.dropout(a, cfg.dropout, rng, train))
            f = _ffn(params, f"{p}.ff", x)
            x = _ln(params, f"{p}.ln2", x + nx.dropout(f, cfg.dropout, rng, train))
        return EncodedBatch(x, ids, lengths)

    def encode(self, tokens, train: bool = False, rng=None) -> EncodedSentence:
        enc = self.encode_batch([tokens], train=train, rng=rng)
        return EncodedSentence(nx.index(enc.states, 0), enc.token_ids[0])

    def decode_batch(self, enc: EncodedBatch, train: bool = False, rng=None,
                     keep_attention: bool = False) -> PredictionBatch:
        cfg, params = self.config, self.params
        bsz = enc.states.shape[0]
        mask = enc.key_mask
        attention: dict[str, np.ndarray] = {}
        h = _ln(params, "dec.query_ln", params["queries"])
        h = nx.dropout(h + Tensor(np.zeros((bsz, cfg.m, cfg.d))), cfg.dropout, rng, train)
        for k in range(cfg.decoder_layers):
            p = f"dec.{k}"
            # no causal mask: every query sees every other query
            a, w_self = multi_head_attention(params, f"{p}.self", h, h, cfg.heads, None)
            h = _ln(params, f"{p}.ln1", h + nx.dropout(a, cfg.dropout, rng, train))
            c, w_cross = multi_head_attention(params, f"{p}.cross", h, enc.states, cfg.heads, mask)
            h = _ln(params, f"{p}.ln2", h + nx.dropout(c, cfg.dropout, rng, train))
            f = _ffn(params, f"{p}.ff", h)
            h = _ln(params, f"{p}.ln3", h + nx.dropout(f, cfg.dropout, rng, train))
            if keep_attention:
                attention[f"{p}.self"] = w_self.data.copy()
                attention[f"{p}.cross"] = w_cross.data.copy()
        return self._heads(h, enc, attention)

    def _heads(self, h: Tensor, enc: EncodedBatch, attention) -> PredictionBatch:
        params = self.params
        bsz, m, d = h.shape
        L = enc.states.shape[1]
        relation = nx.softmax(nx.matmul(h, nx.transpose(params["head.w_r"])), axis=-1)
        pad_bias = np.where(enc.key_mask, 0.0, MASK_VALUE)[:, None, :]
        pointers = []
        for i in range(4):
            wq, wk, v = params[f"head.w{2 * i + 1}"], params[f"head.w{2 * i + 2}"], params[f"head.v{i + 1}"]
            from_query = nx.reshape(nx.matmul(h, wq), (bsz, m, 1, d))
            from_tokens = nx.reshape(nx.matmul(enc.states, wk), (bsz, 1, L, d))
            hidden = nx.tanh(from_query + from_tokens)
            logits = nx.reshape(nx.matmul(hidden, nx.reshape(v, (d, 1))), (bsz, m, L))
            pointers.append(nx.softmax(logits + pad_bias, axis=-1))
        return PredictionBatch(relation, *pointers, lengths=enc.lengths, attention=attention)

    def forward(self, sentences, train: bool = False, rng=None, keep_attention: bool = False) -> PredictionBatch:
        enc = self.encode_batch(sentences, train=train, rng=rng)
        return self.decode_batch(enc, train=train, rng=rng, keep_attention=keep_attention)

    def decode_set(self, encoded: EncodedSentence, train: bool = False, rng=None) -> PredictionSet:
        states = nx.reshape(encoded.states, (1,) + encoded.states.shape)
        enc = EncodedBatch(states, encoded.token_ids[None, :], np.array([encoded.length]))
        return self.decode_batch(enc, train=train, rng=rng).sentence(0)

    def predict(self, tokens) -> PredictionSet:
        return self.forward([tokens]).sentence(0)

    # -- persistence
    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.params.items()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        for name, arr in arrays.items():
            self.params[name].data = np.array(arr, dtype=np.float64)


def save_model(model: SetPredictionModel, directory, extra: dict | None = None) -> None:
    """Write ``params.bin`` and a ``config.json`` sidecar into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nx.save_params(directory / "params.bin", model.state_dict())
    record = {"model": model.config.to_dict()}
    if extra:
        record.update(extra)
    (directory / "config.json").write_text(json.dumps(record, indent=2, sort_keys=True))


def load_model(directory) -> tuple[SetPredictionModel, dict]:
    directory = Path(directory)
    record = json.loads((directory / "config.json").read_text())
    cfg = ModelConfig.from_dict(record["model"])
    arrays = nx.load_params(directory / "params.bin")
    params = {n: Tensor(a, requires_grad=True, name=n) for n, a in arrays.items()}
    return SetPredictionModel(cfg, params), record
