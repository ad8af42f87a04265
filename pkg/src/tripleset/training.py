"""Mini-batch training loop, batch prediction and run configuration."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import numerics as nx
from .data import Corpus, MatchingMode
from .decode import ExtractedTriple, extract_triples
from .matching_loss import batch_set_loss
from .metrics import EvalReport, score
from .model import ModelConfig, SetPredictionModel, parameter_group

log = logging.getLogger(__name__)

# Fine-tuning rates for a pretrained encoder; see TrainConfig for the desk defaults.
FINETUNE_ENCODER_LR = 1e-5
FINETUNE_DECODER_LR = 2e-5


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    # from-scratch toy encoder: the fine-tuning rates above barely move it; 2x ratio kept
    encoder_lr: float = 5e-4
    decoder_lr: float = 1e-3
    seed: int = 13
    clip_norm: float | None = 1.0
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    dev_fraction: float = 0.1
    target_f1: float | None = None  # stop once dev F1 reaches this

    def __post_init__(self):
        if self.encoder_lr <= 0 or self.decoder_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.dev_fraction < 1.0:
            raise ValueError("dev_fraction must be in [0, 1)")
        self.betas = tuple(self.betas)


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)  # ModelConfig overrides; vocab/t come from the corpus
    training: TrainConfig = field(default_factory=TrainConfig)
    data: dict = field(default_factory=lambda: {"train": None, "test": None,
                                                "format": "native-jsonl", "mode": "exact"})
    output: dict = field(default_factory=lambda: {"checkpoint_dir": "checkpoint", "report": None})

    @classmethod
    def from_dict(cls, raw: dict) -> RunConfig:
        unknown = set(raw) - {"model", "training", "data", "output"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        base = cls()
        training = raw.get("training", {})
        fields = {f.name for f in dataclasses.fields(TrainConfig)}
        bad = set(training) - fields
        if bad:
            raise ValueError(f"unknown training options: {sorted(bad)}")
        return cls(model=dict(raw.get("model", {})),
                   training=TrainConfig(**training),
                   data={**base.data, **raw.get("data", {})},
                   output={**base.output, **raw.get("output", {})})

    @classmethod
    def load(cls, path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"model": dict(self.model), "training": dataclasses.asdict(self.training),
                "data": dict(self.data), "output": dict(self.output)}


def model_config_for(corpus: Corpus, overrides: dict) -> ModelConfig:
    opts = dict(overrides)
    opts.setdefault("vocab_size", len(corpus.vocab))
    opts.setdefault("t", len(corpus.relations))
    return ModelConfig(**opts)


def make_optimizer(model: SetPredictionModel, cfg: TrainConfig) -> nx.OptimizerState:
    enc = [p for n, p in model.params.items() if parameter_group(n) == "encoder"]
    dec = [p for n, p in model.params.items() if parameter_group(n) != "encoder"]
    return nx.OptimizerState(
        groups=[nx.ParamGroup(enc, cfg.encoder_lr), nx.ParamGroup(dec, cfg.decoder_lr)],
        betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm)


def gold_sets(model: SetPredictionModel, corpus: Corpus, indices):
    return [corpus[i].gold_set(corpus.relations, model.config.m, offset=1) for i in indices]


def predict_corpus(model: SetPredictionModel, corpus, batch_size: int = 32,
                   threshold: float = 0.0) -> list[list[ExtractedTriple]]:
    """Eval-mode extraction for every sentence, in corpus order."""
    sentences = list(corpus)
    out: list[list[ExtractedTriple]] = []
    null = model.config.null_relation
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start:start + batch_size]
        batch = model.forward([s.token_ids for s in chunk])
        for b, sent in enumerate(chunk):
            preds = batch.sentence(b)
            out.append(extract_triples(preds, len(sent.tokens), null_relation=null, offset=1,
                                       threshold=threshold))
    return out


def evaluate(model: SetPredictionModel, corpus: Corpus, mode=MatchingMode.EXACT) -> EvalReport:
    return score(predict_corpus(model, corpus), corpus, mode, corpus.relations)


def split_dev(corpus: Corpus, fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Hold out ``fraction`` of the sentences; with 0 the dev set is the training set."""
    n = len(corpus)
    if fraction <= 0 or n < 2:
        return corpus, corpus
    order = np.random.default_rng(seed).permutation(n)
    k = max(1, int(round(fraction * n)))
    dev_idx, train_idx = sorted(order[:k]), sorted(order[k:])
    return corpus.subset(train_idx, "train"), corpus.subset(dev_idx, "dev")


@dataclass
class TrainResult:
    model: SetPredictionModel
    history: list[dict]
    best_f1: float
    best_epoch: int


def train(corpus: Corpus, cfg: TrainConfig, model: SetPredictionModel | None = None,
          model_config: ModelConfig | None = None, dev: Corpus | None = None,
          on_record: Callable[[dict], None] | None = None, mode=MatchingMode.EXACT) -> TrainResult:
    """Train with the matching loss; keep the parameters with the best dev F1.

    With ``dev`` unset, ``cfg.dev_fraction`` of ``corpus`` is held out. Records
    (one dict per step and per epoch) go to ``on_record``. The best parameters
    are loaded back into the returned model.
    """
    if dev is None:
        corpus, dev = split_dev(corpus, cfg.dev_fraction, cfg.seed)
    if model is None:
        model = SetPredictionModel(model_config or model_config_for(corpus, {}), seed=cfg.seed)
    emit = on_record or (lambda rec: None)
    opt = make_optimizer(model, cfg)
    params = opt.params()
    order_rng = np.random.default_rng(cfg.seed + 1)
    drop_rng = np.random.default_rng(cfg.seed + 2)
    lr_info = {"encoder_lr": cfg.encoder_lr, "decoder_lr": cfg.decoder_lr}

    best_state = {n: a.copy() for n, a in model.state_dict().items()}
    best_f1, best_epoch = -1.0, 0
    history: list[dict] = []
    if cfg.epochs == 0:
        best_f1 = evaluate(model, dev, mode).overall.f1
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = order_rng.permutation(len(corpus))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            golds = gold_sets(model, corpus, idx)
            with nx.Tape() as tape:
                out = model.forward([corpus[i].token_ids for i in idx], train=True, rng=drop_rng)
                loss, _ = batch_set_loss(golds, out)
                tape.backward(loss)
            norm = nx.adamw_step(params, opt)
            nx.zero_grad(params)
            step += 1
            losses.append(loss.item())
            emit({"kind": "step", "epoch": epoch, "step": step, "loss": loss.item(),
                  "grad_norm": norm, **lr_info})
        report = evaluate(model, dev, mode)
        f1 = report.overall.f1
        rec = {"kind": "epoch", "epoch": epoch, "step": step, "loss": float(np.mean(losses)),
               "dev_f1": f1, "seconds": round(time.perf_counter() - t0, 3), **lr_info}
        history.append(rec)
        emit(rec)
        if f1 > best_f1:
            best_f1, best_epoch = f1, epoch
            best_state = {n: a.copy() for n, a in model.state_dict().items()}
        if cfg.target_f1 is not None and f1 >= cfg.target_f1:
            break
    model.load_state_dict(best_state)
    return TrainResult(model, history, best_f1, best_epoch)
