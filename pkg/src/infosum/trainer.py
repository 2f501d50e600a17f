"""Training loop: AdamW with decoupled decay, linear LR decay, ROUGE early stop.

Each optimizer step averages the composite loss over a mini-batch of
teacher-forced examples, backpropagates once, and applies the adaptive
update followed by the decoupled weight-decay shrink. Validation decodes
greedily each epoch and aggregates ROUGE-1/2/Lsum F-scores; training stops
once the aggregate fails to improve for `patience` consecutive validations.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from infosum.autograd import Tensor
from infosum.bpe import MergeTable, decode
from infosum.corpus import TrainingExample
from infosum.evalsuite import rouge_n, rouge_lsum
from infosum.model import ModelConfig, forward, greedy_decode, save_checkpoint
from infosum.objectives import example_loss


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 5e-5
    weight_decay: float = 1e-6
    batch_size: int = 8  # desk-scale default; 64 matches the reference setup
    patience: int = 3
    alpha_ot: float = 1.0
    alpha_anig: float = 1.0
    alpha_je: float = 1.0
    seed: int = 0
    val_every: int = 1  # epochs between validation decodes; 0 disables
    total_steps: int | None = None  # default: epochs * batches per epoch
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.patience < 1 or self.batch_size < 1:
            raise ValueError("patience and batch_size must be >= 1")


@dataclass
class ValidationHistory:
    scores: list[float] = field(default_factory=list)
    rouge_triples: list[tuple[float, float, float]] = field(default_factory=list)
    epochs: list[int] = field(default_factory=list)

    @property
    def best_index(self) -> int:
        best = 0
        for i, s in enumerate(self.scores):
            if s > self.scores[best]:  # strict: ties keep the earliest
                best = i
        return best


class NonFiniteLoss(RuntimeError):
    pass


def lr_at_step(step: int, config: TrainConfig, total_steps: int) -> float:
    """Linear decay from the base rate to zero, clamped at zero."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    return config.learning_rate * max(0.0, 1.0 - step / total_steps)


def early_stop_select(history: ValidationHistory, patience: int):
    """Best validation index once `patience` runs fail to beat it, else None."""
    if not history.scores:
        return None
    best = history.best_index
    if len(history.scores) - 1 - best >= patience:
        return best
    return None


class AdamW:
    """Adam moments with weight decay applied directly to the weights."""

    def __init__(self, params: dict[str, Tensor], config: TrainConfig):
        self.params = params
        self.config = config
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        c = self.config
        self.t += 1
        for name, p in self.params.items():
            g = p.grad
            if g is not None:
                self.m[name] = c.beta1 * self.m[name] + (1 - c.beta1) * g
                self.v[name] = c.beta2 * self.v[name] + (1 - c.beta2) * g * g
                mhat = self.m[name] / (1 - c.beta1**self.t)
                vhat = self.v[name] / (1 - c.beta2**self.t)
                p.data = p.data - lr * mhat / (np.sqrt(vhat) + c.eps)
            p.data = p.data - lr * c.weight_decay * p.data

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def validation_rouge(
    params: dict[str, Tensor],
    val: list[TrainingExample],
    table: MergeTable,
    model_config: ModelConfig,
) -> tuple[float, float, float]:
    """Greedy-decode the validation set and average ROUGE-1/2/Lsum F-scores."""
    r1 = r2 = rl = 0.0
    for ex in val:
        hyp_ids = greedy_decode(
            ex.source, params, model_config, table.bos_id, table.eos_id,
            max_length=model_config.max_summary,
        )
        hyp = decode(hyp_ids, table)
        ref = decode(ex.summary, table)
        r1 += rouge_n(hyp, ref, 1).f1
        r2 += rouge_n(hyp, ref, 2).f1
        rl += rouge_lsum(hyp, ref).f1
    n = max(len(val), 1)
    return r1 / n, r2 / n, rl / n


def _batch_loss(batch, params, model_config, train_config, rng):
    bundles = []
    for ex in batch:
        states = forward(ex, params, model_config, train_mode=True, rng=rng)
        bundles.append(
            example_loss(
                states,
                ex,
                params["ot_w"],
                alpha_ot=train_config.alpha_ot,
                alpha_anig=train_config.alpha_anig,
                alpha_je=train_config.alpha_je,
            )
        )
    total = bundles[0].total
    for b in bundles[1:]:
        total = total + b.total
    total = total * (1.0 / len(bundles))
    means = {
        term: float(np.mean([getattr(b, term).item() for b in bundles]))
        for term in ("mle", "ot", "anig", "je", "total")
    }
    for term, value in means.items():
        if not np.isfinite(value):
            raise NonFiniteLoss(f"non-finite loss term '{term}'")
    return total, means


def train(
    dataset: list[TrainingExample],
    val: list[TrainingExample],
    model_config: ModelConfig,
    train_config: TrainConfig,
    params: dict[str, Tensor],
    table: MergeTable,
    log_path=None,
    checkpoint_path=None,
) -> tuple[dict[str, Tensor], ValidationHistory]:
    """Run the optimization loop; returns final params and validation history.

    Deterministic for a fixed seed: batch shuffling, dropout, and validation
    all derive from one seeded generator, single-threaded.
    """
    if not dataset:
        raise ValueError("empty training set")
    rng = np.random.default_rng(train_config.seed)
    optimizer = AdamW(params, train_config)
    batches_per_epoch = (len(dataset) + train_config.batch_size - 1) // train_config.batch_size
    total_steps = train_config.total_steps or train_config.epochs * batches_per_epoch
    history = ValidationHistory()
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    step = 0
    last_means = {}

    try:
        for epoch in range(train_config.epochs):
            order = rng.permutation(len(dataset))
            epoch_terms: dict[str, list[float]] = {}
            for start in range(0, len(dataset), train_config.batch_size):
                batch = [dataset[i] for i in order[start : start + train_config.batch_size]]
                optimizer.zero_grad()
                loss, means = _batch_loss(batch, params, model_config, train_config, rng)
                loss.backward()
                lr = lr_at_step(step, train_config, total_steps)
                optimizer.step(lr)
                step += 1
                for term, value in means.items():
                    epoch_terms.setdefault(term, []).append(value)
            last_means = {k: float(np.mean(v)) for k, v in epoch_terms.items()}

            record = {
                "epoch": epoch,
                "losses": last_means,
                "lr": lr_at_step(step, train_config, total_steps),
            }
            if val and train_config.val_every and (epoch + 1) % train_config.val_every == 0:
                r1, r2, rl = validation_rouge(params, val, table, model_config)
                aggregate = (r1 + r2 + rl) / 3.0
                improved = not history.scores or aggregate > max(history.scores)
                history.scores.append(aggregate)
                history.rouge_triples.append((r1, r2, rl))
                history.epochs.append(epoch)
                record["rouge"] = {"r1": r1, "r2": r2, "rlsum": rl}
                record["aggregate"] = aggregate
                if improved and checkpoint_path:
                    save_checkpoint(checkpoint_path, params, model_config)
                if early_stop_select(history, train_config.patience) is not None:
                    if log_fh:
                        record["ts"] = time.time()
                        log_fh.write(json.dumps(record, sort_keys=True) + "\n")
                    break
            if log_fh:
                record["ts"] = time.time()
                log_fh.write(json.dumps(record, sort_keys=True) + "\n")
    finally:
        if log_fh:
            log_fh.close()

    if checkpoint_path and not (val and train_config.val_every):
        save_checkpoint(checkpoint_path, params, model_config)
    return params, history
