"""Loss, learning-rate schedule, optimizer, and the training loop.

All randomness derives from the configured seed: parameter init from the
seed itself, the epoch shuffle from (seed, epoch), and dropout from
(seed, step), so a run resumed from a checkpoint continues bit-identically.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tensor, log_softmax, mul, tensor_sum
from .bleu import bleu_n
from .config import ModelConfig
from .decoding import greedy_decode
from .errors import TrainingDiverged
from .model import Sample, TranslationModel
from .tokenizer import PAD, Vocabulary


def lsce_loss(logits: Tensor, targets, alpha: float, pad_id: int | None = None,
              literal_form: bool = False) -> Tensor:
    """Label-smoothed cross-entropy averaged over non-pad positions.

    The target class receives weight 1 - alpha and every other class
    alpha / (V - 1). Positions whose target equals ``pad_id`` are excluded
    from the average. ``literal_form`` swaps the two weights (an alternative
    convention kept behind a flag for comparison runs).
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if logits.ndim != 2:
        raise ShapeError(f"logits must be [positions, vocab], got {logits.shape}")
    n, v = logits.shape
    if v < 2:
        raise ShapeError("vocabulary must have at least two classes")
    targets = list(targets)
    if len(targets) != n:
        raise ShapeError(
            f"{len(targets)} targets for {n} logit rows"
        )
    if literal_form:
        on_target, off_target = alpha, (1.0 - alpha) / (v - 1)
    else:
        on_target, off_target = 1.0 - alpha, alpha / (v - 1)

    weights = np.zeros((n, v))
    active = 0
    for row, t in enumerate(targets):
        if not 0 <= t < v:
            raise IndexError(f"target id {t} outside vocabulary of {v}")
        if pad_id is not None and t == pad_id:
            continue
        weights[row, :] = off_target
        weights[row, t] = on_target
        active += 1
    if active == 0:
        raise ValueError("loss over padding only: no active target positions")
    log_probs = log_softmax(logits, axis=-1)
    total = tensor_sum(mul(log_probs, Tensor(weights)))
    return mul(total, -1.0 / active)


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Half-cosine decay from base_lr to zero over total_steps."""
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    if total_steps < 1:
        raise ValueError(f"total_steps must be positive, got {total_steps}")
    if step >= total_steps:
        return 0.0
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


class AdamOptimizer:
    """Adam with bias correction; moments are addressable for checkpoints."""

    def __init__(self, params: list, beta1: float = 0.9, beta2: float = 0.98,
                 eps: float = 1e-9):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self, lr: float, t: int) -> None:
        """Apply one update; ``t`` is the 1-based global optimizer step."""
        if t < 1:
            raise ValueError(f"optimizer step index must be >= 1, got {t}")
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p in self.params:
            g = p.grad
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_gradients(params: list, max_norm: float) -> float:
    """Scale all gradients down to a global norm bound; returns the norm."""
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    learning_rate: float = 0.0
    best_bleu4: float = -1.0
    best_checkpoint: str | None = None
    loss_history: list = field(default_factory=list)


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0x5E, epoch])


def _dropout_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0xD0, step])


def encode_targets(samples: list, vocab: Vocabulary) -> None:
    for sample in samples:
        sample.token_ids = vocab.encode(sample.text)


def sample_loss(model: TranslationModel, sample: Sample, training: bool,
                rng: np.random.Generator | None) -> Tensor:
    """Teacher-forced loss: predict tokens[1:] from the shifted prefix."""
    ids = sample.token_ids
    if len(ids) < 2:
        raise ValueError(f"sample {sample.sample_id!r} has no encoded text")
    log_probs = model.forward_log_probs(sample, ids[:-1], training=training,
                                        rng=rng)
    return lsce_loss(log_probs, ids[1:], model.config.label_smoothing,
                     pad_id=PAD,
                     literal_form=model.config.smoothing_literal_form)


def evaluate_bleu(model: TranslationModel, samples: list,
                  vocab: Vocabulary) -> float:
    """Greedy-decode BLEU-4 over a sample list (0-100)."""
    hyps = []
    refs = []
    for sample in samples:
        result = greedy_decode(model.step_fn(sample),
                               max_len=model.config.max_decode_len)
        hyps.append(vocab.decode([*result.tokens]))
        refs.append(sample.text)
    return bleu_n(hyps, refs, n=4).bleu_4


def train(config: ModelConfig, samples: list, vocab: Vocabulary,
          out_dir: str | None = None, model: TranslationModel | None = None,
          state: TrainState | None = None,
          optimizer: AdamOptimizer | None = None,
          stop_after_epoch: int | None = None,
          log=lambda msg: None) -> tuple:
    """Run the full loop; returns (model, state, optimizer).

    Pass the model/state/optimizer triple restored from a checkpoint to
    resume; epochs already completed are skipped and the derived per-epoch
    and per-step seeds make the continuation identical to an uninterrupted
    run. ``stop_after_epoch`` interrupts early without changing the
    schedule horizon.
    """
    config.validate()
    if not samples:
        raise ValueError("training requires at least one sample")
    if model is None:
        model = TranslationModel(config, vocab_size=len(vocab))
    if state is None:
        state = TrainState()
    if optimizer is None:
        optimizer = AdamOptimizer(model.store.parameters())
    encode_targets(samples, vocab)

    batches_per_epoch = max(1, math.ceil(len(samples) / config.batch_size))
    total_steps = config.epochs * batches_per_epoch
    params = model.store.parameters()
    log(f"model parameters: {model.parameter_count()}")

    from .checkpoint import save_checkpoint  # local import breaks the cycle

    last_epoch = config.epochs if stop_after_epoch is None \
        else min(config.epochs, stop_after_epoch)
    for epoch in range(state.epoch, last_epoch):
        order = _epoch_rng(config.seed, epoch).permutation(len(samples))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            lr = cosine_lr(state.step, total_steps, config.learning_rate) \
                if config.scheduler == "cosine" else config.learning_rate
            model.store.zero_grad()
            drop_rng = _dropout_rng(config.seed, state.step)
            # One summed graph per batch: a single backward pass accumulates
            # each parameter gradient once, in fixed sample order.
            total = None
            for idx in batch:
                loss = sample_loss(model, samples[int(idx)], True, drop_rng)
                if not math.isfinite(float(loss.data)):
                    raise TrainingDiverged(state.step)
                total = loss if total is None else total + loss
            total = mul(total, 1.0 / len(batch))
            batch_loss = float(total.data)
            total.backward()
            if config.max_grad_norm > 0.0:
                clip_gradients(params, config.max_grad_norm)
            optimizer.step(lr, state.step + 1)
            state.step += 1
            state.learning_rate = lr
            state.loss_history.append(batch_loss)
        state.epoch = epoch + 1

        if config.validate_every > 0 and (epoch + 1) % config.validate_every == 0:
            score = evaluate_bleu(model, samples, vocab)
            log(f"epoch {epoch + 1}: loss {state.loss_history[-1]:.4f} "
                f"validation BLEU-4 {score:.2f}")
            if score > state.best_bleu4:
                state.best_bleu4 = score
                if out_dir is not None:
                    os.makedirs(out_dir, exist_ok=True)
                    path = os.path.join(out_dir, "best.ckpt")
                    state.best_checkpoint = path
                    save_checkpoint(path, model, vocab, state, optimizer)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(os.path.join(out_dir, "last.ckpt"), model, vocab,
                        state, optimizer)
    return model, state, optimizer
