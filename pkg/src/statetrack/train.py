"""Training loop: grouped Adam, warmup, per-epoch logging, NaN guard."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from statetrack.corpus import Dialogue, DialogueState, Schema, Vocabulary
from statetrack.model import (
    ModelConfig,
    TurnSample,
    compute_loss,
    make_sample,
    track_dialogue,
    turn_tokens,
)
from statetrack.numerics import Adam, ParamStore
from statetrack.state import (
    joint_goal_accuracy,
    per_domain_joint_accuracy,
    slot_accuracy,
)

DEFAULT_LRS = {"enc": 4e-4, "dec": 1e-3, "gcn": 1e-2}


@dataclass
class TrainSettings:
    epochs: int
    seed: int
    batch_size: int = 8
    lr: dict = field(default_factory=lambda: dict(DEFAULT_LRS))
    warmup: float = 0.1
    eval_every: int = 10          # epochs between validation passes
    early_stop_joint: float | None = None


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; message carries diagnostics."""


def build_samples(dialogues: list[Dialogue], schema: Schema, vocab: Vocabulary,
                  max_len: int, packed: bool = False) -> list[TurnSample]:
    """One sample per turn, with the gold previous state as input."""
    samples = []
    pairs = schema.pairs()
    for dlg in dialogues:
        prev = DialogueState.empty(pairs)
        prev_tokens: list[str] = []
        for turn in dlg.turns:
            samples.append(make_sample(prev, prev_tokens, turn_tokens(turn),
                                       turn.gold_state, schema, vocab, max_len,
                                       packed=packed))
            prev = turn.gold_state
            prev_tokens = turn_tokens(turn)
    return samples


def evaluate(dialogues: list[Dialogue], params: ParamStore, config: ModelConfig,
             schema: Schema, vocab: Vocabulary,
             use_predicted_prev: bool = True) -> dict:
    predicted = [track_dialogue(dlg, params, config, schema, vocab,
                                use_predicted_prev=use_predicted_prev)
                 for dlg in dialogues]
    return {
        "joint_goal_accuracy": joint_goal_accuracy(predicted, dialogues),
        "slot_accuracy": slot_accuracy(predicted, dialogues),
        "per_domain_joint_accuracy":
            per_domain_joint_accuracy(predicted, dialogues, schema),
        "n_dialogues": len(dialogues),
        "n_turns": sum(len(d.turns) for d in dialogues),
        "use_predicted_prev": use_predicted_prev,
    }


def _diagnostics(params: ParamStore) -> str:
    lines = []
    for name, t in params.items():
        norm = float(np.sqrt((t.data ** 2).sum()))
        gnorm = (float(np.sqrt((t.grad ** 2).sum()))
                 if t.grad is not None else float("nan"))
        if not np.isfinite(norm) or not np.isfinite(gnorm):
            lines.append(f"  {name}: |w|={norm:.3e} |g|={gnorm:.3e}")
    return "\n".join(lines) if lines else "  (all parameter norms finite)"


def train(train_dialogues: list[Dialogue], valid_dialogues: list[Dialogue] | None,
          schema: Schema, vocab: Vocabulary, config: ModelConfig,
          params: ParamStore, settings: TrainSettings,
          log_fn=None) -> list[dict]:
    """Optimize ``params`` in place; returns per-epoch log rows.

    Row fields: epoch, op_loss, gen_loss (means over the epoch's steps) and
    valid_joint, empty except on validation epochs. Deterministic for a
    fixed seed: shuffling, dropout, and batching all derive from it.
    """
    samples = build_samples(train_dialogues, schema, vocab, config.max_seq_len,
                            packed=config.packed_positions)
    if not samples:
        raise ValueError("training corpus has no turns")
    n_batches = (len(samples) + settings.batch_size - 1) // settings.batch_size
    optimizer = Adam(params, settings.lr, total_steps=settings.epochs * n_batches,
                     warmup=settings.warmup)
    shuffle_rng = random.Random(settings.seed)
    dropout_rng = np.random.default_rng(settings.seed)
    order = list(range(len(samples)))
    rows: list[dict] = []
    for epoch in range(1, settings.epochs + 1):
        shuffle_rng.shuffle(order)
        op_sum = gen_sum = 0.0
        for b in range(n_batches):
            batch = [samples[i] for i in
                     order[b * settings.batch_size:(b + 1) * settings.batch_size]]
            params.zero_grad()
            loss, parts = compute_loss(batch, params, config, schema, vocab,
                                       rng=dropout_rng)
            if not np.isfinite(float(loss.data)):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {b + 1} "
                    f"(op={parts['op_loss']:.4g} gen={parts['gen_loss']:.4g})\n"
                    + _diagnostics(params))
            loss.backward()
            optimizer.step()
            op_sum += parts["op_loss"]
            gen_sum += parts["gen_loss"]
        row = {"epoch": epoch,
               "op_loss": op_sum / n_batches,
               "gen_loss": gen_sum / n_batches,
               "valid_joint": ""}
        should_eval = (valid_dialogues is not None
                       and (epoch % settings.eval_every == 0
                            or epoch == settings.epochs))
        if should_eval:
            metrics = evaluate(valid_dialogues, params, config, schema, vocab,
                               use_predicted_prev=True)
            row["valid_joint"] = f"{metrics['joint_goal_accuracy']:.6f}"
        rows.append(row)
        if log_fn is not None:
            log_fn(row)
        if (should_eval and settings.early_stop_joint is not None
                and float(row["valid_joint"]) >= settings.early_stop_joint):
            break
    return rows
