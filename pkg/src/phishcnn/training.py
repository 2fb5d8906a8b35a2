"""Mini-batch training: seeded dataset splitting and shuffling, the epoch
loop with Adam updates and per-epoch validation, early stopping against the
best validation loss, and a harness that compares the three variants.

Everything downstream of the seed is deterministic: the same seed, config and
data reproduce bit-identical parameter trajectories.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics, model, nncore
from .tokenizer import EncodedDocument


class TrainingError(Exception):
    """Training could not start or diverged (NaN loss)."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 20
    learning_rate: float = 0.0015
    seed: int = 0
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    early_stop_patience: int | None = 3
    variant: str = "full"

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if any(f <= 0 for f in self.split_fractions):
            raise ValueError("split fractions must be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None
    val_accuracy: float | None


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    durations_s: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    model_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "epochs": [{"epoch": e.epoch, "train_loss": e.train_loss,
                        "val_loss": e.val_loss, "val_accuracy": e.val_accuracy}
                       for e in self.epochs],
            "best_epoch": self.best_epoch,
            "model_path": self.model_path,
            "timing": {"epoch_durations_s": self.durations_s},
        }


def split_dataset(docs: list[EncodedDocument],
                  fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
                  seed: int = 0):
    """Seeded shuffle followed by a contiguous train/val/test cut. Validation
    and test sizes are floor allocations; the remainder goes to train."""
    n = len(docs)
    n_val = int(n * fractions[1])
    n_test = int(n * fractions[2])
    n_train = n - n_val - n_test
    if n_train < 1 or n_val < 1 or n_test < 1:
        raise ValueError(f"{n} documents are too few for fractions {fractions}")
    order = shuffle_epoch(docs, nncore.make_rng(seed))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def shuffle_epoch(docs: list, rng: np.random.Generator) -> list:
    """Fisher-Yates shuffle driven by the supplied generator."""
    order = list(docs)
    for i in range(len(order) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def score_documents(params: model.ModelParams, docs: list[EncodedDocument]
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Inference-mode scores and labels for a document list."""
    scores = np.empty(len(docs))
    labels = np.empty(len(docs), dtype=int)
    for i, doc in enumerate(docs):
        scores[i], _ = model.forward(params, doc, mode="infer")
        labels[i] = doc.label
    return scores, labels


def _validation_pass(params, docs):
    if not docs:
        return None, None
    total_loss = 0.0
    correct = 0
    for doc in docs:
        prob, _ = model.forward(params, doc, mode="infer")
        loss, _ = nncore.bce_loss(prob, doc.label)
        total_loss += loss
        correct += (prob >= 0.5) == bool(doc.label)
    return total_loss / len(docs), correct / len(docs)


def train(params: model.ModelParams, config: TrainConfig,
          train_docs: list[EncodedDocument],
          val_docs: list[EncodedDocument]) -> tuple[model.ModelParams, TrainReport]:
    """Run the epoch loop and return the best-validation-loss checkpoint
    (the final state when no validation set is given) plus the report.

    Batches are re-shuffled every epoch; the last short batch is kept.
    Gradients are averaged over the batch in a fixed accumulation order, so
    runs are reproducible. A NaN batch loss aborts with a diagnostic.
    """
    config.validate()
    if not train_docs:
        raise TrainingError("empty training split")
    report = TrainReport()
    if config.epochs == 0:
        return params, report

    rng = nncore.make_rng(config.seed)
    tensors = params.tensors()
    state = nncore.AdamState.for_params(tensors, lr=config.learning_rate)
    best: model.ModelParams | None = None
    best_loss = np.inf
    best_stats: EpochStats | None = None
    stale = 0

    for epoch in range(1, config.epochs + 1):
        started = time.monotonic()
        order = shuffle_epoch(train_docs, rng)
        epoch_loss = 0.0
        for batch_idx in range(0, len(order), config.batch_size):
            batch = order[batch_idx:batch_idx + config.batch_size]
            batch_loss = 0.0
            grad_sums: dict[str, np.ndarray] | None = None
            for doc in batch:
                prob, cache = model.forward(params, doc, mode="train", rng=rng)
                loss, _ = nncore.bce_loss(prob, doc.label)
                batch_loss += loss
                grads = model.backward(params, cache, doc.label)
                if grad_sums is None:
                    grad_sums = grads
                else:
                    for name in grad_sums:
                        grad_sums[name] += grads[name]
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, "
                    f"batch {batch_idx // config.batch_size + 1}")
            for name in grad_sums:
                grad_sums[name] /= len(batch)
            nncore.adam_step(tensors, grad_sums, state)
            epoch_loss += batch_loss
        train_loss = epoch_loss / len(order)
        val_loss, val_accuracy = _validation_pass(params, val_docs)
        stats = EpochStats(epoch=epoch, train_loss=train_loss,
                           val_loss=val_loss, val_accuracy=val_accuracy)
        report.epochs.append(stats)
        report.durations_s.append(time.monotonic() - started)

        if val_loss is not None and val_loss < best_loss:
            best_loss = val_loss
            best = params.copy()
            best_stats = stats
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if config.early_stop_patience is not None and stale >= config.early_stop_patience:
                break

    if best is None:
        best = params.copy()
        best_stats = report.epochs[-1]
        report.best_epoch = report.epochs[-1].epoch
    best.seed = config.seed
    best.epochs_trained = len(report.epochs)
    best.final_train_loss = best_stats.train_loss
    if best_stats.val_loss is not None:
        best.final_val_loss = best_stats.val_loss
    return best, report


def compare_variants(docs: list[EncodedDocument], char_vocab_size: int,
                     word_vocab_size: int, maxlen_1: int, maxlen_2: int,
                     config: TrainConfig, d: int = 100, filters: int = 32,
                     kernel: int = 8, threshold: float = 0.5) -> dict:
    """Train all three variants on one encoded corpus and evaluate each on the
    held-out test cut. Returns a comparison dict with one row per variant and
    a rendered table; the observed ranking is recorded, not enforced."""
    train_docs, val_docs, test_docs = split_dataset(
        docs, config.split_fractions, config.seed)
    rows = []
    for variant in model.VARIANTS:
        spec = model.ArchitectureSpec(
            variant=variant,
            char_vocab_size=char_vocab_size if variant != "word" else None,
            word_vocab_size=word_vocab_size if variant != "character" else None,
            maxlen_1=maxlen_1 if variant != "word" else None,
            maxlen_2=maxlen_2 if variant != "character" else None,
            d=d, filters=filters, kernel=kernel)
        params = model.build_model(spec, nncore.make_rng(config.seed))
        started = time.monotonic()
        trained, _ = train(params, config, train_docs, val_docs)
        elapsed = time.monotonic() - started
        scores, labels = score_documents(trained, test_docs)
        report = metrics.evaluate(scores, labels, threshold)
        rows.append({"model": variant, "accuracy": report.accuracy,
                     "precision": report.precision, "tpr": report.tpr,
                     "f1": report.f1, "auc": report.auc,
                     "train_time_s": elapsed})
    ranked = sorted(rows, key=lambda r: (r["accuracy"] or 0.0), reverse=True)
    observation = ("held-out accuracy ranking: "
                   + " >= ".join(r["model"] for r in ranked))
    return {"rows": rows, "observation": observation,
            "table": metrics.render_comparison(rows)}
