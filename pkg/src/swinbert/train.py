"""Adam, the training loop, macro-averaged metrics, and embedding export."""

from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import checkpoint
from . import tensor as T
from .config import TrainConfig
from .data import LABEL_NAMES, Example
from .models import SwinBert
from .tensor import Tensor

log = logging.getLogger(__name__)


# -- optimizer -----------------------------------------------------------


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray | None], state: AdamState, cfg: TrainConfig) -> list[np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays and advances ``state``."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(grads) != len(params):
        raise ValueError(f"{len(grads)} gradients for {len(params)} parameters")
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        out.append(p - cfg.lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + cfg.eps))
    return out


class Adam:
    def __init__(self, params: list[Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.state = AdamState()

    def step(self) -> None:
        new = adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state, self.cfg)
        for p, d in zip(self.params, new):
            p.data = d

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def clip_grad_norm(params: list[Tensor], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


# -- metrics -------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    fscore: float
    confusion: np.ndarray  # rows = true (HC, AD), cols = predicted

    def report(self) -> str:
        cm = self.confusion
        lines = [
            f"accuracy  {self.accuracy:.4f}",
            f"precision {self.precision:.4f}",
            f"recall    {self.recall:.4f}",
            f"fscore    {self.fscore:.4f}",
            "confusion rows=true cols=pred",
            f"      {LABEL_NAMES[0]:>5} {LABEL_NAMES[1]:>5}",
        ]
        for c in range(2):
            lines.append(f"{LABEL_NAMES[c]:>5} {cm[c, 0]:>5d} {cm[c, 1]:>5d}")
        return "\n".join(lines) + "\n"


def confusion_matrix(y_true, y_pred, n_classes: int = 2) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def _ratio(num: float, den: float, what: str) -> float:
    if den == 0:
        warnings.warn(f"{what} is undefined (no samples); counted as 0", RuntimeWarning, stacklevel=3)
        return 0.0
    return num / den


def metrics_from_confusion(cm: np.ndarray) -> Metrics:
    """Macro-averaged precision/recall/F over both classes; undefined ratios count as 0."""
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("cannot compute metrics on an empty confusion matrix")
    precs, recs, fs = [], [], []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        p = _ratio(tp, cm[:, c].sum(), f"precision of class {c}")
        r = _ratio(tp, cm[c, :].sum(), f"recall of class {c}")
        precs.append(p)
        recs.append(r)
        fs.append(0.0 if p + r == 0 else 2 * p * r / (p + r))
    return Metrics(float(np.trace(cm)) / total, float(np.mean(precs)), float(np.mean(recs)), float(np.mean(fs)), cm)


def compute_metrics(y_true, y_pred) -> Metrics:
    return metrics_from_confusion(confusion_matrix(y_true, y_pred))


def predict(model: SwinBert, examples: list[Example], batch_size: int = 8) -> np.ndarray:
    preds = []
    with T.no_grad():
        for i in range(0, len(examples), batch_size):
            preds.append(np.argmax(model(examples[i : i + batch_size]).data, axis=-1))
    return np.concatenate(preds)


def evaluate(model: SwinBert, examples: list[Example], batch_size: int = 8) -> Metrics:
    if not examples:
        raise ValueError("cannot evaluate on an empty dataset")
    return compute_metrics([ex.label for ex in examples], predict(model, examples, batch_size))


# -- training ------------------------------------------------------------


@dataclass
class FitResult:
    steps: list[tuple[int, int, float]]  # (epoch, global step, loss)
    epoch_losses: list[float]
    checkpoints: list[Path]


def save_model(model: SwinBert, path: str | Path) -> None:
    checkpoint.save(path, model.state_dict())


def fit(
    model: SwinBert,
    examples: list[Example],
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    max_steps: int | None = None,
    on_epoch: Callable[[int, int], None] | None = None,
) -> FitResult:
    """Seeded mini-batch training with cross-entropy, gradient clipping and Adam.

    Writes ``epoch_NNN.ckpt`` after each epoch and ``loss.log`` (``epoch step loss``) when ``out_dir`` is given.
    ``on_epoch(epoch, global_step)`` runs after every epoch, e.g. for monitoring.
    """
    if not examples:
        raise ValueError("training set is empty")
    problems = cfg.problems()
    if problems:
        raise ValueError("; ".join(problems))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    params = [p for _, p in model.trainable()]
    opt = Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    steps: list[tuple[int, int, float]] = []
    epoch_losses: list[float] = []
    ckpts: list[Path] = []
    log_lines: list[str] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(examples))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            if max_steps is not None and step >= max_steps:
                break
            batch = [examples[i] for i in order[start : start + cfg.batch_size]]
            try:
                loss = T.cross_entropy(model(batch), [ex.label for ex in batch])
            except FloatingPointError as exc:
                raise RuntimeError(f"non-finite values at epoch {epoch} step {step + 1} (batch {[ex.id for ex in batch]}): {exc}") from None
            opt.zero_grad()
            loss.backward()
            if cfg.clip_norm is not None:
                gnorm = clip_grad_norm(params, cfg.clip_norm)
                if not np.isfinite(gnorm):
                    raise RuntimeError(f"non-finite gradient norm at epoch {epoch} step {step + 1}")
            opt.step()
            step += 1
            value = loss.item()
            losses.append(value)
            steps.append((epoch, step, value))
            log_lines.append(f"{epoch} {step} {value!r}")
        if not losses:
            break
        epoch_losses.append(float(np.mean(losses)))
        log.info("epoch %d mean loss %.6f", epoch, epoch_losses[-1])
        if out is not None:
            path = out / f"epoch_{epoch:03d}.ckpt"
            save_model(model, path)
            ckpts.append(path)
            checkpoint.atomic_write_bytes(out / "loss.log", ("\n".join(log_lines) + "\n").encode())
        if on_epoch is not None:
            on_epoch(epoch, step)
    return FitResult(steps, epoch_losses, ckpts)


# -- embeddings ----------------------------------------------------------


def export_embeddings(model: SwinBert, examples: list[Example], which: str, batch_size: int = 8) -> list[tuple[str, int, np.ndarray]]:
    rows = []
    with T.no_grad():
        for i in range(0, len(examples), batch_size):
            batch = examples[i : i + batch_size]
            feats = model.features(batch, which).data
            rows.extend((ex.id, ex.label, feats[j]) for j, ex in enumerate(batch))
    return rows


def write_embeddings(rows: list[tuple[str, int, np.ndarray]], path: str | Path) -> None:
    n = rows[0][2].size if rows else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "label", *(f"v{i}" for i in range(n))])
    for rid, label, vec in rows:
        w.writerow([rid, label, *(repr(float(v)) for v in vec)])
    checkpoint.atomic_write_bytes(path, buf.getvalue().encode("utf-8"))
