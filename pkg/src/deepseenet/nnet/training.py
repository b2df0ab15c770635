"""Minibatch training with holdout-accuracy early stopping."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .network import Network, cross_entropy
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 5
    lr: float = 1e-4
    seed: int = 0
    # epochs without holdout-accuracy improvement tolerated before stopping
    patience: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def to_dict(self):
        return asdict(self)


def accuracy(net: Network, x: np.ndarray, y: np.ndarray, batch_size: int = 64) -> float:
    if len(y) == 0:
        return float("nan")
    pred = np.concatenate([
        net.logits(x[i:i + batch_size]).argmax(axis=1) for i in range(0, len(x), batch_size)
    ])
    return float(np.mean(pred == np.asarray(y)))


def train(net: Network, train_set, holdout, config: TrainConfig | None = None):
    """Train ``net`` in place with Adam on softmax cross-entropy.

    ``train_set`` and ``holdout`` are ``(images, labels)`` pairs. Training
    runs for at most ``config.max_epochs`` epochs and stops early once the
    holdout accuracy has failed to increase for ``config.patience``
    consecutive epochs. Returns ``(net, history)`` where ``history`` holds
    one dict per completed epoch.
    """
    config = config or TrainConfig()
    x, y = train_set
    hx, hy = holdout
    y = np.asarray(y, dtype=np.int64)
    hy = np.asarray(hy, dtype=np.int64)
    if len(y) == 0 or len(hy) == 0:
        raise ValueError("training and holdout sets must be non-empty")
    counts = np.bincount(y, minlength=net.num_classes)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        warnings.warn(f"classes {missing} have no training examples", stacklevel=2)

    rng = np.random.default_rng(config.seed)
    opt = Adam(net, lr=config.lr)
    history = []
    best = -np.inf
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(y))
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            logits, caches = net.forward(x[idx])
            loss, dlogits = cross_entropy(logits, y[idx])
            grads, _ = net.backward(caches, dlogits)
            opt.step(grads)
            total += loss * len(idx)
            seen += len(idx)
        acc = accuracy(net, hx, hy)
        history.append({"epoch": epoch, "loss": total / seen, "holdout_accuracy": acc,
                        "steps": opt.state.t})
        log.info("epoch %d loss %.4f holdout acc %.4f", epoch, total / seen, acc)
        if acc > best:
            best, stale = acc, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return net, history
