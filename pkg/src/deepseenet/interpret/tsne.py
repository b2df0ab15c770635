"""Exact t-SNE (O(n^2) affinities and gradients)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateInputError(ValueError):
    pass


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    min_gain: float = 0.01
    seed: int = 0
    # log-perplexity tolerance and step cap for the bandwidth bisection
    tol: float = 1e-4
    max_bisection: int = 100

    def __post_init__(self):
        if self.perplexity < 2:
            raise ValueError("perplexity must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class TsneResult:
    embedding: np.ndarray
    kl_history: list = field(default_factory=list)
    perplexity: float = 0.0

    @property
    def initial_kl(self):
        return self.kl_history[0][1]

    @property
    def final_kl(self):
        return self.kl_history[-1][1]


def squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _row_distribution(d_row: np.ndarray, beta: float):
    # d_row excludes the point itself; shift by the minimum for stability
    shifted = d_row - d_row.min()
    p = np.exp(-shifted * beta)
    s = p.sum()
    p /= s
    # entropy in nats: H = log(sum) + beta * <d_shifted>
    h = np.log(s) + beta * np.dot(p, shifted)
    return p, h


def conditional_probabilities(x: np.ndarray, perplexity: float, tol: float = 1e-4,
                              max_steps: int = 100) -> np.ndarray:
    """Row-stochastic P(j|i) with Gaussian bandwidths matched to ``perplexity``.

    Each precision ``beta_i`` is found by bisection until the row entropy is
    within ``tol`` of ``log(perplexity)``.
    """
    n = x.shape[0]
    d = squared_distances(np.asarray(x, dtype=np.float64))
    target = np.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_steps):
            pi, h = _row_distribution(row, beta)
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:  # too flat: increase precision
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        p[i, np.arange(n) != i] = pi
    return p


def joint_probabilities(x, perplexity, tol=1e-4, max_steps=100) -> np.ndarray:
    cond = conditional_probabilities(x, perplexity, tol, max_steps)
    p = (cond + cond.T) / (2.0 * cond.shape[0])
    return p


def _q_terms(y):
    num = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(num, 0.0)
    return num, num / num.sum()


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], 1e-300))))


def initial_embedding(ids, seed: int, dim: int = 2) -> np.ndarray:
    """Small Gaussian start positions, each drawn from a stream keyed by the point id."""
    return np.stack([np.random.default_rng([seed, int(i)]).normal(0.0, 1e-4, dim)
                     for i in ids])


def tsne(vectors, config: TsneConfig | None = None, ids=None) -> TsneResult:
    """Embed ``vectors`` (n x d) into 2-D.

    ``ids`` are stable non-negative integer point identifiers used to seed
    the initial positions (default ``range(n)``). Points are processed in id
    order, so permuting rows together with their ids permutes the output
    rows and changes nothing else.
    """
    config = config or TsneConfig()
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError("vectors must be an n x d array with d >= 1")
    n = x.shape[0]
    if n < 4:
        raise ValueError("t-SNE needs at least 4 points")
    if not np.all(np.isfinite(x)):
        raise ValueError("vectors contain non-finite values")
    if np.all(x == x[0]):
        raise DegenerateInputError("all input points are identical")
    ids = np.arange(n) if ids is None else np.asarray(ids)
    if ids.shape != (n,) or len(np.unique(ids)) != n:
        raise ValueError("ids must be n distinct integers")
    # run in id order so a row permutation changes nothing numerically
    order = np.argsort(ids, kind="stable")
    x, ids = x[order], ids[order]

    perplexity = min(config.perplexity, (n - 1) / 3.0)
    p = joint_probabilities(x, perplexity, config.tol, config.max_bisection)
    p = np.maximum(p, 1e-12)

    y = initial_embedding(ids, config.seed)
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    history = [(0, kl_divergence(p, _q_terms(y)[1]))]
    for it in range(1, config.iterations + 1):
        exaggerate = it <= config.exaggeration_iters
        pe = p * config.early_exaggeration if exaggerate else p
        num, q = _q_terms(y)
        w = (pe - q) * num
        grad = 4.0 * (np.diag(w.sum(axis=1)) - w) @ y
        momentum = config.momentum if it <= config.momentum_switch else config.final_momentum
        same_sign = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, config.min_gain, out=gains)
        velocity = momentum * velocity - config.learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)
        if it % 50 == 0 or it == config.iterations:
            history.append((it, kl_divergence(p, _q_terms(y)[1])))
    out = np.empty_like(y)
    out[order] = y
    return TsneResult(out, history, perplexity)


def nearest_centroid_purity(embedding: np.ndarray, labels) -> float:
    """Fraction of points whose nearest class centroid is their own class."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    cents = np.stack([embedding[labels == c].mean(axis=0) for c in classes])
    d = ((embedding[:, None, :] - cents[None]) ** 2).sum(axis=2)
    return float(np.mean(classes[d.argmin(axis=1)] == labels))
