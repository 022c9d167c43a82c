"""Stochastic neighbor embedding by matching sampled neighbor sequences.

For each point ``i`` in a batch, neighbor weights are
``w(i, j) = exp(-|x_i - x_j|^2)`` over the other batch points. A hard
neighbor sequence ``i_1..i_k`` is drawn from those weights in input
space; in embedding space a relaxed sample from the same kind of weights
gives step vectors ``a^1..a^k``. The loss is

    mean_i  sum_j  exp(-(j - 1)) * -log(a^j[i_j] + 1e-8)

so closer neighbors count more. Only distances enter, so the loss is
invariant to rotating the embedding.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DivergenceError, SubsetRelaxError
from ..gradients import relaxed_topk_vjp
from ..relaxation import successive_softmax
from ..samplers import UniformStream, gumbel_keys_from_uniforms, hard_topk_batch
from .metrics import one_nn_error, trustworthiness

BIAS = 1e-8
LOG_WEIGHT_FLOOR = np.log(1e-30)


@dataclass(frozen=True)
class EmbeddingConfig:
    d_in: int
    d_out: int = 2
    k: int = 1
    t: float = 0.1
    epochs: int = 200
    batch_size: int = 60
    lr: float = 0.01
    seed: int = 0
    init: str = "random"  # or "identity"
    init_scale: float = 0.1

    def __post_init__(self):
        # d_out == d_in is allowed so an identity map can be checked
        if not 1 <= self.d_out <= self.d_in:
            raise SubsetRelaxError(f"need 1 <= d_out <= d_in, got {self.d_out}, {self.d_in}")
        if self.k < 1 or self.epochs < 0 or self.batch_size < 2:
            raise SubsetRelaxError("k must be >= 1, epochs >= 0, batch_size >= 2")
        if not self.t > 0 or self.lr < 0:
            raise SubsetRelaxError("t must be positive and lr nonnegative")
        if self.init not in ("random", "identity"):
            raise SubsetRelaxError(f"unknown init {self.init!r}")


def neighbor_log_weights(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log of pairwise neighbor weights with self-pairs removed.

    Returns ``(logw, others)`` of shape ``(m, m-1)``: ``logw[i, j]`` is
    ``-|x_i - x_others[i, j]|^2``.
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[0]
    others = _others(m)
    diff = x[:, None, :] - x[others]
    return -np.sum(diff * diff, axis=-1), others


def neighbor_weights(x: np.ndarray) -> np.ndarray:
    """Full symmetric ``exp(-|x_i - x_j|^2)`` matrix with a zero diagonal."""
    x = np.asarray(x, dtype=np.float64)
    d = x[:, None, :] - x[None, :, :]
    w = np.exp(-np.sum(d * d, axis=-1))
    np.fill_diagonal(w, 0.0)
    return w


def _others(m: int) -> np.ndarray:
    idx = np.arange(m)
    return np.array([np.delete(idx, i) for i in idx]).reshape(m, m - 1)


def sample_neighbor_sequences(x, k: int, u: np.ndarray) -> np.ndarray:
    """Ordered hard neighbor samples per point, as positions into ``others``.

    Uses Gumbel top-k on log-weights, which picks the same items as
    reservoir keys ``u ** (1/w)`` but does not underflow when weights are
    as small as ``exp(-|x_i - x_j|^2)`` gets in high dimensions.
    """
    logw, _ = neighbor_log_weights(x)
    return hard_topk_batch(gumbel_keys_from_uniforms(logw, u), k)


def rss_sne_loss(y, seqs, u, k: int, t: float, grad: bool = False):
    """Neighbor-matching loss of embedding ``y`` for fixed samples and noise.

    ``seqs`` (``m x k``) are the hard neighbor positions from input space
    and ``u`` (``m x (m-1)``) the uniforms for the embedding-space Gumbel
    keys. Returns the loss, or ``(loss, dloss/dy)`` when ``grad`` is set.
    """
    y = np.asarray(y, dtype=np.float64)
    m = y.shape[0]
    others = _others(m)
    diff = y[:, None, :] - y[others]
    raw = -np.sum(diff * diff, axis=-1)
    floored = raw < LOG_WEIGHT_FLOOR
    scores = np.maximum(raw, LOG_WEIGHT_FLOOR) - np.log(-np.log(u))
    steps, _ = successive_softmax(scores, k, t)
    rows = np.arange(m)
    loss = 0.0
    grad_steps = np.zeros_like(steps)
    for j in range(k):
        pj = steps[j][rows, seqs[:, j]]
        wj = np.exp(-j)
        loss += wj * float(np.mean(-np.log(pj + BIAS)))
        grad_steps[j][rows, seqs[:, j]] = -wj / (pj + BIAS) / m
    if not grad:
        return loss
    _, g = relaxed_topk_vjp(scores, k, t, grad_steps=grad_steps)
    g[floored] = 0.0
    # d raw[i, j] / d y_i = -2 diff, d raw[i, j] / d y_other = +2 diff
    contrib = g[..., None] * diff
    dy = -2.0 * contrib.sum(axis=1)
    np.add.at(dy, others, 2.0 * contrib)
    return loss, dy


def three_clusters(n_per: int = 20, d: int = 10, spread: float = 3.0, seed: int = 0):
    """Three isotropic unit-variance Gaussian clusters with random centers."""
    gen = np.random.default_rng(seed)
    centers = gen.standard_normal((3, d)) * spread
    x = np.concatenate([c + gen.standard_normal((n_per, d)) for c in centers])
    labels = np.repeat(np.arange(3), n_per)
    return x, labels


@dataclass
class SNEResult:
    weights: np.ndarray
    embedding: np.ndarray
    loss_trace: np.ndarray
    train_loss: np.ndarray
    trust_init: float
    trust_final: float
    one_nn_error: float | None
    degenerate: bool
    config: dict = field(default_factory=dict)


def _init_weights(cfg: EmbeddingConfig, gen: np.random.Generator) -> np.ndarray:
    if cfg.init == "identity":
        return np.eye(cfg.d_in, cfg.d_out)
    return gen.standard_normal((cfg.d_in, cfg.d_out)) * cfg.init_scale


def _batches(n: int, size: int, order: np.ndarray) -> list[np.ndarray]:
    out = [order[s:s + size] for s in range(0, n, size)]
    # a trailing batch of one point has no neighbors; fold it into the previous one
    if len(out) > 1 and out[-1].size < 2:
        out[-2] = np.concatenate([out[-2], out.pop()])
    return out


def rss_sne_train(data, cfg: EmbeddingConfig, labels=None, trust_k: int = 12) -> SNEResult:
    """Train a linear embedding ``x -> x @ W`` with plain SGD.

    Neighbors are sampled only within each batch. ``loss_trace`` holds one
    value per epoch computed on evaluation samples and noise fixed before
    training, so it changes only when ``W`` does.
    """
    x = np.asarray(data, dtype=np.float64)
    n, d_in = x.shape
    if d_in != cfg.d_in:
        raise SubsetRelaxError(f"data has {d_in} columns, config expects {cfg.d_in}")
    if n < 2:
        raise SubsetRelaxError("need at least two points")
    rng = UniformStream(cfg.seed)
    init_rng, eval_rng, train_rng = rng.spawn(3)
    w = _init_weights(cfg, init_rng.generator)
    k = cfg.k
    if min(b.size for b in _batches(n, cfg.batch_size, np.arange(n))) <= k:
        raise SubsetRelaxError(f"k={k} needs every batch to hold at least {k + 1} points")

    eval_batches = []
    for b in _batches(n, cfg.batch_size, np.arange(n)):
        m = b.size
        seqs = sample_neighbor_sequences(x[b], k, eval_rng.uniform((m, m - 1)))
        eval_batches.append((b, seqs, eval_rng.uniform((m, m - 1))))

    def eval_loss(w):
        y = x @ w
        total = sum(rss_sne_loss(y[b], s, u, k, cfg.t) * b.size for b, s, u in eval_batches)
        return total / n

    can_trust = n > trust_k and 2 * n - 3 * trust_k - 1 > 0
    trust_init = trustworthiness(x, x @ w, trust_k) if can_trust else float("nan")
    trace = np.empty(cfg.epochs)
    train = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for b in _batches(n, cfg.batch_size, train_rng.generator.permutation(n)):
            m = b.size
            xb = x[b]
            seqs = sample_neighbor_sequences(xb, k, train_rng.uniform((m, m - 1)))
            loss, dy = rss_sne_loss(xb @ w, seqs, train_rng.uniform((m, m - 1)), k, cfg.t, grad=True)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            epoch_loss += loss * m
            w = w - cfg.lr * xb.T @ dy
        train[epoch] = epoch_loss / n
        trace[epoch] = eval_loss(w)

    y = x @ w
    spread = float(np.ptp(y, axis=0).max()) if n else 0.0
    degenerate = spread < 1e-12
    if degenerate:
        warnings.warn("embedding collapsed to a single point", RuntimeWarning, stacklevel=2)
    return SNEResult(
        weights=w,
        embedding=y,
        loss_trace=trace,
        train_loss=train,
        trust_init=trust_init,
        trust_final=trustworthiness(x, y, trust_k) if can_trust else float("nan"),
        one_nn_error=one_nn_error(y, labels) if labels is not None else None,
        degenerate=degenerate,
        config=asdict(cfg),
    )
