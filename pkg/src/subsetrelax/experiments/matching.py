"""Learn subset-distribution weights from hard samples of a target."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..distributions import as_weights
from ..errors import DivergenceError, SubsetRelaxError
from ..gradients import relaxed_topk_vjp
from ..relaxation import successive_softmax, topk_mask
from ..samplers import UniformStream, gumbel_keys_from_uniforms, log_weights

_BIAS = 1e-8


@dataclass
class MatchResult:
    log_weights: np.ndarray
    loss_trace: np.ndarray
    train_loss: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()


def _hard_masks(target_logw, k, u):
    return topk_mask(gumbel_keys_from_uniforms(target_logw, u), k).astype(np.float64)


def _loss_and_grad(theta, masks, u, k, t):
    scores = theta[None, :] - np.log(-np.log(u))
    steps, _ = successive_softmax(scores, k, t)
    mass = steps.sum(axis=0)
    b = masks.shape[0]
    loss = float(-np.sum(masks * np.log(mass / k + _BIAS)) / b)
    grad_mass = -masks / (mass + k * _BIAS) / b
    _, grad_scores = relaxed_topk_vjp(scores, k, t, grad_mass=grad_mass)
    return loss, grad_scores.sum(axis=0)


def train_match_distribution(
    target_w,
    k: int,
    t: float = 0.5,
    steps: int = 2000,
    lr: float = 0.1,
    seed: int = 0,
    batch_size: int = 128,
    eval_size: int = 256,
) -> MatchResult:
    """Fit log-weights so relaxed samples match hard samples from a target.

    Each step draws ``batch_size`` exact subsets from the target and as
    many relaxed subsets from the current log-weights (initialized to 0),
    and takes one SGD step on the cross-entropy
    ``-sum_i S_i log(a_i / k)`` averaged over the batch.

    ``loss_trace`` is the same loss on an evaluation batch whose noise is
    drawn once up front, so it depends only on the parameters;
    ``train_loss`` is the noisy per-step minibatch loss.
    """
    target = as_weights(target_w)
    if k < 1 or k > target.n_positive:
        raise SubsetRelaxError(f"k={k} must be in [1, {target.n_positive}]")
    if steps < 0 or lr < 0 or batch_size < 1 or eval_size < 1:
        raise SubsetRelaxError("steps, lr must be nonnegative; batch sizes positive")
    n = target.n
    target_logw = log_weights(target)
    rng = UniformStream(seed)
    eval_rng, train_rng = rng.spawn(2)
    eval_masks = _hard_masks(target_logw, k, eval_rng.uniform((eval_size, n)))
    eval_u = eval_rng.uniform((eval_size, n))

    theta = np.zeros(n)
    trace = np.empty(steps)
    train = np.empty(steps)
    for step in range(steps):
        masks = _hard_masks(target_logw, k, train_rng.uniform((batch_size, n)))
        loss, grad = _loss_and_grad(theta, masks, train_rng.uniform((batch_size, n)), k, t)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise DivergenceError(step)
        train[step] = loss
        trace[step], _ = _loss_and_grad(theta, eval_masks, eval_u, k, t)
        theta = theta - lr * grad
    config = dict(k=k, t=t, steps=steps, lr=lr, seed=seed,
                  batch_size=batch_size, eval_size=eval_size)
    return MatchResult(theta, trace, train, config)
