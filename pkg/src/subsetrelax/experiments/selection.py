"""Instance-wise feature selection on synthetic linear data.

An explainer maps each input ``x`` to per-feature logits; a relaxed
subset sample ``a`` from those logits gates the input, ``a * x``, and a
linear approximator predicts ``y`` from the gated input. Both are trained
jointly on squared error (a Gaussian ``log q``). At test time the
explainer picks the ``k`` features with the highest logits, no sampling.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, SubsetRelaxError
from ..gradients import relaxed_topk_vjp
from ..relaxation import successive_softmax, topk_mask
from ..samplers import UniformStream


@dataclass
class SelectionResult:
    selected: tuple[int, ...]
    mask: np.ndarray
    accuracy: np.ndarray  # per-epoch R^2 on held-out data with hard masks
    frequencies: np.ndarray  # per-feature selection rate on held-out data
    explainer_weights: np.ndarray
    explainer_bias: np.ndarray
    coef: np.ndarray
    intercept: float


def make_linear_data(n_samples: int, n_features: int, gen: np.random.Generator, null=False):
    x = gen.standard_normal((n_samples, n_features))
    y = gen.standard_normal(n_samples) if null else x[:, 0] + x[:, 1]
    return x, y


def _r2(y, pred):
    ss = np.sum((y - y.mean()) ** 2)
    return 1.0 - np.sum((y - pred) ** 2) / ss if ss > 0 else 0.0


def toy_feature_selection(
    n_features: int = 6,
    k: int = 2,
    t: float = 0.5,
    seed: int = 0,
    n_samples: int = 512,
    epochs: int = 30,
    batch_size: int = 64,
    lr: float = 0.1,
    null: bool = False,
) -> SelectionResult:
    """Train explainer + approximator on ``y = x0 + x1`` and report the chosen features.

    With ``null=True`` the target is independent noise. The returned
    ``selected`` is the most common hard top-k subset over held-out inputs.
    """
    d = n_features
    if d < 1 or k < 1 or k > d:
        raise SubsetRelaxError(f"need 1 <= k <= n_features, got k={k}, n_features={d}")
    rng = UniformStream(seed)
    gen = rng.generator
    x, y = make_linear_data(n_samples, d, gen, null)
    x_test, y_test = make_linear_data(n_samples, d, gen, null)

    we = np.zeros((d, d))
    be = np.zeros(d)
    coef = np.zeros(d)
    intercept = 0.0
    accuracy = np.empty(epochs)
    for epoch in range(epochs):
        order = gen.permutation(n_samples)
        for start in range(0, n_samples, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = x[idx], y[idx]
            m = idx.size
            scores = xb @ we + be - np.log(-np.log(rng.uniform((m, d))))
            steps, _ = successive_softmax(scores, k, t)
            gated = steps.sum(axis=0) * xb
            resid = (gated @ coef + intercept - yb) / m
            if not np.all(np.isfinite(resid)):
                raise DivergenceError(epoch)
            grad_gate = np.outer(resid, coef) * xb
            _, grad_scores = relaxed_topk_vjp(scores, k, t, grad_mass=grad_gate)
            coef = coef - lr * gated.T @ resid
            intercept -= lr * resid.sum()
            we = we - lr * xb.T @ grad_scores
            be = be - lr * grad_scores.sum(axis=0)
        hard = topk_mask(x_test @ we + be, k)
        accuracy[epoch] = _r2(y_test, (hard * x_test) @ coef + intercept)

    hard = topk_mask(x_test @ we + be, k)
    votes = Counter(tuple(int(i) for i in np.flatnonzero(row)) for row in hard)
    selected = min(votes.items(), key=lambda kv: (-kv[1], kv[0]))[0]
    mask = np.zeros(d, dtype=np.int8)
    mask[list(selected)] = 1
    return SelectionResult(selected, mask, accuracy, hard.mean(axis=0), we, be, coef, intercept)
