"""Shared test oracles: finite-difference gradients and comparison metrics."""

import numpy as np

from annealtune.textcnn import forward, loss


def finite_difference_gradients(model, ids, label, mask_seed, eps=1e-4):
    """Central differences over every parameter, replaying identical
    dropout masks through a reseeded generator."""

    def loss_at() -> float:
        rng = np.random.default_rng(mask_seed)
        probs, _ = forward(model, ids, train_mode=True, rng=rng)
        return loss(probs, label)

    grads = {}
    for name, arr in model.parameters().items():
        grad = np.zeros_like(arr)
        flat, gflat = arr.ravel(), grad.ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            f_plus = loss_at()
            flat[i] = original - eps
            f_minus = loss_at()
            flat[i] = original
            gflat[i] = (f_plus - f_minus) / (2 * eps)
        grads[name] = grad
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
