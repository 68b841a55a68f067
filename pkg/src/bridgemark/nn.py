"""Small feed-forward network with manual backpropagation.

Architecture: an hourglass MLP with element-wise skip connections from
the two down-sizing layers to the equal-width up-sizing layers, a smooth
SiLU nonlinearity, and a zero-initialised linear output layer (so a
fresh model predicts the zero field).  A conditioning vector enters as a
scale-shift (FiLM) on the down-sizing layers; the scale-shift maps are
zero-initialised so conditioning starts as a pass-through.

Everything is plain numpy; gradients are hand-written and checked
against finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

HIDDEN_WIDTHS = (256, 128, 64)


def silu(z):
    return z / (1.0 + np.exp(-z))


def dsilu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


def init_params(in_dim: int, out_dim: int, cond_dim: int, seed: int,
                widths=HIDDEN_WIDTHS) -> dict:
    """He-scaled hidden layers, zero output layer, zero FiLM maps."""
    w1, w2, w3 = widths
    rng = np.random.default_rng(seed)

    def dense(n_out, n_in):
        return rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))

    return {
        "W1": dense(w1, in_dim), "b1": np.zeros(w1),
        "W2": dense(w2, w1), "b2": np.zeros(w2),
        "W3": dense(w3, w2), "b3": np.zeros(w3),
        "W4": dense(w2, w3), "b4": np.zeros(w2),
        "W5": dense(w1, w2), "b5": np.zeros(w1),
        "W6": np.zeros((out_dim, w1)), "b6": np.zeros(out_dim),
        # FiLM scale/shift for the two down-sizing layers
        "S1": np.zeros((w1, cond_dim)), "s1": np.zeros(w1),
        "T1": np.zeros((w1, cond_dim)), "t1": np.zeros(w1),
        "S2": np.zeros((w2, cond_dim)), "s2": np.zeros(w2),
        "T2": np.zeros((w2, cond_dim)), "t2": np.zeros(w2),
    }


def forward(params: dict, x: np.ndarray, cond: np.ndarray, cache: bool = False):
    """Batched forward pass.

    x is (B, in_dim), cond is (B, cond_dim); returns (B, out_dim) and,
    when cache=True, the intermediates needed by `backward`.
    """
    p = params
    z1 = x @ p["W1"].T + p["b1"]
    a1 = silu(z1)
    g1 = 1.0 + cond @ p["S1"].T + p["s1"]
    h1 = a1 * g1 + cond @ p["T1"].T + p["t1"]

    z2 = h1 @ p["W2"].T + p["b2"]
    a2 = silu(z2)
    g2 = 1.0 + cond @ p["S2"].T + p["s2"]
    h2 = a2 * g2 + cond @ p["T2"].T + p["t2"]

    z3 = h2 @ p["W3"].T + p["b3"]
    a3 = silu(z3)

    z4 = a3 @ p["W4"].T + p["b4"]
    a4 = silu(z4) + h2          # skip from the 128-wide down layer

    z5 = a4 @ p["W5"].T + p["b5"]
    a5 = silu(z5) + h1          # skip from the 256-wide down layer

    out = a5 @ p["W6"].T + p["b6"]
    if not cache:
        return out
    return out, (x, cond, z1, a1, g1, h1, z2, a2, g2, h2, z3, a3, z4, z5, a4, a5)


def backward(params: dict, cache, dout: np.ndarray) -> dict:
    """Gradients of sum(dout * out) with respect to every parameter."""
    p = params
    x, cond, z1, a1, g1, h1, z2, a2, g2, h2, z3, a3, z4, z5, a4, a5 = cache
    grads = {}

    grads["W6"] = dout.T @ a5
    grads["b6"] = dout.sum(0)
    da5 = dout @ p["W6"]

    dz5 = da5 * dsilu(z5)
    dh1 = da5.copy()            # skip branch
    grads["W5"] = dz5.T @ a4
    grads["b5"] = dz5.sum(0)
    da4 = dz5 @ p["W5"]

    dz4 = da4 * dsilu(z4)
    dh2 = da4.copy()            # skip branch
    grads["W4"] = dz4.T @ a3
    grads["b4"] = dz4.sum(0)
    da3 = dz4 @ p["W4"]

    dz3 = da3 * dsilu(z3)
    grads["W3"] = dz3.T @ h2
    grads["b3"] = dz3.sum(0)
    dh2 += dz3 @ p["W3"]

    # h2 = a2 * g2 + cond @ T2^T + t2
    da2 = dh2 * g2
    dg2 = dh2 * a2
    grads["S2"] = dg2.T @ cond
    grads["s2"] = dg2.sum(0)
    grads["T2"] = dh2.T @ cond
    grads["t2"] = dh2.sum(0)

    dz2 = da2 * dsilu(z2)
    grads["W2"] = dz2.T @ h1
    grads["b2"] = dz2.sum(0)
    dh1 += dz2 @ p["W2"]

    da1 = dh1 * g1
    dg1 = dh1 * a1
    grads["S1"] = dg1.T @ cond
    grads["s1"] = dg1.sum(0)
    grads["T1"] = dh1.T @ cond
    grads["t1"] = dh1.sum(0)

    dz1 = da1 * dsilu(z1)
    grads["W1"] = dz1.T @ x
    grads["b1"] = dz1.sum(0)
    return grads


class Adam:
    """Standard Adam over a dict of parameter arrays."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            m_hat = self.m[key] / b1c
            v_hat = self.v[key] / b2c
            params[key] = params[key] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
