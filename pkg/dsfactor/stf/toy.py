"""One attention block + one FFN + linear head, with hand-derived gradients.

Tokens are columns: a batch is an (n, d, L) array. Layer norm (no learned
gain/bias) follows each residual sub-block.

    A_h  = softmax((Wq X)_h^T (Wk X)_h / sqrt(d_h))      row-wise over keys
    X1   = LN(X + Wo [ (Wv X)_h A_h^T ]_h)
    X2   = LN(X1 + Wf2 ReLU(Wf1 X1 + b1) + b2)
    out  = Wc mean_L(X2) + bc
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from dsfactor.core.matrix import check_finite
from dsfactor.utils.errors import ValidationError

FACTORED = ("wq", "wk", "wv", "wo", "wf1", "wf2")
LN_EPS = 1e-5

Params = Dict[str, np.ndarray]


@dataclass
class ToyModel:
    params: Params
    heads: int

    @classmethod
    def init(cls, rng: np.random.Generator, d: int = 32, ffn: int = 64, heads: int = 2,
             classes: int = 4) -> "ToyModel":
        if d % heads:
            raise ValidationError(f"d={d} is not divisible by heads={heads}")

        def dense(rows, cols):
            return rng.standard_normal((rows, cols)) / np.sqrt(cols)

        params = {
            "wq": dense(d, d), "wk": dense(d, d), "wv": dense(d, d), "wo": dense(d, d),
            "wf1": dense(ffn, d), "b1": np.zeros(ffn),
            "wf2": dense(d, ffn), "b2": np.zeros(d),
            "wc": dense(classes, d), "bc": np.zeros(classes),
        }
        return cls(params, heads)

    @property
    def d(self) -> int:
        return self.params["wq"].shape[0]

    def with_weights(self, weights: Params) -> Params:
        merged = dict(self.params)
        merged.update(weights)
        return merged


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    centered = z - z.mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt((centered ** 2).mean(axis=1, keepdims=True) + LN_EPS)
    return centered * inv, inv


def layer_norm_backward(dy: np.ndarray, y: np.ndarray, inv: np.ndarray) -> np.ndarray:
    return inv * (dy - dy.mean(axis=1, keepdims=True) - y * (dy * y).mean(axis=1, keepdims=True))


def _heads(a: np.ndarray, heads: int) -> np.ndarray:
    n, d, length = a.shape
    return a.reshape(n, heads, d // heads, length)


def toy_forward(params: Params, x: np.ndarray, heads: int) -> Tuple[np.ndarray, dict]:
    x = np.asarray(x, dtype=np.float64)
    d = params["wq"].shape[1]
    if x.ndim != 3 or x.shape[1] != d:
        raise ValidationError(f"expected input of shape (n, {d}, L), got {x.shape}")
    scale = 1.0 / np.sqrt(d // heads)

    q, k, v = (_heads(params[w] @ x, heads) for w in ("wq", "wk", "wv"))
    attn = softmax(scale * np.einsum("nhri,nhrj->nhij", q, k))
    h = np.einsum("nhrj,nhij->nhri", v, attn).reshape(x.shape)
    x1, inv1 = layer_norm(x + params["wo"] @ h)

    u = params["wf1"] @ x1 + params["b1"][:, None]
    r = np.maximum(u, 0.0)
    x2, inv2 = layer_norm(x1 + params["wf2"] @ r + params["b2"][:, None])

    pooled = x2.mean(axis=2)
    logits = pooled @ params["wc"].T + params["bc"]
    check_finite(logits, "toy forward")
    cache = dict(x=x, q=q, k=k, v=v, attn=attn, h=h, x1=x1, inv1=inv1,
                 u=u, r=r, x2=x2, inv2=inv2, pooled=pooled, scale=scale)
    return logits, cache


def toy_backward(params: Params, cache: dict, dlogits: np.ndarray, heads: int) -> Params:
    """Gradients of every parameter (and of the input, under key "x")."""
    x, attn, scale = cache["x"], cache["attn"], cache["scale"]
    length = x.shape[2]
    g: Params = {}

    g["wc"] = dlogits.T @ cache["pooled"]
    g["bc"] = dlogits.sum(axis=0)
    dx2 = np.repeat((dlogits @ params["wc"])[:, :, None] / length, length, axis=2)

    dz2 = layer_norm_backward(dx2, cache["x2"], cache["inv2"])
    g["b2"] = dz2.sum(axis=(0, 2))
    g["wf2"] = np.einsum("nil,njl->ij", dz2, cache["r"])
    du = (params["wf2"].T @ dz2) * (cache["u"] > 0)
    g["b1"] = du.sum(axis=(0, 2))
    g["wf1"] = np.einsum("nil,njl->ij", du, cache["x1"])
    dx1 = dz2 + params["wf1"].T @ du

    dz1 = layer_norm_backward(dx1, cache["x1"], cache["inv1"])
    g["wo"] = np.einsum("nil,njl->ij", dz1, cache["h"])
    dh = _heads(params["wo"].T @ dz1, heads)

    dv = np.einsum("nhri,nhij->nhrj", dh, attn)
    dattn = np.einsum("nhri,nhrj->nhij", dh, cache["v"])
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dq = scale * np.einsum("nhij,nhrj->nhri", dscores, cache["k"])
    dk = scale * np.einsum("nhij,nhri->nhrj", dscores, cache["q"])

    dx = dz1.copy()
    for name, grad in (("wq", dq), ("wk", dk), ("wv", dv)):
        grad = grad.reshape(x.shape)
        g[name] = np.einsum("nil,njl->ij", grad, x)
        dx += params[name].T @ grad
    g["x"] = dx
    return g


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean loss and its gradient w.r.t. the logits."""
    p = softmax(logits, axis=1)
    n = logits.shape[0]
    rows = np.arange(n)
    loss = float(-np.mean(np.log(p[rows, labels] + 1e-300)))
    grad = p
    grad[rows, labels] -= 1.0
    return loss, grad / n


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))
