"""Neural primitives composed by the tracker: attention, GRU cell, affine."""

from __future__ import annotations

import math

from statetrack.numerics.tensor import Tensor, layer_norm, softmax

__all__ = ["affine", "multi_head_attention", "gru_step", "layer_norm"]


def affine(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = x @ w
    return out if b is None else out + b


def multi_head_attention(h: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor,
                         n_heads: int) -> Tensor:
    """Self-attention over rows of ``h``; output is the concatenation of heads.

    The d_h x d_h projections are per-head maps laid out side by side:
    columns [j*d_k, (j+1)*d_k) of each projection belong to head j.
    """
    n, d_h = h.shape
    if d_h % n_heads:
        raise ValueError(f"d_h={d_h} not divisible by n_heads={n_heads}")
    if w_q.shape != (d_h, d_h) or w_k.shape != (d_h, d_h) or w_v.shape != (d_h, d_h):
        raise ValueError("projection shape mismatch")
    d_k = d_h // n_heads

    def split(x: Tensor) -> Tensor:  # (n, d_h) -> (heads, n, d_k)
        return x.reshape((n, n_heads, d_k)).transpose((1, 0, 2))

    q, k, v = split(h @ w_q), split(h @ w_k), split(h @ w_v)
    scores = (q @ k.transpose((0, 2, 1))) / math.sqrt(d_k)
    attn = softmax(scores)                     # rows sum to 1 per head
    out = attn @ v                             # (heads, n, d_k)
    return out.transpose((1, 0, 2)).reshape((n, d_h))


def gru_step(x: Tensor, s_prev: Tensor, p: dict) -> Tensor:
    """One GRU cell step over row-vector batches (k, d).

    p supplies w_z/u_z/b_z, w_r/u_r/b_r, w_c/u_c/b_c. With all-zero
    parameters the gates sit at 0.5 and the candidate at 0, so the output is
    0.5 * s_prev; saturating the update gate reproduces s_prev.
    """
    if x.shape != s_prev.shape:
        raise ValueError(f"input {x.shape} vs state {s_prev.shape}")
    z = (x @ p["w_z"] + s_prev @ p["u_z"] + p["b_z"]).sigmoid()
    r = (x @ p["w_r"] + s_prev @ p["u_r"] + p["b_r"]).sigmoid()
    cand = (x @ p["w_c"] + (r * s_prev) @ p["u_c"] + p["b_c"]).tanh()
    return z * s_prev + (1.0 - z) * cand
