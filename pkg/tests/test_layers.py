"""Attention / GRU / affine against independent numpy oracles and FD."""

import numpy as np
import pytest

from statetrack.numerics.layers import affine, gru_step, multi_head_attention
from statetrack.numerics.tensor import Tensor
from tests.test_tensor import check_grads, leaf, weighted


def np_mha(h: np.ndarray, w_q, w_k, w_v, n_heads: int) -> np.ndarray:
    """Loop-per-head reference, no shared code with the implementation."""
    n, d_h = h.shape
    d_k = d_h // n_heads
    out = np.zeros_like(h)
    for j in range(n_heads):
        sl = slice(j * d_k, (j + 1) * d_k)
        q, k, v = h @ w_q[:, sl], h @ w_k[:, sl], h @ w_v[:, sl]
        scores = q @ k.T / np.sqrt(d_k)
        scores -= scores.max(axis=1, keepdims=True)
        attn = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
        out[:, sl] = attn @ v
    return out


def np_gru(x, s, p):
    sig = lambda a: 1.0 / (1.0 + np.exp(-a))
    z = sig(x @ p["w_z"] + s @ p["u_z"] + p["b_z"])
    r = sig(x @ p["w_r"] + s @ p["u_r"] + p["b_r"])
    c = np.tanh(x @ p["w_c"] + (r * s) @ p["u_c"] + p["b_c"])
    return z * s + (1.0 - z) * c


def test_affine():
    x, w, b = leaf(5, 3), leaf(3, 4), leaf(4)
    np.testing.assert_allclose(affine(x, w, b).data, x.data @ w.data + b.data)
    np.testing.assert_allclose(affine(x, w).data, x.data @ w.data)
    check_grads(lambda: weighted(affine(x, w, b)), x, w, b)


@pytest.mark.parametrize("n_heads", [1, 2, 4])
def test_mha_matches_reference(n_heads):
    rng = np.random.RandomState(n_heads)
    h = rng.randn(6, 8)
    w_q, w_k, w_v = (rng.randn(8, 8) * 0.3 for _ in range(3))
    got = multi_head_attention(Tensor(h), Tensor(w_q), Tensor(w_k),
                               Tensor(w_v), n_heads)
    np.testing.assert_allclose(got.data, np_mha(h, w_q, w_k, w_v, n_heads),
                               atol=1e-12)


def test_mha_grads():
    h, w_q, w_k, w_v = leaf(4, 8), leaf(8, 8), leaf(8, 8), leaf(8, 8)
    check_grads(lambda: weighted(multi_head_attention(h, w_q, w_k, w_v, 2)),
                h, w_q, w_k, w_v, tol=1e-6)


def test_mha_permutation_equivariant():
    # no positions inside the layer: permuting rows permutes the output
    rng = np.random.RandomState(0)
    h = rng.randn(5, 4)
    ws = [Tensor(rng.randn(4, 4) * 0.5) for _ in range(3)]
    perm = np.array([3, 0, 4, 1, 2])
    out = multi_head_attention(Tensor(h), *ws, 2).data
    out_p = multi_head_attention(Tensor(h[perm]), *ws, 2).data
    np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


def test_mha_shape_errors():
    h = Tensor(np.zeros((3, 6)))
    w = Tensor(np.zeros((6, 6)))
    with pytest.raises(ValueError, match="divisible"):
        multi_head_attention(h, w, w, w, 4)
    bad = Tensor(np.zeros((6, 4)))
    with pytest.raises(ValueError, match="shape"):
        multi_head_attention(h, bad, w, w, 2)


def _gru_params(rng, d):
    return {f"{m}_{g}": Tensor(rng.randn(d, d) * 0.4 if m != "b"
                               else rng.randn(d) * 0.1, requires_grad=True)
            for g in ("z", "r", "c") for m in ("w", "u", "b")}


def test_gru_matches_reference():
    rng = np.random.RandomState(3)
    d = 6
    p = _gru_params(rng, d)
    x, s = rng.randn(4, d), rng.randn(4, d)
    got = gru_step(Tensor(x), Tensor(s), p)
    np.testing.assert_allclose(
        got.data, np_gru(x, s, {k: v.data for k, v in p.items()}), atol=1e-12)


def test_gru_zero_params_halves_state():
    d = 5
    p = {f"{m}_{g}": Tensor(np.zeros((d, d)) if m != "b" else np.zeros(d))
         for g in ("z", "r", "c") for m in ("w", "u", "b")}
    s = Tensor(np.arange(float(d)).reshape(1, d))
    out = gru_step(Tensor(np.zeros((1, d))), s, p)
    np.testing.assert_allclose(out.data, 0.5 * s.data)
    # saturating the keep gate pins the previous state
    p["b_z"] = Tensor(np.full(d, 50.0))
    pinned = gru_step(Tensor(np.ones((1, d))), s, p)
    np.testing.assert_allclose(pinned.data, s.data, atol=1e-12)


def test_gru_grads_reach_every_parameter():
    rng = np.random.RandomState(9)
    p = _gru_params(rng, 4)
    x, s = leaf(3, 4), leaf(3, 4)
    check_grads(lambda: weighted(gru_step(x, s, p)), x, s, *p.values(),
                tol=1e-6)


def test_gru_shape_mismatch():
    rng = np.random.RandomState(1)
    p = _gru_params(rng, 4)
    with pytest.raises(ValueError):
        gru_step(Tensor(np.zeros((2, 4))), Tensor(np.zeros((3, 4))), p)
