"""Parameter store, grouped Adam with warmup, checkpoint IO."""

import json
import os

import numpy as np
import pytest

from statetrack.numerics.params import (
    INIT_SCALE,
    Adam,
    ParamStore,
    atomic_write_text,
    load_checkpoint,
    save_checkpoint,
)
from statetrack.numerics.tensor import Tensor


def small_store(seed=0) -> ParamStore:
    p = ParamStore()
    p.create("enc.w", (3, 3), seed)
    p.create("dec.w", (2, 2), seed)
    p.create("gcn.w", (2, 3), seed)
    p.create("enc.b", (3,), seed, kind="zero")
    p.create("enc.g", (3,), seed, kind="one")
    return p


# ---------------------------------------------------------------------------
# ParamStore
# ---------------------------------------------------------------------------

def test_init_is_name_keyed_not_order_keyed():
    a, b = ParamStore(), ParamStore()
    a.create("enc.first", (4, 4), seed=5)
    a.create("enc.second", (4, 4), seed=5)
    b.create("enc.second", (4, 4), seed=5)  # reversed creation order
    b.create("enc.first", (4, 4), seed=5)
    np.testing.assert_array_equal(a["enc.first"].data, b["enc.first"].data)
    np.testing.assert_array_equal(a["enc.second"].data, b["enc.second"].data)
    assert not np.array_equal(a["enc.first"].data, a["enc.second"].data)


def test_init_depends_on_seed():
    a, b = ParamStore(), ParamStore()
    a.create("enc.w", (4,), seed=1)
    b.create("enc.w", (4,), seed=2)
    assert not np.array_equal(a["enc.w"].data, b["enc.w"].data)


def test_init_kinds_and_bounds():
    p = small_store()
    assert np.all(np.abs(p["enc.w"].data) <= INIT_SCALE)
    assert np.all(p["enc.b"].data == 0.0)
    assert np.all(p["enc.g"].data == 1.0)
    assert all(t.requires_grad for _, t in p.items())


def test_create_rejects_duplicates_and_bad_groups():
    p = small_store()
    with pytest.raises(ValueError, match="duplicate"):
        p.create("enc.w", (2,), seed=0)
    with pytest.raises(ValueError, match="group"):
        p.create("head.w", (2,), seed=0)
    with pytest.raises(ValueError, match="kind"):
        p.create("enc.x", (2,), seed=0, kind="xavier")


def test_store_mapping_protocol():
    p = small_store()
    assert len(p) == 5
    assert "enc.w" in p and "enc.nope" not in p
    assert p.names()[0] == "enc.w"  # insertion order preserved
    assert ParamStore.group_of("dec.gru.w_z") == "dec"


def test_zero_grad():
    p = small_store()
    (p["enc.w"].sum() + p["dec.w"].sum()).backward()
    assert p["enc.w"].grad is not None
    p.zero_grad()
    assert all(t.grad is None for _, t in p.items())


def test_load_arrays_validates():
    p = small_store()
    good = {name: t.data + 1.0 for name, t in p.items()}
    p.load_arrays(good)
    np.testing.assert_array_equal(p["enc.b"].data, np.ones(3))

    with pytest.raises(ValueError, match="mismatch"):
        p.load_arrays({k: v for k, v in good.items() if k != "enc.w"})
    with pytest.raises(ValueError, match="mismatch"):
        p.load_arrays({**good, "enc.extra": np.zeros(1)})
    with pytest.raises(ValueError, match="shape"):
        p.load_arrays({**good, "enc.w": np.zeros((2, 2))})


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

LR = {"enc": 1e-2, "dec": 2e-2, "gcn": 5e-2}


def test_adam_single_step_matches_hand_formula():
    p = ParamStore()
    t = p.create("gcn.w", (2,), seed=0)  # gcn: no warmup
    start = t.data.copy()
    t.grad = np.array([0.5, -1.5])
    opt = Adam(p, LR, total_steps=10, warmup=0.1)
    opt.step()
    # t=1: mhat = g, vhat = g^2  ->  step = lr * g / (|g| + eps)
    expected = start - 5e-2 * t.grad / (np.abs(t.grad) + 1e-8)
    np.testing.assert_allclose(t.data, expected, atol=1e-12)


def test_adam_two_steps_against_reference():
    p = ParamStore()
    t = p.create("gcn.w", (3,), seed=1)
    opt = Adam(p, LR, total_steps=100, warmup=0.0)
    grads = [np.array([1.0, -2.0, 0.3]), np.array([-0.4, 0.1, 2.0])]

    ref = t.data.copy()
    m = v = np.zeros(3)
    for step, g in enumerate(grads, start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mhat, vhat = m / (1 - 0.9 ** step), v / (1 - 0.999 ** step)
        ref = ref - 5e-2 * mhat / (np.sqrt(vhat) + 1e-8)

    for g in grads:
        t.grad = g.copy()
        opt.step()
        t.grad = None
    np.testing.assert_allclose(t.data, ref, atol=1e-12)


def test_adam_warmup_affects_enc_dec_only():
    p = small_store()
    opt = Adam(p, LR, total_steps=100, warmup=0.1)
    # during warmup step 1 of 10: enc/dec scaled by 1/10, gcn at full rate
    assert opt._group_lr("enc") == pytest.approx(1e-3)
    assert opt._group_lr("dec") == pytest.approx(2e-3)
    assert opt._group_lr("gcn") == pytest.approx(5e-2)
    opt.t = 9
    assert opt._group_lr("enc") == pytest.approx(1e-2)
    opt.t = 50
    assert opt._group_lr("enc") == pytest.approx(1e-2)


def test_adam_skips_parameters_without_grad():
    p = small_store()
    before = p["dec.w"].data.copy()
    p["enc.w"].grad = np.ones((3, 3))
    Adam(p, LR, total_steps=10).step()
    np.testing.assert_array_equal(p["dec.w"].data, before)
    assert not np.array_equal(p["enc.w"].data, before[:3])


def test_adam_rejects_bad_warmup():
    with pytest.raises(ValueError):
        Adam(small_store(), LR, total_steps=10, warmup=1.0)
    with pytest.raises(ValueError):
        Adam(small_store(), LR, total_steps=10, warmup=-0.1)


def test_adam_descends_a_quadratic():
    p = ParamStore()
    t = p.create("enc.w", (4,), seed=3)
    target = np.array([1.0, -2.0, 0.5, 3.0])
    opt = Adam(p, {"enc": 0.05, "dec": 0.0, "gcn": 0.0}, total_steps=400)
    for _ in range(400):
        p.zero_grad()
        ((t - Tensor(target)) ** 2.0).sum().backward()
        opt.step()
    np.testing.assert_allclose(t.data, target, atol=1e-3)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    p = small_store(seed=4)
    path = tmp_path / "model.json"
    save_checkpoint(str(path), p, {"d_h": 8}, "fp123")
    arrays, config, fp = load_checkpoint(str(path))
    assert config == {"d_h": 8} and fp == "fp123"
    q = small_store(seed=9)
    q.load_arrays(arrays)
    for name, t in p.items():
        np.testing.assert_array_equal(q[name].data, t.data)


def test_checkpoint_bytes_are_stable(tmp_path):
    p = small_store(seed=4)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(str(a), p, {"d_h": 8}, "fp")
    save_checkpoint(str(b), p, {"d_h": 8}, "fp")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().endswith("\n")


def test_checkpoint_version_gate(tmp_path):
    path = tmp_path / "old.json"
    path.write_text(json.dumps({"version": 99, "params": {}}))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(str(path))


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write_text(str(target), "hello")
    assert target.read_text() == "hello"
    atomic_write_text(str(target), "replaced")
    assert target.read_text() == "replaced"
    assert os.listdir(tmp_path) == ["out.txt"]
