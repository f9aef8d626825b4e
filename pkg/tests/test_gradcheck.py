"""The gradient checker must bless correct tapes and flag corrupted ones."""

import numpy as np
import pytest

from statetrack.numerics.gradcheck import DENOM_FLOOR, Offender, check_gradients
from statetrack.numerics.params import ParamStore
from statetrack.numerics.tensor import Tensor


def quadratic_store():
    p = ParamStore()
    p.create("enc.w", (4, 3), seed=0)
    p.create("dec.w", (3,), seed=0)

    def loss():
        x = Tensor(np.linspace(-1.0, 1.0, 12).reshape(4, 3))
        h = (p["enc.w"] * x).sum(axis=0)
        return ((h + p["dec.w"]) ** 2.0).sum() + (p["enc.w"].sigmoid()).sum()

    return p, loss


def test_passes_on_smooth_loss():
    p, loss = quadratic_store()
    report = check_gradients(loss, p, tol=1e-4)
    assert report.passed
    assert report.max_rel_err < 1e-6
    assert set(report.per_param) == {"enc.w", "dec.w"}
    assert report.offenders == []


def test_catches_corrupted_backward():
    p = ParamStore()
    p.create("enc.w", (4, 3), seed=0)
    p.create("dec.w", (3,), seed=0)

    def wrong_scale(t):  # identity forward, backward off by 10%
        return Tensor._make(t.data.copy(), ((t, lambda g: 1.1 * g),))

    def loss():
        x = Tensor(np.linspace(-1.0, 1.0, 12).reshape(4, 3))
        h = (wrong_scale(p["enc.w"]) * x).sum(axis=0)
        return ((h + p["dec.w"]) ** 2.0).sum()

    report = check_gradients(loss, p, tol=1e-4)
    assert not report.passed
    assert any(o.name == "enc.w" for o in report.offenders)
    assert report.per_param["enc.w"] > 1e-2
    assert report.per_param["dec.w"] < 1e-6  # untouched parameter still clean


def test_flags_missing_gradient():
    p, loss = quadratic_store()
    p.create("gcn.unused", (2,), seed=0)
    with pytest.raises(AssertionError, match="no gradient"):
        check_gradients(loss, p)


def test_rejects_nonpositive_eps():
    p, loss = quadratic_store()
    with pytest.raises(ValueError, match="eps"):
        check_gradients(loss, p, eps=0.0)


def test_subsampling_is_deterministic():
    p = ParamStore()
    p.create("enc.big", (40, 40), seed=1)
    loss = lambda: (p["enc.big"] ** 2.0).sum()
    a = check_gradients(loss, p, n_samples=50, sample_seed=3)
    b = check_gradients(loss, p, n_samples=50, sample_seed=3)
    assert a.per_param == b.per_param
    assert a.passed


def test_denominator_floor_mutes_tiny_gradients():
    # gradient ~1e-9 everywhere: absolute FD noise would swamp a plain
    # relative error, the floor keeps the reported error proportional
    p = ParamStore()
    p.create("enc.w", (3,), seed=0)
    loss = lambda: (p["enc.w"] * 1e-9).sum()
    report = check_gradients(loss, p)
    assert report.passed
    assert report.max_rel_err < DENOM_FLOOR


def test_report_format_mentions_groups_and_offenders():
    p, loss = quadratic_store()
    report = check_gradients(loss, p, tol=1e-4)
    text = report.format()
    assert "PASS" in text and "group enc" in text and "group dec" in text

    report.per_param["enc.w"] = 1.0
    report.offenders.append(Offender("enc.w", 3, 1.0, 2.0, 0.5))
    text = report.format()
    assert "FAIL" in text and "OFFENDER enc.w[3]" in text
