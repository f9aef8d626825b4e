"""Named trainable parameters, grouped optimizer, and checkpoint IO.

Parameter names are dotted paths; the leading component ("enc", "dec",
"gcn") selects the learning-rate group. Initialization is keyed by
(seed, name), so two configurations that share a parameter name initialize
it identically regardless of creation order — this is what makes the
graph-enabled and graph-free configurations comparable tensor for tensor.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

from statetrack.numerics.tensor import Tensor

GROUPS = ("enc", "dec", "gcn")

INIT_SCALE = 0.02


def _named_rng(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class ParamStore:
    """Ordered name -> Tensor map; every tensor is trainable."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def create(self, name: str, shape, seed: int, kind: str = "weight") -> Tensor:
        """kind: 'weight' uniform(-0.02, 0.02), 'zero' bias, 'one' LN gain."""
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        group = name.split(".", 1)[0]
        if group not in GROUPS:
            raise ValueError(f"{name!r}: group must be one of {GROUPS}")
        if kind == "weight":
            data = _named_rng(seed, name).uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        elif kind == "zero":
            data = np.zeros(shape)
        elif kind == "one":
            data = np.ones(shape)
        else:
            raise ValueError(f"unknown init kind {kind!r}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    @staticmethod
    def group_of(name: str) -> str:
        return name.split(".", 1)[0]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite values in place; names and shapes must match exactly."""
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise ValueError(f"parameter name mismatch: missing={sorted(missing)} "
                             f"extra={sorted(extra)}")
        for name, t in self._params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"{name}: shape {arr.shape} != expected {t.shape}")
            t.data = arr.copy()


class Adam:
    """Adam with one learning rate per parameter group and linear warmup.

    Groups listed in ``warmup_groups`` ramp linearly from 0 over the first
    ``warmup * total_steps`` steps, then hold their base rate; other groups
    run at their base rate from step one.
    """

    def __init__(self, params: ParamStore, lr: dict[str, float],
                 total_steps: int, warmup: float = 0.1,
                 warmup_groups: tuple = ("enc", "dec"),
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if warmup < 0 or warmup >= 1:
            raise ValueError("warmup proportion must be in [0, 1)")
        self.params = params
        self.lr = dict(lr)
        self.total_steps = max(1, total_steps)
        self.warmup = warmup
        self.warmup_groups = set(warmup_groups)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = {name: np.zeros(t.shape) for name, t in params.items()}
        self._v = {name: np.zeros(t.shape) for name, t in params.items()}

    def _group_lr(self, group: str) -> float:
        base = self.lr[group]
        if group in self.warmup_groups and self.warmup > 0:
            warm_steps = self.warmup * self.total_steps
            if self.t < warm_steps:
                return base * (self.t + 1) / warm_steps
        return base

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self._m[name] = b1 * self._m[name] + (1 - b1) * g
            v = self._v[name] = b2 * self._v[name] + (1 - b2) * g * g
            lr = self._group_lr(ParamStore.group_of(name))
            p.data = p.data - lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


# ---------------------------------------------------------------------------
# Checkpoints: versioned JSON, byte-stable for fixed values
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory and rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path: str, params: ParamStore, config: dict,
                    schema_fingerprint: str) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": config,
        "schema_fingerprint": schema_fingerprint,
        "params": {
            name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in params.items()
        },
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict, str]:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    arrays = {}
    for name, entry in payload["params"].items():
        arrays[name] = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
    return arrays, payload["config"], payload["schema_fingerprint"]
