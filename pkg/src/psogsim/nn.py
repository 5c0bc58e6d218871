"""Low-power gaze CNN with hand-written reverse-mode gradients and Adam.

Two same-padded 3x3 convolutions (4 channels each, ReLU) feed four ReLU
dense layers of 20 units and a linear 2-unit head predicting (x_deg, y_deg).

Convolutions over the tiny 3x5 map are evaluated as dense matrices whose
entries are gathered from the kernel; kernel gradients are the scatter-sum
of the dense-matrix gradient back onto kernel taps.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import TrainingDivergedError


@dataclass(frozen=True)
class Architecture:
    input_shape: tuple[int, int] = (3, 5)
    channels: tuple[int, ...] = (4, 4)
    kernel: int = 3
    hidden: tuple[int, ...] = (20, 20, 20, 20)
    n_out: int = 2

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        c_in = 1
        for k, c in enumerate(self.channels, 1):
            shapes += [(f"conv{k}_w", (c, c_in, self.kernel, self.kernel)), (f"conv{k}_b", (c,))]
            c_in = c
        n_in = c_in * self.input_shape[0] * self.input_shape[1]
        for k, h in enumerate(self.hidden, 1):
            shapes += [(f"fc{k}_w", (n_in, h)), (f"fc{k}_b", (h,))]
            n_in = h
        shapes += [("head_w", (n_in, self.n_out)), ("head_b", (self.n_out,))]
        return shapes

    @property
    def n_params(self) -> int:
        return _offsets(self)[1]


@lru_cache(maxsize=None)
def _offsets(arch: Architecture):
    table, pos = [], 0
    for name, shape in arch.layer_shapes():
        size = 1
        for d in shape:
            size *= d
        table.append((name, shape, pos, size))
        pos += size
    return tuple(table), pos


class NetworkParams:
    """All weights in one flat float64 vector with named views."""

    def __init__(self, arch: Architecture = Architecture(), flat: np.ndarray | None = None):
        self.arch = arch
        n = arch.n_params
        self.flat = np.zeros(n) if flat is None else np.array(flat, dtype=np.float64)
        if self.flat.shape != (n,):
            raise ValueError(f"expected {n} parameters, got shape {self.flat.shape}")
        self._views = {name: self.flat[pos:pos + size].reshape(shape)
                       for name, shape, pos, size in _offsets(arch)[0]}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    def names(self) -> list[str]:
        return list(self._views)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, self.flat)

    def __len__(self):
        return len(self.flat)

    def __repr__(self):
        return f"NetworkParams({self.arch}, n={len(self)})"


def parameter_count(arch: Architecture = Architecture()) -> int:
    return arch.n_params


def init_params(seed: int, arch: Architecture = Architecture()) -> NetworkParams:
    """Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero."""
    rng = np.random.default_rng(seed)
    p = NetworkParams(arch)
    for name, shape in arch.layer_shapes():
        if name.endswith("_w"):
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            bound = np.sqrt(6.0 / fan_in)
            p[name][...] = rng.uniform(-bound, bound, size=shape)
    return p


@lru_cache(maxsize=None)
def _conv_index(height: int, width: int, c_in: int, c_out: int, k: int):
    """(rows, cols, tap) triples placing kernel taps into the dense conv matrix."""
    pad = k // 2
    rows, cols, taps = [], [], []
    hw = height * width
    for co in range(c_out):
        for ci in range(c_in):
            for ky in range(k):
                for kx in range(k):
                    tap = ((co * c_in + ci) * k + ky) * k + kx
                    for oy in range(height):
                        iy = oy + ky - pad
                        if not 0 <= iy < height:
                            continue
                        for ox in range(width):
                            ix = ox + kx - pad
                            if 0 <= ix < width:
                                rows.append(ci * hw + iy * width + ix)
                                cols.append(co * hw + oy * width + ox)
                                taps.append(tap)
    out = tuple(np.array(a, dtype=np.int64) for a in (rows, cols, taps))
    for a in out:
        a.setflags(write=False)
    return out


def _conv_matrix(w: np.ndarray, height: int, width: int) -> np.ndarray:
    c_out, c_in, k, _ = w.shape
    rows, cols, taps = _conv_index(height, width, c_in, c_out, k)
    M = np.zeros((c_in * height * width, c_out * height * width))
    M[rows, cols] = w.ravel()[taps]
    return M


def _as_batch(params: NetworkParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    h, w = params.arch.input_shape
    if X.shape == (h, w):
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (h, w):
        raise ValueError(f"expected frames of shape (N, {h}, {w}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite sensor input")
    return X.reshape(len(X), h * w)


def _forward(params: NetworkParams, a: np.ndarray):
    arch = params.arch
    h, w = arch.input_shape
    hw = h * w
    acts, pre, mats = [a], [], []
    for k in range(1, len(arch.channels) + 1):
        M = _conv_matrix(params[f"conv{k}_w"], h, w)
        z = a @ M + np.repeat(params[f"conv{k}_b"], hw)
        a = np.maximum(z, 0.0)
        mats.append(M)
        pre.append(z)
        acts.append(a)
    for k in range(1, len(arch.hidden) + 1):
        z = a @ params[f"fc{k}_w"] + params[f"fc{k}_b"]
        a = np.maximum(z, 0.0)
        pre.append(z)
        acts.append(a)
    out = a @ params["head_w"] + params["head_b"]
    return out, acts, pre, mats


def forward(params: NetworkParams, X) -> np.ndarray:
    """Predicted gaze (N, 2) for frames (N, 3, 5); a single (3, 5) frame gives (1, 2)."""
    return _forward(params, _as_batch(params, X))[0]


def loss(predictions, truths) -> float:
    """Mean over samples of ((dx)^2 + (dy)^2) / 2."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    if len(p) == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.sum((p - t) ** 2, axis=1)) / 2.0)


def backward(params: NetworkParams, X, Y) -> tuple[float, NetworkParams]:
    """Loss and its exact gradient with respect to every parameter."""
    arch = params.arch
    a0 = _as_batch(params, X)
    Y = np.asarray(Y, dtype=np.float64)
    out, acts, pre, mats = _forward(params, a0)
    value = loss(out, Y)
    n = len(a0)
    g = NetworkParams(arch)
    delta = (out - Y) / n
    g["head_w"][...] = acts[-1].T @ delta
    g["head_b"][...] = delta.sum(axis=0)
    da = delta @ params["head_w"].T
    n_conv = len(arch.channels)
    for k in range(len(arch.hidden), 0, -1):
        dz = da * (pre[n_conv + k - 1] > 0)
        g[f"fc{k}_w"][...] = acts[n_conv + k - 1].T @ dz
        g[f"fc{k}_b"][...] = dz.sum(axis=0)
        da = dz @ params[f"fc{k}_w"].T
    h, w = arch.input_shape
    hw = h * w
    for k in range(n_conv, 0, -1):
        dz = da * (pre[k - 1] > 0)
        wk = params[f"conv{k}_w"]
        c_out, c_in, ks, _ = wk.shape
        rows, cols, taps = _conv_index(h, w, c_in, c_out, ks)
        dM = acts[k - 1].T @ dz
        g[f"conv{k}_w"][...] = np.bincount(taps, weights=dM[rows, cols], minlength=wk.size).reshape(wk.shape)
        g[f"conv{k}_b"][...] = dz.reshape(n, c_out, hw).sum(axis=(0, 2))
        if k > 1:
            da = dz @ mats[k - 1].T
    if not np.all(np.isfinite(g.flat)):
        bad = [name for name in g.names() if not np.all(np.isfinite(g[name]))]
        raise TrainingDivergedError(f"non-finite gradient in layer(s) {', '.join(bad)}")
    return value, g


# -- optimizer -----------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, params: NetworkParams) -> "AdamState":
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat))


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState,
              learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> NetworkParams:
    """Bias-corrected adaptive-moment update; mutates `state`, returns new params."""
    g = grads.flat
    state.t += 1
    state.m = beta1 * state.m + (1 - beta1) * g
    state.v = beta2 * state.v + (1 - beta2) * g * g
    m_hat = state.m / (1 - beta1 ** state.t)
    v_hat = state.v / (1 - beta2 ** state.t)
    return NetworkParams(params.arch, params.flat - learning_rate * m_hat / (np.sqrt(v_hat) + eps))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-3
    batch_size: int = 32
    max_epochs: int = 150
    patience: int | None = 20  # None: never stop early
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 (or None)")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size >= 1 and max_epochs >= 0 required")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    initial_val_accuracy: float | None = None
    best_epoch: int = 0  # 1-based; 0 means the initial parameters were kept

    def __len__(self):
        return len(self.val_accuracy)


# -- checkpoints ---------------------------------------------------------------
#
# Byte layout (little-endian):
#   8 bytes   magic b"PSOGCNN\x00"
#   u32       format version (1)
#   u32       header length L
#   L bytes   UTF-8 JSON: {"arch": {...}, "layers": [[name, shape], ...], "meta": {...}}
#   u64       parameter count P
#   P x f64   flat parameters in layer order
#   u32       normalization length K (0 when absent)
#   K x f64   per-sensor means, then K x f64 per-sensor stds

MAGIC = b"PSOGCNN\x00"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, params: NetworkParams, norm_mean=None, norm_std=None,
                    meta: dict | None = None) -> None:
    header = json.dumps({"arch": asdict(params.arch),
                         "layers": [[n, list(s)] for n, s in params.arch.layer_shapes()],
                         "meta": meta or {}}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(header)), header,
             struct.pack("<Q", len(params.flat)), params.flat.astype("<f8").tobytes()]
    if norm_mean is None:
        parts.append(struct.pack("<I", 0))
    else:
        mean = np.asarray(norm_mean, dtype="<f8")
        std = np.asarray(norm_std, dtype="<f8")
        parts += [struct.pack("<I", len(mean)), mean.tobytes(), std.tobytes()]
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path):
    """Returns (params, norm_mean, norm_std, meta); norm arrays are None when absent."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    version, hlen = struct.unpack_from("<II", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    a = header["arch"]
    arch = Architecture(tuple(a["input_shape"]), tuple(a["channels"]), a["kernel"],
                        tuple(a["hidden"]), a["n_out"])
    if [[n, list(s)] for n, s in arch.layer_shapes()] != header["layers"]:
        raise ValueError(f"{path}: layer table does not match architecture")
    (n,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    flat = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).astype(np.float64)
    pos += 8 * n
    (k,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    mean = std = None
    if k:
        mean = np.frombuffer(raw, dtype="<f8", count=k, offset=pos).astype(np.float64)
        std = np.frombuffer(raw, dtype="<f8", count=k, offset=pos + 8 * k).astype(np.float64)
    return NetworkParams(arch, flat), mean, std, header["meta"]
