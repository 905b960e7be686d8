"""Size-agnostic convolutional regressor for circuit magnetizations."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import CircuitRecord
from .layers import Conv, Dense, GlobalAvgPool, Layer, ReLU

Q_SCALE = 10.0
MAGIC = b"QSYNCNN\x00"
FORMAT_VERSION = 1

DEFAULT_WIDTHS = {1: (64, 64, 64, 64), 2: (32, 64, 64, 64)}


class ModelFileError(ValueError):
    pass


@dataclass
class Architecture:
    dims: int
    in_channels: int
    conv_widths: tuple[int, ...] = ()
    kernel: int = 3
    dense_widths: tuple[int, ...] = (64,)
    activation: str = "relu"
    pooling: str = "global_avg"

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ValueError("dims must be 1 or 2")
        if self.in_channels not in (2, 3):
            raise ValueError("in_channels must be 2 (classical) or 3 (hybrid)")
        if not self.conv_widths:
            self.conv_widths = DEFAULT_WIDTHS[self.dims]
        self.conv_widths = tuple(int(w) for w in self.conv_widths)
        self.dense_widths = tuple(int(w) for w in self.dense_widths)
        if self.activation != "relu" or self.pooling != "global_avg":
            raise ValueError("only relu activation with global average pooling is supported")

    def to_json(self) -> dict:
        return {
            "dims": self.dims, "in_channels": self.in_channels,
            "conv_widths": list(self.conv_widths), "kernel": self.kernel,
            "dense_widths": list(self.dense_widths), "activation": self.activation,
            "pooling": self.pooling,
        }

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        c = self.in_channels
        for i, w in enumerate(self.conv_widths):
            shapes.append((f"conv{i}.weight", (self.kernel,) * self.dims + (c, w)))
            shapes.append((f"conv{i}.bias", (w,)))
            c = w
        for i, w in enumerate(self.dense_widths + (1,)):
            shapes.append((f"dense{i}.weight", (c, w)))
            shapes.append((f"dense{i}.bias", (w,)))
            c = w
        return shapes


@dataclass
class CnnModel:
    arch: Architecture
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, shape in self.arch.param_shapes():
            if name not in self.params:
                raise ValueError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {self.params[name].shape}")
        self._layers = self._assemble()

    @property
    def dims(self) -> int:
        return self.arch.dims

    @property
    def in_channels(self) -> int:
        return self.arch.in_channels

    def _assemble(self) -> list[Layer]:
        p = self.params
        layers: list[Layer] = []
        for i in range(len(self.arch.conv_widths)):
            layers += [Conv(p[f"conv{i}.weight"], p[f"conv{i}.bias"], input_grad=i > 0), ReLU()]
        layers.append(GlobalAvgPool())
        n_dense = len(self.arch.dense_widths) + 1
        for i in range(n_dense):
            layers.append(Dense(p[f"dense{i}.weight"], p[f"dense{i}.bias"]))
            if i < n_dense - 1:
                layers.append(ReLU())
        return layers

    def _owner_names(self) -> list[list[str]]:
        names, conv, dense = [], 0, 0
        for layer in self._layers:
            if isinstance(layer, Conv):
                names.append([f"conv{conv}.weight", f"conv{conv}.bias"])
                conv += 1
            elif isinstance(layer, Dense):
                names.append([f"dense{dense}.weight", f"dense{dense}.bias"])
                dense += 1
            else:
                names.append([])
        return names

    def check_input(self, x: np.ndarray) -> None:
        if x.ndim != self.dims + 2:
            raise ValueError(f"expected a batch with {self.dims} spatial axes, got shape {x.shape}")
        if x.shape[-1] != self.in_channels:
            raise ValueError(f"model takes {self.in_channels} channels, input has {x.shape[-1]}")

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """Predictions for a batch of equal-shape inputs ``(batch, *spatial, c)``."""
        self.check_input(x)
        h = np.asarray(x, dtype=float)
        for layer in self._layers:
            h = layer.forward(h)
        return h[:, 0]

    def backward_batch(self, dy: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given d(loss)/d(prediction) for the last forward batch."""
        g = np.asarray(dy, dtype=float)[:, None]
        grads = {}
        for layer, names in zip(reversed(self._layers), reversed(self._owner_names())):
            g, pg = layer.backward(g)
            for short, name in zip(("weight", "bias"), names):
                grads[name] = pg[short]
        return grads

    def release(self) -> None:
        """Free forward-pass caches; the next backward needs a fresh forward."""
        for layer in self._layers:
            layer.release()

    def copy(self) -> CnnModel:
        return CnnModel(self.arch, {k: v.copy() for k, v in self.params.items()}, dict(self.meta))


def build_model(dims: int, in_channels: int, rng: np.random.Generator, **arch_kwargs) -> CnnModel:
    """He-initialised weights, zero biases; the output layer uses a smaller scale."""
    arch = Architecture(dims, in_channels, **arch_kwargs)
    params = {}
    shapes = arch.param_shapes()
    for name, shape in shapes:
        if name.endswith("bias"):
            params[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[:-1]))
        gain = 1.0 if name == shapes[-2][0] else 2.0
        params[name] = rng.normal(0.0, np.sqrt(gain / fan_in), size=shape)
    return CnnModel(arch, params)


def build_input(record: CircuitRecord, with_noisy: bool = True) -> np.ndarray:
    """Stack [q/10, theta, z_noisy] channels: (N, C) for config A, (N, P, C) for B."""
    q = np.asarray(record.q, dtype=float) / Q_SCALE
    theta = np.asarray(record.theta, dtype=float)
    z = np.asarray(record.z_noisy, dtype=float)
    if record.config == "A":
        chans = [q, theta] + ([z] if with_noisy else [])
        return np.stack(chans, axis=-1)
    n, p = record.n, record.p_layers
    chans = [np.repeat(q[:, None], p, axis=1), np.repeat(theta[None, :], n, axis=0)]
    if with_noisy:
        chans.append(np.repeat(z[:, None], p, axis=1))
    return np.stack(chans, axis=-1)


def forward(model: CnnModel, x: np.ndarray) -> float:
    return float(model.forward_batch(np.asarray(x)[None])[0])


def backward(model: CnnModel, x: np.ndarray, target: float) -> dict[str, np.ndarray]:
    """Gradients of (prediction - target)^2 for one input."""
    y_hat = model.forward_batch(np.asarray(x)[None])
    return model.backward_batch(2.0 * (y_hat - target))


def group_by_shape(inputs: list[np.ndarray]) -> dict[tuple, list[int]]:
    groups: dict[tuple, list[int]] = {}
    for i, x in enumerate(inputs):
        groups.setdefault(x.shape, []).append(i)
    return groups


def predict_inputs(model: CnnModel, inputs: list[np.ndarray], batch_size: int = 512) -> np.ndarray:
    out = np.empty(len(inputs))
    for idx in group_by_shape(inputs).values():
        for k in range(0, len(idx), batch_size):
            chunk = idx[k:k + batch_size]
            out[chunk] = model.forward_batch(np.stack([inputs[i] for i in chunk]))
    model.release()
    return out


def predict_batch(model: CnnModel, records: list[CircuitRecord], with_noisy: bool | None = None) -> np.ndarray:
    """One prediction per record, in order; records of any size are accepted."""
    if not records:
        return np.empty(0)
    if len({r.config for r in records}) > 1:
        raise ValueError("records must share one configuration")
    if with_noisy is None:
        with_noisy = model.in_channels == 3
    return predict_inputs(model, [build_input(r, with_noisy) for r in records])


# --- model files --------------------------------------------------------------
# layout: magic | u32 version | u32 header length | JSON header | float64 LE blocks

def save_model(model: CnnModel, path: str | Path) -> None:
    shapes = model.arch.param_shapes()
    header = json.dumps({
        "arch": model.arch.to_json(),
        "params": [{"name": n, "shape": list(s)} for n, s in shapes],
        "meta": model.meta,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for name, _ in shapes:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_model(path: str | Path) -> CnnModel:
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise ModelFileError(f"{path}: not a model file")
    off = len(MAGIC)
    if len(data) < off + 8:
        raise ModelFileError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<II", data, off)
    if version != FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported format version {version}")
    off += 8
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"{path}: corrupt header") from exc
    off += hlen
    arch_json = header["arch"]
    arch = Architecture(
        arch_json["dims"], arch_json["in_channels"], tuple(arch_json["conv_widths"]),
        arch_json["kernel"], tuple(arch_json["dense_widths"]), arch_json["activation"], arch_json["pooling"],
    )
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 8
        if off + size > len(data):
            raise ModelFileError(f"{path}: truncated weights")
        params[entry["name"]] = np.frombuffer(data, dtype="<f8", count=size // 8, offset=off).reshape(shape).copy()
        off += size
    if off != len(data):
        raise ModelFileError(f"{path}: {len(data) - off} trailing bytes")
    return CnnModel(arch, params, header.get("meta", {}))
