"""Baseline 1D-CNN and hybrid QCNN + 1D-CNN classifiers.

A model is a frozen :class:`ModelSpec` plus one flat float64 parameter vector.
The first ``16 * qcnn_count`` points of a series feed the QCNN blocks, the rest
feed the conv chain; QCNN probability pairs and flattened conv features are
concatenated (QCNNs first) and passed through the dense head.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import nn, qcnn
from .errors import DataError, ShapeError

SERIES_LEN = 140
QCNN_INPUT = 16
KINDS = ("baseline", "hybrid1", "hybrid2", "hybrid4")

CHECKPOINT_MAGIC = b"HQCNNCKP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    qcnn_count: int
    convs: tuple
    hidden: tuple = (18, 9)
    n_classes: int = 2
    dropout: float = 0.0
    input_len: int = SERIES_LEN

    @property
    def classical_input_len(self) -> int:
        return self.input_len - QCNN_INPUT * self.qcnn_count

    @property
    def conv_output_shape(self) -> tuple[int, int]:
        length = self.classical_input_len
        for conv in self.convs:
            length = conv.output_length(length)
        return self.convs[-1].out_channels, length

    @property
    def concat_dim(self) -> int:
        channels, length = self.conv_output_shape
        return 2 * self.qcnn_count + channels * length

    @property
    def dense(self) -> tuple:
        dims = (self.concat_dim, *self.hidden, self.n_classes)
        return tuple(nn.DenseLayer(a, b) for a, b in zip(dims[:-1], dims[1:]))


_CHAIN3 = (nn.Conv1dLayer(1, 8, 30, 2), nn.Conv1dLayer(8, 16, 20, 2), nn.Conv1dLayer(16, 32, 10, 2))

# dropout only where the architecture tables list a "Dropout 1D" row
SPECS = {
    "baseline": ModelSpec("baseline", 0, _CHAIN3, dropout=0.5),
    "hybrid1": ModelSpec("hybrid1", 1, _CHAIN3, dropout=0.5),
    "hybrid2": ModelSpec("hybrid2", 2, _CHAIN3),
    "hybrid4": ModelSpec("hybrid4", 4, _CHAIN3[:2]),
}


def build_spec(kind: str) -> ModelSpec:
    try:
        return SPECS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}") from None


def count_parameters(spec: ModelSpec) -> int:
    """Trainable parameters from the per-layer formulas."""
    total = sum(c.in_channels * c.out_channels * c.kernel + c.out_channels for c in spec.convs)
    total += sum(d.in_dim * d.out_dim + d.out_dim for d in spec.dense)
    return total + qcnn.N_PARAMS * spec.qcnn_count


def layer_shapes(spec: ModelSpec) -> list[tuple[str, tuple, tuple]]:
    """(layer, input dims, output dims) in the (H, W, D) notation of the tables."""
    rows = [("input", (1, 1, spec.input_len), None)]
    for k in range(spec.qcnn_count):
        rows.append((f"qcnn{k + 1}", (1, 1, QCNN_INPUT), (1, 1, 2)))
    channels, length = 1, spec.classical_input_len
    rows.append(("classical_input", (1, 1, length), None))
    for i, conv in enumerate(spec.convs, 1):
        out_len = conv.output_length(length)
        rows.append((f"conv{i}", (1, channels, length), (1, conv.out_channels, out_len)))
        channels, length = conv.out_channels, out_len
    rows.append(("concat", (1, 1, spec.concat_dim), None))
    for i, dense in enumerate(spec.dense, 1):
        rows.append((f"fc{i}", (1, 1, dense.in_dim), (1, 1, dense.out_dim)))
    rows.append(("output", None, (1, spec.n_classes)))
    return rows


@lru_cache(maxsize=None)
def param_layout(spec: ModelSpec) -> dict[str, tuple[slice, tuple]]:
    """Name -> (slice into the flat vector, array shape)."""
    layout = {}
    offset = 0

    def add(name, shape):
        nonlocal offset
        size = int(np.prod(shape))
        layout[name] = (slice(offset, offset + size), shape)
        offset += size

    if spec.qcnn_count:
        add("qcnn", (spec.qcnn_count, qcnn.N_PARAMS))
    for i, conv in enumerate(spec.convs, 1):
        add(f"conv{i}.weight", conv.weight_shape)
        add(f"conv{i}.bias", (conv.out_channels,))
    for i, dense in enumerate(spec.dense, 1):
        add(f"fc{i}.weight", dense.weight_shape)
        add(f"fc{i}.bias", (dense.out_dim,))
    return layout


def layout_size(spec: ModelSpec) -> int:
    return max(s.stop for s, _ in param_layout(spec).values())


def unpack(spec: ModelSpec, params) -> dict[str, np.ndarray]:
    params = np.asarray(params, dtype=float)
    if params.shape != (layout_size(spec),):
        raise ShapeError(f"{spec.kind} expects {layout_size(spec)} parameters, got {params.shape}")
    return {name: params[s].reshape(shape) for name, (s, shape) in param_layout(spec).items()}


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """He-normal weights, zero biases, N(0, 0.1) quantum angles."""
    params = np.zeros(layout_size(spec))
    for name, (s, shape) in param_layout(spec).items():
        if name == "qcnn":
            params[s] = rng.normal(0.0, 0.1, s.stop - s.start)
        elif name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            params[s] = rng.normal(0.0, np.sqrt(2.0 / fan_in), s.stop - s.start)
    return params


def split_input(x, spec: ModelSpec):
    """Contiguous prefix split: QCNN k gets x[16k:16k+16], the conv chain the rest."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.input_len,):
        raise ShapeError(f"expected a series of {spec.input_len} points, got shape {x.shape}")
    cut = QCNN_INPUT * spec.qcnn_count
    segments = [x[QCNN_INPUT * k:QCNN_INPUT * (k + 1)] for k in range(spec.qcnn_count)]
    return segments, x[cut:]


@dataclass
class ForwardTrace:
    x: np.ndarray
    qcnn_inputs: np.ndarray | None
    qcnn_probs: np.ndarray | None
    qcnn_jac: np.ndarray | None
    conv_inputs: list = field(default_factory=list)
    conv_pre: list = field(default_factory=list)
    dropout_mask: np.ndarray | None = None
    dense_inputs: list = field(default_factory=list)
    dense_pre: list = field(default_factory=list)
    logits: np.ndarray | None = None


def forward(spec: ModelSpec, params, x, training: bool = False, rng=None):
    """Return (logits, trace). Dropout is active only when ``training``."""
    p = unpack(spec, params)
    segments, classical = split_input(x, spec)
    trace = ForwardTrace(x=np.asarray(x, dtype=float), qcnn_inputs=None, qcnn_probs=None, qcnn_jac=None)

    parts = []
    if spec.qcnn_count:
        trace.qcnn_inputs = np.stack(segments)
        probs, jac = qcnn.qcnn_jacobian_batch(trace.qcnn_inputs, p["qcnn"], want_jacobian=training)
        trace.qcnn_probs, trace.qcnn_jac = probs, jac
        parts.append(probs.reshape(-1))

    h = classical[None, :]
    for i, conv in enumerate(spec.convs, 1):
        trace.conv_inputs.append(h)
        pre = nn.conv1d_forward(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"], conv.stride)
        trace.conv_pre.append(pre)
        h = nn.relu_forward(pre)
    feat, trace.dropout_mask = nn.dropout_forward(h.reshape(-1), spec.dropout, training, rng)
    parts.append(feat)

    z = np.concatenate(parts)
    n_dense = len(spec.dense)
    for i in range(1, n_dense + 1):
        trace.dense_inputs.append(z)
        pre = nn.dense_forward(z, p[f"fc{i}.weight"], p[f"fc{i}.bias"])
        trace.dense_pre.append(pre)
        z = nn.relu_forward(pre) if i < n_dense else pre
    trace.logits = z
    return z, trace


def backward(spec: ModelSpec, params, trace: ForwardTrace, dlogits) -> np.ndarray:
    """Gradient of ``dlogits . logits`` wrt every entry of the flat parameter vector."""
    p = unpack(spec, params)
    layout = param_layout(spec)
    grad = np.zeros(layout_size(spec))

    def put(name, value):
        grad[layout[name][0]] = value.reshape(-1)

    dz = np.asarray(dlogits, dtype=float)
    n_dense = len(spec.dense)
    for i in range(n_dense, 0, -1):
        if i < n_dense:
            dz = nn.relu_backward(trace.dense_pre[i - 1], dz)
        dz, dw, db = nn.dense_backward(trace.dense_inputs[i - 1], p[f"fc{i}.weight"], dz)
        put(f"fc{i}.weight", dw)
        put(f"fc{i}.bias", db)

    n_q = 2 * spec.qcnn_count
    dq, dfeat = dz[:n_q], dz[n_q:]

    dh = nn.dropout_backward(dfeat, trace.dropout_mask).reshape(trace.conv_pre[-1].shape)
    for i in range(len(spec.convs), 0, -1):
        conv = spec.convs[i - 1]
        dh = nn.relu_backward(trace.conv_pre[i - 1], dh)
        dh, dw, db = nn.conv1d_backward(
            trace.conv_inputs[i - 1], p[f"conv{i}.weight"], dh, conv.stride, need_dx=i > 1
        )
        put(f"conv{i}.weight", dw)
        put(f"conv{i}.bias", db)

    if spec.qcnn_count:
        jac = trace.qcnn_jac
        if jac is None:
            _, jac = qcnn.qcnn_jacobian_batch(trace.qcnn_inputs, p["qcnn"])
        upstream = dq.reshape(spec.qcnn_count, 2)
        put("qcnn", np.einsum("kc,kcj->kj", upstream, jac))
    return grad


def predict(spec: ModelSpec, params, x) -> int:
    logits, _ = forward(spec, params, x, training=False)
    return int(np.argmax(logits))


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, spec: ModelSpec, params) -> tuple[Path, Path]:
    """Binary parameter file plus a JSON sidecar holding the index map."""
    path = Path(path)
    params = np.asarray(params, dtype="<f8")
    if params.shape != (layout_size(spec),):
        raise ShapeError(f"{spec.kind} expects {layout_size(spec)} parameters, got {params.shape}")
    kind = spec.kind.encode()
    header = CHECKPOINT_MAGIC + struct.pack("<HH", CHECKPOINT_VERSION, len(kind)) + kind
    header += struct.pack("<Q", params.size)
    path.write_bytes(header + params.tobytes())
    sidecar = path.with_suffix(path.suffix + ".json")
    index = {
        name: {"start": s.start, "stop": s.stop, "shape": list(shape)}
        for name, (s, shape) in param_layout(spec).items()
    }
    sidecar.write_text(json.dumps(
        {"version": CHECKPOINT_VERSION, "kind": spec.kind, "num_params": int(params.size), "index": index},
        indent=2,
    ))
    return path, sidecar


def load_checkpoint(path) -> tuple[ModelSpec, np.ndarray]:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise DataError(f"{path} is not a model checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    version, kind_len = struct.unpack_from("<HH", data, pos)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    pos += 4
    kind = data[pos:pos + kind_len].decode()
    pos += kind_len
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    params = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(float)
    spec = build_spec(kind)
    if count != layout_size(spec):
        raise ShapeError(f"checkpoint holds {count} parameters, {kind} needs {layout_size(spec)}")
    return spec, params
