"""Class-agnostic weight transfer: predict segmentation weights from
classification and box-regression weights.

One small two-layer fully connected network (leaky-rectifier hidden layer)
is shared across every class, so it can produce segmentation weights for
classes it never saw. Training is plain gradient descent on
0.5 * mean ||f(x) - t||^2 with analytic backprop gradients.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

_CKPT_HEADER = struct.Struct("<4Id")


@dataclass(eq=False)
class TransferNet:
    """Parameters of w_seg = W2 @ act(W1 @ [w_cls; w_det] + b1) + b2."""

    d_cls: int
    d_det: int
    d_seg: int
    w1: np.ndarray  # (hidden, d_cls + d_det)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (d_seg, hidden)
    b2: np.ndarray  # (d_seg,)
    alpha: float = 0.1  # leaky-rectifier negative slope

    def __post_init__(self):
        d_in = self.d_cls + self.d_det
        hidden = self.w1.shape[0]
        if hidden < 1:
            raise ValueError("hidden width must be >= 1")
        if self.w1.shape != (hidden, d_in):
            raise ValueError(f"w1 shape {self.w1.shape} != ({hidden}, {d_in})")
        if self.b1.shape != (hidden,):
            raise ValueError(f"b1 shape {self.b1.shape} != ({hidden},)")
        if self.w2.shape != (self.d_seg, hidden):
            raise ValueError(f"w2 shape {self.w2.shape} != ({self.d_seg}, {hidden})")
        if self.b2.shape != (self.d_seg,):
            raise ValueError(f"b2 shape {self.b2.shape} != ({self.d_seg},)")
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters must be finite")

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def initialize(cls, d_cls: int, d_det: int, d_seg: int, hidden: int = 64,
                   alpha: float = 0.1, seed: int = 0) -> "TransferNet":
        rng = np.random.default_rng(seed)
        d_in = d_cls + d_det
        return cls(
            d_cls=d_cls,
            d_det=d_det,
            d_seg=d_seg,
            w1=rng.normal(0.0, np.sqrt(2.0 / d_in), size=(hidden, d_in)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, np.sqrt(2.0 / hidden), size=(d_seg, hidden)),
            b2=np.zeros(d_seg),
            alpha=alpha,
        )

    def parameters(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)


@dataclass(frozen=True, eq=False)
class TransferGradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    loss: float


def _leaky(z: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(z >= 0.0, z, alpha * z)


def _forward_batch(net: TransferNet, x: np.ndarray):
    z1 = x @ net.w1.T + net.b1
    a1 = _leaky(z1, net.alpha)
    out = a1 @ net.w2.T + net.b2
    return out, z1, a1


def transfer_forward(net: TransferNet, w_cls: np.ndarray, w_det: np.ndarray) -> np.ndarray:
    """Predict segmentation weights for one class from its [w_cls; w_det]."""
    w_cls = np.asarray(w_cls, dtype=np.float64)
    w_det = np.asarray(w_det, dtype=np.float64)
    if w_cls.shape != (net.d_cls,):
        raise ValueError(f"w_cls shape {w_cls.shape} != ({net.d_cls},)")
    if w_det.shape != (net.d_det,):
        raise ValueError(f"w_det shape {w_det.shape} != ({net.d_det},)")
    x = np.concatenate([w_cls, w_det])[None, :]
    return _forward_batch(net, x)[0][0]


def apply_to_unseen_class(net: TransferNet, w_cls: np.ndarray, w_det: np.ndarray) -> np.ndarray:
    """Same computation as :func:`transfer_forward`; the parameters are
    class-agnostic, so nothing changes for a class absent at training time."""
    return transfer_forward(net, w_cls, w_det)


def _batch_arrays(net: TransferNet, batch) -> tuple[np.ndarray, np.ndarray]:
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    xs, ts = [], []
    for w_cls, w_det, target in batch:
        xs.append(np.concatenate([np.asarray(w_cls, dtype=np.float64),
                                  np.asarray(w_det, dtype=np.float64)]))
        ts.append(np.asarray(target, dtype=np.float64))
    x = np.stack(xs)
    t = np.stack(ts)
    if x.shape[1] != net.d_cls + net.d_det:
        raise ValueError(f"input dim {x.shape[1]} != {net.d_cls + net.d_det}")
    if t.shape[1] != net.d_seg:
        raise ValueError(f"target dim {t.shape[1]} != {net.d_seg}")
    return x, t


def transfer_gradient(net: TransferNet, batch) -> TransferGradients:
    """Backprop gradients of 0.5 * mean ||f(x) - t||^2 over the batch."""
    x, t = _batch_arrays(net, batch)
    n = x.shape[0]
    out, z1, a1 = _forward_batch(net, x)
    diff = out - t
    loss = 0.5 * float((diff * diff).sum()) / n
    d_out = diff / n
    g_w2 = d_out.T @ a1
    g_b2 = d_out.sum(axis=0)
    d_a1 = d_out @ net.w2
    d_z1 = d_a1 * np.where(z1 >= 0.0, 1.0, net.alpha)
    g_w1 = d_z1.T @ x
    g_b1 = d_z1.sum(axis=0)
    return TransferGradients(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2, loss=loss)


def train_transfer(net: TransferNet, dataset, steps: int, learning_rate: float,
                   seed: int | None = None, batch_size: int | None = None):
    """Plain gradient descent; returns (net, per-step loss trace).

    Full-batch by default. When ``batch_size`` is given, each step uses a
    mini-batch drawn from ``default_rng(seed)``, so runs are deterministic
    per seed. Aborts on a non-finite loss. The net is updated in place.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if learning_rate < 0:
        raise ValueError(f"learning rate must be >= 0, got {learning_rate}")
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset must be non-empty")
    rng = np.random.default_rng(seed)
    trace: list[float] = []
    for step in range(steps):
        if batch_size is None or batch_size >= len(dataset):
            batch = dataset
        else:
            idx = rng.choice(len(dataset), size=batch_size, replace=False)
            batch = [dataset[i] for i in idx]
        grads = transfer_gradient(net, batch)
        if not np.isfinite(grads.loss):
            raise FloatingPointError(
                f"non-finite loss {grads.loss} at step {step}; reduce the learning rate"
            )
        trace.append(grads.loss)
        net.w1 -= learning_rate * grads.w1
        net.b1 -= learning_rate * grads.b1
        net.w2 -= learning_rate * grads.w2
        net.b2 -= learning_rate * grads.b2
    return net, trace


def save_checkpoint(net: TransferNet, path) -> None:
    """Flat binary checkpoint: dims header then row-major float64 parameters."""
    with open(path, "wb") as f:
        f.write(_CKPT_HEADER.pack(net.d_cls, net.d_det, net.hidden, net.d_seg, net.alpha))
        for arr in net.parameters():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> TransferNet:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _CKPT_HEADER.size:
        raise DataFormatError(f"{path}: truncated checkpoint header")
    d_cls, d_det, hidden, d_seg, alpha = _CKPT_HEADER.unpack_from(data, 0)
    d_in = d_cls + d_det
    shapes = [(hidden, d_in), (hidden,), (d_seg, hidden), (d_seg,)]
    expected = _CKPT_HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(data) != expected:
        raise DataFormatError(f"{path}: checkpoint size {len(data)} != expected {expected}")
    pos = _CKPT_HEADER.size
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).copy())
        pos += 8 * count
    return TransferNet(d_cls=d_cls, d_det=d_det, d_seg=d_seg,
                       w1=arrays[0], b1=arrays[1], w2=arrays[2], b2=arrays[3], alpha=alpha)


def write_loss_trace(trace, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(trace):
            writer.writerow([step, repr(float(loss))])
