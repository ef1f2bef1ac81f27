"""Trainable classifiers with analytic gradients and the client-side trainer.

Two architectures over frames-by-dims feature matrices:

* ``mlp``: mean-pool over frames -> dense(ReLU) -> dense. Cheap, used for
  desk-scale federation runs.
* ``conv_gru``: two valid 3x3 convolutions (ReLU, 2x2 max-pool each) over the
  time-by-mel plane, a GRU over the pooled frame axis, mean-pool over time,
  then dense(ReLU) -> dense.

All weights live in one flat float64 vector with a named layout, so server
aggregation is plain vector arithmetic. Gradients are hand-derived and are
validated against central finite differences in the test suite. Hot conv/GRU
kernels dispatch through the kernels subpackage (numba or numpy backend).
Variable-length inputs are processed per example; no padding is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .seeding import derived_rng


class ModelError(Exception):
    pass


class ShapeMismatch(ModelError):
    pass


class EmptyShard(ModelError):
    pass


@dataclass(frozen=True)
class ModelArch:
    """Architecture hyperparameters; sizes are validated eagerly."""

    kind: str  # "mlp" or "conv_gru"
    input_dim: int
    n_classes: int
    hidden: int = 64  # mlp hidden width
    conv_channels: tuple[int, int] = (16, 32)
    gru_hidden: int = 64
    dense_hidden: int = 64

    def __post_init__(self):
        if self.kind not in ("mlp", "conv_gru"):
            raise ValueError(f"unknown arch kind {self.kind!r}")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.input_dim < 1 or self.hidden < 1 or self.gru_hidden < 1 or self.dense_hidden < 1:
            raise ValueError("all widths must be >= 1")
        if any(c < 1 for c in self.conv_channels) or len(self.conv_channels) != 2:
            raise ValueError("conv_channels must be two counts >= 1")
        if self.kind == "conv_gru" and self._pooled_dims() < 1:
            raise ValueError(
                f"input_dim {self.input_dim} collapses to zero width after two conv+pool stages"
            )

    def _pooled_dims(self) -> int:
        d1 = (self.input_dim - 2) // 2
        return (d1 - 2) // 2

    def min_frames(self) -> int:
        """Smallest frame count an example needs to survive the conv stack."""
        if self.kind == "mlp":
            return 1
        # inverse of t -> ((t-2)//2 - 2)//2 >= 1
        return 10

    def gru_input_dim(self) -> int:
        return self.conv_channels[1] * self._pooled_dims()


@dataclass(frozen=True)
class Batch:
    """A labeled minibatch; inputs may differ in frame count, never in dims."""

    inputs: list[np.ndarray]
    targets: np.ndarray

    def __post_init__(self):
        if len(self.inputs) == 0:
            raise ValueError("batch must be non-empty")
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets must have equal length")


@dataclass
class ParamVector:
    """Flat parameter vector plus the (name, shape, offset) layout."""

    values: np.ndarray
    layout: tuple[tuple[str, tuple[int, ...], int], ...]

    def view(self, name: str) -> np.ndarray:
        for tname, shape, offset in self.layout:
            if tname == name:
                size = int(np.prod(shape))
                return self.values[offset : offset + size].reshape(shape)
        raise KeyError(name)

    def copy(self) -> "ParamVector":
        return ParamVector(values=self.values.copy(), layout=self.layout)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(values=np.zeros_like(self.values), layout=self.layout)

    def __len__(self) -> int:
        return len(self.values)


def arch_layout(arch: ModelArch) -> tuple[tuple[str, tuple[int, ...], int], ...]:
    if arch.kind == "mlp":
        shapes = [
            ("dense1.w", (arch.input_dim, arch.hidden)),
            ("dense1.b", (arch.hidden,)),
            ("dense2.w", (arch.hidden, arch.n_classes)),
            ("dense2.b", (arch.n_classes,)),
        ]
    else:
        c1, c2 = arch.conv_channels
        h = arch.gru_hidden
        din = arch.gru_input_dim()
        shapes = [
            ("conv1.w", (c1, 1, 3, 3)),
            ("conv1.b", (c1,)),
            ("conv2.w", (c2, c1, 3, 3)),
            ("conv2.b", (c2,)),
            ("gru.wz", (din, h)),
            ("gru.wr", (din, h)),
            ("gru.wc", (din, h)),
            ("gru.uz", (h, h)),
            ("gru.ur", (h, h)),
            ("gru.uc", (h, h)),
            ("gru.bz", (h,)),
            ("gru.br", (h,)),
            ("gru.bc", (h,)),
            ("dense1.w", (h, arch.dense_hidden)),
            ("dense1.b", (arch.dense_hidden,)),
            ("dense2.w", (arch.dense_hidden, arch.n_classes)),
            ("dense2.b", (arch.n_classes,)),
        ]
    layout = []
    offset = 0
    for name, shape in shapes:
        layout.append((name, shape, offset))
        offset += int(np.prod(shape))
    return tuple(layout)


def _glorot_bound(name: str, shape: tuple[int, ...]) -> float:
    if name.endswith(".b"):
        return 0.0
    if len(shape) == 4:  # conv: (out_ch, in_ch, kh, kw)
        fan_in = shape[1] * shape[2] * shape[3]
        fan_out = shape[0] * shape[2] * shape[3]
    else:
        fan_in, fan_out = shape[0], shape[1]
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(arch: ModelArch, seed: int) -> ParamVector:
    """Glorot-uniform weights, zero biases; deterministic in seed."""
    layout = arch_layout(arch)
    total = layout[-1][2] + int(np.prod(layout[-1][1]))
    values = np.zeros(total)
    rng = derived_rng(seed, "init")
    pv = ParamVector(values=values, layout=layout)
    for name, shape, offset in layout:
        bound = _glorot_bound(name, shape)
        if bound > 0.0:
            size = int(np.prod(shape))
            values[offset : offset + size] = rng.uniform(-bound, bound, size)
    return pv


# --- forward / backward ------------------------------------------------------

def _check_batch(arch: ModelArch, batch: Batch) -> None:
    for x in batch.inputs:
        if x.ndim != 2 or x.shape[1] != arch.input_dim:
            raise ShapeMismatch(
                f"input of shape {x.shape} does not match input_dim {arch.input_dim}"
            )
        if x.shape[0] < arch.min_frames():
            raise ShapeMismatch(
                f"{x.shape[0]} frames below the architecture minimum {arch.min_frames()}"
            )
    if np.any(batch.targets < 0) or np.any(batch.targets >= arch.n_classes):
        raise ShapeMismatch("target outside [0, n_classes)")


def forward(params: ParamVector, arch: ModelArch, batch: Batch) -> np.ndarray:
    """Logits matrix, len(batch) x n_classes."""
    _check_batch(arch, batch)
    if arch.kind == "mlp":
        return _mlp_forward(params, batch)[0]
    ops = kernels.get_ops()
    return np.stack([_conv_gru_forward(params, arch, x, ops)[0] for x in batch.inputs])


def loss_and_grad(params: ParamVector, arch: ModelArch, batch: Batch) -> tuple[float, ParamVector]:
    """Mean softmax cross-entropy and its gradient (same layout as params)."""
    _check_batch(arch, batch)
    grad = ParamVector(values=np.zeros_like(params.values), layout=params.layout)
    if arch.kind == "mlp":
        logits, cache = _mlp_forward(params, batch)
        loss, dlogits = _softmax_ce(logits, batch.targets)
        _mlp_backward(params, grad, cache, dlogits)
        return loss, grad

    ops = kernels.get_ops()
    n = len(batch.inputs)
    rows = []
    caches = []
    for x in batch.inputs:
        logits_row, cache = _conv_gru_forward(params, arch, x, ops)
        rows.append(logits_row)
        caches.append(cache)
    loss, dlogits = _softmax_ce(np.stack(rows), batch.targets)
    for i in range(n):
        _conv_gru_backward(params, grad, caches[i], dlogits[i], ops)
    return loss, grad


def _softmax_ce(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Stable mean cross-entropy; returns (loss, dlogits) with dlogits already /N."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    z = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(z)
    idx = np.arange(n)
    loss = float(-log_probs[idx, targets].mean())
    dlogits = exp / z
    dlogits[idx, targets] -= 1.0
    return loss, dlogits / n


def _mlp_forward(params: ParamVector, batch: Batch):
    pooled = np.stack([x.mean(axis=0) for x in batch.inputs])
    w1, b1 = params.view("dense1.w"), params.view("dense1.b")
    w2, b2 = params.view("dense2.w"), params.view("dense2.b")
    a1 = pooled @ w1 + b1
    h1 = np.maximum(a1, 0.0)
    logits = h1 @ w2 + b2
    return logits, (pooled, a1, h1)


def _mlp_backward(params: ParamVector, grad: ParamVector, cache, dlogits: np.ndarray) -> None:
    pooled, a1, h1 = cache
    w2 = params.view("dense2.w")
    grad.view("dense2.w")[:] = h1.T @ dlogits
    grad.view("dense2.b")[:] = dlogits.sum(axis=0)
    da1 = (dlogits @ w2.T) * (a1 > 0)
    grad.view("dense1.w")[:] = pooled.T @ da1
    grad.view("dense1.b")[:] = da1.sum(axis=0)


def _conv_gru_forward(params: ParamVector, arch: ModelArch, x: np.ndarray, ops):
    p = params.view
    a1 = ops.conv2d_fwd(np.ascontiguousarray(x[None]), p("conv1.w"), p("conv1.b"))
    r1 = np.maximum(a1, 0.0)
    p1, arg1 = ops.maxpool2_fwd(r1)
    a2 = ops.conv2d_fwd(p1, p("conv2.w"), p("conv2.b"))
    r2 = np.maximum(a2, 0.0)
    p2, arg2 = ops.maxpool2_fwd(r2)
    t2 = p2.shape[1]
    seq = np.ascontiguousarray(p2.transpose(1, 0, 2).reshape(t2, -1))
    hs, zs, rs, cs = ops.gru_fwd(
        seq, p("gru.wz"), p("gru.wr"), p("gru.wc"),
        p("gru.uz"), p("gru.ur"), p("gru.uc"),
        p("gru.bz"), p("gru.br"), p("gru.bc"),
    )
    hbar = hs[1:].mean(axis=0)
    a3 = hbar @ p("dense1.w") + p("dense1.b")
    h3 = np.maximum(a3, 0.0)
    logits = h3 @ p("dense2.w") + p("dense2.b")
    cache = (x, a1, p1, arg1, a2, p2, arg2, seq, hs, zs, rs, cs, hbar, a3, h3)
    return logits, cache


def _conv_gru_backward(params: ParamVector, grad: ParamVector, cache, dlogits: np.ndarray, ops) -> None:
    (x, a1, p1, arg1, a2, p2, arg2, seq, hs, zs, rs, cs, hbar, a3, h3) = cache
    p = params.view
    g = grad.view

    g("dense2.w")[:] += np.outer(h3, dlogits)
    g("dense2.b")[:] += dlogits
    da3 = (p("dense2.w") @ dlogits) * (a3 > 0)
    g("dense1.w")[:] += np.outer(hbar, da3)
    g("dense1.b")[:] += da3
    dhbar = p("dense1.w") @ da3

    t2 = seq.shape[0]
    dh_out = np.tile(dhbar / t2, (t2, 1))
    (dseq, dwz, dwr, dwc, duz, dur, duc, dbz, dbr, dbc) = ops.gru_bwd(
        seq, hs, zs, rs, cs,
        p("gru.wz"), p("gru.wr"), p("gru.wc"),
        p("gru.uz"), p("gru.ur"), p("gru.uc"),
        dh_out,
    )
    for name, val in (
        ("gru.wz", dwz), ("gru.wr", dwr), ("gru.wc", dwc),
        ("gru.uz", duz), ("gru.ur", dur), ("gru.uc", duc),
        ("gru.bz", dbz), ("gru.br", dbr), ("gru.bc", dbc),
    ):
        g(name)[:] += val

    c2 = p2.shape[0]
    dp2 = np.ascontiguousarray(dseq.reshape(t2, c2, -1).transpose(1, 0, 2))
    dr2 = ops.maxpool2_bwd(dp2, arg2, a2.shape[1], a2.shape[2])
    da2 = dr2 * (a2 > 0)
    dp1, dw2, db2 = ops.conv2d_bwd(p1, p("conv2.w"), da2)
    g("conv2.w")[:] += dw2
    g("conv2.b")[:] += db2
    dr1 = ops.maxpool2_bwd(dp1, arg1, a1.shape[1], a1.shape[2])
    da1 = dr1 * (a1 > 0)
    _, dw1, db1 = ops.conv2d_bwd(np.ascontiguousarray(x[None]), p("conv1.w"), da1)
    g("conv1.w")[:] += dw1
    g("conv1.b")[:] += db1


# --- client-side SGD ---------------------------------------------------------

def local_train(
    params: ParamVector,
    arch: ModelArch,
    shard: list[tuple[np.ndarray, int]],
    lr: float,
    epochs: int,
    batch_size: int,
    seed: int,
    *,
    epoch_offset: int = 0,
    loss_sink: list | None = None,
) -> ParamVector:
    """Plain SGD over the shard; returns new params, input left untouched.

    Each epoch draws its shuffle from a stream keyed by (seed, global epoch
    index), so training e epochs and then e' more with epoch_offset=e equals
    one e+e' epoch run. Per-step losses are appended to ``loss_sink`` when
    given.
    """
    if len(shard) == 0:
        raise EmptyShard("client shard is empty")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    out = params.copy()
    n = len(shard)
    for epoch in range(epochs):
        order = derived_rng(seed, "epoch", epoch_offset + epoch).permutation(n)
        for start in range(0, n, batch_size):
            picked = order[start : start + batch_size]
            batch = Batch(
                inputs=[shard[i][0] for i in picked],
                targets=np.array([shard[i][1] for i in picked]),
            )
            loss, grad = loss_and_grad(out, arch, batch)
            if loss_sink is not None:
                loss_sink.append(loss)
            out.values -= lr * grad.values
    return out


# --- checkpoint serialization -------------------------------------------------

def write_params(path, params: ParamVector) -> None:
    """Text checkpoint: one ``tensor=... shape=... offset=...`` line per tensor,
    then every value on its own line, full precision."""
    with open(path, "w") as f:
        for name, shape, offset in params.layout:
            shape_s = "x".join(str(d) for d in shape)
            f.write(f"tensor={name} shape={shape_s} offset={offset}\n")
        for v in params.values:
            f.write(repr(float(v)) + "\n")


def read_params(path) -> ParamVector:
    layout = []
    values = []
    with open(path, "r") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("tensor="):
                fields = line.split()
                if len(fields) != 3 or not fields[1].startswith("shape=") or not fields[2].startswith("offset="):
                    raise ValueError(f"bad checkpoint header line: {line!r}")
                name = fields[0][len("tensor="):]
                shape = tuple(int(d) for d in fields[1][len("shape="):].split("x"))
                offset = int(fields[2][len("offset="):])
                layout.append((name, shape, offset))
            else:
                values.append(float(line))
    vec = np.array(values)
    expected = sum(int(np.prod(s)) for _, s, _ in layout)
    if expected != len(vec):
        raise ValueError(f"checkpoint declares {expected} values, found {len(vec)}")
    return ParamVector(values=vec, layout=tuple(layout))
