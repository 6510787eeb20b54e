"""Small convolutional classifier with hand-rolled forward and backward.

Layer stack (valid convolutions, stride 1; non-overlapping 2x2 max pooling):

    conv 20@5x5 -> maxpool -> conv 50@5x5 -> maxpool -> fc 500 -> ReLU
    -> fc num_classes -> softmax

Only the input size, channel count and class count vary; filter counts and
the hidden width are fixed. Valid input sizes are multiples of 4, at least
16, so that both pooling stages see even extents. Convolutions are computed
as im2col + matmul; backward routes pooling gradients to the first maximum
in scan order, so tied window entries are deterministic.

Training runs in float32; a float64 mode exists for numerical work such as
finite-difference verification.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    InvalidArchitecture,
    LabelOutOfRange,
    NonFiniteLoss,
    ShapeMismatch,
)

CONV1_FILTERS = 20
CONV2_FILTERS = 50
FC1_UNITS = 500
KERNEL = 5

LAYER_ORDER = ("conv1.w", "conv1.b", "conv2.w", "conv2.b",
               "fc1.w", "fc1.b", "fc2.w", "fc2.b")


@dataclass(frozen=True)
class Architecture:
    input_size: int = 56
    input_channels: int = 3
    num_classes: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self):
        s = self.input_size
        if self.input_channels < 1:
            raise InvalidArchitecture(
                f"input_channels must be >= 1, got {self.input_channels}")
        if self.num_classes < 2:
            raise InvalidArchitecture(
                f"num_classes must be >= 2, got {self.num_classes}")
        if s < 16 or s % 4 != 0:
            raise InvalidArchitecture(
                f"input_size must be a multiple of 4 and >= 16, got {s}; "
                "both pooling stages need positive, even extents")
        return self

    @property
    def conv1_out(self):
        return self.input_size - (KERNEL - 1)

    @property
    def pool1_out(self):
        return self.conv1_out // 2

    @property
    def conv2_out(self):
        return self.pool1_out - (KERNEL - 1)

    @property
    def pool2_out(self):
        return self.conv2_out // 2

    @property
    def fc1_in(self):
        return CONV2_FILTERS * self.pool2_out ** 2


def tensor_shapes(arch):
    """Shape of every learnable tensor, in checkpoint order."""
    return {
        "conv1.w": (CONV1_FILTERS, arch.input_channels, KERNEL, KERNEL),
        "conv1.b": (CONV1_FILTERS,),
        "conv2.w": (CONV2_FILTERS, CONV1_FILTERS, KERNEL, KERNEL),
        "conv2.b": (CONV2_FILTERS,),
        "fc1.w": (arch.fc1_in, FC1_UNITS),
        "fc1.b": (FC1_UNITS,),
        "fc2.w": (FC1_UNITS, arch.num_classes),
        "fc2.b": (arch.num_classes,),
    }


def param_count(arch):
    return sum(int(np.prod(s)) for s in tensor_shapes(arch).values())


@dataclass
class NetworkParams:
    arch: Architecture
    class_names: list
    tensors: dict = field(repr=False, default_factory=dict)

    @property
    def dtype(self):
        return self.tensors["conv1.w"].dtype

    def astype(self, dtype):
        return NetworkParams(
            arch=self.arch,
            class_names=list(self.class_names),
            tensors={k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self):
        return self.astype(self.dtype)


def init_params(arch, seed, dtype=np.float32, class_names=None):
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.

    The draw order is fixed, so a seed fully determines the parameters.
    """
    arch.validate()
    if class_names is None:
        class_names = [f"class_{i}" for i in range(arch.num_classes)]
    if len(class_names) != arch.num_classes:
        raise InvalidArchitecture(
            f"{len(class_names)} class names for {arch.num_classes} classes")
    rng = np.random.default_rng(seed)
    shapes = tensor_shapes(arch)
    fans = {
        "conv1.w": (arch.input_channels * KERNEL ** 2,
                    CONV1_FILTERS * KERNEL ** 2),
        "conv2.w": (CONV1_FILTERS * KERNEL ** 2, CONV2_FILTERS * KERNEL ** 2),
        "fc1.w": (arch.fc1_in, FC1_UNITS),
        "fc2.w": (FC1_UNITS, arch.num_classes),
    }
    tensors = {}
    for key in LAYER_ORDER:
        shape = shapes[key]
        if key.endswith(".w"):
            fan_in, fan_out = fans[key]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[key] = rng.uniform(-limit, limit, shape).astype(dtype)
        else:
            tensors[key] = np.zeros(shape, dtype=dtype)
    return NetworkParams(arch=arch, class_names=list(class_names),
                         tensors=tensors)


# --- layer primitives ---

def _conv_cols(x, kernel):
    """im2col: (N, C, H, W) -> (N*OH*OW, C*K*K) patch matrix."""
    n = x.shape[0]
    win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    # (N, C, OH, OW, K, K) -> (N, OH, OW, C, K, K), flattened per patch
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n, -1, win.shape[1] * kernel * kernel)


def _conv_forward(x, w, b):
    n, _, h, width = x.shape
    f, _, k, _ = w.shape
    oh, ow = h - k + 1, width - k + 1
    cols = _conv_cols(x, k).reshape(n * oh * ow, -1)
    out = cols @ w.reshape(f, -1).T
    out += b
    out = out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)
    return out, cols


def _conv_backward(dout, cols, w, x_shape, need_dx):
    n, f, oh, ow = dout.shape
    k = w.shape[2]
    dmat = np.ascontiguousarray(
        dout.transpose(0, 2, 3, 1)).reshape(n * oh * ow, f)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    if not need_dx:
        return dw, db, None
    # full correlation of the padded upstream gradient with flipped filters
    dpad = np.pad(dout, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    cols2 = _conv_cols(dpad, k).reshape(n * x_shape[2] * x_shape[3], -1)
    wflip = w[:, :, ::-1, ::-1].transpose(0, 2, 3, 1).reshape(f * k * k, -1)
    dx = (cols2 @ wflip).reshape(
        n, x_shape[2], x_shape[3], x_shape[1]).transpose(0, 3, 1, 2)
    return dw, db, dx


def _pool_forward(x):
    """2x2 stride-2 max pooling; returns output and flat argmax per window."""
    n, c, h, w = x.shape
    xw = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    xw = np.ascontiguousarray(xw).reshape(n, c, h // 2, w // 2, 4)
    idx = xw.argmax(axis=-1)  # first maximum wins on ties
    out = np.take_along_axis(xw, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_forward_lean(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).max(axis=(3, 5))


def _pool_backward(dout, idx, x_shape):
    n, c, h, w = x_shape
    dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dwin).reshape(n, c, h, w)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _validate_batch(params, batch):
    arch = params.arch
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1:] != (
            arch.input_channels, arch.input_size, arch.input_size):
        raise ShapeMismatch(
            f"expected batch of shape (N, {arch.input_channels}, "
            f"{arch.input_size}, {arch.input_size}), got {batch.shape}")
    if batch.dtype != params.dtype:
        batch = batch.astype(params.dtype)
    if not np.isfinite(batch).all():
        raise NonFiniteLoss("non-finite values in input batch")
    return batch


def _validate_labels(labels, num_classes):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeMismatch(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelOutOfRange(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]")
    return labels.astype(np.int64)


def forward(params, batch):
    """Run the network; returns (logits, probs), each of shape (N, C)."""
    x = _validate_batch(params, batch)
    t = params.tensors
    # diverged parameters overflow float32 here; the finite check below
    # turns that into NonFiniteLoss instead of a warning
    with np.errstate(over="ignore", invalid="ignore"):
        h, _ = _conv_forward(x, t["conv1.w"], t["conv1.b"])
        h = _pool_forward_lean(h)
        h, _ = _conv_forward(h, t["conv2.w"], t["conv2.b"])
        h = _pool_forward_lean(h)
        h = h.reshape(x.shape[0], -1)
        h = np.maximum(h @ t["fc1.w"] + t["fc1.b"], 0)
        logits = h @ t["fc2.w"] + t["fc2.b"]
    if not np.isfinite(logits).all():
        raise NonFiniteLoss("non-finite logits")
    logp = _log_softmax(logits)
    return logits, np.exp(logp)


def loss(probs, labels):
    """Mean cross-entropy -ln(probability of the true class)."""
    probs = np.asarray(probs)
    labels = _validate_labels(labels, probs.shape[1])
    picked = probs[np.arange(probs.shape[0]), labels]
    with np.errstate(divide="ignore"):
        return float(np.mean(-np.log(picked)))


def loss_value(params, batch, labels):
    """Scalar training loss at the given parameters (no gradient work)."""
    x = _validate_batch(params, batch)
    labels = _validate_labels(labels, params.arch.num_classes)
    t = params.tensors
    h, _ = _conv_forward(x, t["conv1.w"], t["conv1.b"])
    h = _pool_forward_lean(h)
    h, _ = _conv_forward(h, t["conv2.w"], t["conv2.b"])
    h = _pool_forward_lean(h)
    h = h.reshape(x.shape[0], -1)
    h = np.maximum(h @ t["fc1.w"] + t["fc1.b"], 0)
    logits = h @ t["fc2.w"] + t["fc2.b"]
    logp = _log_softmax(logits)
    return float(-logp[np.arange(x.shape[0]), labels].mean())


def loss_and_gradients(params, batch, labels):
    """One combined forward/backward pass; returns (loss, gradient dict)."""
    x = _validate_batch(params, batch)
    labels = _validate_labels(labels, params.arch.num_classes)
    t = params.tensors
    n = x.shape[0]

    with np.errstate(over="ignore", invalid="ignore"):
        a1, cols1 = _conv_forward(x, t["conv1.w"], t["conv1.b"])
        p1, idx1 = _pool_forward(a1)
        a2, cols2 = _conv_forward(p1, t["conv2.w"], t["conv2.b"])
        p2, idx2 = _pool_forward(a2)
        flat = p2.reshape(n, -1)
        h_pre = flat @ t["fc1.w"] + t["fc1.b"]
        h = np.maximum(h_pre, 0)
        logits = h @ t["fc2.w"] + t["fc2.b"]
    if not np.isfinite(logits).all():
        raise NonFiniteLoss("non-finite logits")
    logp = _log_softmax(logits)
    loss_val = float(-logp[np.arange(n), labels].mean())

    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    grads = {}
    grads["fc2.w"] = h.T @ dlogits
    grads["fc2.b"] = dlogits.sum(axis=0)
    dh = dlogits @ t["fc2.w"].T
    dh *= h_pre > 0
    grads["fc1.w"] = flat.T @ dh
    grads["fc1.b"] = dh.sum(axis=0)
    dflat = dh @ t["fc1.w"].T
    dp2 = dflat.reshape(p2.shape)
    da2 = _pool_backward(dp2, idx2, a2.shape)
    grads["conv2.w"], grads["conv2.b"], dp1 = _conv_backward(
        da2, cols2, t["conv2.w"], p1.shape, need_dx=True)
    da1 = _pool_backward(dp1, idx1, a1.shape)
    grads["conv1.w"], grads["conv1.b"], _ = _conv_backward(
        da1, cols1, t["conv1.w"], x.shape, need_dx=False)
    return loss_val, grads


def backward(params, batch, labels):
    """Gradients of the mean cross-entropy loss for every parameter tensor."""
    _, grads = loss_and_gradients(params, batch, labels)
    return grads
