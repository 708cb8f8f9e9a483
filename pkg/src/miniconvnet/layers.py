"""Layer forward/backward kernels.

Every layer exposes ``forward(x, training=False, rng=None) -> (y, ctx)`` and
``backward(grad, ctx) -> (dx, param_grads)``. The context returned by a
forward call carries whatever the matching backward call needs; layers are
never mutated by either pass, so one layer can serve concurrent inference.

Parameter gradients are returned as a dict keyed like ``layer.params``
(``"kernel"`` and ``"bias"``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ContractError, ShapeError
from .tensor import DTYPE

ACTIVATIONS = (None, "relu", "softmax")


@dataclass
class BackwardContext:
    layer: str
    input_shape: tuple
    output_shape: tuple
    cache: dict[str, Any] = field(default_factory=dict)


def relu(x: np.ndarray) -> tuple[np.ndarray, BackwardContext]:
    """Elementwise ``max(0, x)``."""
    y = np.maximum(x, 0)
    return y, BackwardContext("relu", x.shape, y.shape, {"mask": x > 0})


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a ``[batch, k]`` tensor with max subtraction."""
    if logits.ndim != 2 or logits.shape[1] < 1:
        raise ShapeError(f"softmax expects [batch, k], got {logits.shape}")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(grad: np.ndarray, probs: np.ndarray) -> np.ndarray:
    # Jacobian-vector product of softmax: p * (g - <g, p>)
    return probs * (grad - np.sum(grad * probs, axis=1, keepdims=True))


def flatten(x: np.ndarray) -> np.ndarray:
    """Row-major flattening of ``[b, h, w, c]`` into ``[b, h*w*c]``."""
    if x.ndim != 4:
        raise ShapeError(f"flatten expects a rank-4 batch, got {x.shape}")
    return x.reshape(x.shape[0], -1)


def conv_output_size(size: int, kernel: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Return ``(out, pad_before, pad_after)`` along one spatial axis.

    "same" padding splits the total as floor/ceil, so an odd total puts the
    extra row or column at the bottom/right.
    """
    if padding == "valid":
        if size < kernel:
            raise ShapeError(f"input extent {size} smaller than kernel {kernel}")
        return (size - kernel) // stride + 1, 0, 0
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + kernel - size, 0)
        return out, total // 2, total - total // 2
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator, dtype=DTYPE):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base class: a named, parameter-holding sequence element."""

    kind = "layer"

    def __init__(self, name: str):
        self.name = name
        self.trainable = True
        self.params: dict[str, np.ndarray] = {}

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r})"

    def output_shape(self, input_shape: tuple) -> tuple:
        """Per-sample output shape for a per-sample ``input_shape``."""
        return tuple(input_shape)

    def initialize(self, rng: np.random.Generator) -> None:
        pass

    def count_params(self) -> int:
        return sum(int(p.size) for p in self.params.values())

    def astype(self, dtype) -> None:
        for key, value in self.params.items():
            self.params[key] = np.ascontiguousarray(value, dtype=dtype)

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad, ctx):
        raise NotImplementedError

    def _context(self, inp, out, /, **cache) -> BackwardContext:
        return BackwardContext(self.name, inp.shape, out.shape, cache)

    def _check_context(self, grad: np.ndarray, ctx: BackwardContext) -> None:
        if ctx is None or ctx.layer != self.name:
            raise ContractError(f"{self.name}: context does not belong to this layer")
        if grad.shape != ctx.output_shape:
            raise ContractError(
                f"{self.name}: upstream gradient shape {grad.shape} != forward output {ctx.output_shape}"
            )


class InputLayer(Layer):
    kind = "input"

    def __init__(self, shape: Sequence[int], name: str = "input_1"):
        super().__init__(name)
        self.shape = tuple(int(s) for s in shape)

    def forward(self, x, training=False, rng=None):
        if tuple(x.shape[1:]) != self.shape:
            raise ShapeError(f"{self.name}: expected per-sample shape {self.shape}, got {x.shape[1:]}")
        return x, self._context(x, x)

    def backward(self, grad, ctx):
        self._check_context(grad, ctx)
        return grad, {}


class _Activated(Layer):
    """Shared activation handling for conv and dense layers."""

    def __init__(self, name: str, activation: str | None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        super().__init__(name)
        self.activation = activation

    def _activate(self, z):
        if self.activation == "relu":
            return np.maximum(z, 0)
        if self.activation == "softmax":
            return softmax(z.reshape(z.shape[0], -1)).reshape(z.shape)
        return z

    def _activation_backward(self, grad, ctx):
        if self.activation == "relu":
            return grad * (ctx.cache["out"] > 0)
        if self.activation == "softmax":
            p = ctx.cache["out"]
            return softmax_backward(grad.reshape(p.shape[0], -1), p.reshape(p.shape[0], -1)).reshape(p.shape)
        return grad

    def backward(self, grad, ctx):
        self._check_context(grad, ctx)
        return self.backward_preactivation(self._activation_backward(grad, ctx), ctx)

    def backward_preactivation(self, grad, ctx):
        """Backward pass for a gradient taken w.r.t. the pre-activation output.

        Used for the fused softmax + cross-entropy gradient on the output layer.
        """
        raise NotImplementedError


class Conv2D(_Activated):
    """2-D convolution with kernel ``[kh, kw, in_ch, out_ch]``.

    The forward pass gathers input patches into a matrix and performs one
    matrix multiply; :func:`conv2d_reference` is the direct-loop equivalent.
    """

    kind = "conv2d"

    def __init__(self, in_channels: int, filters: int, kernel_size=3, stride: int = 1,
                 padding: str = "same", activation: str | None = "relu", name: str = "conv2d"):
        super().__init__(name, activation)
        kh, kw = (kernel_size, kernel_size) if np.isscalar(kernel_size) else kernel_size
        if min(kh, kw, in_channels, filters, stride) < 1:
            raise ShapeError(f"{name}: kernel, channels and stride must be >= 1")
        if padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
        self.stride = int(stride)
        self.padding = padding
        self.params = {
            "kernel": np.zeros((kh, kw, in_channels, filters), dtype=DTYPE),
            "bias": np.zeros((filters,), dtype=DTYPE),
        }

    @property
    def kernel_shape(self) -> tuple:
        return self.params["kernel"].shape

    def initialize(self, rng):
        kh, kw, cin, cout = self.kernel_shape
        self.params["kernel"] = glorot_uniform(self.kernel_shape, kh * kw * cin, kh * kw * cout, rng)
        self.params["bias"] = np.zeros((cout,), dtype=DTYPE)

    def output_shape(self, input_shape):
        h, w, c = input_shape
        kh, kw, cin, cout = self.kernel_shape
        if c != cin:
            raise ShapeError(f"{self.name}: expected {cin} input channels, got {c}")
        oh = conv_output_size(h, kh, self.stride, self.padding)[0]
        ow = conv_output_size(w, kw, self.stride, self.padding)[0]
        return (oh, ow, cout)

    def _geometry(self, x):
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected [b, h, w, c] input, got {x.shape}")
        kh, kw, cin, _ = self.kernel_shape
        if x.shape[3] != cin:
            raise ShapeError(f"{self.name}: expected {cin} input channels, got {x.shape[3]}")
        oh, pt, pb = conv_output_size(x.shape[1], kh, self.stride, self.padding)
        ow, pl, pr = conv_output_size(x.shape[2], kw, self.stride, self.padding)
        return oh, ow, (pt, pb, pl, pr)

    def forward(self, x, training=False, rng=None):
        kh, kw, cin, cout = self.kernel_shape
        oh, ow, (pt, pb, pl, pr) = self._geometry(x)
        s = self.stride
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if pt + pb + pl + pr else x
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, : (oh - 1) * s + 1 : s, : (ow - 1) * s + 1 : s]
        # (b, oh, ow, c, kh, kw) -> rows of (kh, kw, c) patches matching the kernel layout
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(-1, kh * kw * cin)
        z = cols @ self.params["kernel"].reshape(-1, cout)
        z += self.params["bias"]
        y = self._activate(z.reshape(x.shape[0], oh, ow, cout))
        return y, self._context(x, y, cols=cols, out=y, padded_shape=xp.shape, pads=(pt, pl))

    def backward_preactivation(self, grad, ctx):
        kh, kw, cin, cout = self.kernel_shape
        b, oh, ow, _ = grad.shape
        s = self.stride
        g = grad.reshape(-1, cout)
        grads = {
            "kernel": (ctx.cache["cols"].T @ g).reshape(self.kernel_shape),
            "bias": g.sum(axis=0),
        }
        dcols = (g @ self.params["kernel"].reshape(-1, cout).T).reshape(b, oh, ow, kh, kw, cin)
        dxp = np.zeros(ctx.cache["padded_shape"], dtype=dcols.dtype)
        for dy in range(kh):
            for dx in range(kw):
                dxp[:, dy : dy + (oh - 1) * s + 1 : s, dx : dx + (ow - 1) * s + 1 : s] += dcols[:, :, :, dy, dx]
        pt, pl = ctx.cache["pads"]
        h, w = ctx.input_shape[1:3]
        return dxp[:, pt : pt + h, pl : pl + w], grads


def conv2d_reference(x, kernel, bias, stride=1, padding="same"):
    """Direct sliding-window convolution; slow, used as a correctness oracle."""
    b, h, w, cin = x.shape
    kh, kw, _, cout = kernel.shape
    oh, pt, _ = conv_output_size(h, kh, stride, padding)
    ow, pl, _ = conv_output_size(w, kw, stride, padding)
    out = np.zeros((b, oh, ow, cout), dtype=np.float64)
    for n in range(b):
        for y in range(oh):
            for xo in range(ow):
                for o in range(cout):
                    acc = float(bias[o])
                    for dy in range(kh):
                        iy = y * stride + dy - pt
                        if iy < 0 or iy >= h:
                            continue
                        for dx in range(kw):
                            ix = xo * stride + dx - pl
                            if ix < 0 or ix >= w:
                                continue
                            for i in range(cin):
                                acc += float(x[n, iy, ix, i]) * float(kernel[dy, dx, i, o])
                    out[n, y, xo, o] = acc
    return out


class MaxPool2D(Layer):
    """Max pooling; ties resolve to the lowest flat input index."""

    kind = "maxpool2d"

    def __init__(self, pool_size=2, stride: int | None = None, name: str = "pool"):
        super().__init__(name)
        self.pool = (pool_size, pool_size) if np.isscalar(pool_size) else tuple(pool_size)
        self.stride = int(stride if stride is not None else self.pool[0])
        if min(*self.pool, self.stride) < 1:
            raise ShapeError(f"{name}: pool extents and stride must be >= 1")

    def output_shape(self, input_shape):
        h, w, c = input_shape
        ph, pw = self.pool
        if h < ph or w < pw:
            raise ShapeError(f"{self.name}: input {h}x{w} smaller than pool {ph}x{pw}")
        return ((h - ph) // self.stride + 1, (w - pw) // self.stride + 1, c)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected [b, h, w, c] input, got {x.shape}")
        b, h, w, c = x.shape
        ph, pw = self.pool
        oh, ow, _ = self.output_shape((h, w, c))
        s = self.stride
        win = sliding_window_view(x, (ph, pw), axis=(1, 2))[:, : (oh - 1) * s + 1 : s, : (ow - 1) * s + 1 : s]
        win = win.reshape(b, oh, ow, c, ph * pw)
        local = win.argmax(axis=-1)
        y = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
        iy = np.arange(oh)[None, :, None, None] * s + local // pw
        ix = np.arange(ow)[None, None, :, None] * s + local % pw
        argmax = iy * w + ix
        return y, self._context(x, y, argmax=argmax)

    def backward(self, grad, ctx):
        self._check_context(grad, ctx)
        b, h, w, c = ctx.input_shape
        argmax = ctx.cache["argmax"]
        # linear index into the flattened input for every pooled element
        linear = (np.arange(b)[:, None, None, None] * (h * w) + argmax) * c + np.arange(c)
        dx = np.bincount(linear.ravel(), weights=grad.ravel(), minlength=b * h * w * c)
        return dx.astype(grad.dtype).reshape(ctx.input_shape), {}


class ReLU(Layer):
    kind = "relu"

    def __init__(self, name: str = "relu"):
        super().__init__(name)

    def forward(self, x, training=False, rng=None):
        y, ctx = relu(x)
        ctx.layer = self.name
        return y, ctx

    def backward(self, grad, ctx):
        self._check_context(grad, ctx)
        return grad * ctx.cache["mask"], {}


class Softmax(Layer):
    kind = "softmax"

    def __init__(self, name: str = "softmax"):
        super().__init__(name)

    def forward(self, x, training=False, rng=None):
        y = softmax(x)
        return y, self._context(x, y, out=y)

    def backward(self, grad, ctx):
        self._check_context(grad, ctx)
        return softmax_backward(grad, ctx.cache["out"]), {}


class Dense(_Activated):
    """Fully connected layer: ``y = act(x @ W + b)`` with ``W`` of shape ``[in, out]``."""

    kind = "dense"

    def __init__(self, in_features: int, units: int, activation: str | None = "relu", name: str = "dense"):
        super().__init__(name, activation)
        if in_features < 1 or units < 1:
            raise ShapeError(f"{name}: feature counts must be >= 1")
        self.params = {
            "kernel": np.zeros((in_features, units), dtype=DTYPE),
            "bias": np.zeros((units,), dtype=DTYPE),
        }

    def initialize(self, rng):
        n_in, n_out = self.params["kernel"].shape
        self.params["kernel"] = glorot_uniform((n_in, n_out), n_in, n_out, rng)
        self.params["bias"] = np.zeros((n_out,), dtype=DTYPE)

    def output_shape(self, input_shape):
        n_in, n_out = self.params["kernel"].shape
        if tuple(input_shape) != (n_in,):
            raise ShapeError(f"{self.name}: expected {n_in} input features, got {input_shape}")
        return (n_out,)

    def forward(self, x, training=False, rng=None):
        n_in = self.params["kernel"].shape[0]
        if x.ndim != 2 or x.shape[1] != n_in:
            raise ShapeError(f"{self.name}: expected [b, {n_in}] input, got {x.shape}")
        z = x @ self.params["kernel"]
        z += self.params["bias"]
        y = self._activate(z)
        return y, self._context(x, y, x=x, out=y)

    def backward_preactivation(self, grad, ctx):
        grads = {"kernel": ctx.cache["x"].T @ grad, "bias": grad.sum(axis=0)}
        return grad @ self.params["kernel"].T, grads


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` at train time.

    ``rng`` may be a single Generator or a sequence of per-sample Generators;
    the latter keeps masks independent of how a batch is assembled.
    """

    kind = "dropout"

    def __init__(self, rate: float, name: str = "dropout"):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)

    def make_mask(self, shape, rng, dtype=DTYPE) -> np.ndarray:
        if rng is None:
            raise ValueError(f"{self.name}: training-mode dropout needs an rng")
        if isinstance(rng, np.random.Generator):
            u = rng.random(shape)
        else:
            if len(rng) != shape[0]:
                raise ShapeError(f"{self.name}: {len(rng)} rng streams for batch of {shape[0]}")
            u = np.stack([g.random(shape[1:]) for g in rng])
        return ((u >= self.rate) / (1.0 - self.rate)).astype(dtype)

    def forward(self, x, training=False, rng=None, mask=None):
        if not training or self.rate == 0.0:
            return x, self._context(x, x, mask=None)
        if mask is None:
            mask = self.make_mask(x.shape, rng, x.dtype)
        y = x * mask
        return y, self._context(x, y, mask=mask)

    def backward(self, grad, ctx):
        self._check_context(grad, ctx)
        mask = ctx.cache["mask"]
        return (grad if mask is None else grad * mask), {}


class Flatten(Layer):
    kind = "flatten"

    def __init__(self, name: str = "flatten"):
        super().__init__(name)

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, rng=None):
        y = flatten(x)
        return y, self._context(x, y)

    def backward(self, grad, ctx):
        self._check_context(grad, ctx)
        return grad.reshape(ctx.input_shape), {}


def layer_backward(layer: Layer, upstream_grad, context):
    """Functional form of ``layer.backward``."""
    return layer.backward(upstream_grad, context)
