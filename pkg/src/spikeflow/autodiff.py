"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Define-by-run: each operation records its parents and a closure that routes
the output gradient to them. ``backward`` walks the graph once in reverse
topological order; gradients accumulate additively across fan-out. The op set
is exactly what the representation, flow network, and loss need.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = [
    "DiffTensor",
    "Parameter",
    "as_tensor",
    "constant",
    "add",
    "subtract",
    "multiply",
    "divide",
    "negative",
    "matmul",
    "exp",
    "sqrt",
    "sigmoid",
    "relu",
    "leaky_relu",
    "softmax",
    "concat",
    "reshape",
    "transpose",
    "finite_diff",
    "conv1d_dilated",
    "conv2d",
    "upsample2x",
    "warp_bilinear",
    "correlation",
    "charbonnier",
    "backward",
    "Adam",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
]


class DiffTensor:
    """Array node in the computation graph: value, lazily allocated grad, and
    the backward closure linking it to its parents."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"DiffTensor(shape={self.value.shape}{flag})"

    # arithmetic sugar; numpy operands are promoted to constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return _reduce(self, np.sum, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return _reduce(self, np.mean, axis, keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


class Parameter(DiffTensor):
    """Trainable leaf with a unique name path (e.g. "flow.enc1.weight")."""

    __slots__ = ("name",)

    def __init__(self, value, name: str):
        super().__init__(value, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def as_tensor(x) -> DiffTensor:
    return x if isinstance(x, DiffTensor) else DiffTensor(x)


def constant(x) -> DiffTensor:
    return DiffTensor(x)


def _accumulate(t: DiffTensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _node(value, parents, backward_fn) -> DiffTensor:
    out = DiffTensor(value, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape of the broadcast operand."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear algebra
# ---------------------------------------------------------------------------

def add(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    out_value = a.value + b.value

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.value.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.value.shape))

    return _node(out_value, (a, b), bw)


def subtract(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    out_value = a.value - b.value

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.value.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.value.shape))

    return _node(out_value, (a, b), bw)


def multiply(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    out_value = a.value * b.value

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.value, b.value.shape))

    return _node(out_value, (a, b), bw)


def divide(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    out_value = a.value / b.value

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.value, a.value.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

    return _node(out_value, (a, b), bw)


def negative(a) -> DiffTensor:
    a = as_tensor(a)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, -g)

    return _node(-a.value, (a,), bw)


def matmul(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2D operands, got {a.shape} @ {b.shape}")
    out_value = a.value @ b.value

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.value.T)
        if b.requires_grad:
            _accumulate(b, a.value.T @ g)

    return _node(out_value, (a, b), bw)


def exp(a) -> DiffTensor:
    a = as_tensor(a)
    e = np.exp(a.value)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * e)

    return _node(e, (a,), bw)


def sqrt(a) -> DiffTensor:
    a = as_tensor(a)
    r = np.sqrt(a.value)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * 0.5 / r)

    return _node(r, (a,), bw)


def sigmoid(a) -> DiffTensor:
    a = as_tensor(a)
    v = a.value
    s = np.empty_like(v)
    pos = v >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ez = np.exp(v[~pos])
    s[~pos] = ez / (1.0 + ez)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * s * (1.0 - s))

    return _node(s, (a,), bw)


def relu(a) -> DiffTensor:
    a = as_tensor(a)
    mask = a.value > 0

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * mask)

    return _node(np.where(mask, a.value, 0.0), (a,), bw)


def leaky_relu(a, alpha: float = 0.1) -> DiffTensor:
    a = as_tensor(a)
    mask = a.value > 0

    def bw(g):
        if a.requires_grad:
            _accumulate(a, np.where(mask, g, g * alpha))

    return _node(np.where(mask, a.value, a.value * alpha), (a,), bw)


def softmax(a, axis: int = 0) -> DiffTensor:
    a = as_tensor(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _node(s, (a,), bw)


def charbonnier(a, eps: float = 1e-3, gamma: float = 0.45) -> DiffTensor:
    """Robust penalty (x^2 + eps^2)^gamma, elementwise."""
    a = as_tensor(a)
    q = a.value * a.value + eps * eps
    out_value = q ** gamma

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * (2.0 * gamma) * a.value * q ** (gamma - 1.0))

    return _node(out_value, (a,), bw)


# ---------------------------------------------------------------------------
# shape ops and reductions
# ---------------------------------------------------------------------------

def _reduce(a: DiffTensor, fn, axis, keepdims: bool) -> DiffTensor:
    a = as_tensor(a)
    out_value = fn(a.value, axis=axis, keepdims=keepdims)
    scale = a.value.size / max(out_value.size, 1) if fn is np.mean else 1.0

    def bw(g):
        if not a.requires_grad:
            return
        gg = np.asarray(g)
        if not keepdims and axis is not None:
            gg = np.expand_dims(gg, axis)
        _accumulate(a, np.broadcast_to(gg, a.value.shape) / scale)

    return _node(out_value, (a,), bw)


def reshape(a, shape) -> DiffTensor:
    a = as_tensor(a)
    orig = a.value.shape

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(orig))

    return _node(a.value.reshape(shape), (a,), bw)


def transpose(a, axes) -> DiffTensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g.transpose(inverse))

    return _node(a.value.transpose(axes), (a,), bw)


def concat(tensors, axis: int = 0) -> DiffTensor:
    tensors = [as_tensor(t) for t in tensors]
    out_value = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        parts = np.split(g, splits, axis=axis)
        for t, part in zip(tensors, parts):
            if t.requires_grad:
                _accumulate(t, part)

    return _node(out_value, tuple(tensors), bw)


def _axis_slice(ndim: int, axis: int, sl: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def finite_diff(a, axis: int) -> DiffTensor:
    """Forward differences x[..., 1:] - x[..., :-1] along ``axis``."""
    a = as_tensor(a)
    out_value = np.diff(a.value, axis=axis)

    def bw(g):
        if not a.requires_grad:
            return
        da = np.zeros_like(a.value)
        da[_axis_slice(a.ndim, axis, slice(1, None))] += g
        da[_axis_slice(a.ndim, axis, slice(None, -1))] -= g
        _accumulate(a, da)

    return _node(out_value, (a,), bw)


# ---------------------------------------------------------------------------
# convolutions and spatial ops
# ---------------------------------------------------------------------------

def conv1d_dilated(x, weight, bias=None, dilation: int = 1) -> DiffTensor:
    """Dilated temporal cross-correlation with same-length zero padding.

    x: (C_in, T) for one sequence or channel-major (C_in, B, T) for a batch;
    weight: (C_out, C_in, k) with k odd; bias: (C_out,). Output matches the
    input layout. The channel-major batch layout keeps the single im2col GEMM
    free of transposes.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else None
    if x.ndim not in (2, 3) or weight.ndim != 3:
        raise ValueError(f"conv1d_dilated expects (C,[B,]T) and (O,C,k), got {x.shape}, {weight.shape}")
    single = x.ndim == 2
    xv = x.value[:, None, :] if single else x.value
    c_in, batch, t_len = xv.shape
    c_out, c_in_w, k = weight.value.shape
    if c_in != c_in_w:
        raise ValueError(f"channel mismatch: input {c_in} vs weight {c_in_w}")
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    pad = dilation * (k - 1) // 2
    xp = np.pad(xv, ((0, 0), (0, 0), (pad, pad)))

    cols = np.empty((k, c_in, batch, t_len))
    for j in range(k):
        cols[j] = xp[:, :, j * dilation:j * dilation + t_len]
    cols2 = cols.reshape(k * c_in, batch * t_len)
    wmat = weight.value.transpose(0, 2, 1).reshape(c_out, k * c_in)
    out_value = (wmat @ cols2).reshape(c_out, batch, t_len)
    if bias is not None:
        out_value += bias.value[:, None, None]

    def bw(g):
        if single:
            g = g[:, None, :]
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=(1, 2)))
        g2 = g.reshape(c_out, batch * t_len)
        if weight.requires_grad:
            dwmat = g2 @ cols2.T
            _accumulate(weight, dwmat.reshape(c_out, k, c_in).transpose(0, 2, 1))
        if x.requires_grad:
            dcols = (wmat.T @ g2).reshape(k, c_in, batch, t_len)
            dxp = np.zeros_like(xp)
            for j in range(k):
                dxp[:, :, j * dilation:j * dilation + t_len] += dcols[j]
            dx = dxp[:, :, pad:pad + t_len]
            _accumulate(x, dx[:, 0, :] if single else dx)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out_value[:, 0, :] if single else out_value, parents, bw)


def conv2d(x, weight, bias=None, stride: int = 1) -> DiffTensor:
    """2D cross-correlation with same padding ((k-1)/2 each side).

    x: (C_in, H, W); weight: (C_out, C_in, k, k) with k odd; bias: (C_out,).
    Output (C_out, H_out, W_out) with H_out = (H + 2p - k)//stride + 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else None
    if x.ndim != 3 or weight.ndim != 4:
        raise ValueError(f"conv2d expects (C,H,W) and (O,C,k,k), got {x.shape}, {weight.shape}")
    c_in, height, width = x.value.shape
    c_out, c_in_w, k, k2 = weight.value.shape
    if c_in != c_in_w or k != k2:
        raise ValueError(f"weight shape {weight.shape} incompatible with input {x.shape}")
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    pad = (k - 1) // 2
    h_out = (height + 2 * pad - k) // stride + 1
    w_out = (width + 2 * pad - k) // stride + 1
    xp = np.pad(x.value, ((0, 0), (pad, pad), (pad, pad)))

    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]                 # (C, Ho, Wo, k, k)
    cols = np.ascontiguousarray(windows.transpose(1, 2, 0, 3, 4))
    cols2 = cols.reshape(h_out * w_out, c_in * k * k)
    wmat = weight.value.reshape(c_out, c_in * k * k).T
    out_value = np.ascontiguousarray((cols2 @ wmat).T.reshape(c_out, h_out, w_out))
    if bias is not None:
        out_value += bias.value[:, None, None]

    def bw(g):
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=(1, 2)))
        g2 = g.reshape(c_out, h_out * w_out).T
        if weight.requires_grad:
            _accumulate(weight, (cols2.T @ g2).T.reshape(c_out, c_in, k, k))
        if x.requires_grad:
            dcols = (g2 @ wmat.T).reshape(h_out, w_out, c_in, k, k)
            dxp = np.zeros_like(xp)
            for dy in range(k):
                for dx in range(k):
                    dxp[:, dy:dy + stride * (h_out - 1) + 1:stride,
                        dx:dx + stride * (w_out - 1) + 1:stride] += \
                        dcols[:, :, :, dy, dx].transpose(2, 0, 1)
            _accumulate(x, dxp[:, pad:pad + height, pad:pad + width])

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out_value, parents, bw)


_UPSAMPLE_CACHE: dict[int, np.ndarray] = {}


def _upsample_matrix(n: int) -> np.ndarray:
    """(2n, n) bilinear interpolation matrix, half-pixel-centered."""
    m = _UPSAMPLE_CACHE.get(n)
    if m is None:
        m = np.zeros((2 * n, n))
        src = np.clip((np.arange(2 * n) + 0.5) / 2.0 - 0.5, 0.0, n - 1.0)
        i0 = np.clip(np.floor(src).astype(int), 0, max(n - 2, 0))
        t = src - i0
        rows = np.arange(2 * n)
        np.add.at(m, (rows, i0), 1.0 - t)
        np.add.at(m, (rows, np.minimum(i0 + 1, n - 1)), t)
        _UPSAMPLE_CACHE[n] = m
    return m


def upsample2x(x) -> DiffTensor:
    """Bilinear x2 spatial upsampling of (C, H, W) to (C, 2H, 2W)."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ValueError(f"upsample2x expects (C,H,W), got {x.shape}")
    _, height, width = x.value.shape
    my = _upsample_matrix(height)
    mx = _upsample_matrix(width)
    # out = My @ x @ Mx^T per channel, as two broadcast matmuls
    out_value = np.matmul(my, x.value) @ mx.T

    def bw(g):
        if x.requires_grad:
            _accumulate(x, np.matmul(my.T, g) @ mx)

    return _node(out_value, (x,), bw)


_GRID_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    key = (height, width)
    if key not in _GRID_CACHE:
        ys, xs = np.mgrid[0:height, 0:width]
        _GRID_CACHE[key] = (ys.astype(np.float64), xs.astype(np.float64))
    return _GRID_CACHE[key]


def warp_bilinear(image, flow) -> tuple[DiffTensor, np.ndarray]:
    """Sample ``image`` at x + flow(x) with bilinear interpolation.

    image: (C, H, W); flow: (2, H, W) with planes (u, v). Out-of-bounds sample
    positions clamp to the border; the returned boolean (H, W) mask flags
    in-bounds samples. Differentiable in both image and flow (flow gradients
    vanish where the sample position is clamped).
    """
    image, flow = as_tensor(image), as_tensor(flow)
    if image.ndim != 3 or flow.value.shape[0] != 2:
        raise ValueError(f"warp expects (C,H,W) image and (2,H,W) flow, got {image.shape}, {flow.shape}")
    channels, height, width = image.value.shape
    if flow.value.shape[1:] != (height, width):
        raise ValueError(f"flow spatial shape {flow.value.shape[1:]} != image {height, width}")
    ys, xs = _grid(height, width)
    sx = xs + flow.value[0]
    sy = ys + flow.value[1]
    valid = (sx >= 0) & (sx <= width - 1) & (sy >= 0) & (sy <= height - 1)

    sxc = np.clip(sx, 0.0, width - 1.0)
    syc = np.clip(sy, 0.0, height - 1.0)
    x0 = np.clip(np.floor(sxc).astype(np.int64), 0, max(width - 2, 0))
    y0 = np.clip(np.floor(syc).astype(np.int64), 0, max(height - 2, 0))
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    tx = sxc - x0
    ty = syc - y0

    img = image.value
    v00 = img[:, y0, x0]
    v01 = img[:, y0, x1]
    v10 = img[:, y1, x0]
    v11 = img[:, y1, x1]
    top = v00 + tx * (v01 - v00)
    bot = v10 + tx * (v11 - v10)
    out_value = top + ty * (bot - top)

    def bw(g):
        if image.requires_grad:
            dimg = np.zeros(channels * height * width)
            chan = np.arange(channels)[:, None, None] * (height * width)
            for yy, xx, wgt in ((y0, x0, (1 - ty) * (1 - tx)), (y0, x1, (1 - ty) * tx),
                                (y1, x0, ty * (1 - tx)), (y1, x1, ty * tx)):
                idx = chan + yy * width + xx
                dimg += np.bincount(idx.ravel(), weights=(g * wgt).ravel(),
                                    minlength=dimg.size)
            _accumulate(image, dimg.reshape(channels, height, width))
        if flow.requires_grad:
            # clamped positions have zero derivative through the clip
            open_x = (sx > 0) & (sx < width - 1)
            open_y = (sy > 0) & (sy < height - 1)
            dsx = (1 - ty) * (v01 - v00) + ty * (v11 - v10)
            dsy = (1 - tx) * (v10 - v00) + tx * (v11 - v01)
            du = (g * dsx).sum(axis=0) * open_x
            dv = (g * dsy).sum(axis=0) * open_y
            _accumulate(flow, np.stack([du, dv]))

    return _node(out_value, (image, flow), bw), valid


def correlation(f0, f1, max_displacement: int) -> DiffTensor:
    """Dot-product cost volume over all integer displacements within
    [-d, d]^2, zero-padded. f0, f1: (C, H, W); output ((2d+1)^2, H, W).
    Displacement (dy, dx) maps to channel (dy+d)*(2d+1) + (dx+d)."""
    f0, f1 = as_tensor(f0), as_tensor(f1)
    if f0.value.shape != f1.value.shape or f0.ndim != 3:
        raise ValueError(f"correlation expects matching (C,H,W), got {f0.shape}, {f1.shape}")
    d = int(max_displacement)
    n_disp = 2 * d + 1
    _, height, width = f0.value.shape
    f1p = np.pad(f1.value, ((0, 0), (d, d), (d, d)))

    out_value = np.empty((n_disp * n_disp, height, width))
    for iy in range(n_disp):
        for ix in range(n_disp):
            out_value[iy * n_disp + ix] = (f0.value * f1p[:, iy:iy + height, ix:ix + width]).sum(axis=0)

    def bw(g):
        if f0.requires_grad:
            df0 = np.zeros_like(f0.value)
            for iy in range(n_disp):
                for ix in range(n_disp):
                    df0 += g[iy * n_disp + ix][None] * f1p[:, iy:iy + height, ix:ix + width]
            _accumulate(f0, df0)
        if f1.requires_grad:
            df1p = np.zeros_like(f1p)
            for iy in range(n_disp):
                for ix in range(n_disp):
                    df1p[:, iy:iy + height, ix:ix + width] += g[iy * n_disp + ix][None] * f0.value
            _accumulate(f1, df1p[:, d:d + height, d:d + width])

    return _node(out_value, (f0, f1), bw)


# ---------------------------------------------------------------------------
# backward pass and optimizer
# ---------------------------------------------------------------------------

def backward(loss: DiffTensor) -> None:
    """Populate gradients of everything ``loss`` depends on.

    Visits each node exactly once in reverse topological order; fan-out
    gradients accumulate additively.
    """
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return

    order: list[DiffTensor] = []
    seen: set[int] = set()
    stack: list[tuple[DiffTensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


class Adam:
    """Adam with bias correction; updates parameter values in place."""

    def __init__(self, params, lr: float = 1e-4, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.steps = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.steps += 1
        b1c = 1.0 - self.beta1 ** self.steps
        b2c = 1.0 - self.beta2 ** self.steps
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"SPKW"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint data."""


def save_checkpoint(path, arrays: dict[str, np.ndarray], version: int = CKPT_VERSION) -> int:
    """Write named float64 arrays: magic, version, count, then per entry
    name (u16 length + UTF-8), rank u8, dims u32 each, little-endian f64
    values. Entries are sorted by name so output bytes are canonical."""
    payload = [CKPT_MAGIC, struct.pack("<II", version, len(arrays))]
    for name in sorted(arrays):
        # note: np.ascontiguousarray would promote 0-d scalars to 1-d
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        encoded = name.encode("utf-8")
        payload.append(struct.pack("<H", len(encoded)))
        payload.append(encoded)
        payload.append(struct.pack("<B", arr.ndim))
        payload.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        payload.append(arr.astype("<f8").tobytes())
    blob = b"".join(payload)
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CKPT_MAGIC:
        raise CheckpointError("bad magic: not a checkpoint")
    if len(blob) < 12:
        raise CheckpointError("truncated header")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported version {version}")
    arrays: dict[str, np.ndarray] = {}
    offset = 12
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", blob, offset) if rank else ()
            offset += 4 * rank
            n_values = int(np.prod(dims)) if rank else 1
            end = offset + 8 * n_values
            if end > len(blob):
                raise CheckpointError("truncated values")
            values = np.frombuffer(blob[offset:end], dtype="<f8").reshape(dims)
            offset = end
        except struct.error as err:
            raise CheckpointError(f"truncated checkpoint: {err}") from err
        arrays[name] = values.astype(np.float64)
    return arrays
