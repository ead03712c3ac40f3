"""Dense-tensor engine with reverse-mode automatic differentiation.

Tensors wrap contiguous numpy arrays (row-major flat storage). Each
operation records its parent tensors plus a backward closure; calling
``backward()`` on a scalar walks the recorded graph in reverse topological
order and accumulates gradients into every reachable leaf created with
``requires_grad=True``.

Shape alignment is explicit: binary ops accept equal shapes or one size-1
(scalar) operand, nothing else. Math runs in the dtype of the inputs,
float64 for verification and float32 for training.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, UsageError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """N-dimensional float array with optional gradient tracking."""

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.size != 1:
            raise UsageError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """A grad-free tensor sharing this tensor's values."""
        return Tensor(self.data.copy())

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable requires_grad leaf.

        ``self`` must hold a single element. Repeated calls without
        ``zero_grad`` keep accumulating into the leaves.
        """
        if self.size != 1:
            raise UsageError("backward() requires a scalar loss")
        order = _topo_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
            else:
                node._backward(g, grads)

    # Arithmetic sugar. Scalars are promoted to grad-free 0-d tensors.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"


class Parameter(Tensor):
    """Named trainable tensor with persistent identity across forward passes."""

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _topo_order(root: Tensor):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def _accum(grads: dict, t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    key = id(t)
    if key in grads:
        grads[key] += g
    else:
        # Own the buffer: closures may hand the same array to two parents.
        grads[key] = np.array(g, copy=True)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float64)
    return Tensor(arr)


def _binary_shapes(a: Tensor, b: Tensor, op: str):
    """Equal shapes or one scalar (size-1) operand; anything else is an error."""
    if a.shape == b.shape:
        return
    if a.size == 1 or b.size == 1:
        return
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not equal or scalar")


def _fit(t: Tensor, g: np.ndarray) -> np.ndarray:
    """Reduce a broadcast gradient back onto a scalar operand."""
    if g.shape == t.shape:
        return g
    return np.asarray(g.sum(), dtype=g.dtype).reshape(t.shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "add")
    req = a.requires_grad or b.requires_grad
    out = Tensor(a.data + b.data, requires_grad=req, parents=(a, b))
    if req:
        def _bw(g, acc):
            _accum(acc, a, _fit(a, g))
            _accum(acc, b, _fit(b, g))
        out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "sub")
    req = a.requires_grad or b.requires_grad
    out = Tensor(a.data - b.data, requires_grad=req, parents=(a, b))
    if req:
        def _bw(g, acc):
            _accum(acc, a, _fit(a, g))
            _accum(acc, b, _fit(b, -g))
        out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "mul")
    req = a.requires_grad or b.requires_grad
    out = Tensor(a.data * b.data, requires_grad=req, parents=(a, b))
    if req:
        def _bw(g, acc):
            if a.requires_grad:
                _accum(acc, a, _fit(a, g * b.data))
            if b.requires_grad:
                _accum(acc, b, _fit(b, g * a.data))
        out._backward = _bw
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "div")
    req = a.requires_grad or b.requires_grad
    out = Tensor(a.data / b.data, requires_grad=req, parents=(a, b))
    if req:
        def _bw(g, acc):
            if a.requires_grad:
                _accum(acc, a, _fit(a, g / b.data))
            if b.requires_grad:
                _accum(acc, b, _fit(b, -g * a.data / (b.data * b.data)))
        out._backward = _bw
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    d = x.data
    s = np.empty_like(d)
    pos = d >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    s[~pos] = e / (1.0 + e)
    out = Tensor(s, requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            _accum(acc, x, g * s * (1.0 - s))
        out._backward = _bw
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    d = x.data
    out = Tensor(np.where(d > 0, d, slope * d), requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            _accum(acc, x, g * np.where(d > 0, 1.0, slope))
        out._backward = _bw
    return out


def absolute(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.abs(x.data), requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            _accum(acc, x, g * np.sign(x.data))
        out._backward = _bw
    return out


def sqrt(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = np.sqrt(x.data)
    out = Tensor(s, requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            _accum(acc, x, g * 0.5 / s)
        out._backward = _bw
    return out


def square(x: Tensor) -> Tensor:
    return mul(x, x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product. dA = dC @ B^T, dB = A^T @ dC."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    req = a.requires_grad or b.requires_grad
    out = Tensor(a.data @ b.data, requires_grad=req, parents=(a, b))
    if req:
        def _bw(g, acc):
            if a.requires_grad:
                _accum(acc, a, g @ b.data.T)
            if b.requires_grad:
                _accum(acc, b, a.data.T @ g)
        out._backward = _bw
    return out


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over a leading axis: (B,M,K) @ (B,K,N)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 3 or b.ndim != 3:
        raise DimensionError("bmm expects 3-D operands")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise DimensionError(f"bmm shape mismatch: {a.shape} x {b.shape}")
    req = a.requires_grad or b.requires_grad
    out = Tensor(np.matmul(a.data, b.data), requires_grad=req, parents=(a, b))
    if req:
        def _bw(g, acc):
            if a.requires_grad:
                _accum(acc, a, np.matmul(g, b.data.swapaxes(1, 2)))
            if b.requires_grad:
                _accum(acc, b, np.matmul(a.data.swapaxes(1, 2), g))
        out._backward = _bw
    return out


def transpose2d(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError("transpose2d expects a 2-D tensor")
    out = Tensor(x.data.T, requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            _accum(acc, x, np.ascontiguousarray(g.T))
        out._backward = _bw
    return out


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape), requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            _accum(acc, x, g.reshape(x.shape))
        out._backward = _bw
    return out


def _check_axis(x: Tensor, axis: int, op: str) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"{op}: axis {axis} out of range for shape {x.shape}")
    axis = axis % x.ndim
    if x.shape[axis] == 0:
        raise DimensionError(f"{op}: cannot reduce empty axis {axis}")
    return axis


def reduce_mean(x: Tensor, axis: int) -> Tensor:
    """Mean along one axis; the reduced axis keeps size 1."""
    x = as_tensor(x)
    axis = _check_axis(x, axis, "reduce_mean")
    n = x.shape[axis]
    out = Tensor(x.data.mean(axis=axis, keepdims=True), requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            _accum(acc, x, np.broadcast_to(g / n, x.shape))
        out._backward = _bw
    return out


def reduce_max(x: Tensor, axis: int) -> Tensor:
    """Max along one axis; gradient routes to the first argmax in scan order."""
    x = as_tensor(x)
    axis = _check_axis(x, axis, "reduce_max")
    idx = np.argmax(x.data, axis=axis)
    out_data = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis)
    out = Tensor(out_data, requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, np.expand_dims(idx, axis), g, axis=axis)
            _accum(acc, x, gx)
        out._backward = _bw
    return out


def mean_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.asarray(x.data.mean()), requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            gs = float(np.asarray(g).reshape(()))
            _accum(acc, x, np.full(x.shape, gs / x.size, dtype=x.dtype))
        out._backward = _bw
    return out


def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.asarray(x.data.sum()), requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            gs = float(np.asarray(g).reshape(()))
            _accum(acc, x, np.full(x.shape, gs, dtype=x.dtype))
        out._backward = _bw
    return out


def softmax_last(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s, requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            inner = (g * s).sum(axis=-1, keepdims=True)
            _accum(acc, x, s * (g - inner))
        out._backward = _bw
    return out


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2 on a CxHxW tensor; odd trailing row/col dropped."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError("maxpool2d expects a CxHxW tensor")
    c, h, w = x.shape
    if h < 2 or w < 2:
        raise DimensionError(f"maxpool2d needs H,W >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    # Windows flattened in scan order (dy, dx) so argmax ties break to the
    # first element by scan order.
    win = x.data[:, : h2 * 2, : w2 * 2].reshape(c, h2, 2, w2, 2)
    win = win.transpose(0, 1, 3, 2, 4).reshape(c, h2, w2, 4)
    idx = np.argmax(win, axis=3)
    out_data = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
    out = Tensor(out_data, requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            gw = np.zeros((c, h2, w2, 4), dtype=x.dtype)
            np.put_along_axis(gw, idx[..., None], g[..., None], axis=3)
            gx = np.zeros_like(x.data)
            gx[:, : h2 * 2, : w2 * 2] = (
                gw.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2 * 2, w2 * 2)
            )
            _accum(acc, x, gx)
        out._backward = _bw
    return out


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x upsampling in H and W."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError("upsample2x expects a CxHxW tensor")
    c, h, w = x.shape
    out_data = x.data.repeat(2, axis=1).repeat(2, axis=2)
    out = Tensor(out_data, requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            _accum(acc, x, g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)))
        out._backward = _bw
    return out


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 3 or b.ndim != 3:
        raise DimensionError("concat_channels expects CxHxW tensors")
    if a.shape[1:] != b.shape[1:]:
        raise DimensionError(f"concat_channels spatial mismatch: {a.shape} vs {b.shape}")
    ca = a.shape[0]
    req = a.requires_grad or b.requires_grad
    out = Tensor(np.concatenate([a.data, b.data], axis=0), requires_grad=req, parents=(a, b))
    if req:
        def _bw(g, acc):
            _accum(acc, a, g[:ca])
            _accum(acc, b, g[ca:])
        out._backward = _bw
    return out


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError("slice_channels expects a CxHxW tensor")
    if not 0 <= start <= stop <= x.shape[0]:
        raise DimensionError(f"slice_channels range [{start}:{stop}] invalid for C={x.shape[0]}")
    out = Tensor(x.data[start:stop], requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            gx = np.zeros_like(x.data)
            gx[start:stop] = g
            _accum(acc, x, gx)
        out._backward = _bw
    return out


def crop_spatial(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError("crop_spatial expects a CxHxW tensor")
    _, h, w = x.shape
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise DimensionError(f"crop {height}x{width}@({top},{left}) exceeds {h}x{w}")
    out = Tensor(x.data[:, top : top + height, left : left + width],
                 requires_grad=x.requires_grad, parents=(x,))
    if x.requires_grad:
        def _bw(g, acc):
            gx = np.zeros_like(x.data)
            gx[:, top : top + height, left : left + width] = g
            _accum(acc, x, gx)
        out._backward = _bw
    return out


def scale_channels(x: Tensor, s: Tensor) -> Tensor:
    """Multiply each channel of a CxHxW tensor by the matching entry of a length-C vector."""
    x, s = as_tensor(x), as_tensor(s)
    if x.ndim != 3 or s.ndim != 1 or s.shape[0] != x.shape[0]:
        raise DimensionError(f"scale_channels: {x.shape} with scale {s.shape}")
    req = x.requires_grad or s.requires_grad
    out = Tensor(x.data * s.data[:, None, None], requires_grad=req, parents=(x, s))
    if req:
        def _bw(g, acc):
            if x.requires_grad:
                _accum(acc, x, g * s.data[:, None, None])
            if s.requires_grad:
                _accum(acc, s, (g * x.data).sum(axis=(1, 2)))
        out._backward = _bw
    return out


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution of a CxHxW input with a C_out x C_in x k x k kernel.

    Zero padding, kernel size 1 or 3, stride 1 or 2. Implemented as
    im2col + matmul; gradients reach x, w and bias.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError("conv2d expects CxHxW input and 4-D kernel")
    c_out, c_in, kh, kw = w.shape
    if kh != kw or kh not in (1, 3):
        raise DimensionError(f"conv2d supports square kernels of size 1 or 3, got {kh}x{kw}")
    if stride not in (1, 2):
        raise DimensionError(f"conv2d supports stride 1 or 2, got {stride}")
    if c_in != x.shape[0]:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape[0]}, kernel {c_in}")
    k = kh
    c, h, win = x.shape
    hp, wp = h + 2 * padding, win + 2 * padding
    if k > hp or k > wp:
        raise DimensionError(f"kernel {k} larger than padded input {hp}x{wp}")
    h_out = (hp - k) // stride + 1
    w_out = (wp - k) // stride + 1

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    patches = np.empty((c, k, k, h_out, w_out), dtype=xp.dtype)
    for ki in range(k):
        for kj in range(k):
            patches[:, ki, kj] = xp[:, ki : ki + stride * h_out : stride,
                                    kj : kj + stride * w_out : stride]
    cols = patches.reshape(c * k * k, h_out * w_out)
    wm = w.data.reshape(c_out, c * k * k)
    out_data = wm @ cols
    if bias is not None:
        if bias.shape != (c_out,):
            raise DimensionError(f"conv2d bias shape {bias.shape} != ({c_out},)")
        out_data = out_data + bias.data[:, None]
    out_data = out_data.reshape(c_out, h_out, w_out)

    req = x.requires_grad or w.requires_grad or (bias is not None and bias.requires_grad)
    parents = (x, w) if bias is None else (x, w, bias)
    out = Tensor(out_data, requires_grad=req, parents=parents)
    if req:
        def _bw(g, acc):
            gm = g.reshape(c_out, h_out * w_out)
            if bias is not None and bias.requires_grad:
                _accum(acc, bias, gm.sum(axis=1))
            if w.requires_grad:
                _accum(acc, w, (gm @ cols.T).reshape(w.shape))
            if x.requires_grad:
                dcols = (wm.T @ gm).reshape(c, k, k, h_out, w_out)
                dxp = np.zeros((c, hp, wp), dtype=x.dtype)
                for ki in range(k):
                    for kj in range(k):
                        dxp[:, ki : ki + stride * h_out : stride,
                            kj : kj + stride * w_out : stride] += dcols[:, ki, kj]
                dx = dxp[:, padding : padding + h, padding : padding + win] if padding else dxp
                _accum(acc, x, np.ascontiguousarray(dx))
        out._backward = _bw
    return out


def grad_check(f, x: Tensor, eps: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be a deterministic scalar-valued function of one tensor. The
    relative error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    base = np.array(x.data, dtype=np.float64)
    probe = Tensor(base.copy(), requires_grad=True)
    out = f(probe)
    if out.size != 1:
        raise UsageError("grad_check requires a scalar-valued function")
    out.backward()
    analytic = (probe.grad if probe.grad is not None else np.zeros_like(base)).ravel()

    numeric = np.zeros(base.size, dtype=np.float64)
    flat = base.ravel()
    for i in range(base.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(Tensor(base.reshape(x.shape))).item()
        flat[i] = orig - eps
        fm = f(Tensor(base.reshape(x.shape))).item()
        flat[i] = orig
        numeric[i] = (fp - fm) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
