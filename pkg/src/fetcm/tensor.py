"""A small reverse-mode autodiff engine on top of numpy.

Only the operations the click model needs are provided. Every op builds a node
holding its parents and a closure mapping the upstream gradient to one gradient
per parent; :meth:`Tensor.backward` walks the recorded graph in reverse
topological order. All arithmetic is float64.

Leading batch axes are allowed everywhere: ``matmul`` broadcasts like
``np.matmul``, and the "row" ops (softmax, layer norm, FFT) act on the trailing
axes.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import fft as _fft

_GRAD_ENABLED = True

# Test hook for the gradient-check negative control. When set, the rfft adjoint
# is scaled wrongly so the filter-block gradient check must fail.
CORRUPT_FFT_ADJOINT = False


class DimensionError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable | None = _backward
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    # -- graph plumbing -------------------------------------------------

    @staticmethod
    def _make(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            return Tensor(data, True, tuple(parents), backward, op)
        return Tensor(data, op=op)

    def backward(self, grad: np.ndarray | None = None):
        """Populate ``.grad`` on every reachable tensor that requires it.

        Gradients accumulate: call :meth:`zero_grad` on leaves between steps.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._make(self.data + other.data, (self, other),
                            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)), "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._make(self.data - other.data, (self, other),
                            lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)), "sub")

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __mul__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data
        return Tensor._make(x * y, (self, other),
                            lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data
        return Tensor._make(x / y, (self, other),
                            lambda g: (_unbroadcast(g / y, x.shape), _unbroadcast(-g * x / (y * y), y.shape)), "div")

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        shape = self.shape

        def back(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return Tensor._make(self.data[idx], (self,), back, "getitem")

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> Tensor:
        src = self.shape
        return Tensor._make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(src),), "reshape")

    def transpose(self, *axes) -> Tensor:
        inv = np.argsort(axes)
        return Tensor._make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),), "transpose")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    x, y = a.data, b.data

    def back(g):
        ga = g @ np.swapaxes(y, -1, -2)
        if y.ndim == 2:
            # shared weight matrix: fold the batch axes into one big product
            gb = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(x, -1, -2) @ g
        return _unbroadcast(ga, x.shape), _unbroadcast(gb, y.shape)

    return Tensor._make(x @ y, (a, b), back, "matmul")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    sizes = np.cumsum([d.shape[axis] for d in datas])[:-1]
    return Tensor._make(np.concatenate(datas, axis=axis), tuple(tensors),
                        lambda g: tuple(np.split(g, sizes, axis=axis)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    n = len(tensors)

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), back, "stack")


def _check_finite(x: np.ndarray, op: str):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{op}: non-finite input")


# -- element-wise -----------------------------------------------------------

def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    v = x.data
    e = np.exp(-np.abs(v))
    out = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return Tensor._make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._make(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return Tensor._make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    v = x.data
    return Tensor._make(np.log(v), (x,), lambda g: (g / v,), "log")


def power(x: Tensor, k: Tensor) -> Tensor:
    """``x ** k`` for positive ``x``; differentiable in both the base and the exponent."""
    base, ex = x.data, k.data
    out = np.power(base, ex)

    def back(g):
        return (_unbroadcast(g * ex * np.power(base, ex - 1.0), base.shape),
                _unbroadcast(g * out * np.log(base), ex.shape))

    return Tensor._make(out, (x, k), back, "power")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    return Tensor._make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clip")


def activation(x: Tensor, kind: str) -> Tensor:
    fns = {"sigmoid": sigmoid, "relu": relu, "tanh": tanh}
    if kind not in fns:
        raise ValueError(f"unknown activation {kind!r}")
    return fns[kind](x)


# -- row-wise ---------------------------------------------------------------

def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, with max subtraction."""
    _check_finite(x.data, "softmax_rows")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor._make(out, (x,), back, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis with the biased variance, then scale and shift."""
    d = x.shape[-1]
    if d == 0:
        raise DimensionError("layer_norm over an empty axis")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm params {gamma.shape}/{beta.shape} do not match width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gm = gamma.data

    def back(g):
        gx_hat = g * gm
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._make(xhat * gm + beta.data, (x, gamma, beta), back, "layer_norm")


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout. Identity when ``p == 0`` or outside training.

    The mask is drawn from ``rng``; gradient checks through this op must pass a
    freshly re-seeded generator on every evaluation so the mask stays fixed.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


def embedding_lookup(table: Tensor, ids, padding_idx: int | None = None) -> Tensor:
    """Gather rows of ``table``. ``ids`` may have any shape.

    Gradients scatter-add into the gathered rows; the ``padding_idx`` row never
    receives gradient.
    """
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = int(ids[(ids < 0) | (ids >= vocab)].flat[0])
        raise IndexError(f"embedding id {bad} out of range for table of {vocab} rows")
    shape = table.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[1]))
        if padding_idx is not None:
            out[padding_idx] = 0.0
        return (out,)

    return Tensor._make(table.data[ids], (table,), back, "embedding")


# -- frequency domain -------------------------------------------------------

@dataclass
class ComplexSpectrum:
    """Half spectrum of a real sequence: ``re``/``im`` have shape ``[..., bins, dims]``."""

    re: Tensor
    im: Tensor
    n: int

    @property
    def bins(self) -> int:
        return self.re.shape[-2]

    @property
    def dims(self) -> int:
        return self.re.shape[-1]


def _half_weights(n: int) -> np.ndarray:
    # multiplicity of each half-spectrum bin in the full Hermitian spectrum
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def rfft(x: Tensor) -> ComplexSpectrum:
    """Real FFT along axis -2 (the sequence axis), independently per column."""
    n = x.shape[-2] if x.ndim >= 2 else 0
    if n == 0:
        raise DimensionError(f"rfft needs a sequence axis of length >= 1, got shape {x.shape}")
    spec = _fft.rfft(x.data, axis=-2)
    w = _half_weights(n)[:, None]

    # Adjoint of the half-spectrum map: x_t = Re(sum_k G_k e^{+i theta}) = n * irfft(G / w).
    def adjoint(g_complex):
        scale = 0.5 if CORRUPT_FFT_ADJOINT else 1.0
        return _fft.irfft(g_complex / w, n, axis=-2) * (n * scale)

    re = Tensor._make(spec.real.copy(), (x,), lambda g: (adjoint(g + 0j),), "rfft_re")
    # Im X = -sum x sin, so the im-output adjoint pairs with +i*g
    im = Tensor._make(spec.imag.copy(), (x,), lambda g: (adjoint(1j * g),), "rfft_im")
    return ComplexSpectrum(re, im, n)


def irfft(spec: ComplexSpectrum, n: int | None = None) -> Tensor:
    """Inverse of :func:`rfft`, returning a real ``[..., n, dims]`` tensor."""
    n = spec.n if n is None else n
    if spec.bins != n // 2 + 1 or spec.im.shape != spec.re.shape:
        raise DimensionError(f"spectrum with {spec.bins} bins cannot be inverted to length {n}")
    out = _fft.irfft(spec.re.data + 1j * spec.im.data, n, axis=-2)
    w = (_half_weights(n) / n)[:, None]

    # adjoint of irfft is (w/n) * rfft(g); the DC/Nyquist imaginary parts of rfft(g) are zero
    def back(g):
        y = _fft.rfft(g, axis=-2) * w
        return y.real.copy(), y.imag.copy()

    return Tensor._make(out, (spec.re, spec.im), back, "irfft")


def spectrum_filter_mul(x: ComplexSpectrum, w_re: Tensor, w_im: Tensor) -> ComplexSpectrum:
    """Element-wise complex product of a spectrum with a learnable filter."""
    if w_re.shape != x.re.shape[-2:] or w_im.shape != w_re.shape:
        raise DimensionError(f"filter {w_re.shape} does not match spectrum {x.re.shape[-2:]}")
    re = x.re * w_re - x.im * w_im
    im = x.re * w_im + x.im * w_re
    return ComplexSpectrum(re, im, x.n)


# -- recurrence -------------------------------------------------------------

def gru_sequence(inputs: Tensor, params: dict[str, Tensor], h0: Tensor | None = None,
                 mask: np.ndarray | None = None) -> Tensor:
    """Run a GRU over axis -2 of ``inputs`` (``[..., T, in]``) and return every hidden state.

    ``params`` holds ``w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h``. The update
    gate interpolates towards the candidate:
    ``h_t = (1 - z_t) * h_{t-1} + z_t * h~_t``.
    Where ``mask[..., t]`` is 0 the state is carried through unchanged.
    """
    hidden = params["u_z"].shape[0]
    in_size = inputs.shape[-1]
    for gate in "zrh":
        if params[f"w_{gate}"].shape != (in_size, hidden) or params[f"u_{gate}"].shape != (hidden, hidden):
            raise DimensionError(
                f"GRU gate {gate}: w {params[f'w_{gate}'].shape}, u {params[f'u_{gate}'].shape} "
                f"vs input {in_size}, hidden {hidden}")
    if inputs.ndim == 2:
        out = gru_sequence(inputs.reshape(1, *inputs.shape), params,
                           None if h0 is None else h0.reshape(1, hidden),
                           None if mask is None else np.asarray(mask)[None])
        return out.reshape(inputs.shape[0], hidden)
    lead = inputs.shape[:-2]
    steps = inputs.shape[-2]
    h = h0 if h0 is not None else Tensor(np.zeros(lead + (hidden,)))
    if h.shape != lead + (hidden,):
        h = h + Tensor(np.zeros(lead + (hidden,)))
    # input projections for every step at once
    xz = inputs @ params["w_z"] + params["b_z"]
    xr = inputs @ params["w_r"] + params["b_r"]
    xh = inputs @ params["w_h"] + params["b_h"]
    states = []
    for t in range(steps):
        z = sigmoid(xz[..., t, :] + h @ params["u_z"])
        r = sigmoid(xr[..., t, :] + h @ params["u_r"])
        cand = tanh(xh[..., t, :] + (r * h) @ params["u_h"])
        h_new = h + z * (cand - h)
        if mask is not None:
            m = mask[..., t, None].astype(np.float64)
            h_new = h + (h_new - h) * m
        h = h_new
        states.append(h)
    return stack(states, axis=-2)


# -- diagnostics ------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-6, coords=None) -> float:
    """Max relative error between the analytic gradient and central differences.

    ``f`` must be deterministic: anything stochastic (dropout in training mode)
    has to draw from a generator re-seeded inside ``f`` so both perturbed
    evaluations see the same mask. The error per coordinate is
    ``|a - n| / max(1e-8, |a| + |n|)``. ``coords`` restricts the check to
    those flat indices (e.g. to skip frozen embedding rows).
    """
    x.requires_grad = True
    x.grad = None
    out = f(x)
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    flat = x.data.reshape(-1)
    idx = np.arange(flat.size) if coords is None else np.asarray(coords, dtype=np.int64)
    numeric = np.empty(idx.size)
    with no_grad():
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            fp = f(x).item()
            flat[i] = orig - step
            fm = f(x).item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite evaluation at coordinate {i}")
            numeric[j] = (fp - fm) / (2 * step)
    a = analytic.reshape(-1)[idx]
    err = np.abs(a - numeric) / np.maximum(1e-8, np.abs(a) + np.abs(numeric))
    return float(err.max()) if err.size else 0.0
