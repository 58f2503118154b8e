"""
Tensor engine – dense float64 tensors with reverse-mode autodiff and the
1-D convolution operators the acoustic model is built from.

Layout is (channels, frames) for sequence tensors. Each operation records its
parents and a backward closure; Tensor.backward() walks the graph in reverse
topological order and accumulates into .grad.

Conventions:
  - conv1d kernel shape: (C_out, C_in, K); bias shape (C_out,)
  - conv1d_transpose kernel shape: (C_in, C_out, K), the adjoint of a conv1d
    whose kernel maps C_out → C_in with the same stride
  - "same" padding: total pad = (ceil(T/s) − 1)·s + K − T, split left = total // 2,
    remainder on the right
"""

import logging
import math
from typing import Callable, Iterable

import numpy as np

from .errors import ShapeError

log = logging.getLogger("Tensor")


class Tensor:

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        name: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.name = name

    def __repr__(self):
        label = f"{self.name}, " if self.name else ""
        return f"Tensor({label}shape={self.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # ─── Arithmetic ───────────────────────────────────────────────────────────

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    def __radd__(self, other) -> "Tensor":
        return add(self, other)

    def __sub__(self, other) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        return mul(sub(self, other), -1.0)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    # ─── Backprop ─────────────────────────────────────────────────────────────

    def backward(self) -> None:
        """Reverse-mode accumulation from a scalar node; repeated calls accumulate."""
        if self.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.accumulate(g)
                continue
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    if id(parent) in grads:
                        grads[id(parent)] = grads[id(parent)] + pg
                    else:
                        grads[id(parent)] = pg


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    """Build an op node; backward maps the output gradient to one gradient per parent."""
    return Tensor(data, parents=parents, backward=backward)


# ─── Elementwise ──────────────────────────────────────────────────────────────

def _check_same(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if b.ndim and a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a.data, b.data, "add")
    scalar_b = b.data.ndim == 0
    return _result(
        a.data + b.data, (a, b),
        lambda g: (g, np.sum(g) if scalar_b else g),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a.data, b.data, "sub")
    scalar_b = b.data.ndim == 0
    return _result(
        a.data - b.data, (a, b),
        lambda g: (g, -np.sum(g) if scalar_b else -g),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a.data, b.data, "mul")
    scalar_b = b.data.ndim == 0
    ad, bd = a.data, b.data
    return _result(
        ad * bd, (a, b),
        lambda g: (g * bd, np.sum(g * ad) if scalar_b else g * ad),
    )


def square(x: Tensor) -> Tensor:
    xd = x.data
    return _result(xd * xd, (x,), lambda g: (2.0 * xd * g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1 − p) in training, identity in eval."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def tensor_sum(x: Tensor) -> Tensor:
    shape = x.shape
    return _result(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got {x.shape}")
    return _result(x.data.T.copy(), (x,), lambda g: (g.T,))


# ─── Frame-axis structure ─────────────────────────────────────────────────────

def concat_channels(parts: Iterable[Tensor]) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    frames = {p.shape[1] for p in parts}
    if len(frames) != 1:
        raise ShapeError(f"concat_channels: frame counts differ {sorted(frames)}")
    sizes = [p.shape[0] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=0), parts, backward)


def pad_frames(x: Tensor, right: int) -> Tensor:
    if right == 0:
        return x
    T = x.shape[1]
    out = np.pad(x.data, ((0, 0), (0, right)))
    return _result(out, (x,), lambda g: (g[:, :T],))


def crop_frames(x: Tensor, length: int) -> Tensor:
    if length == x.shape[1]:
        return x
    T = x.shape[1]

    def backward(g):
        full = np.zeros((g.shape[0], T))
        full[:, :length] = g
        return (full,)

    return _result(x.data[:, :length].copy(), (x,), backward)


# ─── Convolution ──────────────────────────────────────────────────────────────

def same_padding(T: int, K: int, stride: int) -> tuple[int, int, int]:
    """Returns (T_out, pad_left, pad_right) for 'same' padding."""
    t_out = math.ceil(T / stride)
    total = max((t_out - 1) * stride + K - T, 0)
    left = total // 2
    return t_out, left, total - left


def _im2col(xp: np.ndarray, K: int, stride: int, t_out: int) -> np.ndarray:
    """(C, T_pad) → (C·K, T_out) patches, channel-major then tap."""
    C = xp.shape[0]
    cols = np.empty((C, K, t_out))
    span = stride * (t_out - 1) + 1
    for k in range(K):
        cols[:, k, :] = xp[:, k:k + span:stride]
    return cols.reshape(C * K, t_out)


def _col2im(cols: np.ndarray, C: int, K: int, stride: int, t_pad: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patches back into a (C, T_pad) buffer."""
    t_out = cols.shape[1]
    cols = cols.reshape(C, K, t_out)
    out = np.zeros((C, t_pad))
    span = stride * (t_out - 1) + 1
    for k in range(K):
        out[:, k:k + span:stride] += cols[:, k, :]
    return out


def conv1d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: str = "same",
) -> Tensor:
    """Cross-correlation along frames. With K = 1, stride 1 this is a per-frame dense map."""
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise ShapeError(f"conv1d: expected (C, T) input and (C_out, C_in, K) kernel, got {x.shape}, {kernel.shape}")
    c_out, c_in, K = kernel.shape
    C, T = x.shape
    if C != c_in:
        raise ShapeError(f"conv1d: input has {C} channels, kernel expects {c_in}")
    if stride < 1 or K < 1 or T < 1:
        raise ShapeError(f"conv1d: invalid stride={stride}, K={K}, T={T}")

    if padding == "same":
        if stride > 1 and T % stride:
            raise ShapeError(f"conv1d: 'same' padding with stride {stride} needs T divisible by stride, got T={T}")
        t_out, left, right = same_padding(T, K, stride)
    elif padding == "valid":
        if T < K:
            raise ShapeError(f"conv1d: 'valid' padding needs T ≥ K ({T} < {K})")
        t_out, left, right = (T - K) // stride + 1, 0, 0
    else:
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")

    xp = np.pad(x.data, ((0, 0), (left, right)))
    cols = _im2col(xp, K, stride, t_out)
    w2 = kernel.data.reshape(c_out, c_in * K)
    out = w2 @ cols
    if bias is not None:
        out += bias.data[:, None]
    t_pad = xp.shape[1]

    def backward(g):
        gw = (g @ cols.T).reshape(kernel.shape)
        gx = _col2im(w2.T @ g, c_in, K, stride, t_pad)[:, left:left + T]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=1)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _result(out, parents, backward)


def conv1d_transpose(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
) -> Tensor:
    """
    Adjoint of a 'same'-padded strided conv1d: T frames in, T·stride frames out.
    kernel (C_in, C_out, K) is the forward kernel of the conv this undoes.
    """
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise ShapeError(f"conv1d_transpose: bad shapes {x.shape}, {kernel.shape}")
    c_in, c_out, K = kernel.shape
    C, T = x.shape
    if C != c_in:
        raise ShapeError(f"conv1d_transpose: input has {C} channels, kernel expects {c_in}")
    if stride < 1:
        raise ShapeError(f"conv1d_transpose: stride must be ≥ 1, got {stride}")

    t_full = T * stride
    _, left, right = same_padding(t_full, K, stride)
    t_pad = t_full + left + right
    w2 = kernel.data.reshape(c_in, c_out * K)
    out = _col2im(w2.T @ x.data, c_out, K, stride, t_pad)[:, left:left + t_full]
    if bias is not None:
        out += bias.data[:, None]

    def backward(g):
        gp = np.pad(g, ((0, 0), (left, right)))
        cols = _im2col(gp, K, stride, T)
        gx = w2 @ cols
        gw = (x.data @ cols.T).reshape(kernel.shape)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=1)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _result(out, parents, backward)


# ─── Parameters ───────────────────────────────────────────────────────────────

def glorot_uniform(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Uniform in ±sqrt(6 / (fan_in + fan_out)) for conv kernels (C_a, C_b, K)."""
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    fan_out = shape[0] * receptive
    fan_in = shape[1] * receptive
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Named parameters with fixed shapes plus the train/eval flag."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.training = False

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"Parameter '{name}' already exists")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def parameter_count(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ShapeError(f"Parameter set mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, value in state.items():
            p = self._params[name]
            if p.shape != value.shape:
                raise ShapeError(f"Parameter '{name}': shape {value.shape} != {p.shape}")
            p.data = np.array(value, dtype=np.float64)


class Adam:
    """Per-parameter first/second-moment optimizer."""

    def __init__(
        self,
        params: ParamStore,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data = p.data - self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
