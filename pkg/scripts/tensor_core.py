"""
Dense matrix arithmetic with a reverse-mode differentiation tape

Every value is a 2-D float64 numpy array. Operations build DiffNode graphs;
backward() sweeps the graph in reverse topological order and accumulates
gradients into the nodes that require them.
"""
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ContractError, NumericError, ShapeError

Matrix = np.ndarray
LAYER_NORM_EPS = 1e-5
GAT_LEAKY_SLOPE = 0.2


def as_matrix(x) -> Matrix:
    """
    Coerce a scalar, vector or nested list into a fresh 2-D float64 matrix.
    Vectors become single rows.
    """
    arr = np.array(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return arr


def _freeze(arr: Matrix) -> Matrix:
    arr.flags.writeable = False
    return arr


class DiffNode:
    """A matrix value in the computation graph, with its gradient"""

    __slots__ = ("value", "grad", "parents", "op", "trainable", "requires_grad", "name", "_backward")
    # numpy defers to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, value, parents: Sequence["DiffNode"] = (), op: str = "const",
                 trainable: bool = False, name: Optional[str] = None):
        self.value = _freeze(as_matrix(value))
        self.grad = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self.op = op
        self.trainable = trainable
        self.requires_grad = trainable or any(p.requires_grad for p in self.parents)
        self.name = name
        self._backward: Optional[Callable[[Matrix], None]] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def T(self) -> "DiffNode":
        return transpose(self)

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 node, got {self.rows}x{self.cols}")
        return float(self.value[0, 0])

    def assign(self, value) -> None:
        """Replace the value of a leaf node, keeping its shape"""
        new_value = as_matrix(value)
        if new_value.shape != self.value.shape:
            raise ShapeError(f"cannot assign {new_value.shape} to node of shape {self.value.shape}")
        self.value = _freeze(new_value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"DiffNode({label}, {self.rows}x{self.cols})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return scale(self, -1.0)


NodeLike = Union[DiffNode, Matrix, float, Sequence]


def constant(x: NodeLike) -> DiffNode:
    return DiffNode(x)


def parameter(x: NodeLike, name: Optional[str] = None) -> DiffNode:
    return DiffNode(x, trainable=True, name=name)


def lift(x: NodeLike) -> DiffNode:
    return x if isinstance(x, DiffNode) else constant(x)


def _result(value: Matrix, parents: Tuple[DiffNode, ...], op: str,
            backward: Callable[[Matrix], None]) -> DiffNode:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{op} produced non-finite values")
    out = DiffNode(value, parents=parents, op=op)
    if out.requires_grad:
        out._backward = backward
    return out


def _unbroadcast(grad: Matrix, shape: Tuple[int, int]) -> Matrix:
    """Sum a broadcast gradient back down to the operand's shape"""
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(a: DiffNode, b: DiffNode, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: left operand is {a.rows}x{a.cols}, right operand is {b.rows}x{b.cols}") from None


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: NodeLike, b: NodeLike) -> DiffNode:
    """
    Matrix product a·b.

    Raises:
        ShapeError: inner dimensions disagree
    """
    a, b = lift(a), lift(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: left operand is {a.rows}x{a.cols}, right operand is {b.rows}x{b.cols}")

    def backward(g):
        if a.requires_grad:
            a.grad += g @ b.value.T
        if b.requires_grad:
            b.grad += a.value.T @ g

    return _result(a.value @ b.value, (a, b), "matmul", backward)


def transpose(a: NodeLike) -> DiffNode:
    a = lift(a)

    def backward(g):
        a.grad += g.T

    return _result(a.value.T.copy(), (a,), "transpose", backward)


def add(a: NodeLike, b: NodeLike) -> DiffNode:
    """Elementwise sum; a 1-sized dimension broadcasts (row bias, scalar)"""
    a, b = lift(a), lift(b)
    _broadcast_check(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.shape)

    return _result(a.value + b.value, (a, b), "add", backward)


def sub(a: NodeLike, b: NodeLike) -> DiffNode:
    a, b = lift(a), lift(b)
    _broadcast_check(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(g, b.shape)

    return _result(a.value - b.value, (a, b), "sub", backward)


def mul(a: NodeLike, b: NodeLike) -> DiffNode:
    """Elementwise (Hadamard) product with broadcasting"""
    a, b = lift(a), lift(b)
    _broadcast_check(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.value, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.value, b.shape)

    return _result(a.value * b.value, (a, b), "mul", backward)


def scale(a: NodeLike, c: float) -> DiffNode:
    a = lift(a)

    def backward(g):
        a.grad += c * g

    return _result(c * a.value, (a,), "scale", backward)


def square(a: NodeLike) -> DiffNode:
    a = lift(a)

    def backward(g):
        a.grad += 2.0 * a.value * g

    return _result(a.value * a.value, (a,), "square", backward)


def sum_all(a: NodeLike) -> DiffNode:
    a = lift(a)

    def backward(g):
        a.grad += g[0, 0]

    return _result(np.array([[a.value.sum()]]), (a,), "sum", backward)


def mean_all(a: NodeLike) -> DiffNode:
    a = lift(a)
    count = a.value.size

    def backward(g):
        a.grad += g[0, 0] / count

    return _result(np.array([[a.value.mean()]]), (a,), "mean", backward)


# ---------------------------------------------------------------------------
# Pointwise nonlinearities
# ---------------------------------------------------------------------------

def relu(a: NodeLike) -> DiffNode:
    a = lift(a)
    active = a.value > 0

    def backward(g):
        a.grad += g * active

    return _result(np.where(active, a.value, 0.0), (a,), "relu", backward)


def leaky_relu(a: NodeLike, slope: float = GAT_LEAKY_SLOPE) -> DiffNode:
    a = lift(a)
    active = a.value > 0

    def backward(g):
        a.grad += g * np.where(active, 1.0, slope)

    return _result(np.where(active, a.value, slope * a.value), (a,), "leaky_relu", backward)


def elu(a: NodeLike) -> DiffNode:
    a = lift(a)
    active = a.value > 0
    negative_part = np.expm1(np.minimum(a.value, 0.0))

    def backward(g):
        a.grad += g * np.where(active, 1.0, negative_part + 1.0)

    return _result(np.where(active, a.value, negative_part), (a,), "elu", backward)


def exp(a: NodeLike) -> DiffNode:
    a = lift(a)
    out = np.exp(a.value)

    def backward(g):
        a.grad += g * out

    return _result(out, (a,), "exp", backward)


def log(a: NodeLike) -> DiffNode:
    a = lift(a)
    if np.any(a.value <= 0):
        raise NumericError("log of a non-positive entry")

    def backward(g):
        a.grad += g / a.value

    return _result(np.log(a.value), (a,), "log", backward)


def sigmoid(a: NodeLike) -> DiffNode:
    a = lift(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))

    def backward(g):
        a.grad += g * out * (1.0 - out)

    return _result(out, (a,), "sigmoid", backward)


def xlogx(a: NodeLike) -> DiffNode:
    """x·log(x) entrywise with the 0·log 0 = 0 convention"""
    a = lift(a)
    positive = a.value > 0
    safe = np.where(positive, a.value, 1.0)

    def backward(g):
        a.grad += g * np.where(positive, np.log(safe) + 1.0, 0.0)

    return _result(np.where(positive, a.value * np.log(safe), 0.0), (a,), "xlogx", backward)


# ---------------------------------------------------------------------------
# Row-wise normalisations
# ---------------------------------------------------------------------------

def softmax_rows(m: NodeLike, mask: Optional[np.ndarray] = None) -> DiffNode:
    """
    Row-wise softmax with per-row max subtraction.

    Args:
        m: logits
        mask: optional boolean matrix; False entries are excluded and come out as 0

    Raises:
        ContractError: a row has no unmasked entry
    """
    m = lift(m)
    logits = m.value
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != m.shape:
            raise ShapeError(f"softmax_rows: mask is {mask.shape}, logits are {m.shape}")
        if not mask.any(axis=1).all():
            raise ContractError("softmax_rows: every row needs at least one unmasked entry")
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    out = weights / weights.sum(axis=1, keepdims=True)

    def backward(g):
        m.grad += out * (g - (g * out).sum(axis=1, keepdims=True))

    return _result(out, (m,), "softmax_rows", backward)


def log_softmax_rows(m: NodeLike) -> DiffNode:
    m = lift(m)
    shifted = m.value - m.value.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        m.grad += g - probs * g.sum(axis=1, keepdims=True)

    return _result(out, (m,), "log_softmax_rows", backward)


def layer_norm(m: NodeLike, gain: NodeLike, bias: NodeLike, eps: float = LAYER_NORM_EPS) -> DiffNode:
    """
    Standardise each row (population variance, eps under the root), then
    scale by gain and shift by bias.

    Args:
        m: N x d input
        gain: 1 x d
        bias: 1 x d
        eps: variance floor
    """
    m, gain, bias = lift(m), lift(gain), lift(bias)
    d = m.cols
    if gain.shape != (1, d) or bias.shape != (1, d):
        raise ShapeError(f"layer_norm: input has {d} columns, gain is {gain.shape}, bias is {bias.shape}")
    centered = m.value - m.value.mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=1, keepdims=True) + eps)
    normed = centered * inv_std

    def backward(g):
        if gain.requires_grad:
            gain.grad += (g * normed).sum(axis=0, keepdims=True)
        if bias.requires_grad:
            bias.grad += g.sum(axis=0, keepdims=True)
        if m.requires_grad:
            g_normed = g * gain.value
            m.grad += inv_std / d * (
                d * g_normed
                - g_normed.sum(axis=1, keepdims=True)
                - normed * (g_normed * normed).sum(axis=1, keepdims=True)
            )

    return _result(normed * gain.value + bias.value, (m, gain, bias), "layer_norm", backward)


def l2_normalize_rows(m: NodeLike, eps: float = 1e-12) -> DiffNode:
    """
    Divide each row by its norm. Rows with norm at or below eps map to zero
    and pass no gradient.
    """
    m = lift(m)
    norms = np.sqrt((m.value ** 2).sum(axis=1, keepdims=True))
    above = norms > eps
    denom = np.where(above, norms, 1.0)
    out = np.where(above, m.value / denom, 0.0)

    def backward(g):
        projected = g - out * (g * out).sum(axis=1, keepdims=True)
        m.grad += np.where(above, projected / denom, 0.0)

    return _result(out, (m,), "l2_normalize_rows", backward)


# ---------------------------------------------------------------------------
# Indexing and assembly
# ---------------------------------------------------------------------------

def take_rows(table: NodeLike, index: Sequence[int]) -> DiffNode:
    """Gather rows (embedding lookup); repeated indices accumulate gradient"""
    table = lift(table)
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= table.rows):
        raise ShapeError(f"take_rows: index out of range for table with {table.rows} rows")

    def backward(g):
        np.add.at(table.grad, index, g)

    return _result(table.value[index], (table,), "take_rows", backward)


def slice_rows(m: NodeLike, start: int, stop: int) -> DiffNode:
    m = lift(m)
    if not 0 <= start < stop <= m.rows:
        raise ShapeError(f"slice_rows: [{start}, {stop}) outside {m.rows} rows")

    def backward(g):
        m.grad[start:stop] += g

    return _result(m.value[start:stop].copy(), (m,), "slice_rows", backward)


def concat_cols(blocks: Sequence[NodeLike]) -> DiffNode:
    nodes = tuple(lift(b) for b in blocks)
    if not nodes:
        raise ContractError("concat_cols needs at least one block")
    rows = {n.rows for n in nodes}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: blocks have differing row counts {sorted(rows)}")
    offsets = np.cumsum([0] + [n.cols for n in nodes])

    def backward(g):
        for node, lo, hi in zip(nodes, offsets[:-1], offsets[1:]):
            if node.requires_grad:
                node.grad += g[:, lo:hi]

    return _result(np.concatenate([n.value for n in nodes], axis=1), nodes, "concat_cols", backward)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

def _topological_order(root: DiffNode) -> List[DiffNode]:
    order: List[DiffNode] = []
    visited = set()
    stack: List[Tuple[DiffNode, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: DiffNode) -> None:
    """
    Reverse sweep from a scalar loss. Gradients accumulate into every
    node that requires them; zero parameter grads between steps.

    Raises:
        ContractError: loss is not 1x1
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a 1x1 loss, got {loss.rows}x{loss.cols}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    loss.grad = loss.grad + 1.0
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


class ParamStore:
    """Named trainable parameters, iterated in lexicographic order"""

    def __init__(self):
        self._params: Dict[str, DiffNode] = {}

    def add(self, name: str, value: NodeLike) -> DiffNode:
        if name in self._params:
            raise ContractError(f"parameter '{name}' already registered")
        node = parameter(value, name=name)
        self._params[name] = node
        return node

    def __getitem__(self, name: str) -> DiffNode:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return sorted(self._params)

    def items(self) -> Iterator[Tuple[str, DiffNode]]:
        for name in self.names():
            yield name, self._params[name]

    def zero_grad(self) -> None:
        for node in self._params.values():
            node.zero_grad()

    def snapshot(self) -> Dict[str, Matrix]:
        return {name: node.value.copy() for name, node in self.items()}

    def load(self, values: Mapping[str, Matrix]) -> None:
        """Overwrite parameter values; names and shapes must match exactly"""
        missing = set(self._params) - set(values)
        extra = set(values) - set(self._params)
        if missing or extra:
            raise ContractError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, node in self._params.items():
            node.assign(values[name])

    def num_scalars(self) -> int:
        return sum(node.value.size for node in self._params.values())


def _scalar_value(out: Union[DiffNode, float]) -> float:
    value = out.item() if isinstance(out, DiffNode) else float(out)
    if not np.isfinite(value):
        raise NumericError(f"objective evaluated to non-finite value {value}")
    return value


def grad_check(f: Callable[[], Union[DiffNode, float]], store: ParamStore, eps: float = 1e-5,
               names: Optional[Sequence[str]] = None) -> float:
    """
    Compare tape gradients of f against central finite differences.

    Args:
        f: zero-argument objective reading the parameters in store
        store: parameters to perturb
        eps: finite-difference step
        names: optional subset of parameter names

    Returns:
        Maximum relative error, using max(1, |analytic|, |numeric|) as denominator

    Raises:
        NumericError: f is non-finite at any evaluation point
    """
    store.zero_grad()
    out = f()
    _scalar_value(out)
    if isinstance(out, DiffNode):
        backward(out)
    analytic = {name: node.grad.copy() for name, node in store.items()}

    worst = 0.0
    for name in (names if names is not None else store.names()):
        node = store[name]
        original = node.value
        for idx in np.ndindex(original.shape):
            shifted = original.copy()
            shifted[idx] += eps
            node.assign(shifted)
            f_plus = _scalar_value(f())
            shifted[idx] -= 2.0 * eps
            node.assign(shifted)
            f_minus = _scalar_value(f())
            node.assign(original)

            numeric = (f_plus - f_minus) / (2.0 * eps)
            exact = analytic[name][idx]
            error = abs(exact - numeric) / max(1.0, abs(exact), abs(numeric))
            worst = max(worst, error)
    return worst
