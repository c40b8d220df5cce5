"""Reverse-mode automatic differentiation over dense float64 arrays.

A tape-free graph engine in the micrograd lineage: every operation builds a
Tensor node holding its value, the operands that produced it, and a closure
that routes the output adjoint back to the operands. Values are numpy arrays
of at most 2 dimensions; elementwise ops follow numpy broadcasting and the
backward pass sums adjoints over the broadcast axes.

Everything is float64. Tensors flagged ``constant`` (inputs, cached
constraint matrices) participate in forward computation but receive no
gradient, which keeps the training hot path free of dead adjoint work.
"""

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class ContractError(ValueError):
    """An operation was called outside its contract (e.g. non-scalar root)."""


def _reduce_to_shape(grad, shape):
    """Sum a broadcast adjoint back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """One node of the computation graph.

    Attributes:
        value: float64 ndarray (ndim <= 2).
        grad: accumulated adjoint, same shape as value (allocated lazily).
        op: tag of the primitive that produced this node ("leaf" for inputs).
        parents: operand nodes.
        constant: if True the node is treated as data, never differentiated.
    """

    __slots__ = ("value", "grad", "op", "parents", "constant", "name", "_vjp")

    def __init__(self, value, parents=(), op="leaf", constant=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        if self.value.ndim > 2:
            raise ShapeError(f"tensors are at most 2-D, got shape {self.value.shape}")
        self.grad = None
        self.op = op
        self.parents = tuple(parents)
        self.constant = constant
        self.name = name
        self._vjp = None

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    def __repr__(self):
        tag = self.name or self.op
        return f"Tensor({tag}, shape={self.value.shape})"

    def _ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        return self.grad

    def _accumulate(self, g):
        if not self.constant:
            self._ensure_grad()
            self.grad += _reduce_to_shape(g, self.value.shape)

    # -- operator sugar -------------------------------------------------

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)


def as_tensor(x, constant=True):
    return x if isinstance(x, Tensor) else Tensor(x, constant=constant)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value + b.value, parents=(a, b), op="add",
                 constant=a.constant and b.constant)

    def vjp(g):
        a._accumulate(g)
        b._accumulate(g)

    out._vjp = vjp
    return out


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value - b.value, parents=(a, b), op="sub",
                 constant=a.constant and b.constant)

    def vjp(g):
        a._accumulate(g)
        b._accumulate(-g)

    out._vjp = vjp
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value * b.value, parents=(a, b), op="mul",
                 constant=a.constant and b.constant)

    def vjp(g):
        a._accumulate(g * b.value)
        b._accumulate(g * a.value)

    out._vjp = vjp
    return out


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(
            f"matmul needs 2-D operands, got shapes {a.value.shape} and {b.value.shape}")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.value.shape} @ {b.value.shape}")
    out = Tensor(a.value @ b.value, parents=(a, b), op="matmul",
                 constant=a.constant and b.constant)

    def vjp(g):
        a._accumulate(g @ b.value.T)
        b._accumulate(a.value.T @ g)

    out._vjp = vjp
    return out


def elu(x):
    """Elementwise y = x for x >= 0, exp(x) - 1 otherwise."""
    x = as_tensor(x)
    neg = x.value < 0.0
    # clamp before expm1 so the unused positive branch cannot overflow
    y = np.where(neg, np.expm1(np.minimum(x.value, 0.0)), x.value)
    out = Tensor(y, parents=(x,), op="elu", constant=x.constant)
    # derivative is 1 on the nonnegative branch, exp(x) = y + 1 on the other
    slope = np.where(neg, y + 1.0, 1.0)

    def vjp(g):
        x._accumulate(g * slope)

    out._vjp = vjp
    return out


def softmax(x):
    """Shift-invariant softmax over the last axis (rows of a matrix)."""
    x = as_tensor(x)
    if x.value.size == 0:
        raise ShapeError("softmax of an empty vector")
    z = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, parents=(x,), op="softmax", constant=x.constant)

    def vjp(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        x._accumulate(y * (g - inner))

    out._vjp = vjp
    return out


def sum_sq(x):
    """Scalar sum of squared entries."""
    x = as_tensor(x)
    out = Tensor(np.sum(x.value * x.value), parents=(x,), op="sum_sq",
                 constant=x.constant)

    def vjp(g):
        x._accumulate(2.0 * g * x.value)

    out._vjp = vjp
    return out


def tsum(x):
    """Scalar sum of all entries."""
    x = as_tensor(x)
    out = Tensor(np.sum(x.value), parents=(x,), op="sum", constant=x.constant)

    def vjp(g):
        x._accumulate(np.broadcast_to(g, x.value.shape))

    out._vjp = vjp
    return out


def slice_cols(x, start, stop):
    """Column slice of a 2-D tensor; backward scatters into the slice."""
    x = as_tensor(x)
    if x.value.ndim != 2:
        raise ShapeError(f"slice_cols needs a 2-D tensor, got shape {x.value.shape}")
    out = Tensor(x.value[:, start:stop], parents=(x,), op="slice_cols",
                 constant=x.constant)

    def vjp(g):
        if not x.constant:
            full = np.zeros_like(x.value)
            full[:, start:stop] = g
            x._accumulate(full)

    out._vjp = vjp
    return out


def concat_cols(parts):
    """Horizontal concatenation of 2-D tensors with equal row counts."""
    parts = [as_tensor(p) for p in parts]
    widths = [p.value.shape[1] for p in parts]
    out = Tensor(np.concatenate([p.value for p in parts], axis=1),
                 parents=tuple(parts), op="concat_cols",
                 constant=all(p.constant for p in parts))

    def vjp(g):
        at = 0
        for p, w in zip(parts, widths):
            p._accumulate(g[:, at:at + w])
            at += w

    out._vjp = vjp
    return out


def rows_matvec(mats, x):
    """Per-row matrix-vector product with a constant stack of matrices.

    mats is a plain (B, r, c) ndarray treated as data; x is a (B, c) tensor.
    Row b of the result is mats[b] @ x[b].
    """
    x = as_tensor(x)
    mats = np.asarray(mats, dtype=np.float64)
    if x.value.ndim != 2 or mats.ndim != 3 or mats.shape[0] != x.value.shape[0] \
            or mats.shape[2] != x.value.shape[1]:
        raise ShapeError(
            f"rows_matvec shapes disagree: mats {mats.shape}, x {x.value.shape}")
    out = Tensor(np.einsum("brc,bc->br", mats, x.value),
                 parents=(x,), op="rows_matvec", constant=x.constant)

    def vjp(g):
        x._accumulate(np.einsum("brc,br->bc", mats, g))

    out._vjp = vjp
    return out


def _topo_order(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss):
    """Backpropagate from a scalar node.

    All gradient slots reachable from the loss are zeroed first, so repeated
    calls never mix adjoints from separate passes. Returns a map from leaf
    (parameter) tensors to their gradients.
    """
    if loss.value.size != 1:
        raise ContractError(
            f"backward root must be scalar, got shape {loss.value.shape}")
    order = _topo_order(loss)
    for node in order:
        if not node.constant:
            node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._vjp is not None and not node.constant:
            node._vjp(node.grad)
    return {n: n.grad for n in order if not n.parents and not n.constant}
