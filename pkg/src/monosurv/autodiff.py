"""Reverse-mode automatic differentiation on small explicit graphs.

Expression graphs are built once per architecture and re-evaluated with fresh
bindings, so a graph is batch-size agnostic: every array is 2-D float64 and the
leading axis is the batch. Inputs are identified by name; two input nodes with
the same name share a binding (and their adjoints are summed), which is how
model parameters are shared between several survival-curve copies inside one
loss graph.

Besides `gradient` (one reverse sweep for all named inputs) the module exposes
`time_derivative`, a symbolic forward-mode pass that rewrites a graph into the
graph of its derivative with respect to one scalar input column. Differentiating
that result again with the ordinary reverse sweep is what gives parameter
gradients of event densities without any nested-tape machinery.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "AutodiffError",
    "ShapeMismatch",
    "UnboundInput",
    "DomainError",
    "NonScalarOutput",
    "Expr",
    "inp",
    "const",
    "add",
    "sub",
    "mul",
    "hadamard",
    "neg",
    "exp",
    "log",
    "softplus",
    "tanh",
    "sigmoid",
    "relu",
    "absolute",
    "power",
    "sum_all",
    "mean_all",
    "affine",
    "concat",
    "eval_graph",
    "gradient",
    "time_derivative",
    "finite_diff_check",
]


class AutodiffError(Exception):
    """Base class for graph construction and evaluation errors."""


class ShapeMismatch(AutodiffError):
    """Operand shapes are incompatible for the requested op."""


class UnboundInput(AutodiffError):
    """An input node has no entry in the bindings mapping."""


class DomainError(AutodiffError):
    """An op was evaluated outside its mathematical domain."""


class NonScalarOutput(AutodiffError):
    """gradient() requires the root to evaluate to a single scalar."""


def _as_array(value) -> np.ndarray:
    """Coerce scalars / 1-D arrays to 2-D float64; scalars become (1, 1)."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeMismatch(f"arrays must be at most 2-D, got shape {arr.shape}")
    return arr


class Expr:
    """One node of an expression graph.

    `op` is the op kind, `args` the operand nodes, and `data` is the op
    payload: the input name for "input", the constant array for "constant",
    the exponent for "power", otherwise None. `val` and `adj` are scratch
    slots used by eval_graph/gradient; a node therefore participates in one
    evaluation at a time.
    """

    __slots__ = ("op", "args", "data", "val", "adj")

    def __init__(self, op: str, args: tuple = (), data=None):
        self.op = op
        self.args = args
        self.data = data
        self.val = None
        self.adj = None

    def __repr__(self):
        if self.op == "input":
            return f"Expr(input {self.data!r})"
        if self.op == "constant":
            return f"Expr(constant {self.data.shape})"
        return f"Expr({self.op}, {len(self.args)} args)"

    # Sugar so graph builders read like formulas.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return neg(self)


def _wrap(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return const(value)


def inp(name: str) -> Expr:
    """An input leaf whose value comes from the bindings mapping."""
    if not isinstance(name, str) or not name:
        raise AutodiffError("input name must be a non-empty string")
    return Expr("input", (), name)


def const(value) -> Expr:
    """A constant leaf; the array is copied and frozen."""
    arr = _as_array(value).copy()
    arr.setflags(write=False)
    return Expr("constant", (), arr)


def add(a: Expr, b: Expr) -> Expr:
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    return Expr("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    """Elementwise product with 2-D broadcasting (e.g. (B,1)*(1,d))."""
    return Expr("mul", (a, b))


def hadamard(a: Expr, b: Expr) -> Expr:
    """Elementwise product of identically shaped operands (no broadcasting)."""
    return Expr("hadamard", (a, b))


def neg(a: Expr) -> Expr:
    return Expr("neg", (a,))


def exp(a: Expr) -> Expr:
    return Expr("exp", (a,))


def log(a: Expr) -> Expr:
    return Expr("log", (a,))


def softplus(a: Expr) -> Expr:
    return Expr("softplus", (a,))


def tanh(a: Expr) -> Expr:
    return Expr("tanh", (a,))


def sigmoid(a: Expr) -> Expr:
    return Expr("sigmoid", (a,))


def relu(a: Expr) -> Expr:
    return Expr("relu", (a,))


def absolute(a: Expr) -> Expr:
    return Expr("abs", (a,))


def power(a: Expr, exponent: float) -> Expr:
    return Expr("power", (a,), float(exponent))


def sum_all(a: Expr) -> Expr:
    """Sum of every entry, as a (1, 1) array."""
    return Expr("sum", (a,))


def mean_all(a: Expr) -> Expr:
    """Mean of every entry, as a (1, 1) array."""
    return Expr("mean", (a,))


def affine(x: Expr, weight: Expr, bias: Expr | None = None) -> Expr:
    """x @ weight.T (+ bias); weight is (d_out, d_in), bias (1, d_out)."""
    args = (x, weight) if bias is None else (x, weight, bias)
    return Expr("affine", args)


def concat(*parts: Expr) -> Expr:
    """Concatenate along axis 1; operands must share the batch axis."""
    if len(parts) < 2:
        raise AutodiffError("concat needs at least two operands")
    return Expr("concat", tuple(parts))


# ---------------------------------------------------------------------------
# Forward evaluation


def stable_softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) computed as max(x, 0) + log1p(e^{-|x|}); overflow-free."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _broadcast_shape(sa, sb, op):
    try:
        return np.broadcast_shapes(sa, sb)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {sa} and {sb} do not broadcast") from None


def _fw(node: Expr, bindings: dict) -> np.ndarray:
    op = node.op
    if op == "input":
        try:
            return bindings[node.data]
        except KeyError:
            raise UnboundInput(f"no binding for input {node.data!r}") from None
    if op == "constant":
        return node.data
    a = node.args[0].val
    if op == "add":
        b = node.args[1].val
        _broadcast_shape(a.shape, b.shape, "add")
        return a + b
    if op == "sub":
        b = node.args[1].val
        _broadcast_shape(a.shape, b.shape, "sub")
        return a - b
    if op == "mul":
        b = node.args[1].val
        _broadcast_shape(a.shape, b.shape, "mul")
        return a * b
    if op == "hadamard":
        b = node.args[1].val
        if a.shape != b.shape:
            raise ShapeMismatch(f"hadamard: shapes {a.shape} != {b.shape}")
        return a * b
    if op == "neg":
        return -a
    if op == "exp":
        return np.exp(a)
    if op == "log":
        if np.any(a <= 0.0):
            raise DomainError("log of a non-positive value")
        return np.log(a)
    if op == "softplus":
        return stable_softplus(a)
    if op == "tanh":
        return np.tanh(a)
    if op == "sigmoid":
        return stable_sigmoid(a)
    if op == "relu":
        return np.maximum(a, 0.0)
    if op == "abs":
        return np.abs(a)
    if op == "power":
        p = node.data
        if p != int(p) and np.any(a < 0.0):
            raise DomainError(f"power: non-integer exponent {p} of a negative base")
        if p < 0 and np.any(a == 0.0):
            raise DomainError(f"power: exponent {p} at zero")
        return np.power(a, p)
    if op == "sum":
        return np.array([[a.sum()]])
    if op == "mean":
        return np.array([[a.mean()]])
    if op == "affine":
        w = node.args[1].val
        if a.shape[1] != w.shape[1]:
            raise ShapeMismatch(
                f"affine: input has {a.shape[1]} columns, weight expects {w.shape[1]}"
            )
        out = a @ w.T
        if len(node.args) == 3:
            b = node.args[2].val
            if b.shape != (1, w.shape[0]):
                raise ShapeMismatch(
                    f"affine: bias shape {b.shape}, expected (1, {w.shape[0]})"
                )
            out = out + b
        return out
    if op == "concat":
        rows = {arg.val.shape[0] for arg in node.args}
        if len(rows) != 1:
            raise ShapeMismatch(f"concat: batch sizes differ: {sorted(rows)}")
        return np.concatenate([arg.val for arg in node.args], axis=1)
    raise AutodiffError(f"unknown op {op!r}")


def _prepare_bindings(bindings: dict) -> dict:
    return {name: _as_array(value) for name, value in bindings.items()}


def _toposort(root: Expr) -> list[Expr]:
    order: list[Expr] = []
    seen: set[int] = set()
    stack: list[tuple[Expr, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for arg in node.args:
            if id(arg) not in seen:
                stack.append((arg, False))
    return order


def eval_graph(expr: Expr, bindings: dict) -> np.ndarray:
    """Evaluate the graph under the given input bindings.

    Bindings are never mutated; repeated calls with equal bindings produce
    bitwise-identical results.
    """
    bound = _prepare_bindings(bindings)
    order = _toposort(expr)
    for node in order:
        node.val = _fw(node, bound)
    return expr.val.copy()


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _accumulate(node: Expr, grad: np.ndarray) -> None:
    if node.adj is None:
        node.adj = grad.copy()
    else:
        node.adj += grad


def _bw(node: Expr) -> None:
    op = node.op
    if op in ("input", "constant"):
        return
    g = node.adj
    a = node.args[0]
    if op == "add":
        b = node.args[1]
        _accumulate(a, _unbroadcast(g, a.val.shape))
        _accumulate(b, _unbroadcast(g, b.val.shape))
    elif op == "sub":
        b = node.args[1]
        _accumulate(a, _unbroadcast(g, a.val.shape))
        _accumulate(b, _unbroadcast(-g, b.val.shape))
    elif op in ("mul", "hadamard"):
        b = node.args[1]
        _accumulate(a, _unbroadcast(g * b.val, a.val.shape))
        _accumulate(b, _unbroadcast(g * a.val, b.val.shape))
    elif op == "neg":
        _accumulate(a, -g)
    elif op == "exp":
        _accumulate(a, g * node.val)
    elif op == "log":
        _accumulate(a, g / a.val)
    elif op == "softplus":
        _accumulate(a, g * stable_sigmoid(a.val))
    elif op == "tanh":
        _accumulate(a, g * (1.0 - node.val * node.val))
    elif op == "sigmoid":
        _accumulate(a, g * node.val * (1.0 - node.val))
    elif op == "relu":
        _accumulate(a, g * (a.val > 0.0))
    elif op == "abs":
        _accumulate(a, g * np.sign(a.val))
    elif op == "power":
        p = node.data
        _accumulate(a, g * p * np.power(a.val, p - 1.0))
    elif op == "sum":
        _accumulate(a, np.full_like(a.val, g[0, 0]))
    elif op == "mean":
        _accumulate(a, np.full_like(a.val, g[0, 0] / a.val.size))
    elif op == "affine":
        w = node.args[1]
        _accumulate(a, g @ w.val)
        _accumulate(w, g.T @ a.val)
        if len(node.args) == 3:
            _accumulate(node.args[2], g.sum(axis=0, keepdims=True))
    elif op == "concat":
        col = 0
        for arg in node.args:
            width = arg.val.shape[1]
            _accumulate(arg, g[:, col:col + width])
            col += width
    else:
        raise AutodiffError(f"unknown op {op!r}")


def gradient(expr: Expr, bindings: dict, wrt) -> dict[str, np.ndarray]:
    """Adjoints of a scalar-valued graph with respect to named inputs.

    Returns one array per requested name, shaped like its binding. Inputs that
    appear several times in the graph under the same name have their adjoints
    summed; a requested input the graph never touches gets zeros.
    """
    bound = _prepare_bindings(bindings)
    wrt = list(wrt)
    for name in wrt:
        if name not in bound:
            raise UnboundInput(f"gradient target {name!r} has no binding")
    order = _toposort(expr)
    for node in order:
        node.val = _fw(node, bound)
        node.adj = None
    if expr.val.size != 1:
        raise NonScalarOutput(
            f"gradient needs a scalar root, got shape {expr.val.shape}"
        )
    expr.adj = np.ones_like(expr.val)
    grads = {name: np.zeros_like(bound[name]) for name in wrt}
    targets = set(wrt)
    for node in reversed(order):
        if node.adj is None:
            continue
        if node.op == "input" and node.data in targets:
            grads[node.data] += node.adj
        _bw(node)
    return grads


# ---------------------------------------------------------------------------
# Symbolic time derivative (forward-mode, graph to graph)


def _ones_like_expr(node: Expr) -> Expr:
    return add(mul(node, const(0.0)), const(1.0))


def _zeros_like_expr(node: Expr) -> Expr:
    return mul(node, const(0.0))


def time_derivative(expr: Expr, wrt: str) -> Expr:
    """Graph of d(expr)/d(wrt), treating the input column `wrt` as a scalar
    broadcast along its width.

    The result shares nodes with the source graph (activation derivatives
    reuse the primal values), so it evaluates under the same bindings. Ops
    with kinks (relu, abs) are rejected on the differentiation path; the
    models here keep them off the time path by construction.
    """
    memo: dict[int, Expr | None] = {}

    def go(node: Expr) -> Expr | None:
        key = id(node)
        if key in memo:
            return memo[key]
        memo[key] = _tangent(node, wrt, go)
        return memo[key]

    out = go(expr)
    if out is None:
        out = _zeros_like_expr(expr)
    return out


def _tangent(node: Expr, wrt: str, go) -> Expr | None:
    op = node.op
    if op == "input":
        return _ones_like_expr(node) if node.data == wrt else None
    if op == "constant":
        return None
    if op in ("add", "sub"):
        da, db = go(node.args[0]), go(node.args[1])
        if da is None and db is None:
            return None
        if da is None:
            return neg(db) if op == "sub" else db
        if db is None:
            return da
        return Expr(op, (da, db))
    if op in ("mul", "hadamard"):
        a, b = node.args
        da, db = go(a), go(b)
        terms = []
        if da is not None:
            terms.append(mul(da, b))
        if db is not None:
            terms.append(mul(a, db))
        if not terms:
            return None
        return terms[0] if len(terms) == 1 else add(terms[0], terms[1])
    if op == "neg":
        da = go(node.args[0])
        return None if da is None else neg(da)
    if op == "exp":
        da = go(node.args[0])
        return None if da is None else mul(node, da)
    if op == "log":
        da = go(node.args[0])
        return None if da is None else mul(power(node.args[0], -1.0), da)
    if op == "softplus":
        da = go(node.args[0])
        return None if da is None else mul(sigmoid(node.args[0]), da)
    if op == "tanh":
        da = go(node.args[0])
        if da is None:
            return None
        return mul(sub(const(1.0), hadamard(node, node)), da)
    if op == "sigmoid":
        da = go(node.args[0])
        if da is None:
            return None
        return mul(hadamard(node, sub(const(1.0), node)), da)
    if op == "power":
        da = go(node.args[0])
        if da is None:
            return None
        p = node.data
        return mul(mul(const(p), power(node.args[0], p - 1.0)), da)
    if op == "sum":
        da = go(node.args[0])
        return None if da is None else sum_all(da)
    if op == "mean":
        da = go(node.args[0])
        return None if da is None else mean_all(da)
    if op == "affine":
        x = node.args[0]
        for weight_arg in node.args[1:]:
            if go(weight_arg) is not None:
                raise AutodiffError(
                    "time_derivative through affine weights is not supported"
                )
        dx = go(x)
        return None if dx is None else affine(dx, node.args[1])
    if op == "concat":
        parts = [go(arg) for arg in node.args]
        if all(p is None for p in parts):
            return None
        filled = [
            _zeros_like_expr(arg) if p is None else p
            for arg, p in zip(node.args, parts)
        ]
        return concat(*filled)
    if op in ("relu", "abs"):
        if go(node.args[0]) is None:
            return None
        raise AutodiffError(f"time_derivative of {op} on the time path")
    raise AutodiffError(f"unknown op {op!r}")


def finite_diff_check(expr: Expr, bindings: dict, wrt, eps: float = 1e-5) -> float:
    """Worst relative error between gradient() and central differences.

    Relative error per entry is |analytic - fd| / max(1, |analytic|); the
    maximum over every entry of every requested input is returned.
    """
    bound = _prepare_bindings(bindings)
    grads = gradient(expr, bound, wrt)
    worst = 0.0
    for name in wrt:
        base = bound[name]
        for idx in np.ndindex(base.shape):
            shifted = dict(bound)
            plus = base.copy()
            plus[idx] += eps
            shifted[name] = plus
            f_plus = eval_graph(expr, shifted).item()
            minus = base.copy()
            minus[idx] -= eps
            shifted[name] = minus
            f_minus = eval_graph(expr, shifted).item()
            fd = (f_plus - f_minus) / (2.0 * eps)
            analytic = grads[name][idx]
            err = abs(analytic - fd) / max(1.0, abs(analytic))
            worst = max(worst, err)
    return worst
