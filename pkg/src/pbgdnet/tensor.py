"""N-dimensional float64 tensors with reverse-mode automatic differentiation.

The engine is define-by-run: a Tape is opened around a forward pass, every
differentiable operation executed while it is active appends one node, and
``backward`` replays the nodes in reverse to fill in gradients.  Tapes are
cheap and rebuilt per forward pass, which is what makes variable input
shapes trivial.  Gradients accumulate additively into ``Tensor.grad`` until
explicitly cleared, so several backward passes can feed one parameter
update.

A tape and the tensors recorded on it belong to a single thread; running
independent tapes on independent data in separate workers is fine.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

Scalar = Union[int, float]


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes."""


class Tensor:
    """A float64 value array plus optional gradient storage.

    ``data`` is always a C-contiguous float64 ndarray.  ``grad`` stays None
    until a backward pass deposits something.  ``param_id`` marks trainable
    parameters with a stable name; ``frozen`` excludes a parameter from
    optimizer updates without touching its gradient bookkeeping.
    """

    __slots__ = ("data", "grad", "requires_grad", "param_id", "frozen")

    def __init__(self, data, requires_grad: bool = False,
                 param_id: Optional[str] = None):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.param_id = param_id
        self.frozen = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self) -> str:
        tag = f", param_id={self.param_id!r}" if self.param_id else ""
        return f"Tensor(shape={list(self.shape)}, requires_grad={self.requires_grad}{tag})"

    # Operator sugar; the named functions below do the work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of executed differentiable operations.

    Each node is ``(out, inputs, backward_fn)`` where ``backward_fn`` maps
    the gradient at ``out`` to one gradient per input (None for inputs that
    need none).  Execution order is topological by construction, and
    ``backward`` visits every node exactly once.
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def record(self, out: Tensor, inputs: tuple[Tensor, ...],
               backward_fn: Callable) -> None:
        self.nodes.append((out, inputs, backward_fn))

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _push_tape(self)
        return self

    def __exit__(self, *exc) -> None:
        _pop_tape(self)


_TAPE_STACK: list[Tape] = []


def _push_tape(tape: Tape) -> None:
    _TAPE_STACK.append(tape)


def _pop_tape(tape: Tape) -> None:
    if not _TAPE_STACK or _TAPE_STACK[-1] is not tape:
        raise RuntimeError("tape stack corrupted: exiting a tape that is not active")
    _TAPE_STACK.pop()


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def record_op(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Attach an op to the active tape when gradients are wanted.

    With no active tape the op runs as plain inference: the output does not
    require grad and nothing is recorded.
    """
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, tuple(inputs), backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate gradients of every leaf reachable from a scalar loss.

    Gradients of tensors produced on the tape live in buffers private to
    this call; leaves (parameters, inputs) accumulate into their ``grad``
    attribute, so running backward twice on the same graph doubles leaf
    gradients exactly.  Clear with ``zero_grads`` between updates.
    """
    if loss.data.size != 1:
        raise ShapeMismatchError(
            f"backward needs a scalar loss, got shape {list(loss.shape)}")
    produced = {id(out) for out, _, _ in tape.nodes}
    interior: dict[int, np.ndarray] = {}

    def deposit(t: Tensor, g: np.ndarray) -> None:
        if id(t) in produced:
            buf = interior.get(id(t))
            if buf is None:
                # own the buffer: backward rules may hand out shared arrays
                interior[id(t)] = np.array(g, dtype=np.float64)
            else:
                buf += g
        elif t.requires_grad:
            t.accumulate_grad(g)

    deposit(loss, np.ones_like(loss.data))
    for out, inputs, backward_fn in reversed(tape.nodes):
        g = interior.pop(id(out), None)
        if g is None:
            continue
        grads = backward_fn(g)
        for inp, gi in zip(inputs, grads):
            if gi is None or not (inp.requires_grad or id(inp) in produced):
                continue
            deposit(inp, gi)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# primitive ops


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"{op}: shape mismatch {list(a.shape)} vs {list(b.shape)}")


def add(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if isinstance(b, (int, float)):
        out = Tensor(a.data + float(b))
        return record_op(out, (a,), lambda g: (g,))
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    return record_op(out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if isinstance(b, (int, float)):
        out = Tensor(a.data - float(b))
        return record_op(out, (a,), lambda g: (g,))
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    return record_op(out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data
    return record_op(out, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, k: Scalar) -> Tensor:
    k = float(k)
    out = Tensor(a.data * k)
    return record_op(out, (a,), lambda g: (g * k,))


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "scale": scale}


def elementwise(op_kind: str, a: Tensor, b) -> Tensor:
    """Dispatch pointwise arithmetic by name: add, sub, mul, scale."""
    try:
        fn = _ELEMENTWISE[op_kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op_kind!r}") from None
    return fn(a, b)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatchError(
            f"matmul needs 2-d operands, got {list(a.shape)} and {list(b.shape)}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul: inner dimensions disagree, {list(a.shape)} x {list(b.shape)}")
    out = Tensor(a.data @ b.data)
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return record_op(out, (a, b), bwd)


def sum_all(a: Tensor) -> Tensor:
    """Reduce to a scalar; the usual bridge from per-element values to a loss."""
    out = Tensor(a.data.sum())
    shape = a.data.shape
    return record_op(out, (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum a nonempty list of same-shape tensors (left fold of add)."""
    if not tensors:
        raise ValueError("add_n needs at least one tensor")
    acc = tensors[0]
    for t in tensors[1:]:
        acc = add(acc, t)
    return acc
