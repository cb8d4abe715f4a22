import contextvars
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from src.core.errors import ContractError

_node_ids = itertools.count()
_active_tape: contextvars.ContextVar = contextvars.ContextVar("active_tape", default=None)


class Tensor:
    """
    A dense float64 array that can take part in reverse-mode differentiation.

    Every Tensor gets a unique ``node_id``. Operations applied while a
    GradTape is active record how to propagate gradients back to their inputs.

    Attributes:
        data (np.ndarray): The values, always float64.
        requires_grad (bool): Whether gradients should flow into this tensor.
        node_id (int): Identifier used by the tape and by backward_gradients.
    """
    __slots__ = ("data", "requires_grad", "node_id")

    def __init__(self, data, requires_grad: bool = False, copy: bool = True):
        array = np.array(data, dtype=np.float64, copy=copy) if copy else np.asarray(data, dtype=np.float64)
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        """Returns the value of a single-element tensor as a Python float."""
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Returns a tensor sharing the values but cut off from the gradient record."""
        return Tensor(self.data, requires_grad=False, copy=False)

    def __add__(self, other):
        from src.core import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from src.core import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from src.core import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.core import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.core import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from src.core import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from src.core import ops
        return ops.div(self, other)

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"


@dataclass
class TapeRecord:
    """One primitive application: its output, its inputs and its local backward rule."""
    output: Tensor
    inputs: tuple
    backward: Callable[[np.ndarray], Sequence]


class GradTape:
    """
    Ordered record of primitive applications for one forward pass.

    Use as a context manager; primitives evaluated inside the ``with`` block
    on tensors that require gradients are appended to the record. A tape is
    meant to be filled by a single thread. Separate threads should each open
    their own tape.
    """
    def __init__(self):
        self.records: list[TapeRecord] = []
        self._token = None

    def __enter__(self) -> "GradTape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def __len__(self) -> int:
        return len(self.records)

    def record(self, output: Tensor, inputs: tuple, backward: Callable) -> None:
        self.records.append(TapeRecord(output, inputs, backward))

    def outputs(self) -> list[np.ndarray]:
        """Returns the forward values of every recorded primitive, in order."""
        return [rec.output.data for rec in self.records]


def current_tape() -> GradTape | None:
    """Returns the tape active in this thread's context, if any."""
    return _active_tape.get()


def make_result(data: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
    """
    Wraps a primitive's forward value and records it on the active tape.

    Args:
        data: Forward value of the primitive.
        inputs: The Tensor arguments, in the order ``backward`` returns gradients.
        backward: Maps the output gradient to one gradient (or None) per input.
    """
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires_grad, copy=False)
    tape = current_tape()
    if requires_grad and tape is not None:
        tape.record(out, inputs, backward)
    return out


def backward_gradients(loss: Tensor, tape: GradTape, wrt: Sequence[Tensor] = ()) -> dict[int, Tensor]:
    """
    Runs reverse-mode differentiation over a tape.

    Args:
        loss (Tensor): A single-element tensor produced under ``tape``.
        tape (GradTape): The record of the forward pass.
        wrt (Sequence[Tensor]): Extra tensors that must appear in the result even
            when the loss does not depend on them.

    Returns:
        A map from node_id to the gradient of ``loss`` with respect to that
        tensor, for every requires_grad tensor on the tape and every tensor in
        ``wrt``. Tensors the loss does not reach get zero gradients.

    Raises:
        ContractError: If the loss is not a scalar.
    """
    if loss.size != 1:
        raise ContractError(f"loss must be a scalar, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    seen: dict[int, Tensor] = {loss.node_id: loss} if loss.requires_grad else {}

    for rec in reversed(tape.records):
        for t in rec.inputs:
            if t.requires_grad:
                seen.setdefault(t.node_id, t)
        grad_out = grads.get(rec.output.node_id)
        if grad_out is None:
            continue
        seen.setdefault(rec.output.node_id, rec.output)
        for t, g in zip(rec.inputs, rec.backward(grad_out)):
            if g is None or not t.requires_grad:
                continue
            prev = grads.get(t.node_id)
            grads[t.node_id] = g if prev is None else prev + g

    for t in wrt:
        seen.setdefault(t.node_id, t)

    return {
        node_id: Tensor(grads[node_id], copy=False) if node_id in grads else Tensor(np.zeros_like(t.data), copy=False)
        for node_id, t in seen.items()
    }
