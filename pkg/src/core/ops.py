"""
Differentiable primitives.

The set is closed: every network operation is composed from the functions in
this module. Each primitive computes its forward value with numpy and hands
a local backward rule to ``make_result``.
"""
from typing import Sequence

import numpy as np
from scipy.special import expit

from src.core.errors import ContractError, DegenerateVectorError, DimensionError
from src.core.tensor import Tensor, make_result

EPS_NORM = 1e-12

# sigmoid outputs are kept strictly inside (0, 1) even where float64 saturates
_SIGMOID_LOW = np.nextafter(0.0, 1.0)
_SIGMOID_HIGH = np.nextafter(1.0, 0.0)


def as_tensor(value) -> Tensor:
    """Wraps plain numbers and arrays as constant tensors."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sums a broadcast gradient back down to the shape of the original operand."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, name: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return make_result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return make_result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return make_result(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    if np.any(b.data == 0.0):
        raise ContractError("div: division by zero")
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)
    return make_result(out, (a, b), backward)


def absolute(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (g * np.sign(x.data),)
    return make_result(np.abs(x.data), (x,), backward)


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0.0):
        raise ContractError("log: input must be strictly positive")

    def backward(g):
        return (g / x.data,)
    return make_result(np.log(x.data), (x,), backward)


def sigmoid(x) -> Tensor:
    """Elementwise logistic function, 1 / (1 + exp(-x))."""
    x = as_tensor(x)
    out = np.clip(expit(x.data), _SIGMOID_LOW, _SIGMOID_HIGH)

    def backward(g):
        return (g * out * (1.0 - out),)
    return make_result(out, (x,), backward)


def linear_project(x, weight, bias) -> Tensor:
    """
    Applies ``weight @ x + bias`` column by column.

    Args:
        x (Tensor): Input of shape (d_in, n).
        weight (Tensor): Weight of shape (d_out, d_in).
        bias (Tensor): Bias of shape (d_out,).

    Returns:
        A tensor of shape (d_out, n).

    Raises:
        DimensionError: If the shapes do not conform.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1:
        raise DimensionError(
            f"linear_project expects x (d_in, n), weight (d_out, d_in), bias (d_out,); "
            f"got {x.shape}, {weight.shape}, {bias.shape}")
    if weight.shape[1] != x.shape[0] or bias.shape[0] != weight.shape[0]:
        raise DimensionError(
            f"linear_project: weight {weight.shape} and bias {bias.shape} do not fit input {x.shape}")

    def backward(g):
        return weight.data.T @ g, g @ x.data.T, g.sum(axis=1)
    return make_result(weight.data @ x.data + bias.data[:, None], (x, weight, bias), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    """Concatenates tensors along ``axis`` (axis 0 is the channel axis)."""
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))
    return make_result(out, tensors, backward)


def split(x, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    """Splits a tensor into consecutive slices of the given sizes along ``axis``."""
    x = as_tensor(x)
    if sum(sizes) != x.shape[axis]:
        raise DimensionError(f"split: sizes {list(sizes)} do not add up to extent {x.shape[axis]}")
    pieces = []
    start = 0
    for size in sizes:
        index = [slice(None)] * x.ndim
        index[axis] = slice(start, start + size)
        index = tuple(index)

        def backward(g, index=index):
            full = np.zeros_like(x.data)
            full[index] = g
            return (full,)
        pieces.append(make_result(x.data[index], (x,), backward))
        start += size
    return pieces


def gather(x, index: np.ndarray, axis: int = -1) -> Tensor:
    """
    Selects entries of ``x`` along ``axis`` by an index list (repeats allowed).

    The gradient is scattered back with accumulation over repeated indices.
    """
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    out = np.take(x.data, index, axis=axis)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(np.moveaxis(full, axis, 0), index, np.moveaxis(g, axis, 0))
        return (full,)
    return make_result(out, (x,), backward)


def scatter_add(x, index: np.ndarray, size: int) -> Tensor:
    """
    Sums the entries of ``x`` along its last axis into ``size`` bins.

    Entry m of the last axis lands in bin ``index[m]``; bins no entry maps to
    stay zero. Summation runs in ascending m for every bin.
    """
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    if index.shape != (x.shape[-1],):
        raise DimensionError(f"scatter_add: index of shape {index.shape} does not match last axis of {x.shape}")
    if index.size and (index.min() < 0 or index.max() >= size):
        raise ContractError(f"scatter_add: index out of range for {size} bins")
    out = np.zeros(x.shape[:-1] + (size,), dtype=np.float64)
    np.add.at(np.moveaxis(out, -1, 0), index, np.moveaxis(x.data, -1, 0))

    def backward(g):
        return (np.take(g, index, axis=-1),)
    return make_result(out, (x,), backward)


def pick(x, rows: np.ndarray) -> Tensor:
    """For a (c, n) tensor returns the length-n vector with entry m = x[rows[m], m]."""
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.intp)
    if x.ndim != 2 or rows.shape != (x.shape[1],):
        raise DimensionError(f"pick: rows of shape {rows.shape} do not fit tensor {x.shape}")
    cols = np.arange(x.shape[1])

    def backward(g):
        full = np.zeros_like(x.data)
        full[rows, cols] = g
        return (full,)
    return make_result(x.data[rows, cols], (x,), backward)


def sum_(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)
    return make_result(out, (x,), backward)


def mean(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)
    return make_result(out, (x,), backward)


def cosine_sim_matrix(points, centers) -> Tensor:
    """
    Pairwise cosine similarity between the columns of two matrices.

    Args:
        points (Tensor): Shape (d, n).
        centers (Tensor): Shape (d, c).

    Returns:
        A (c, n) tensor with entry (j, m) = cos(center_j, point_m).

    Raises:
        DegenerateVectorError: If any column has norm below EPS_NORM.
    """
    points, centers = as_tensor(points), as_tensor(centers)
    if points.ndim != 2 or centers.ndim != 2 or points.shape[0] != centers.shape[0]:
        raise DimensionError(f"cosine_sim_matrix: shapes {points.shape} and {centers.shape} do not conform")
    p_norm = np.sqrt(np.sum(points.data * points.data, axis=0))
    c_norm = np.sqrt(np.sum(centers.data * centers.data, axis=0))
    if np.any(p_norm < EPS_NORM) or np.any(c_norm < EPS_NORM):
        raise DegenerateVectorError("cosine similarity of a near-zero feature vector")
    p_unit = points.data / p_norm
    c_unit = centers.data / c_norm
    out = c_unit.T @ p_unit

    def backward(g):
        d_p_unit = c_unit @ g
        d_c_unit = p_unit @ g.T
        d_points = (d_p_unit - p_unit * np.sum(p_unit * d_p_unit, axis=0)) / p_norm
        d_centers = (d_c_unit - c_unit * np.sum(c_unit * d_c_unit, axis=0)) / c_norm
        return d_points, d_centers
    return make_result(out, (points, centers), backward)


def reshape(x, shape: tuple) -> Tensor:
    """Layout-only change of shape; values and their order are untouched."""
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}") from None

    def backward(g):
        return (g.reshape(x.shape),)
    return make_result(out, (x,), backward)
