import logging
from typing import Callable, Iterable

import numpy as np

from src.core.errors import ContractError
from src.core.tensor import GradTape, Tensor, backward_gradients

logger = logging.getLogger(__name__)


def _relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(numeric))


def finite_diff_check(f: Callable[[Tensor], Tensor], point: Tensor, step: float = 1e-5,
                      indices: Iterable[int] | None = None) -> float:
    """
    Compares the tape gradient of a scalar function with central differences.

    Args:
        f: Scalar-valued function of one tensor.
        point: Where to evaluate the gradient.
        step: Central-difference half width.
        indices: Flat coordinates to check; all coordinates when omitted.

    Returns:
        The largest |analytic - numeric| / max(1, |numeric|) over the checked coordinates.
    """
    if step <= 0:
        raise ContractError("finite_diff_check: step must be positive")
    variable = Tensor(point.data, requires_grad=True)
    with GradTape() as tape:
        value = f(variable)
    analytic = backward_gradients(value, tape, wrt=[variable])[variable.node_id].data.reshape(-1)

    base = point.data.reshape(-1)
    coords = range(base.size) if indices is None else indices
    worst = 0.0
    for i in coords:
        shifted = base.copy()
        shifted[i] = base[i] + step
        upper = f(Tensor(shifted.reshape(point.shape))).item()
        shifted[i] = base[i] - step
        lower = f(Tensor(shifted.reshape(point.shape))).item()
        worst = max(worst, _relative_error(analytic[i], (upper - lower) / (2.0 * step)))
    return worst


def check_model_gradients(loss_fn: Callable[[], Tensor], tensors: dict[str, Tensor], n_coords: int,
                          rng: np.random.Generator, step: float = 1e-5) -> tuple[float, str]:
    """
    Finite-difference check of a loss over a random subset of named parameters.

    The parameter values are perturbed in place and restored afterwards.

    Args:
        loss_fn: Rebuilds the scalar loss from the current parameter values.
        tensors: Named parameters the loss depends on.
        n_coords: How many scalar coordinates to check.
        rng: Source of the coordinate sample.
        step: Central-difference half width.

    Returns:
        The worst relative error and the name of the parameter where it occurred.
    """
    names = list(tensors)
    with GradTape() as tape:
        loss = loss_fn()
    grads = backward_gradients(loss, tape, wrt=[tensors[name] for name in names])

    sizes = np.array([tensors[name].size for name in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    picks = rng.choice(offsets[-1], size=min(n_coords, int(offsets[-1])), replace=False)

    worst, worst_name = 0.0, ""
    for flat in np.sort(picks):
        slot = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[slot]
        param = tensors[name]
        local = int(flat - offsets[slot])
        view = param.data.reshape(-1)
        original = view[local]
        view[local] = original + step
        upper = loss_fn().item()
        view[local] = original - step
        lower = loss_fn().item()
        view[local] = original
        analytic = grads[param.node_id].data.reshape(-1)[local]
        err = _relative_error(analytic, (upper - lower) / (2.0 * step))
        logger.debug("gradcheck %s[%d]: analytic=%.6e error=%.3e", name, local, analytic, err)
        if err > worst:
            worst, worst_name = err, name
    return worst, worst_name
