from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    err = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(err.max())


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between backward() and central differences of f at x."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    point = Tensor(x.data.copy(), requires_grad=True)
    (analytic,) = backward(f(point), [point])
    base = x.data.copy()
    flat = base.reshape(-1)
    numeric = np.zeros(flat.size)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = f(Tensor(base.copy())).item()
            flat[i] = original - eps
            minus = f(Tensor(base.copy())).item()
            flat[i] = original
            numeric[i] = (plus - minus) / (2.0 * eps)
    error = _relative_error(analytic.reshape(-1), numeric)
    logger.debug(
        "finite difference check over %s coordinates: max relative error %.3e", flat.size, error
    )
    return error


def parameter_check(
    loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5
) -> float:
    """Same oracle as finite_difference_check, perturbing parameters in place."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    analytic = [grad.copy() for grad in backward(loss_fn(), params)]
    worst = 0.0
    with no_grad():
        for param, grad in zip(params, analytic):
            param.data = param.data.copy()
            flat = param.data.reshape(-1)
            numeric = np.zeros(flat.size)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                plus = loss_fn().item()
                flat[i] = original - eps
                minus = loss_fn().item()
                flat[i] = original
                numeric[i] = (plus - minus) / (2.0 * eps)
            worst = max(worst, _relative_error(grad.reshape(-1), numeric))
    return worst
