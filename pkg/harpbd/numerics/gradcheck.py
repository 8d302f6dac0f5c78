from collections.abc import Callable

import numpy as np
import structlog

from harpbd.errors import ContractViolation
from harpbd.numerics.tensor import ComputationRecord, Tensor, backward

logger = structlog.get_logger()


def finite_difference_check(
    forward: Callable[[], Tensor], parameter: Tensor, h: float = 1e-5, floor: float = 1e-3
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``forward`` rebuilds the scalar computation from scratch; it is replayed
    once under a record for the analytic gradient and twice per entry of
    ``parameter`` for the central difference. Entries whose gradients are
    both smaller than ``floor`` are compared on the ``floor`` scale.
    """
    if h <= 0:
        raise ContractViolation(f"finite-difference step must be positive, got {h}")
    if not parameter.is_parameter:
        raise ContractViolation("finite_difference_check needs a parameter tensor")

    with ComputationRecord() as record:
        output = forward()
    analytic = backward(record, output).get(parameter.name)
    if analytic is None:
        analytic = np.zeros_like(parameter.value)

    original = parameter.value.copy()
    numeric = np.zeros_like(original)
    try:
        for idx in np.ndindex(original.shape):
            shifted = original.copy()
            shifted[idx] += h
            parameter.value = shifted
            f_plus = forward().item()

            shifted = original.copy()
            shifted[idx] -= h
            parameter.value = shifted
            f_minus = forward().item()

            numeric[idx] = (f_plus - f_minus) / (2.0 * h)
    finally:
        parameter.value = original

    error = np.abs(analytic - numeric) / np.maximum(floor, np.maximum(np.abs(analytic), np.abs(numeric)))
    worst = float(np.max(error)) if error.size else 0.0
    logger.debug("Finite-difference check", parameter=parameter.name, max_relative_error=worst)
    return worst
