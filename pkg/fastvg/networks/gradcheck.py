"""
Finite-difference validation of analytic gradients
"""
import logging
from dataclasses import dataclass

import numpy as np
import torch

from fastvg.common import NumericError, ParameterError

logger = logging.getLogger(__name__)

# Denominator floor of the relative error: gradients below it are compared on absolute error
FLOOR = 1e-4


@dataclass
class GradErrors:
    max_rel_error: float
    max_abs_error: float


def _evaluate(loss_fn):
    loss = loss_fn()
    if not torch.isfinite(loss).all():
        raise NumericError(f"Non-finite loss during gradient check: {loss}")
    return loss


def grad_errors(loss_fn, params, epsilon=1e-5, max_entries=None, seed=0, floor=FLOOR):
    """
    Compare autograd gradients of ``loss_fn()`` against central differences.

    Args:
        loss_fn: callable returning a scalar float64 tensor
        params: tensors requiring grad; perturbed in place and restored
        epsilon: finite-difference step
        max_entries: check at most this many randomly chosen entries per tensor
        seed: seed of the entry selection
        floor: lower bound of the denominator of the relative error

    Returns:
        The maximum relative error |a - n| / max(|a|, |n|, floor) and the
        maximum absolute error |a - n| over the checked entries.
    """
    params = list(params)
    if not params:
        raise ParameterError("No parameters to check")
    if floor <= 0:
        raise ParameterError(f"The relative error floor must be positive, got {floor}")
    for param in params:
        if param.dtype != torch.float64:
            raise ParameterError("Gradient checks must run in float64")

    loss = _evaluate(loss_fn)
    if loss.dtype != torch.float64:
        raise ParameterError("Gradient checks must run in float64")
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    rng = np.random.default_rng(seed)

    worst = GradErrors(0.0, 0.0)
    for index, (param, grad) in enumerate(zip(params, grads)):
        analytic = torch.zeros_like(param) if grad is None else grad.detach()
        flat = param.data.view(-1)
        entries = np.arange(flat.numel())
        if max_entries is not None and entries.size > max_entries:
            entries = rng.choice(entries, size=max_entries, replace=False)
        param_rel, param_abs = 0.0, 0.0
        for i in entries:
            original = flat[i].item()
            with torch.no_grad():
                flat[i] = original + epsilon
                plus = _evaluate(loss_fn).item()
                flat[i] = original - epsilon
                minus = _evaluate(loss_fn).item()
                flat[i] = original
            numeric = (plus - minus) / (2 * epsilon)
            a = analytic.view(-1)[i].item()
            diff = abs(a - numeric)
            param_abs = max(param_abs, diff)
            param_rel = max(param_rel, diff / max(abs(a), abs(numeric), floor))
        logger.debug(
            f"Parameter {index} {tuple(param.shape)}: {len(entries)} entries, "
            f"max rel. error {param_rel:.3e}, max abs. error {param_abs:.3e}"
        )
        worst = GradErrors(max(worst.max_rel_error, param_rel), max(worst.max_abs_error, param_abs))
    return worst


def grad_check(loss_fn, params, epsilon=1e-5, max_entries=None, seed=0, floor=FLOOR):
    """Maximum relative error of the analytic gradients, see `grad_errors`"""
    return grad_errors(loss_fn, params, epsilon=epsilon, max_entries=max_entries, seed=seed, floor=floor).max_rel_error
