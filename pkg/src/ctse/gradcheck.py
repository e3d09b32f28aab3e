"""Gradient verification: autograd gradients against central finite differences.

The finite-difference side only re-evaluates the forward pass, so it is an
independent check of the backward path.
"""

from typing import Callable, List, Tuple

import numpy as np
import torch


def relative_gradient_error(
    loss_fn: Callable[[], torch.Tensor],
    params: List[torch.nn.Parameter],
    n_entries: int = 5,
    h: float = 1e-4,
    seed: int = 0,
) -> Tuple[float, List[Tuple[str, float, float, float]]]:
    """Max relative error between autograd and central differences.

    Returns (max_rel_err, details) where each detail row is
    (param_index:flat_index, analytic, finite_difference, rel_err).
    Parameters are expected to be float64 leaves of the loss graph.
    """
    rng = np.random.default_rng(seed)
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=False)
    details = []
    max_err = 0.0
    for p_idx, (param, grad) in enumerate(zip(params, grads)):
        flat = param.detach().reshape(-1)
        n = min(n_entries, flat.numel())
        picks = rng.choice(flat.numel(), size=n, replace=False)
        for j in picks:
            j = int(j)
            orig = float(flat[j])
            with torch.no_grad():
                flat[j] = orig + h
                lp = float(loss_fn())
                flat[j] = orig - h
                lm = float(loss_fn())
                flat[j] = orig
            fd = (lp - lm) / (2.0 * h)
            ana = float(grad.reshape(-1)[j])
            rel = abs(ana - fd) / max(abs(ana), abs(fd), 1e-8)
            details.append((f"{p_idx}:{j}", ana, fd, rel))
            max_err = max(max_err, rel)
    return max_err, details
