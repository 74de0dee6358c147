from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import ContractError, Tape, Tensor, backward, no_tape


@dataclass
class GradCheckResult:
    max_relative_error: float
    worst_index: tuple[int, ...] | None
    excluded: list[tuple[int, ...]] = field(default_factory=list)
    n_checked: int = 0

    def passed(self, tol: float) -> bool:
        return self.max_relative_error < tol


def _scalar_value(f: Callable[[Tensor], Tensor], arr: np.ndarray) -> float:
    with no_tape():
        out = f(Tensor(arr))
    if out.size != 1:
        raise ContractError(f"grad_check: f must return a scalar, got shape {out.shape}")
    return float(out.data.reshape(-1)[0])


def grad_check_report(f: Callable[[Tensor], Tensor], x: Tensor | np.ndarray, eps: float = 1e-5,
                      kink_tol: float = 1e-2, indices=None) -> GradCheckResult:
    """Compare reverse-mode gradients of ``f`` at ``x`` with central differences.

    Coordinates where the one-sided difference quotients disagree by more
    than ``kink_tol`` sit on a kink (e.g. ``|x|`` at 0) and are reported in
    ``excluded`` instead of being scored.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    probe = Tensor(base, requires_grad=True)
    with Tape() as tape:
        out = f(probe)
        if out.size != 1:
            raise ContractError(f"grad_check: f must return a scalar, got shape {out.shape}")
        backward(out)
        tape.reset()
    analytic = probe.grad if probe.grad is not None else np.zeros_like(base)

    f0 = _scalar_value(f, base)
    worst, worst_idx = 0.0, None
    excluded = []
    it = indices if indices is not None else np.ndindex(*base.shape)
    n = 0
    for idx in it:
        idx = tuple(idx)
        xp = base.copy()
        xp[idx] += eps
        xm = base.copy()
        xm[idx] -= eps
        fp, fm = _scalar_value(f, xp), _scalar_value(f, xm)
        fwd, bwd = (fp - f0) / eps, (f0 - fm) / eps
        if abs(fwd - bwd) > kink_tol * max(1.0, abs(fwd), abs(bwd)):
            excluded.append(idx)
            continue
        numeric = (fp - fm) / (2 * eps)
        a = analytic[idx]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        n += 1
        if rel > worst:
            worst, worst_idx = rel, idx
    return GradCheckResult(float(worst), worst_idx, excluded, n)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor | np.ndarray, eps: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients."""
    return grad_check_report(f, x, eps).max_relative_error
