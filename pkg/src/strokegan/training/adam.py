"""Adam with bias correction, operating on named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..autodiff import Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, step: int, name: str):
        self.step = step
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r} at Adam step {step}")


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("Adam lr and eps must be positive")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def state(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/t": np.array(self.t, dtype=np.int64)}
        out.update({f"{prefix}/m/{k}": a for k, a in self.m.items()})
        out.update({f"{prefix}/v/{k}": a for k, a in self.v.items()})
        return out

    @classmethod
    def from_state(cls, state: Mapping[str, np.ndarray], prefix: str) -> "AdamState":
        m, v = {}, {}
        for key, arr in state.items():
            if key.startswith(f"{prefix}/m/"):
                m[key[len(prefix) + 3:]] = np.array(arr, dtype=np.float64)
            elif key.startswith(f"{prefix}/v/"):
                v[key[len(prefix) + 3:]] = np.array(arr, dtype=np.float64)
        return cls(m, v, int(state[f"{prefix}/t"]))


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState,
              hyper: AdamHyper) -> tuple[Mapping[str, Tensor], AdamState]:
    """One bias-corrected Adam update of every parameter that has a gradient.

    Parameters without an entry in ``grads`` are left untouched. Updates are
    applied in place to ``params`` and ``state``, which are also returned.
    """
    t = state.t + 1
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(t, name)
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
    b1, b2 = hyper.beta1, hyper.beta2
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.data = p.data - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
    state.t = t
    return params, state


def collect_grads(params) -> dict[str, np.ndarray]:
    """Gradients of every tensor in ``params`` (zeros where none accumulated)."""
    items = params.tensors.items() if hasattr(params, "tensors") else params.items()
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in items}
