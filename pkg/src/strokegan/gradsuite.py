"""Finite-difference checks over every differentiable op and a tiny end-to-end model."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, conv2d, conv_transpose2d, grad_check_report, ops
from .networks import (
    Parameters,
    batch_norm,
    build_discriminator,
    build_generator,
    discriminator_spec,
    generator_spec,
    src_probability,
)
from .networks.layers import LayerSpec, Network, NetworkSpec, init_parameters

TOLERANCE = 1e-4
# coordinates sampled per tensor for the end-to-end checks
E2E_COORDS = 6


@dataclass
class Check:
    name: str
    f: Callable[[Tensor], Tensor]
    x: np.ndarray
    indices: list[tuple[int, ...]] | None = None


@dataclass
class CheckOutcome:
    name: str
    max_relative_error: float
    n_checked: int
    n_excluded: int
    passed: bool


@dataclass
class SuiteResult:
    outcomes: list[CheckOutcome]
    seconds: float

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    @property
    def max_relative_error(self) -> float:
        return max(o.max_relative_error for o in self.outcomes)

    def summary(self) -> str:
        lines = [f"{'PASS' if o.passed else 'FAIL'}  {o.name:<38} max_rel_err={o.max_relative_error:.3e}"
                 f"  checked={o.n_checked} kinks={o.n_excluded}" for o in self.outcomes]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{verdict}: {sum(o.passed for o in self.outcomes)}/{len(self.outcomes)} checks, "
                     f"max rel. err {self.max_relative_error:.3e}, {self.seconds:.1f} s")
        return "\n".join(lines)


def _t(a) -> Tensor:
    return Tensor(np.asarray(a, dtype=np.float64))


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    # a random projection makes every output coordinate matter to the scalar
    return ops.sum(ops.mul(out, Tensor(w)))


def _sample(shape: tuple[int, ...], k: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    total = int(np.prod(shape))
    flat = rng.choice(total, size=min(k, total), replace=False)
    return [tuple(int(i) for i in np.unravel_index(j, shape)) for j in flat]


def _param_check(name: str, params: Parameters, key: str, loss: Callable[[], Tensor],
                 rng: np.random.Generator, k: int = E2E_COORDS) -> Check:
    original = params.tensors[key]

    def f(w: Tensor) -> Tensor:
        params.tensors[key] = w
        try:
            return loss()
        finally:
            params.tensors[key] = original

    return Check(f"{name}[{key}]", f, original.data.copy(), _sample(original.shape, k, rng))


def op_checks(rng: np.random.Generator) -> list[Check]:
    """One check per differentiable op, each at a smooth random point."""
    n = rng.standard_normal
    b, w3 = n((3, 4)), n((3, 4))
    pos = rng.uniform(0.5, 2.0, (3, 4))
    away = np.sign(n((3, 4))) * rng.uniform(0.2, 1.5, (3, 4))
    m = n((4, 5))
    x4 = n((2, 5, 5, 3))
    k = n((3, 3, 3, 4))
    kt = n((3, 3, 2, 4))
    xt = n((2, 3, 3, 4))
    bias4, bias2 = n(4), n(2)
    gamma, beta = rng.uniform(0.5, 1.5, 3), n(3)
    labels = rng.integers(0, 5, size=3)
    wout = {s: n(s) for s in [(2, 3, 3, 4), (2, 6, 6, 2), (2, 5, 5, 3), (2, 9, 9, 3), (3, 5), (2, 4, 3), (4, 3)]}
    return [
        Check("add", lambda x: _weighted(ops.add(x, _t(b)), w3), n((3, 4))),
        Check("sub", lambda x: _weighted(ops.sub(_t(b), x), w3), n((3, 4))),
        Check("mul", lambda x: _weighted(ops.mul(x, _t(b)), w3), n((3, 4))),
        Check("mul_self", lambda x: _weighted(ops.mul(x, x), w3), n((3, 4))),
        Check("neg", lambda x: _weighted(ops.neg(x), w3), n((3, 4))),
        Check("scale", lambda x: _weighted(ops.scale(x, -2.5), w3), n((3, 4))),
        Check("abs", lambda x: _weighted(ops.abs(x), w3), away),
        Check("log", lambda x: _weighted(ops.log(x), w3), pos),
        Check("square", lambda x: _weighted(ops.square(x), w3), n((3, 4))),
        Check("sqrt", lambda x: _weighted(ops.sqrt(x), w3), pos),
        Check("sum_axis", lambda x: _weighted(ops.sum(x, axes=1), np.arange(1.0, 4.0)), n((3, 4))),
        Check("mean_axis", lambda x: _weighted(ops.mean(x, axes=0), np.arange(1.0, 5.0)), n((3, 4))),
        Check("l1_norm", lambda x: ops.l1_norm(x), away),
        Check("l2_norm", lambda x: _weighted(ops.l2_norm(x, axes=1), np.arange(1.0, 4.0)), n((3, 4))),
        Check("matmul_left", lambda x: _weighted(ops.matmul(x, _t(m)), wout[(3, 5)]), n((3, 4))),
        Check("matmul_right", lambda x: _weighted(ops.matmul(_t(b), x), wout[(3, 5)]), m.copy()),
        Check("reshape", lambda x: _weighted(ops.reshape(x, (4, 3)), wout[(4, 3)]), n((3, 4))),
        Check("relu", lambda x: _weighted(ops.relu(x), w3), away),
        Check("leaky_relu", lambda x: _weighted(ops.leaky_relu(x, 0.2), w3), away),
        Check("tanh", lambda x: _weighted(ops.tanh(x), w3), n((3, 4))),
        Check("sigmoid", lambda x: _weighted(ops.sigmoid(x), w3), n((3, 4))),
        Check("clamp", lambda x: _weighted(ops.clamp(x, -0.7, 0.7), w3), away),
        Check("reflect_pad", lambda x: _weighted(ops.reflect_pad(x, 2), wout[(2, 9, 9, 3)]), x4.copy()),
        Check("softmax_cross_entropy", lambda x: ops.softmax_cross_entropy(x, labels), n((3, 5))),
        Check("conv2d_input", lambda x: _weighted(conv2d(x, _t(k), 2, 1, _t(bias4)), wout[(2, 3, 3, 4)]), x4.copy()),
        Check("conv2d_weight", lambda w: _weighted(conv2d(_t(x4), w, 2, 1, _t(bias4)), wout[(2, 3, 3, 4)]), k.copy()),
        Check("conv2d_bias", lambda c: _weighted(conv2d(_t(x4), _t(k), 2, 1, c), wout[(2, 3, 3, 4)]), bias4.copy()),
        Check("conv_transpose2d_input",
              lambda x: _weighted(conv_transpose2d(x, _t(kt), 2, 1, 1, _t(bias2)), wout[(2, 6, 6, 2)]), xt.copy()),
        Check("conv_transpose2d_weight",
              lambda w: _weighted(conv_transpose2d(_t(xt), w, 2, 1, 1, _t(bias2)), wout[(2, 6, 6, 2)]), kt.copy()),
        Check("conv_transpose2d_bias",
              lambda c: _weighted(conv_transpose2d(_t(xt), _t(kt), 2, 1, 1, c), wout[(2, 6, 6, 2)]), bias2.copy()),
        Check("batch_norm_input",
              lambda x: _weighted(batch_norm(x, _t(gamma), _t(beta), update_stats=False), wout[(2, 5, 5, 3)]), x4.copy()),
        Check("batch_norm_gamma",
              lambda g: _weighted(batch_norm(_t(x4), g, _t(beta), update_stats=False), wout[(2, 5, 5, 3)]),
              gamma.copy()),
        Check("batch_norm_beta",
              lambda be: _weighted(batch_norm(_t(x4), _t(gamma), be, update_stats=False), wout[(2, 5, 5, 3)]),
              beta.copy()),
    ]


def tiny_specs() -> tuple[NetworkSpec, NetworkSpec]:
    """The smallest instances of both templates: 8x8 inputs, scale_factor 32."""
    return generator_spec(8, 32, 1), discriminator_spec(8, 32, 2)


def model_checks(rng: np.random.Generator) -> list[Check]:
    """End-to-end checks: residual block, tiny generator, tiny discriminator, full generator objective."""
    from .training.losses import cycle_loss, generator_adversarial_loss, stroke_loss

    checks: list[Check] = []
    res_spec = NetworkSpec((LayerSpec("residual_block", 4, (3, 3), 1, 1),), (4, 4, 4), 1)
    res = Network(res_spec, init_parameters(res_spec, 3))
    xr = rng.standard_normal((2, 4, 4, 4))
    wr = rng.standard_normal((2, 4, 4, 4))
    checks.append(Check("residual_block_input", lambda x: _weighted(res(x, update_stats=False), wr), xr))

    gspec, dspec = tiny_specs()
    G = build_generator(gspec, 11)
    D = build_discriminator(dspec, 12)
    x = rng.uniform(-1, 1, (2, 8, 8, 3))
    codes = (rng.random((2, 32)) < 0.2).astype(np.float64)

    checks.append(Check("generator_mean_square", lambda z: ops.mean(ops.square(G(z, update_stats=False))), x,
                        _sample(x.shape, 3 * E2E_COORDS, rng)))

    def d_loss() -> Tensor:
        src, st = D(_t(x), update_stats=False)
        return ops.add(ops.mean(src_probability(src)), stroke_loss(st, codes))

    checks.append(_param_check("discriminator", D.params, "0.weight", d_loss, rng))
    checks.append(_param_check("discriminator", D.params, "st.0.weight", d_loss, rng))

    def g_objective() -> Tensor:
        # adversarial + 10 * cycle + 0.18 * stroke, the generator side of a training step
        xa = _t(x)
        fake = G(xa, update_stats=False)
        src, st = D(fake, update_stats=False)
        rec = G(fake, update_stats=False)
        loss = ops.add(generator_adversarial_loss(src_probability(src)), ops.scale(cycle_loss(xa, rec), 10.0))
        return ops.add(loss, ops.scale(stroke_loss(st, codes), 0.18))

    for key in ("0.weight", "3.weight", "9.block.0.weight", "9.block.1.gamma", "10.weight", "16.weight", "16.bias"):
        checks.append(_param_check("generator_objective", G.params, key, g_objective, rng))
    return checks


def default_checks(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    return op_checks(rng) + model_checks(rng)


def run_suite(checks: list[Check] | None = None, tol: float = TOLERANCE, eps: float = 1e-6) -> SuiteResult:
    start = time.perf_counter()
    outcomes = []
    for c in checks if checks is not None else default_checks():
        r = grad_check_report(c.f, c.x, eps=eps, indices=c.indices)
        ok = r.n_checked > 0 and r.max_relative_error < tol
        outcomes.append(CheckOutcome(c.name, r.max_relative_error, r.n_checked, len(r.excluded), ok))
    return SuiteResult(outcomes, time.perf_counter() - start)
