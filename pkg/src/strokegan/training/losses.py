"""Adversarial, cycle-consistency and stroke-code reconstruction losses."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from ..autodiff.tensor import ShapeError
from ..strokes import N_KINDS

PROB_CLAMP = 1e-7


def _clamped(p: Tensor) -> Tensor:
    return ops.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def _batch_mean(values: Tensor) -> Tensor:
    return ops.mean(values)


def real_term(d_real: Tensor) -> Tensor:
    """E[log D(x)] over the batch."""
    return _batch_mean(ops.log(_clamped(d_real)))


def fake_term(d_fake: Tensor) -> Tensor:
    """E[log(1 - D(G(x)))] over the batch."""
    return _batch_mean(ops.log(ops.sub(Tensor(1.0), _clamped(d_fake))))


def adversarial_loss(d_src_real: Tensor, d_src_fake: Tensor) -> Tensor:
    """E[log D(x)] + E[log(1 - D(G(x)))]; D ascends it."""
    return ops.add(real_term(d_src_real), fake_term(d_src_fake))


def generator_adversarial_loss(d_src_fake: Tensor, form: str = "nonsaturating") -> Tensor:
    """The generator's adversarial term, to be minimized."""
    if form == "literal":
        return fake_term(d_src_fake)
    if form == "nonsaturating":
        return ops.neg(_batch_mean(ops.log(_clamped(d_src_fake))))
    raise ValueError(f"unknown adversarial form {form!r}")


def cycle_loss(x: Tensor, x_reconstructed: Tensor, reduction: str = "sum") -> Tensor:
    """Batch mean of the per-sample L1 distance between x and its reconstruction.

    ``reduction="mean"`` divides each sample's L1 norm by its element count
    (mean absolute error), which keeps the term on the adversarial loss's scale.
    """
    if x.shape != x_reconstructed.shape:
        raise ShapeError("cycle_loss", x.shape, x_reconstructed.shape)
    per_sample = ops.l1_norm(ops.sub(x, x_reconstructed), axes=tuple(range(1, x.ndim)))
    if reduction == "mean":
        per_sample = ops.scale(per_sample, 1.0 / (x.size // x.shape[0]))
    elif reduction != "sum":
        raise ValueError(f"unknown cycle reduction {reduction!r}")
    return _batch_mean(per_sample)


def stroke_loss(d_st_fake: Tensor, codes: np.ndarray | Tensor) -> Tensor:
    """Batch mean of the Euclidean norm (not squared) of prediction minus code."""
    c = codes if isinstance(codes, Tensor) else Tensor._wrap(np.asarray(codes, dtype=np.float64))
    if d_st_fake.ndim != 2 or d_st_fake.shape[1] != N_KINDS or c.shape != d_st_fake.shape:
        raise ShapeError("stroke_loss", d_st_fake.shape, c.shape)
    return _batch_mean(ops.l2_norm(ops.sub(d_st_fake, c), axes=1))


def total_loss(adv: Tensor, cyc: Tensor, st: Tensor, config) -> Tensor:
    """adv + lambda_cyc * cyc + lambda_st * st."""
    for t in (adv, cyc, st):
        if t.size != 1:
            raise ShapeError("total_loss", adv.shape, cyc.shape, st.shape)
    out = ops.add(adv, ops.scale(cyc, config.lambda_cyc))
    return ops.add(out, ops.scale(st, config.lambda_st))
