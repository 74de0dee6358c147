import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strokegan.autodiff import ShapeError, Tape, Tensor, backward, conv2d, conv_transpose2d, grad_check, ops
from strokegan.networks import (
    DESK_D_LAYERS,
    LayerSpec,
    Network,
    NetworkSpec,
    SpecError,
    activation,
    batch_norm,
    build_discriminator,
    build_generator,
    desk_discriminator_spec,
    desk_generator_spec,
    discriminator_spec,
    generator_spec,
    init_parameters,
    output_shapes,
    src_probability,
    trace_shapes,
)

# -- direct-sum oracles ---------------------------------------------------------


def conv_oracle(x, w, stride, padding):
    """Cross-correlation by explicit loops over batch, output pixel, output channel and kernel taps."""
    n, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    xp = np.zeros((n, h + 2 * padding, wd + 2 * padding, cin))
    xp[:, padding:padding + h, padding:padding + wd, :] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, ho, wo, cout))
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for co in range(cout):
                    total = 0.0
                    for di in range(kh):
                        for dj in range(kw):
                            for ci in range(cin):
                                total += xp[b, i * stride + di, j * stride + dj, ci] * w[di, dj, ci, co]
                    out[b, i, j, co] = total
    return out


def conv_transpose_oracle(x, w, stride, padding, output_padding=0):
    """Scatter every input pixel through the kernel, then crop the padding."""
    n, h, wd, cin = x.shape
    kh, kw, cout, _ = w.shape
    full_h = (h - 1) * stride + kh + output_padding
    full_w = (wd - 1) * stride + kw + output_padding
    full = np.zeros((n, full_h + padding, full_w + padding, cout))
    for b in range(n):
        for i in range(h):
            for j in range(wd):
                for ci in range(cin):
                    for di in range(kh):
                        for dj in range(kw):
                            for co in range(cout):
                                full[b, i * stride + di, j * stride + dj, co] += x[b, i, j, ci] * w[di, dj, co, ci]
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (wd - 1) * stride - 2 * padding + kw + output_padding
    return full[:, padding:padding + ho, padding:padding + wo, :]


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# (kernel, stride, padding) geometries used by the generator and discriminator templates
TEMPLATE_GEOMETRIES = [(7, 1, 0), (3, 2, 1), (3, 1, 1), (4, 2, 1), (4, 1, 1), (2, 1, 0), (4, 1, 0), (1, 1, 0)]


def conv_cases(count=60, seed=0):
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(count):
        k, s, p = TEMPLATE_GEOMETRIES[i % len(TEMPLATE_GEOMETRIES)]
        h = int(rng.integers(max(k - 2 * p, 1), k + 6))
        cases.append((int(rng.integers(1, 3)), h, int(rng.integers(1, 4)), int(rng.integers(1, 4)), k, s, p,
                      int(rng.integers(0, 2**31))))
    return cases


def test_conv_all_ones_example():
    out = conv2d(Tensor(np.ones((1, 3, 3, 1))), Tensor(np.ones((2, 2, 1, 1))))
    np.testing.assert_array_equal(out.data, np.full((1, 2, 2, 1), 4.0))


def test_conv_unit_kernel_is_identity():
    x = np.random.default_rng(0).standard_normal((2, 5, 4, 1))
    np.testing.assert_array_equal(conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1)))).data, x)


def test_conv_spec_example_matches_oracle():
    rng = np.random.default_rng(42)
    x, w = rng.standard_normal((1, 8, 8, 2)), rng.standard_normal((3, 3, 2, 4))
    assert rel_err(conv2d(Tensor(x), Tensor(w), 2, 1).data, conv_oracle(x, w, 2, 1)) < 1e-12


@pytest.mark.parametrize("n,h,cin,cout,k,s,p,seed", conv_cases())
def test_conv2d_matches_direct_sum(n, h, cin, cout, k, s, p, seed):
    rng = np.random.default_rng(seed)
    x, w = rng.standard_normal((n, h, h, cin)), rng.standard_normal((k, k, cin, cout))
    assert rel_err(conv2d(Tensor(x), Tensor(w), s, p).data, conv_oracle(x, w, s, p)) < 1e-12


@pytest.mark.parametrize("n,h,cin,cout,k,s,p,seed", conv_cases(seed=1))
def test_conv_transpose2d_matches_direct_sum(n, h, cin, cout, k, s, p, seed):
    rng = np.random.default_rng(seed)
    op = 1 if s == 2 else 0
    x, w = rng.standard_normal((n, h, h, cin)), rng.standard_normal((k, k, cout, cin))
    if (h - 1) * s - 2 * p + k + op < 1:
        pytest.skip("empty output")
    got = conv_transpose2d(Tensor(x), Tensor(w), s, p, op).data
    assert rel_err(got, conv_transpose_oracle(x, w, s, p, op)) < 1e-12


@pytest.mark.parametrize("n,h,cin,cout,k,s,p,seed", conv_cases(seed=2))
def test_adjoint_identity(n, h, cin, cout, k, s, p, seed):
    rng = np.random.default_rng(seed)
    a, w = rng.standard_normal((n, h, h, cin)), rng.standard_normal((k, k, cin, cout))
    ya = conv2d(Tensor(a), Tensor(w), s, p).data
    b = rng.standard_normal(ya.shape)
    # the adjoint of a floored conv needs the rows the forward dropped back
    extra = h - ((ya.shape[1] - 1) * s - 2 * p + k)
    xb = conv_transpose2d(Tensor(b), Tensor(w), s, p, extra if extra < s else 0).data
    if xb.shape != a.shape:
        pytest.skip("floored geometry with dropped rows wider than one stride")
    lhs, rhs = float(np.sum(ya * b)), float(np.sum(a * xb))
    assert abs(lhs - rhs) / max(abs(lhs), 1e-12) < 1e-10


def test_conv_transpose_single_tap_expansion():
    w = np.arange(9.0).reshape(3, 3, 1, 1)
    out = conv_transpose2d(Tensor(np.full((1, 1, 1, 1), 2.5)), Tensor(w), stride=2)
    np.testing.assert_array_equal(out.data[0, :, :, 0], 2.5 * w[:, :, 0, 0])


def test_conv_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    x, w = rng.standard_normal((2, 6, 6, 2)), rng.standard_normal((3, 3, 2, 3))
    proj = rng.standard_normal((2, 3, 3, 3))
    assert grad_check(lambda t: ops.sum(ops.mul(conv2d(t, Tensor(w), 2, 1), Tensor(proj))), x, 1e-6) < 1e-6
    assert grad_check(lambda t: ops.sum(ops.mul(conv2d(Tensor(x), t, 2, 1), Tensor(proj))), w, 1e-6) < 1e-6


def test_conv_errors():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 4, 4, 2))), Tensor(np.ones((3, 3, 3, 1))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 2, 2, 1))), Tensor(np.ones((5, 5, 1, 1))))


# -- batch norm and activations --------------------------------------------------

def test_batch_norm_train_statistics():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 4.0, (8, 4, 4, 3))
    out = batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3))).data
    assert np.max(np.abs(out.mean(axis=(0, 1, 2)))) < 1e-10
    assert np.max(np.abs(out.var(axis=(0, 1, 2)) - 1.0)) < 1e-6
    # exact value: eps in the denominator shrinks the variance to s2 / (s2 + eps)
    s2 = x.var(axis=(0, 1, 2))
    np.testing.assert_allclose(out.var(axis=(0, 1, 2)), s2 / (s2 + 1e-5), rtol=1e-12)


def test_batch_norm_standardized_input_is_nearly_unchanged():
    x = np.random.default_rng(1).standard_normal((16, 2, 2, 2))
    x = (x - x.mean(axis=(0, 1, 2))) / x.std(axis=(0, 1, 2))
    out = batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2))).data
    assert np.max(np.abs(out - x)) < 1e-5 * np.max(np.abs(x))


def test_batch_norm_zero_gamma_gives_beta():
    x = Tensor(np.random.default_rng(2).standard_normal((4, 3, 3, 2)))
    out = batch_norm(x, Tensor(np.zeros(2)), Tensor([0.5, -1.0])).data
    np.testing.assert_array_equal(out[..., 0], 0.5)
    np.testing.assert_array_equal(out[..., 1], -1.0)


def test_batch_norm_running_stats_and_eval_mode():
    rng = np.random.default_rng(3)
    x = rng.normal(2.0, 3.0, (5, 2, 2, 1))
    rm, rv = np.zeros(1), np.ones(1)
    batch_norm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), "train", rm, rv)
    np.testing.assert_allclose(rm, 0.1 * x.mean())
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(ddof=1))
    out = batch_norm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), "eval", rm, rv).data
    np.testing.assert_allclose(out, (x - rm) / np.sqrt(rv + 1e-5))
    frozen = rm.copy()
    batch_norm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), "train", rm, rv, update_stats=False)
    np.testing.assert_array_equal(rm, frozen)


def test_batch_norm_rejects_single_sample_training():
    with pytest.raises(ValueError):
        batch_norm(Tensor(np.ones((1, 2, 2, 1))), Tensor(np.ones(1)), Tensor(np.zeros(1)))


def test_activation_examples():
    np.testing.assert_allclose(activation("leaky_relu", Tensor([-1.0, 2.0]), 0.2).data, [-0.2, 2.0])
    assert activation("tanh", Tensor(0.0)).item() == 0.0
    np.testing.assert_array_equal(activation("relu", Tensor([-0.0, -1.0, -3.0])).data, 0.0)
    s = activation("sigmoid", Tensor([-800.0, 0.0, 800.0])).data
    assert np.all(s >= 0.0) and np.all(s <= 1.0) and s[1] == 0.5
    with pytest.raises(ValueError):
        activation("gelu", Tensor(0.0))


# -- architectures -----------------------------------------------------------------

GENERATOR_TABLE = [  # (in, out) per table row at h = w = 128, scale_factor 1
    ((128, 128, 3), (128, 128, 64)),
    ((128, 128, 64), (64, 64, 128)),
    ((64, 64, 128), (32, 32, 256)),
    *[((32, 32, 256), (32, 32, 256))] * 9,
    ((32, 32, 256), (64, 64, 128)),
    ((64, 64, 128), (128, 128, 64)),
    ((128, 128, 64), (128, 128, 3)),
]

DISCRIMINATOR_TABLE = [
    ((128, 128, 3), (64, 64, 64)),
    ((64, 64, 64), (32, 32, 128)),
    ((32, 32, 128), (16, 16, 256)),
    ((16, 16, 256), (8, 8, 512)),
    ((8, 8, 512), (4, 4, 1024)),
    ((4, 4, 1024), (2, 2, 2048)),
]


def _shape_changes(rows):
    """Collapse per-layer rows to the rows where the tensor shape changes (or residual blocks)."""
    out = []
    for label, a, b in rows:
        if a != b or label.endswith("residual_block"):
            out.append((a, b))
    return out


def test_generator_reproduces_table_rows():
    rows = trace_shapes(generator_spec(128, 1, 9))
    assert _shape_changes(rows) == GENERATOR_TABLE
    kinds = [label.split(".", 1)[1] for label, _, _ in rows]
    assert kinds[-1] == "tanh" and kinds.count("residual_block") == 9 and kinds.count("deconv") == 2


def test_discriminator_reproduces_table_rows():
    spec = discriminator_spec(128, 1, 6)
    rows = trace_shapes(spec)
    trunk = [(a, b) for label, a, b in rows if label.endswith("conv") and not label.startswith(("src", "st"))]
    assert trunk == DISCRIMINATOR_TABLE
    heads = output_shapes(spec)
    assert heads["st"] == (1, 1, 32)
    # K4/S1/P1 on the 2x2 map, taken literally
    assert heads["src"] == (1, 1, 1)
    assert all(layer.slope == 0.2 for layer in spec.layers if layer.kind == "leaky_relu")


def test_desk_shapes():
    assert output_shapes(desk_generator_spec()) == {"out": (32, 32, 3)}
    spec = desk_discriminator_spec()
    trunk_out = trace_shapes(spec)[3 * DESK_D_LAYERS - 1][2]
    assert trunk_out[:2] == (2, 2)
    assert output_shapes(spec)["st"] == (1, 1, 32)


def test_template_errors():
    with pytest.raises(SpecError):
        generator_spec(30)
    with pytest.raises(SpecError):
        discriminator_spec(32, 8, 5)
    with pytest.raises(SpecError):
        generator_spec(32, 3)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8).map(lambda k: 4 * k), st.sampled_from([8, 16, 32, 64]), st.integers(0, 9))
def test_generator_is_shape_preserving(resolution, scale, blocks):
    spec = generator_spec(resolution, scale, blocks)
    assert output_shapes(spec)["out"] == (resolution, resolution, 3)


def test_desk_generator_forward_range_and_shape():
    g = build_generator(desk_generator_spec(), seed=0)
    x = Tensor(np.random.default_rng(0).uniform(-1, 1, (3, 32, 32, 3)))
    y = g(x).data
    assert y.shape == x.shape and np.all(np.abs(y) <= 1.0)


def test_desk_discriminator_outputs():
    d = build_discriminator(desk_discriminator_spec(), seed=0)
    src, stroke = d(Tensor(np.random.default_rng(1).uniform(-1, 1, (2, 32, 32, 3))))
    assert src.shape == (2, 1, 1, 1) and stroke.shape == (2, 32)
    p = src_probability(src).data
    assert p.shape == (2,) and np.all((p > 0) & (p < 1))


def test_network_rejects_wrong_input_shape():
    g = build_generator(desk_generator_spec(), seed=0)
    with pytest.raises(ShapeError):
        g(Tensor(np.zeros((2, 16, 16, 3))))


def test_initialization_is_seeded_and_conventional():
    spec = desk_generator_spec()
    a, b, c = init_parameters(spec, 5), init_parameters(spec, 5), init_parameters(spec, 6)
    assert all(np.array_equal(a.state()[k], b.state()[k]) for k in a.state())
    assert not np.array_equal(a["0.weight"].data, c["0.weight"].data)
    big = init_parameters(generator_spec(128, 1, 9), 0)["9.block.0.weight"].data
    assert abs(big.mean()) < 1e-3 and abs(big.std() - 0.02) < 1e-3
    assert np.all(a["0.bias"].data == 0) and np.all(a["1.gamma"].data == 1) and np.all(a["1.beta"].data == 0)
    assert all(np.all(v > 0) for k, v in a.buffers.items() if k.endswith("running_var"))


def test_residual_block_with_zero_second_conv_is_identity():
    spec = NetworkSpec((LayerSpec("residual_block", 4, (3, 3), 1, 1),), (5, 5, 4))
    params = init_parameters(spec, 0)
    params["0.block.3.weight"].data[...] = 0.0
    x = np.random.default_rng(0).standard_normal((3, 5, 5, 4))
    np.testing.assert_array_equal(Network(spec, params)(Tensor(x)).data, x)


def test_discriminator_heads_share_the_trunk():
    d = build_discriminator(desk_discriminator_spec(), seed=3)
    x = Tensor(np.random.default_rng(2).uniform(-1, 1, (2, 32, 32, 3)))
    src0, st0 = (t.data.copy() for t in d(x, update_stats=False))
    d.params["3.weight"].data[0, 0, 0, 0] += 0.5
    src1, st1 = (t.data for t in d(x, update_stats=False))
    assert not np.allclose(src0, src1) and not np.allclose(st0, st1)


def test_tiny_generator_end_to_end_gradcheck():
    g = build_generator(generator_spec(8, 32, 1), seed=1)
    x = np.random.default_rng(4).uniform(-1, 1, (2, 8, 8, 3))
    assert grad_check(lambda t: ops.mean(ops.square(g(t, update_stats=False))), x, eps=1e-6) < 1e-4


def test_parameters_receive_gradients_through_generator():
    g = build_generator(generator_spec(8, 32, 1), seed=1)
    x = Tensor(np.random.default_rng(4).uniform(-1, 1, (2, 8, 8, 3)))
    with Tape():
        backward(ops.mean(ops.square(g(x))))
    assert all(t.grad is not None and t.grad.shape == t.shape for _, t in g.params)


def test_parameters_state_round_trip():
    p = init_parameters(desk_discriminator_spec(), 0)
    q = init_parameters(desk_discriminator_spec(), 1)
    q.load_state(p.state())
    assert all(np.array_equal(p.state()[k], q.state()[k]) for k in p.state())
    copy = p.copy()
    copy["0.weight"].data[...] = 0
    assert not np.array_equal(copy["0.weight"].data, p["0.weight"].data)
