import math

import numpy as np
import pytest

from strokegan.autodiff import Tensor
from strokegan.networks import src_probability
from strokegan.strokes import build_corpus
from strokegan.training import (
    AdamHyper,
    AdamState,
    Checkpoint,
    ConfigError,
    CheckpointVersionError,
    CorruptCheckpointError,
    NonFiniteGradientError,
    TrainConfig,
    adam_step,
    adversarial_loss,
    build_models,
    cycle_loss,
    evaluation_context,
    generator_adversarial_loss,
    load_checkpoint,
    load_config,
    make_checkpoint,
    models_from_checkpoint,
    parse_config_text,
    read_metrics_log,
    save_checkpoint,
    stroke_loss,
    total_loss,
    train,
    train_step,
    translate,
)
from strokegan.training import loop as loop_module


def _t(a):
    return Tensor(np.asarray(a, dtype=np.float64))


def _snapshot(params):
    return {k: v.copy() for k, v in params.state().items()}


def _same(params, snap):
    state = params.state()
    return state.keys() == snap.keys() and all(state[k].tobytes() == snap[k].tobytes() for k in snap)


# -- losses --------------------------------------------------------------------------------

def test_adversarial_loss_at_one_half():
    half = _t(np.full(4, 0.5))
    assert adversarial_loss(half, half).item() == pytest.approx(2 * math.log(0.5), abs=1e-12)
    assert adversarial_loss(half, half).item() == pytest.approx(-1.3863, abs=1e-4)


def test_adversarial_loss_at_discriminator_optimum():
    loss = adversarial_loss(_t([1 - 1e-12] * 3), _t([1e-12] * 3)).item()
    assert -1e-6 < loss < 0


def test_adversarial_loss_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    real, fake = rng.uniform(0.01, 0.99, 7), rng.uniform(0.01, 0.99, 7)
    oracle = sum(math.log(r) for r in real) / 7 + sum(math.log(1 - f) for f in fake) / 7
    assert adversarial_loss(_t(real), _t(fake)).item() == pytest.approx(oracle, rel=1e-12)


def test_generator_adversarial_forms():
    fake = np.array([0.2, 0.7])
    assert generator_adversarial_loss(_t(fake)).item() == pytest.approx(-np.log(fake).mean(), rel=1e-12)
    assert generator_adversarial_loss(_t(fake), "literal").item() == pytest.approx(np.log(1 - fake).mean(), rel=1e-12)
    with pytest.raises(ValueError):
        generator_adversarial_loss(_t(fake), "other")


def test_cycle_loss_examples():
    x = np.random.default_rng(1).uniform(-1, 1, (2, 4, 4, 3))
    assert cycle_loss(_t(x), _t(x)).item() == 0.0
    n = 4 * 4 * 3
    assert cycle_loss(_t(np.zeros((2, 4, 4, 3))), _t(np.ones((2, 4, 4, 3)))).item() == n
    assert cycle_loss(_t(np.zeros((2, 4, 4, 3))), _t(np.ones((2, 4, 4, 3))), "mean").item() == 1.0


def test_cycle_loss_matches_abs_sum_oracle():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(3, 5, 5, 3)), rng.normal(size=(3, 5, 5, 3))
    oracle = np.abs(x - y).sum() / 3
    assert cycle_loss(_t(x), _t(y)).item() == pytest.approx(oracle, rel=1e-12)
    assert cycle_loss(_t(x), _t(y), "mean").item() == pytest.approx(oracle / 75, rel=1e-12)


def test_cycle_loss_errors():
    with pytest.raises(Exception):
        cycle_loss(_t(np.zeros((2, 4, 4, 3))), _t(np.zeros((2, 4, 4, 1))))
    with pytest.raises(ValueError):
        cycle_loss(_t(np.zeros((1, 2))), _t(np.zeros((1, 2))), "median")


def test_stroke_loss_examples():
    rng = np.random.default_rng(3)
    codes = (rng.random((5, 32)) < 0.3).astype(float)
    assert stroke_loss(_t(codes), codes).item() == 0.0
    assert stroke_loss(_t(np.full((5, 32), 0.5)), codes).item() == pytest.approx(2.8284, abs=1e-4)
    pred = rng.random((5, 32))
    oracle = np.mean([math.sqrt(sum((p - c) ** 2 for p, c in zip(pr, co))) for pr, co in zip(pred, codes)])
    assert stroke_loss(_t(pred), codes).item() == pytest.approx(oracle, rel=1e-12)
    with pytest.raises(Exception):
        stroke_loss(_t(np.zeros((5, 31))), codes[:, :31])


def test_total_loss_examples():
    cfg = TrainConfig()
    assert total_loss(_t(-1.0), _t(0.2), _t(0.5), cfg).item() == pytest.approx(1.09, abs=1e-12)
    assert total_loss(_t(0.0), _t(0.0), _t(0.0), cfg).item() == 0.0
    ablation = cfg.replace(lambda_st=0.0)
    assert total_loss(_t(-1.0), _t(0.2), _t(123.0), ablation).item() == pytest.approx(1.0, abs=1e-12)


def test_total_loss_matches_component_oracles_on_real_networks():
    cfg = TrainConfig(resolution=16, scale_factor=16, n_res_blocks=1, d_stride_layers=2, cycle_reduction="sum")
    models = build_models(cfg)
    rng = np.random.default_rng(4)
    xa, xb = rng.uniform(-1, 1, (3, 16, 16, 3)), rng.uniform(-1, 1, (3, 16, 16, 3))
    codes = (rng.random((3, 32)) < 0.2).astype(float)
    fake = models.G(_t(xa), update_stats=False)
    rec = models.G(fake, update_stats=False)
    src_r, _ = models.D(_t(xb), update_stats=False)
    src_f, st_f = models.D(fake, update_stats=False)
    pr, pf = src_probability(src_r), src_probability(src_f)
    adv = adversarial_loss(pr, pf)
    cyc = cycle_loss(_t(xa), rec)
    st = stroke_loss(st_f, codes)
    got = total_loss(adv, cyc, st, cfg).item()

    adv_o = np.mean(np.log(pr.data)) + np.mean(np.log(1 - pf.data))
    cyc_o = np.abs(xa - rec.data).reshape(3, -1).sum(axis=1).mean()
    st_o = np.sqrt(((st_f.data - codes) ** 2).sum(axis=1)).mean()
    oracle = adv_o + 10.0 * cyc_o + 0.18 * st_o
    assert abs(got - oracle) <= 1e-12 * abs(oracle)


# -- Adam ----------------------------------------------------------------------------------

def test_adam_first_step_moves_by_lr():
    p = {"w": Tensor(np.array([2.0]), requires_grad=True)}
    hyper = AdamHyper(lr=1e-3)
    adam_step(p, {"w": np.array([1.0])}, AdamState(), hyper)
    assert p["w"].data[0] - 2.0 == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-9)


def test_adam_zero_gradient_leaves_parameters():
    p = {"w": Tensor(np.array([0.3, -0.4]), requires_grad=True)}
    state = AdamState()
    adam_step(p, {"w": np.zeros(2)}, state, AdamHyper())
    assert p["w"].data.tolist() == [0.3, -0.4] and state.t == 1
    assert np.all(state.v["w"] >= 0)


def test_adam_decreases_a_quadratic():
    p = {"w": Tensor(np.array([1.0]), requires_grad=True)}
    state, hyper = AdamState(), AdamHyper(lr=0.05)
    values = [1.0]
    for _ in range(5):
        adam_step(p, {"w": 2 * p["w"].data}, state, hyper)
        values.append(float(p["w"].data[0] ** 2))
    assert all(b < a for a, b in zip(values, values[1:]))
    assert state.t == 5


def test_adam_rejects_non_finite_gradients():
    p = {"w": Tensor(np.zeros(2), requires_grad=True), "b": Tensor(np.zeros(1), requires_grad=True)}
    state = AdamState()
    with pytest.raises(NonFiniteGradientError) as err:
        adam_step(p, {"w": np.zeros(2), "b": np.array([np.nan])}, state, AdamHyper())
    assert err.value.name == "b" and err.value.step == 1
    assert state.t == 0 and p["w"].data.tolist() == [0.0, 0.0]


def test_adam_hyper_validation():
    with pytest.raises(ValueError):
        AdamHyper(beta1=1.0)
    with pytest.raises(ValueError):
        AdamHyper(lr=0.0)


# -- train step ----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def corpus():
    return build_corpus(100, seed=5)


@pytest.fixture(scope="module")
def eval_ctx(corpus):
    return evaluation_context(corpus, TrainConfig())


def _batches(corpus, n=4, offset=0):
    a = slice(offset, offset + n)
    return ((corpus.source.images[a], corpus.source.codes[a]), (corpus.target.images[a], corpus.target.codes[a]))


@pytest.mark.parametrize("mode", ["single", "dual"])
def test_desk_scale_step_is_finite(corpus, mode):
    cfg = TrainConfig(generator_mode=mode)
    models = build_models(cfg)
    report = train_step(*_batches(corpus), models, cfg)
    assert set(report) == {"L_adv_D", "L_adv_G", "L_cyc", "L_st"}
    assert all(np.isfinite(v) for v in report.values())


@pytest.mark.parametrize("mode", ["single", "dual"])
def test_each_update_leaves_the_other_player_untouched(corpus, mode, monkeypatch):
    cfg = TrainConfig(generator_mode=mode)
    models = build_models(cfg)
    real_step = loop_module._step
    checked = []

    def spying_step(m, names, config):
        names = list(names)
        others = [k for k in m.params if k not in names]
        before = {k: _snapshot(m.params[k]) for k in others}
        real_step(m, names, config)
        checked.append(all(_same(m.params[k], before[k]) for k in others))

    monkeypatch.setattr(loop_module, "_step", spying_step)
    for i in range(3):
        g_before = {k: _snapshot(models.params[k]) for k in models.generators}
        d_before = {k: _snapshot(models.params[k]) for k in models.discriminators}
        train_step(*_batches(corpus, offset=4 * i), models, cfg)
        # both players did move
        assert not any(_same(models.params[k], g_before[k]) for k in models.generators)
        assert not any(_same(models.params[k], d_before[k]) for k in models.discriminators)
    assert checked == [True] * 6


def test_frozen_discriminator_during_generator_update(corpus, monkeypatch):
    cfg = TrainConfig()
    models = build_models(cfg)
    real_step = loop_module._step
    seen = {}

    def spying_step(m, names, config):
        names = list(names)
        if names == ["G"]:
            seen["D_grads"] = {k: t.grad for k, t in m.D.params}
            seen["D_state"] = _snapshot(m.D.params)
        real_step(m, names, config)

    monkeypatch.setattr(loop_module, "_step", spying_step)
    train_step(*_batches(corpus), models, cfg)
    assert _same(models.D.params, seen["D_state"])
    # nothing accumulated into D during the generator pass
    assert all(t.grad is seen["D_grads"][k] for k, t in models.D.params)


def test_ablation_step_ignores_the_stroke_head(corpus):
    cfg = TrainConfig(lambda_st=0.0)
    models = build_models(cfg)
    head = {k: v.data.copy() for k, v in models.D.params if k.startswith("st.")}
    assert head
    train_step(*_batches(corpus), models, cfg)
    for k, t in models.D.params:
        if k.startswith("st."):
            assert t.data.tobytes() == head[k].tobytes()
            assert t.grad is None or not t.grad.any()


@pytest.mark.parametrize("mode", ["single", "dual"])
def test_ablation_is_bit_identical_to_a_build_without_the_stroke_term(corpus, mode, monkeypatch):
    cfg = TrainConfig(lambda_st=0.0, generator_mode=mode)
    reference = build_models(cfg)
    for i in range(2):
        train_step(*_batches(corpus, offset=4 * i), reference, cfg)

    # remove the stroke term altogether: the loss no longer depends on D_st at all
    monkeypatch.setattr(loop_module, "stroke_loss", lambda st, codes: Tensor(np.float64(0.0)))
    stripped = build_models(cfg)
    for i in range(2):
        train_step(*_batches(corpus, offset=4 * i), stripped, cfg)
    for name in reference.params:
        ref, got = reference.params[name].state(), stripped.params[name].state()
        assert all(ref[k].tobytes() == got[k].tobytes() for k in ref), name


def test_nonzero_lambda_st_does_train_the_stroke_head(corpus):
    cfg = TrainConfig()
    models = build_models(cfg)
    head = {k: v.data.copy() for k, v in models.D.params if k.startswith("st.")}
    train_step(*_batches(corpus), models, cfg)
    assert any(t.data.tobytes() != head[k].tobytes() for k, t in models.D.params if k.startswith("st."))


def test_generator_objective_gradients_pass_finite_differences():
    from strokegan.gradsuite import model_checks, run_suite

    checks = [c for c in model_checks(np.random.default_rng(0)) if c.name.startswith("generator_objective")]
    result = run_suite(checks)
    assert len(checks) == 7 and result.passed, result.summary()
    assert result.max_relative_error < 1e-4


def test_non_finite_loss_aborts_with_crash_checkpoint(corpus, eval_ctx, tmp_path, monkeypatch):
    from strokegan.training import TrainingAborted

    cfg = TrainConfig(epochs=1, batch_size=8)
    monkeypatch.setattr(loop_module, "cycle_loss", lambda x, y, r="sum": Tensor(np.float64(np.nan)))
    with pytest.raises(TrainingAborted):
        train(corpus, cfg, detector=eval_ctx[0], classifier=eval_ctx[1], crash_path=tmp_path / "crash.npz")
    crash = load_checkpoint(tmp_path / "crash.npz")
    assert crash.epoch == 0


# -- train / checkpoints ----------------------------------------------------------------------

TINY = TrainConfig(epochs=2, batch_size=16, seed=3)


@pytest.fixture(scope="module")
def two_epochs(corpus, eval_ctx, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    result = train(corpus, TINY, detector=eval_ctx[0], classifier=eval_ctx[1], log_path=out / "metrics.tsv",
                   checkpoint_path=out / "ckpt.npz")
    return result, out


def test_two_epochs_bookkeeping(two_epochs):
    result, out = two_epochs
    assert result.checkpoint.epoch == 2
    rows = read_metrics_log(out / "metrics.tsv")
    assert [r["epoch"] for r in rows] == [1, 2]
    assert rows == result.metrics
    assert load_checkpoint(out / "ckpt.npz").epoch == 2


def test_seeded_runs_give_identical_logs(corpus, eval_ctx, two_epochs, tmp_path):
    train(corpus, TINY, detector=eval_ctx[0], classifier=eval_ctx[1], log_path=tmp_path / "metrics.tsv")
    assert (tmp_path / "metrics.tsv").read_bytes() == (two_epochs[1] / "metrics.tsv").read_bytes()


def test_resume_matches_uninterrupted_run(corpus, eval_ctx, two_epochs, tmp_path):
    first = train(corpus, TINY.replace(epochs=1), detector=eval_ctx[0], classifier=eval_ctx[1],
                  checkpoint_path=tmp_path / "e1.npz")
    resumed = train(corpus, TINY, detector=eval_ctx[0], classifier=eval_ctx[1],
                    resume=load_checkpoint(tmp_path / "e1.npz"))
    assert first.metrics == two_epochs[0].metrics[:1]
    assert resumed.metrics == two_epochs[0].metrics
    for name, params in two_epochs[0].checkpoint.params.items():
        ref = params.state()
        got = resumed.checkpoint.params[name].state()
        assert all(ref[k].tobytes() == got[k].tobytes() for k in ref)


def test_checkpoint_round_trip_is_bit_exact(two_epochs, tmp_path):
    ckpt = two_epochs[0].checkpoint
    save_checkpoint(ckpt, tmp_path / "a.npz")
    back = load_checkpoint(tmp_path / "a.npz")
    assert back.config == ckpt.config and back.epoch == ckpt.epoch and back.rng_state == ckpt.rng_state
    assert back.metrics == ckpt.metrics
    a, b = ckpt.state_arrays(), back.state_arrays()
    assert a.keys() == b.keys() and all(a[k].tobytes() == b[k].tobytes() for k in a)
    save_checkpoint(back, tmp_path / "b.npz")
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_fresh_model_round_trip(tmp_path):
    cfg = TrainConfig(generator_mode="dual")
    models = build_models(cfg)
    save_checkpoint(make_checkpoint(models, cfg, 0, np.random.default_rng(0), []), tmp_path / "f.npz")
    back = models_from_checkpoint(load_checkpoint(tmp_path / "f.npz"))
    assert set(back.params) == {"G", "D", "F", "D_A"}
    for name, params in models.params.items():
        ref, got = params.state(), back.params[name].state()
        assert all(ref[k].tobytes() == got[k].tobytes() for k in ref)


def test_loaded_checkpoint_translates_identically(corpus, two_epochs):
    result, out = two_epochs
    loaded = models_from_checkpoint(load_checkpoint(out / "ckpt.npz"))
    x = corpus.source.images[:10]
    cfg = result.checkpoint.config
    assert translate(loaded.G, x, cfg).tobytes() == translate(result.models.G, x, cfg).tobytes()


def test_truncated_checkpoint_is_corrupt(two_epochs, tmp_path):
    data = (two_epochs[1] / "ckpt.npz").read_bytes()
    (tmp_path / "t.npz").write_bytes(data[: len(data) // 2])
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(tmp_path / "t.npz")
    (tmp_path / "g.npz").write_bytes(b"not a checkpoint")
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(tmp_path / "g.npz")


def test_unknown_checkpoint_version(two_epochs, tmp_path):
    ckpt = two_epochs[0].checkpoint
    future = Checkpoint(ckpt.config, ckpt.params, ckpt.adam, ckpt.epoch, ckpt.rng_state, ckpt.metrics, version=99)
    save_checkpoint(future, tmp_path / "v.npz")
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(tmp_path / "v.npz")


def test_empty_or_tiny_corpus_is_rejected(corpus, eval_ctx):
    with pytest.raises(ValueError):
        train(corpus, TrainConfig(epochs=1, batch_size=128), detector=eval_ctx[0], classifier=eval_ctx[1])


# -- config ----------------------------------------------------------------------------------

def test_config_defaults():
    cfg = TrainConfig()
    assert (cfg.lambda_cyc, cfg.lambda_st, cfg.beta1, cfg.beta2, cfg.lr) == (10.0, 0.18, 0.5, 0.999, 2e-4)
    assert (cfg.epochs, cfg.batch_size, cfg.generator_mode) == (200, 16, "single")


def test_config_file_round_trip(tmp_path):
    cfg = TrainConfig(lambda_st=0.0, generator_mode="dual", real_stroke_supervision=True, seed=9)
    (tmp_path / "c.cfg").write_text(cfg.dumps())
    back, extras = load_config(tmp_path / "c.cfg")
    assert back == cfg and extras == {}


def test_config_comments_and_extras():
    values, extras = parse_config_text("# header\nlambda_st = 0.5  # inline\n\nn_chars = 80\n", ("n_chars",))
    assert values == {"lambda_st": 0.5} and extras == {"n_chars": "80"}


@pytest.mark.parametrize("text, line", [
    ("lambda_st = 0.1\nbogus = 3\n", 2),
    ("seed = 1\n\nseed = 2\n", 3),
    ("epochs = many\n", 1),
    ("lambda_cyc 10\n", 1),
    ("real_stroke_supervision = maybe\n", 1),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config_text(text)
    assert err.value.line == line and str(err.value).startswith(f"line {line}:")


def test_config_value_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lambda_st=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(beta2=1.0)
    with pytest.raises(ConfigError):
        TrainConfig(generator_mode="triple")
