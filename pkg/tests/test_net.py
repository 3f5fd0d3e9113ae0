import math

import numpy as np
import pytest

from docprompt import imgproc, synth
from docprompt.errors import EmptyTask, InvalidParam, ShapeMismatch
from docprompt.net import autograd as ag
from docprompt.net import losses
from docprompt.net.model import build_model
from docprompt.net.optim import AdamW, cosine_lr
from docprompt.net.train import (TrainConfig, load_checkpoint, parse_loss_log, predict,
                                 sample_task, save_checkpoint, smoothed, train)
from docprompt.rng import Rng
from docprompt.tasks import ALL_TASKS, TaskKind

import gradcheck

TOL = 5e-3


def rand(shape, seed=0, scale=1.0):
    return ag.parameter(scale * np.random.default_rng(seed).standard_normal(shape))


# -- primitives -------------------------------------------------------------------

def test_conv_scalar_product_rule():
    x = ag.parameter(np.full((1, 1, 1, 1), 3.0))
    w = ag.parameter(np.full((1, 1, 1, 1), 2.0))
    y = ag.conv2d(x, w)
    y.backward(np.ones((1, 1, 1, 1)))
    assert y.value.item() == 6.0 and w.grad.item() == 3.0 and x.grad.item() == 2.0


def test_conv_matches_direct_correlation():
    r = np.random.default_rng(3)
    x = r.standard_normal((2, 5, 6, 3))
    w = r.standard_normal((3, 3, 3, 4))
    out = ag.conv2d(ag.constant(x), ag.constant(w)).value
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ref = np.zeros((2, 5, 6, 4))
    for i in range(5):
        for j in range(6):
            ref[:, i, j] = np.einsum("nabc,abcd->nd", xp[:, i : i + 3, j : j + 3], w)
    assert np.allclose(out, ref, atol=1e-12)


def test_relu_zero_gradient_for_nonpositive():
    x = ag.parameter(np.array([-1.0, 0.0, 2.0]))
    ag.relu(x).backward(np.ones(3))
    assert x.grad.tolist() == [0.0, 0.0, 1.0]


PRIMITIVES = {
    "conv2d": (lambda a, b, c: ag.conv2d(a, b, c), [(1, 8, 8, 6), (3, 3, 6, 4), (4,)]),
    "conv2d_stride2": (lambda a, b: ag.conv2d(a, b, stride=2), [(1, 8, 8, 3), (3, 3, 3, 2)]),
    "conv2d_valid": (lambda a, b: ag.conv2d(a, b, pad=0), [(1, 6, 6, 2), (3, 3, 2, 3)]),
    "relu": (ag.relu, [(1, 8, 8, 6)]),
    "leaky_relu": (ag.leaky_relu, [(1, 8, 8, 6)]),
    "sigmoid": (ag.sigmoid, [(1, 8, 8, 6)]),
    "avgpool2": (ag.avgpool2, [(1, 8, 8, 6)]),
    "upsample_nearest2": (ag.upsample_nearest2, [(1, 4, 4, 6)]),
    "concat_channels": (ag.concat_channels, [(1, 8, 8, 2), (1, 8, 8, 4)]),
    "add": (ag.add, [(1, 6, 8, 8), (1, 6, 8, 8)]),
    "mul_scalar": (lambda a: ag.mul_scalar(a, -1.7), [(1, 6, 8, 8)]),
    "to_channels_last": (ag.to_channels_last, [(1, 6, 8, 8)]),
    "to_channels_first": (ag.to_channels_first, [(1, 8, 8, 6)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    fn, shapes = PRIMITIVES[name]
    leaves = [rand(s, seed=i) for i, s in enumerate(shapes)]
    worst, skipped = gradcheck.check(lambda: fn(*leaves), leaves)
    assert worst < TOL and skipped < 0.1


def test_loss_gradients():
    r = np.random.default_rng(5)
    out = rand((1, 3, 8, 8), seed=9)
    img = r.random((1, 3, 8, 8))
    bm = r.random((1, 2, 8, 8))
    ink = (r.random((1, 8, 8)) > 0.5).astype(float)
    fused = r.random((1, 6, 8, 8))
    cases = [
        lambda: losses.task_loss("deshadow", out, img),
        lambda: losses.task_loss("dewarp", out, bm),
        lambda: losses.task_loss("binarize", out, ink),
        lambda: losses.task_loss("deblur", losses.compose_output("deblur", out, fused), img),
        lambda: losses.task_loss("dewarp", losses.compose_output("dewarp", out, fused), bm),
    ]
    for fn in cases:
        worst, _ = gradcheck.check(fn, [out])
        assert worst < TOL


@pytest.mark.parametrize("task", ["dewarp", "deshadow", "binarize"])
def test_full_model_gradients(task):
    m = build_model([4, 8], seed=1).astype(np.float64)
    r = np.random.default_rng(1)
    x = r.random((1, 6, 8, 8))
    tgt = {"dewarp": r.random((1, 2, 8, 8)), "deshadow": r.random((1, 3, 8, 8)),
           "binarize": (r.random((1, 8, 8)) > 0.5).astype(float)}[task]
    leaves = [p.tensor for p in m.params]
    fn = lambda: losses.task_loss(task, losses.compose_output(task, m(x), x), tgt)  # noqa: E731
    worst, skipped = gradcheck.check(fn, leaves, h=1e-5)
    assert worst < TOL and skipped < 0.25
    # with a tiny step no coordinate straddles a kink and every entry is compared
    worst, skipped = gradcheck.check(fn, leaves[:4], h=1e-6)
    assert worst < TOL and skipped == 0.0


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        ag.add(rand((1, 2)), rand((2, 1)))
    with pytest.raises(ShapeMismatch):
        ag.conv2d(rand((1, 4, 4, 3)), rand((3, 3, 2, 1)))
    with pytest.raises(ShapeMismatch):
        ag.avgpool2(rand((1, 5, 4, 1)))
    with pytest.raises(ShapeMismatch):
        ag.concat_channels(rand((1, 4, 4, 1)), rand((1, 2, 2, 1)))


# -- model -----------------------------------------------------------------------

def hand_count(widths):
    conv = lambda cin, cout: 9 * cin * cout + cout  # noqa: E731
    n = conv(6, widths[0])
    cin = widths[0]
    for w in widths[:-1]:
        n += conv(cin, w) + conv(w, w)
        cin = w
    n += conv(cin, widths[-1]) + conv(widths[-1], widths[-1])
    for i in reversed(range(len(widths) - 1)):
        n += conv(widths[i + 1] + widths[i], widths[i]) + conv(widths[i], widths[i])
    return n + conv(widths[0], 3)


def test_param_count():
    assert build_model([16, 32, 64]).num_params() == 121443 == hand_count([16, 32, 64])
    assert build_model([8, 16]).num_params() == hand_count([8, 16])


def test_param_names_unique_and_grads_match():
    m = build_model([8, 16, 32])
    names = [p.name for p in m.params]
    assert len(set(names)) == len(names) and "enc1.conv0.weight" in names
    out = m(np.random.default_rng(0).random((1, 6, 16, 16)))
    losses.task_loss("deblur", out, np.zeros((1, 3, 16, 16))).backward()
    assert all(p.grad.shape == p.value.shape for p in m.params)


def test_forward_shape_and_determinism():
    m = build_model([16, 32, 64])
    x = np.random.default_rng(0).random((1, 6, 64, 64))
    a, b = m(x).value, m(x).value
    assert a.shape == (1, 3, 64, 64) and np.array_equal(a, b)


def test_build_model_validation():
    for bad in ([], [8], [4, 4, 4, 4, 4], [8, 0]):
        with pytest.raises(InvalidParam):
            build_model(bad)
    with pytest.raises(ShapeMismatch):
        build_model([8, 16])(np.zeros((1, 6, 7, 8)))
    with pytest.raises(ShapeMismatch):
        build_model([8, 16])(np.zeros((1, 5, 8, 8)))


# -- losses ----------------------------------------------------------------------

def test_l1_zero_at_target():
    y = np.random.default_rng(0).random((2, 3, 4, 4))
    assert float(losses.task_loss("appearance", ag.constant(y), y).value) == 0.0


def test_bce_at_zero_logit():
    out = ag.constant(np.zeros((1, 3, 4, 4)))
    loss = losses.task_loss("binarize", out, np.ones((1, 4, 4)))
    assert float(loss.value) == pytest.approx(math.log(2), abs=1e-12)


def test_dewarp_identity_loss_zero():
    nbm = losses.normalize_bm(imgproc.identity_map(8, 8))
    out = np.zeros((1, 3, 8, 8))
    out[0, :2] = nbm
    out[0, 2] = 5.0  # unsupervised
    assert float(losses.task_loss("dewarp", ag.constant(out), nbm[None]).value) == 0.0


def test_bm_normalisation_round_trip():
    bm = np.random.default_rng(2).random((5, 7, 2)) * [4, 6]
    back = losses.denormalize_bm(losses.normalize_bm(bm))
    assert np.allclose(back, bm)


def test_output_base():
    fused = np.random.default_rng(0).random((2, 6, 4, 5))
    assert np.array_equal(losses.output_base("deshadow", fused), fused[:, 3:])
    assert not losses.output_base("binarize", fused).any()
    base = losses.output_base("dewarp", fused)
    assert np.allclose(base[0, :2], losses.normalize_bm(imgproc.identity_map(4, 5)))
    assert not base[:, 2].any()


def test_compose_output_scales():
    fused = np.random.default_rng(1).random((1, 6, 4, 5))
    head = np.random.default_rng(2).standard_normal((1, 3, 4, 5))
    for task in ALL_TASKS:
        got = losses.compose_output(task, ag.constant(head), fused).value
        scale = 0.1 if task is TaskKind.DEWARP else 1.0
        assert np.allclose(got, scale * head + losses.output_base(task, fused))


def test_task_loss_shape_errors():
    with pytest.raises(ShapeMismatch):
        losses.task_loss("deblur", ag.constant(np.zeros((1, 2, 4, 4))), np.zeros((1, 2, 4, 4)))
    with pytest.raises(ShapeMismatch):
        losses.task_loss("binarize", ag.constant(np.zeros((1, 3, 4, 4))), np.zeros((1, 3, 4)))


# -- optimiser and schedule ---------------------------------------------------------

def test_adamw_first_step():
    p = ag.parameter(np.array([0.5]))
    p.grad = np.array([1.0])
    AdamW([p], weight_decay=0.0).step(1e-3)
    assert p.value[0] == pytest.approx(0.5 - 1e-3, abs=1e-9)


def test_adamw_zero_gradient():
    p = ag.parameter(np.array([0.5, -2.0]))
    p.grad = np.zeros(2)
    AdamW([p], weight_decay=0.0).step(1e-2)
    assert p.value.tolist() == [0.5, -2.0]
    p.grad = np.zeros(2)
    AdamW([p], weight_decay=0.1).step(1e-2)
    assert np.allclose(p.value, np.array([0.5, -2.0]) * (1 - 1e-3))


def test_cosine_lr():
    assert cosine_lr(0, 100, 2e-4) == 2e-4
    assert cosine_lr(100, 100, 2e-4) == pytest.approx(0.0, abs=1e-20)
    assert cosine_lr(50, 100, 2e-4) == pytest.approx(1e-4)


def test_sample_task_frequencies():
    rng = Rng(7)
    draws = [sample_task((0.2,) * 5, rng) for _ in range(100_000)]
    for t in ALL_TASKS:
        assert abs(draws.count(t) / 100_000 - 0.2) <= 0.01


def test_sample_task_degenerate_and_deterministic():
    rng = Rng(1)
    assert {sample_task((1, 0, 0, 0, 0), rng) for _ in range(200)} == {TaskKind.DEWARP}
    r1, r2 = Rng(3), Rng(3)
    assert [sample_task((0.2,) * 5, r1) for _ in range(50)] == [sample_task((0.2,) * 5, r2) for _ in range(50)]


def test_train_config_validation():
    with pytest.raises(InvalidParam):
        TrainConfig(steps=5, pretrain_steps=6)
    with pytest.raises(InvalidParam):
        TrainConfig(task_weights=(0.5, 0.5, 0.5, 0, 0))
    with pytest.raises(InvalidParam):
        TrainConfig(task_weights=(0.2,) * 4)
    with pytest.raises(InvalidParam):
        TrainConfig(prompt_mode="other")


# -- training -----------------------------------------------------------------------

SMALL = synth.SynthConfig(page_size=64)


@pytest.fixture(scope="module")
def samples():
    return [synth.make_sample(t, SMALL, Rng(100 + i)) for i, t in enumerate(ALL_TASKS)]


def quick_cfg(**kw):
    base = dict(steps=12, batch=2, patch=32, widths=(4, 8), lr_max=2e-3, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_pretrain_only_dewarp(samples):
    res = train(build_model((4, 8)), None, quick_cfg(steps=6, pretrain_steps=6), samples=samples)
    rows = parse_loss_log(res.log_text())
    assert [r[0] for r in rows] == list(range(6))
    assert {r[1] for r in rows} == {TaskKind.DEWARP}


def test_train_deterministic(samples):
    logs = [train(build_model((4, 8), seed=2), None, quick_cfg(), samples=samples).log_text()
            for _ in range(2)]
    assert logs[0] == logs[1]
    rows = parse_loss_log(logs[0])
    # one line per task present in a step, tasks in canonical order
    assert sorted({r[0] for r in rows}) == list(range(12))
    for step in range(12):
        tasks = [r[1] for r in rows if r[0] == step]
        assert 1 <= len(tasks) <= 2 and tasks == sorted(tasks, key=ALL_TASKS.index)


def test_batch_mixes_tasks(samples):
    rows = parse_loss_log(train(build_model((4, 8)), None, quick_cfg(steps=20, batch=4),
                                samples=samples).log_text())
    per_step = [sum(1 for r in rows if r[0] == s) for s in range(20)]
    assert max(per_step) > 1


def test_train_empty_task(samples):
    with pytest.raises(EmptyTask):
        train(build_model((4, 8)), None, quick_cfg(), samples=samples[:4])
    # a task with zero weight may be absent
    cfg = quick_cfg(task_weights=(0.25, 0.25, 0.25, 0.25, 0.0))
    train(build_model((4, 8)), None, cfg, samples=samples[:4])


@pytest.mark.parametrize("task", list(TaskKind))
def test_single_batch_loss_decreases(samples, task):
    weights = tuple(1.0 if t is task else 0.0 for t in ALL_TASKS)
    cfg = quick_cfg(steps=200, batch=1, patch=16, widths=(8, 16), task_weights=weights)
    one = [s for s in samples if s.task is task]
    res = train(build_model((8, 16), seed=3), None, cfg, samples=one)
    values = [v for _, _, v in parse_loss_log(res.log_text())]
    sm = smoothed(values, 20)
    assert sm[-1] < sm[19]


def test_smoothed():
    assert smoothed([1, 2, 3], window=2).tolist() == [1.0, 1.5, 2.5]


# -- inference and checkpoints ------------------------------------------------------

def test_predict_contracts(samples):
    m = build_model((4, 8, 16))
    img = np.random.default_rng(0).random((71, 93, 3))
    out = predict(m, img, "deshadow")
    assert out.output.shape == (71, 93, 3) and 0 <= out.output.min() and out.output.max() <= 1
    ink = predict(m, img, "binarize")
    assert ink.output.shape == (71, 93) and set(np.unique(ink.output)) <= {0, 1}
    dw = predict(m, img, "dewarp")
    assert dw.output.shape == (71, 93, 2) and dw.image.shape == (71, 93, 3)


def test_checkpoint_round_trip(tmp_path):
    m = build_model((4, 8, 16), seed=9)
    for p in m.params:
        p.tensor.value = p.value + np.float32(0.01)
    save_checkpoint(m, tmp_path, "widths=4,8,16\n")
    loaded = load_checkpoint(tmp_path, (4, 8, 16))
    for a, b in zip(m.params, loaded.params):
        assert a.name == b.name and np.array_equal(a.value, b.value)
    x = np.random.default_rng(1).random((1, 6, 16, 16))
    assert np.array_equal(m(x).value, loaded(x).value)
    lines = (tmp_path / "index.txt").read_text().splitlines()
    assert lines[0] == "stem.weight\tstem.weight.drt1\t3,3,6,4"


def test_checkpoint_shape_mismatch(tmp_path):
    save_checkpoint(build_model((4, 8)), tmp_path)
    with pytest.raises(ShapeMismatch):
        load_checkpoint(tmp_path, (4, 16))
