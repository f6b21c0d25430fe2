import math

import numpy as np
import pytest

from stga import model as M
from stga.data import SceneInstance
from stga.graph import Mode
from stga.model import (ModelConfig, ModelParams, RecurrentState, SceneBatch, StateMismatchError,
                        batch_nll, forward_step, observe, predict, sequence_nll)
from stga.nn.gradcheck import grad_check_blocks
from stga.nn.layers import GaussianBatch
from stga.nn.optim import AdamState, adam_step
from stga.nn.tensor import Tape, Tensor
from stga.synthetic import make_synthetic

SMALL = ModelConfig(hidden=8, embed=4)


def _instance(ids=(0, 1, 2), seed=0, obstacles=None):
    rng = np.random.default_rng(seed)
    start = rng.uniform(0.2, 0.8, size=(len(ids), 2))
    vel = rng.uniform(-0.015, 0.015, size=(len(ids), 2))
    pos = start[None] + np.arange(20)[:, None, None] * vel[None]
    obs = np.zeros((0, 2)) if obstacles is None else np.asarray(obstacles, float).reshape(-1, 2)
    return SceneInstance(0, tuple(ids), pos, tuple(range(len(obs))), obs, "t")


def test_zero_params_emit_zero_mean():
    cfg = ModelConfig(hidden=8, embed=4)
    state = observe(_instance((5,)), ModelParams.zeros(cfg), cfg)
    out = state.last_output
    np.testing.assert_array_equal(out.mu.value, 0.0)
    np.testing.assert_array_equal(out.sigma.value, 1.0)
    np.testing.assert_array_equal(out.rho.value, 0.0)


def test_four_lstm_blocks_regardless_of_crowd():
    for mode in ("hh", "hho"):
        cfg = ModelConfig(mode=mode, hidden=8, embed=4)
        p = ModelParams.init(cfg, 0)
        assert len(p.lstm_blocks()) == 4
        assert len({id(b) for b in p.lstm_blocks()}) == 4
        names = set(p.tensors())
        for n in (1, 6):
            observe(_instance(tuple(range(n))), p, cfg)
            assert set(p.tensors()) == names
    assert p.lstm_node.W_x.shape == (4 * 8, 2 * 4 + 2 * 8)


def test_permuting_pedestrian_order():
    cfg = ModelConfig(hidden=8, embed=4)
    p = ModelParams.init(cfg, 1)
    base = _instance((3, 1, 2), seed=4, obstacles=[(0.5, 0.5)])
    perm = [2, 0, 1]
    shuffled = SceneInstance(0, tuple(base.ped_ids[i] for i in perm), base.positions[:, perm],
                             base.obstacle_ids, base.obstacles, "t")
    a = predict(observe(base, p, cfg), base, p, cfg).step_maps()
    b = predict(observe(shuffled, p, cfg), shuffled, p, cfg).step_maps()
    for sa, sb in zip(a, b):
        assert sa.keys() == sb.keys()
        for k in sa:
            assert sa[k] == pytest.approx(sb[k], abs=1e-13)


def test_observe_advances_each_state_eight_times():
    cfg = SMALL
    state = observe(_instance(), ModelParams.init(cfg, 0), cfg)
    assert state.time_step == 7
    np.testing.assert_array_equal(state.steps, 8)


def test_observe_with_no_pedestrians():
    inst = SceneInstance(0, (), np.zeros((20, 0, 2)))
    state = observe(inst, ModelParams.init(SMALL, 0), SMALL)
    assert state.is_empty
    assert predict(state, inst, ModelParams.init(SMALL, 0), SMALL).raw.shape == (12, 0, 2)


@pytest.mark.parametrize("obstacles", [None, [(5.0, 5.0)]])
def test_modes_agree_without_nearby_obstacles(obstacles):
    p = ModelParams.init(SMALL, 2)
    for seed in range(3):
        inst = _instance(seed=seed, obstacles=obstacles)
        hh = M.with_mode(SMALL, Mode.HH)
        hho = M.with_mode(SMALL, Mode.HHO)
        s1, s2 = observe(inst, p, hh), observe(inst, p, hho)
        np.testing.assert_array_equal(s1.node.h.value, s2.node.h.value)
        assert float(sequence_nll(inst, p, hh).value) == float(sequence_nll(inst, p, hho).value)


def test_nearby_obstacle_changes_output():
    p = ModelParams.init(SMALL, 2)
    inst = _instance(seed=0, obstacles=[(0.5, 0.5)])
    a = float(sequence_nll(inst, p, M.with_mode(SMALL, "hh")).value)
    b = float(sequence_nll(inst, p, M.with_mode(SMALL, "hho")).value)
    assert a != b


def test_rollout_determinism():
    p = ModelParams.init(SMALL, 3)
    inst = _instance()
    state = observe(inst, p, SMALL)
    m1, m2 = predict(state, inst, p, SMALL), predict(state, inst, p, SMALL)
    np.testing.assert_array_equal(m1.raw, m2.raw)
    s1 = predict(state, inst, p, SMALL, "sample", np.random.default_rng(9))
    s2 = predict(state, inst, p, SMALL, "sample", np.random.default_rng(9))
    np.testing.assert_array_equal(s1.raw, s2.raw)
    assert s1.raw.shape == (12, 3, 2)


def test_rollout_positions_clamped(monkeypatch):
    p = ModelParams.init(SMALL, 0)
    inst = _instance()

    def far_head(params, h):
        n = h.shape[0]
        return GaussianBatch(Tensor(np.full((n, 2), 1.7)), Tensor(np.ones((n, 2))), Tensor(np.zeros(n)))

    monkeypatch.setattr(M, "gaussian_head", far_head)
    roll = predict(observe(inst, p, SMALL), inst, p, SMALL, "sample", np.random.default_rng(0))
    assert roll.positions.min() >= 0.0 and roll.positions.max() <= 1.0
    assert roll.raw.max() > 1.0


def test_state_mismatch_errors():
    p = ModelParams.init(SMALL, 0)
    inst = _instance()
    batch = SceneBatch([inst])
    with pytest.raises(StateMismatchError):
        forward_step(batch.snapshot(0, SMALL), RecurrentState.empty(16), p, SMALL)
    state = observe(inst, p, SMALL)
    with pytest.raises(StateMismatchError):
        forward_step(batch.snapshot(3, SMALL), state, p, SMALL)


def test_predict_mode_validation():
    p = ModelParams.init(SMALL, 0)
    inst = _instance()
    state = observe(inst, p, SMALL)
    with pytest.raises(ValueError):
        predict(state, inst, p, SMALL, "median")
    with pytest.raises(ValueError):
        predict(state, inst, p, SMALL, "sample")


def test_pinned_head_gives_closed_form_loss(monkeypatch):
    inst = _instance((0, 1, 2))
    calls = {"t": 0}

    def truth_head(params, h):
        t = calls["t"]
        calls["t"] += 1
        mu = inst.positions[t + 1]   # keys 0, 1, 2 are already in snapshot order
        n = h.shape[0]
        return GaussianBatch(Tensor(mu), Tensor(np.ones((n, 2))), Tensor(np.zeros(n)))

    monkeypatch.setattr(M, "gaussian_head", truth_head)
    loss = float(sequence_nll(inst, ModelParams.init(SMALL, 0), SMALL).value)
    assert loss == pytest.approx(12 * math.log(2 * math.pi), abs=1e-12)


def test_loss_finite_on_random_scenes():
    for seed in range(3):
        data = make_synthetic("crossing", 4, seed=seed)
        p = ModelParams.init(SMALL, seed)
        assert np.isfinite(float(sequence_nll(data.instances[0], p, SMALL).value))


def test_batched_loss_is_mean_of_scene_losses():
    p = ModelParams.init(SMALL, 0)
    scenes = [_instance((0, 1), seed=1), _instance((0, 1, 2), seed=2, obstacles=[(0.4, 0.4)])]
    each = [float(sequence_nll(s, p, SMALL).value) for s in scenes]
    assert float(batch_nll(scenes, p, SMALL).value) == pytest.approx(np.mean(each), abs=1e-12)


def test_short_scene_rejected():
    inst = SceneInstance(0, (1,), np.full((10, 1, 2), 0.5))
    with pytest.raises(ValueError):
        sequence_nll(inst, ModelParams.init(SMALL, 0), SMALL)


def test_full_step_gradient_small_scene():
    cfg = ModelConfig(hidden=4, embed=3)
    p = ModelParams.init(cfg, 5)
    inst = _instance((0, 1), seed=3, obstacles=[(0.45, 0.5)])
    report = grad_check_blocks(lambda: sequence_nll(inst, p, cfg), p.tensors(), max_coords=6,
                               rng=np.random.default_rng(0))
    assert max(report.values()) < 1e-4, report


def test_adam_reduces_straight_line_loss():
    cfg = ModelConfig(hidden=16, embed=8)
    p = ModelParams.init(cfg, 0)
    inst = make_synthetic("linear", 1, seed=0).instances[0]
    tensors = p.tensors()
    adam = AdamState()
    first = None
    for _ in range(300):
        with Tape() as tape:
            loss = sequence_nll(inst, p, cfg)
        tape.backward(loss, accumulate=False)
        first = float(loss.value) if first is None else first
        adam_step(tensors, {k: tape.gradient(t) for k, t in tensors.items()}, adam, 1e-3)
    final = float(sequence_nll(inst, p, cfg).value)
    assert final <= first - 0.5 * abs(first)
