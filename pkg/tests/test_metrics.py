import numpy as np
import pytest

from oracles import ade as ade_oracle, fde as fde_oracle
from stga.metrics import ade, displacement, fde


def test_perfect_prediction():
    t = np.random.default_rng(0).uniform(size=(3, 12, 2))
    assert ade(t, t) == 0.0 and fde(t, t) == 0.0


def test_three_four_five():
    assert ade([[0.0, 0.0]], [[3.0, 4.0]]) == 5.0
    assert fde([[0.0, 0.0]], [[3.0, 4.0]]) == 5.0


def test_offset_only_at_final_step():
    truth = np.stack([np.linspace(0, 1, 12), np.zeros(12)], axis=1)
    pred = truth.copy()
    pred[-1, 1] += 0.1
    assert fde(pred, truth) == pytest.approx(0.1, abs=1e-15)
    assert ade(pred, truth) == pytest.approx(0.1 / 12, abs=1e-15)


def test_against_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        steps = int(rng.integers(1, 13))
        p = rng.normal(size=(n, steps, 2))
        t = rng.normal(size=(n, steps, 2))
        assert abs(ade(p, t) - ade_oracle(p.tolist(), t.tolist())) < 1e-12
        assert abs(fde(p, t) - fde_oracle(p.tolist(), t.tolist())) < 1e-12


def test_mapping_input():
    p = {1: [[0.0, 0.0], [1.0, 1.0]], 2: [[0.0, 0.0], [0.0, 0.0]]}
    t = {2: [[0.0, 0.0], [0.0, 1.0]], 1: [[0.0, 0.0], [1.0, 1.0]]}
    assert ade(p, t) == pytest.approx(0.25)
    assert fde(p, t) == pytest.approx(0.5)


@pytest.mark.parametrize("pred,truth", [
    (np.zeros((12, 2)), np.zeros((11, 2))),
    (np.zeros((2, 12, 2)), np.zeros((3, 12, 2))),
    (np.zeros((12, 3)), np.zeros((12, 3))),
    ({1: np.zeros((12, 2))}, {2: np.zeros((12, 2))}),
    ({1: np.zeros((12, 2))}, {1: np.zeros((10, 2))}),
])
def test_mismatch_errors(pred, truth):
    with pytest.raises(ValueError):
        ade(pred, truth)
    with pytest.raises(ValueError):
        fde(pred, truth)


def test_empty_rejected():
    with pytest.raises(ValueError):
        ade({}, {})


def test_displacement_shape():
    assert displacement(np.zeros((4, 12, 2)), np.ones((4, 12, 2))).shape == (4, 12)
