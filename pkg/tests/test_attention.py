import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import attention as attention_oracle
from stga.attention import EdgeHiddenBundle, attend, coefficients, embed_hidden, multi_node_attention
from stga.nn import ops
from stga.nn.gradcheck import grad_check
from stga.nn.tensor import constant, parameter

ALPHA = constant(np.array(0.2))


def _run(temporal, spatial, alpha=ALPHA):
    bundle = EdgeHiddenBundle(constant(temporal), [constant(h) for h in spatial])
    return multi_node_attention(bundle, alpha).H_vec.value


def test_embed_examples():
    np.testing.assert_allclose(embed_hidden(constant(np.zeros(5)), ALPHA).value, 0.2)
    out = embed_hidden(constant([1.0, -1.0]), ALPHA).value
    np.testing.assert_allclose(out, [0.7685, 0.2315], atol=1e-4)


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=16))
def test_embed_is_a_distribution(h):
    out = embed_hidden(constant(h), ALPHA).value
    assert np.all(out > 0) and abs(out.sum() - 1.0) < 1e-12


def test_coefficients_examples(rng):
    h = rng.normal(size=6)
    np.testing.assert_allclose(coefficients(constant(np.full(6, 1 / 6)), constant(h)).value, h / 6)
    np.testing.assert_array_equal(coefficients(constant(np.full(6, 1 / 6)), constant(np.zeros(6))).value, 0.0)
    with pytest.raises(ValueError):
        coefficients(constant(np.ones(3)), constant(np.ones(4)))


def test_no_spatial_edges_is_temporal_coefficient(rng):
    h = rng.normal(size=8)
    expected = coefficients(embed_hidden(constant(h), ALPHA), constant(h)).value
    np.testing.assert_array_equal(_run(h, []), expected)


def test_identical_edges_give_that_coefficient(rng):
    h = rng.normal(size=8)
    np.testing.assert_allclose(_run(h, [h]), _run(h, []), atol=1e-15)


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(77)
    for _ in range(100):
        H = int(rng.integers(1, 12))
        n_spatial = int(rng.integers(0, 5))
        alpha = float(rng.uniform(0.0, 0.5))
        temporal = rng.normal(size=H)
        spatial = [rng.normal(size=H) for _ in range(n_spatial)]
        got = _run(temporal, spatial, constant(np.array(alpha)))
        want = attention_oracle(temporal.tolist(), [s.tolist() for s in spatial], alpha)
        np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)


def test_three_spatial_edges_oracle(rng):
    vecs = [rng.normal(size=16) for _ in range(4)]
    want = attention_oracle(vecs[0].tolist(), [v.tolist() for v in vecs[1:]], 0.2)
    np.testing.assert_allclose(_run(vecs[0], vecs[1:]), want, atol=1e-12)


@given(st.integers(0, 10_000))
def test_permutation_invariance_and_bound(seed):
    rng = np.random.default_rng(seed)
    vecs = [rng.normal(scale=3, size=6) for _ in range(5)]
    perm = rng.permutation(4)
    a = _run(vecs[0], vecs[1:])
    b = _run(vecs[0], [vecs[1 + i] for i in perm])
    np.testing.assert_allclose(a, b, atol=1e-14)
    assert np.abs(a).max() <= max(np.abs(v).max() for v in vecs)


def test_depth_preserved_at_default_size(rng):
    assert _run(rng.normal(size=256), [rng.normal(size=256)]).shape == (256,)


def test_batched_attention_matches_per_node(rng):
    temporal = rng.normal(size=(3, 5))
    spatial = rng.normal(size=(4, 5))
    dst = np.array([0, 0, 2, 2])
    got = attend(constant(temporal), constant(spatial), dst, ALPHA).value
    np.testing.assert_allclose(got[0], _run(temporal[0], [spatial[0], spatial[1]]), atol=1e-15)
    np.testing.assert_allclose(got[1], _run(temporal[1], []), atol=1e-15)
    np.testing.assert_allclose(got[2], _run(temporal[2], [spatial[2], spatial[3]]), atol=1e-15)


def test_gradient_through_attention(rng):
    temporal = parameter(rng.normal(size=(2, 4)))
    spatial = parameter(rng.normal(size=(3, 4)))
    alpha = parameter(np.array(0.2))
    w = rng.normal(size=(2, 4))
    f = lambda: ops.weighted_sum(attend(temporal, spatial, np.array([0, 1, 1]), alpha), w)  # noqa: E731
    assert grad_check(f, [temporal, spatial, alpha]) < 1e-4
