import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stga.graph import EdgeClass, Mode, build_snapshot, diff_snapshots, edge_feature

coord = st.floats(0, 1)
point = st.tuples(coord, coord)


def _edge_set(snap):
    return {(e.src, e.dst, e.cls, e.feature) for e in snap.spatial_edges}


def test_four_pedestrians_hh():
    pos = {i: (0.1 * i, 0.2) for i in range(4)}
    snap = build_snapshot(pos, {}, 0.5, Mode.HH)
    assert len(snap.hh_keys) == 12 and len(snap.ho_keys) == 0
    assert set(snap.incidence().values()) == {6}
    assert len(snap.temporal_edges) == 4


def test_single_pedestrian():
    snap = build_snapshot({7: (0.3, 0.3)}, {}, 0.5, Mode.HHO)
    assert snap.spatial_edges == [] and len(snap.temporal_edges) == 1
    assert snap.temporal_edges[0].feature == (0.3, 0.3)


def test_empty_snapshot():
    snap = build_snapshot({}, {1: (0.5, 0.5)}, 0.5)
    assert snap.n_peds == 0 and snap.spatial_edges == []


def test_obstacle_within_threshold():
    snap = build_snapshot({1: (0.2, 0.2)}, {9: (0.2, 0.6)}, 0.5, Mode.HHO)
    (edge,) = snap.spatial_edges
    assert edge.cls is EdgeClass.HO and edge.src.id == 9 and edge.dst.id == 1
    assert edge.feature == pytest.approx((0.0, 0.4))


def test_obstacle_gate_is_strict():
    # 0.25 and 0.75 are exact in binary, so the distance is exactly 0.5
    assert build_snapshot({1: (0.25, 0.25)}, {9: (0.25, 0.75)}, 0.5).ho_keys == ()
    assert len(build_snapshot({1: (0.25, 0.25)}, {9: (0.25, 0.7499)}, 0.5).ho_keys) == 1


def test_hh_mode_ignores_obstacles():
    snap = build_snapshot({1: (0.2, 0.2), 2: (0.3, 0.2)}, {9: (0.2, 0.21)}, 0.5, Mode.HH)
    assert snap.ho_keys == () and len(snap.hh_keys) == 2


def test_edge_feature_examples():
    assert edge_feature((0.5, 0.5), (0.2, 0.1)) == pytest.approx((0.3, 0.4))
    assert edge_feature((0.4, 0.4), (0.4, 0.4)) == (0.0, 0.0)


@given(point, point)
def test_edge_feature_antisymmetric(a, b):
    fx, fy = edge_feature(a, b)
    gx, gy = edge_feature(b, a)
    assert fx == -gx and fy == -gy


def test_hh_features_are_source_minus_destination():
    snap = build_snapshot({1: (0.1, 0.2), 2: (0.4, 0.8)}, {}, 0.5)
    feats = dict(zip(snap.hh_keys, map(tuple, snap.hh_features)))
    assert feats[(1, 2)] == pytest.approx((-0.3, -0.6))
    assert feats[(2, 1)] == pytest.approx((0.3, 0.6))


@given(st.lists(point, min_size=0, max_size=7), st.lists(point, max_size=3))
def test_counts_and_incidence(peds, obs):
    n = len(peds)
    snap = build_snapshot(dict(enumerate(peds)), dict(enumerate(obs)), 0.5)
    assert len(snap.hh_keys) == n * (n - 1)
    assert all(v == 2 * (n - 1) for v in snap.incidence().values())
    for s, d in snap.ho_keys:
        assert np.hypot(*np.subtract(peds[d], obs[s])) < 0.5


@given(st.lists(point, min_size=1, max_size=5), st.lists(point, min_size=1, max_size=3),
       st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_ho_edges_monotone_in_lambda(peds, obs, lam, extra):
    small = set(build_snapshot(dict(enumerate(peds)), dict(enumerate(obs)), lam).ho_keys)
    big = set(build_snapshot(dict(enumerate(peds)), dict(enumerate(obs)), lam + extra).ho_keys)
    assert small <= big


@given(st.lists(point, min_size=1, max_size=6, unique=True), st.randoms())
def test_permuting_input_order(peds, rnd):
    ids = list(range(len(peds)))
    shuffled = ids[:]
    rnd.shuffle(shuffled)
    obs = {0: (0.5, 0.5)}
    a = build_snapshot({i: peds[i] for i in ids}, obs, 0.5)
    b = build_snapshot({i: peds[i] for i in shuffled}, obs, 0.5)
    assert _edge_set(a) == _edge_set(b)


def test_non_positive_lambda_rejected():
    with pytest.raises(ValueError):
        build_snapshot({1: (0.1, 0.1)}, {}, 0.0)


def test_diff_snapshots():
    a = build_snapshot({1: (0.1, 0.1), 2: (0.2, 0.2)}, {})
    b = build_snapshot({1: (0.1, 0.1), 3: (0.3, 0.3)}, {})
    assert diff_snapshots(a, b) == ({3}, {2}, {1})
    assert diff_snapshots(a, a) == (set(), set(), {1, 2})
    assert diff_snapshots(None, b) == ({1, 3}, set(), set())


def test_to_json_round_trips_through_json():
    snap = build_snapshot({1: (0.2, 0.2), 2: (0.3, 0.2)}, {5: (0.2, 0.6)}, 0.5, time_step=3)
    doc = json.loads(json.dumps(snap.to_json()))
    assert doc["time_step"] == 3
    assert doc["hh_edge_count"] == 2 and doc["ho_edge_count"] == 2 and doc["temporal_edge_count"] == 2
    assert {n["kind"] for n in doc["nodes"]} == {"pedestrian", "obstacle"}
