import re

import numpy as np
import pytest

from stga.plot import PlotTrack, align_tracks, render_svg, write_svg
from stga.predictions import HEADER, format_predictions, parse_predictions
from stga.data import AnnotationParseError


def _track(pid=1):
    obs = np.stack([np.linspace(0.1, 0.3, 8), np.full(8, 0.5)], axis=1)
    fut = np.stack([np.linspace(0.32, 0.6, 12), np.full(12, 0.5)], axis=1)
    return PlotTrack(pid, obs, fut, fut + 0.01)


def test_one_track_three_polylines_no_circles():
    svg = render_svg([_track()])
    assert svg.count("<polyline") == 3 and svg.count("<circle") == 0
    assert 'class="future"' in svg and "stroke-dasharray" in svg


def test_obstacle_circles_have_lambda_radius():
    svg = render_svg([_track()], np.array([[0.2, 0.2], [0.7, 0.4]]), lam=0.35)
    radii = re.findall(r'<circle[^>]* r="([0-9.]+)"', svg)
    assert radii == ["0.35000", "0.35000"]


def test_deterministic_bytes(tmp_path):
    a = write_svg(tmp_path / "a.svg", [_track(1), _track(2)], np.array([[0.5, 0.5]]))
    b = write_svg(tmp_path / "b.svg", [_track(1), _track(2)], np.array([[0.5, 0.5]]))
    assert a.read_bytes() == b.read_bytes()


def test_y_axis_flipped():
    svg = render_svg([PlotTrack(1, np.array([[0.0, 0.0]]), np.array([[0.0, 1.0]]), np.array([[0.0, 1.0]]))])
    assert 'points="0.00000,1.00000"' in svg


def test_align_tracks_requires_matching_ids():
    obs = {1: np.zeros((8, 2)), 2: np.zeros((8, 2))}
    fut = {1: np.zeros((12, 2)), 2: np.zeros((12, 2))}
    assert [t.ped_id for t in align_tracks(obs, fut, {2: np.zeros((12, 2)), 1: np.zeros((12, 2))})] == [1, 2]
    with pytest.raises(KeyError):
        align_tracks(obs, fut, {1: np.zeros((12, 2))})
    with pytest.raises(KeyError):
        align_tracks(obs, fut, {1: np.zeros((12, 2)), 2: np.zeros((12, 2)), 3: np.zeros((12, 2))})


def test_predictions_round_trip():
    rng = np.random.default_rng(0)
    tracks = [("S", 0, 1, rng.uniform(size=(12, 2))), ("S", 0, 4, rng.uniform(size=(12, 2))),
              ("T", 30, 1, rng.uniform(size=(12, 2)))]
    text = format_predictions(tracks)
    assert text.startswith(HEADER)
    parsed = parse_predictions(text)
    assert set(parsed) == {("S", 0), ("T", 30)}
    for scene, start, pid, track in tracks:
        np.testing.assert_array_equal(parsed[(scene, start)][pid], track)


@pytest.mark.parametrize("text", ["S\t0\t1\t0\t0.1\n", "S\t0\t1\tzero\t0.1\t0.2\n", "S\t0\t1\t1\t0.1\t0.2\n"])
def test_bad_prediction_files(text):
    with pytest.raises(AnnotationParseError):
        parse_predictions(text)
