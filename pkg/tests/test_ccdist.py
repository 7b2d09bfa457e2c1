import math

import numpy as np
import pytest

from heisenkern.ccdist import (
    HorizontalPath,
    estimate_distance,
    homogeneity_check,
    path_length,
    polygon_vertical_distance,
    vertical_distance,
    vertical_gain,
)
from heisenkern.errors import InputError
from heisenkern.group import GroupContext

H1 = GroupContext([1.0])
SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)


def test_square_gain():
    assert vertical_gain(HorizontalPath(H1, SQUARE)) == pytest.approx(1.0)


def test_reversed_square_gain():
    rev = SQUARE[::-1].copy()
    assert vertical_gain(HorizontalPath(H1, rev)) == pytest.approx(-1.0)


def test_gain_scales_with_alpha():
    assert vertical_gain(HorizontalPath(GroupContext([2.5]), SQUARE)) == pytest.approx(2.5)


def test_length_and_energy():
    length, energy = path_length(HorizontalPath(H1, SQUARE))
    assert length == pytest.approx(4.0)
    assert energy == pytest.approx(4 * 4.0)


def test_path_must_start_at_identity():
    with pytest.raises(InputError):
        HorizontalPath(H1, SQUARE + 1)


def test_csv_has_holonomy_column():
    lines = HorizontalPath(H1, SQUARE).to_csv().splitlines()
    assert lines[0] == "k,x1,y1,a"
    assert lines[-1].endswith(",1.0")


def test_polygon_limit():
    assert polygon_vertical_distance(1.0, 1.0, 64) == pytest.approx(vertical_distance(1.0, 1.0), rel=5e-4)
    assert polygon_vertical_distance(1.0, 1.0, 4) == pytest.approx(4.0)


def test_horizontal_target_is_straight_line():
    r = estimate_distance(GroupContext([1.0, 2.0]), [0.3, -0.4, 1.2, 0.0, 0.0], K=16)
    assert r.d_hat == pytest.approx(math.hypot(0.3, 0.4, 1.2), abs=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 4.0])
def test_vertical_target_matches_polygon(alpha):
    r = estimate_distance(GroupContext([alpha]), [0.0, 0.0, 1.0], K=32)
    assert r.d_hat == pytest.approx(polygon_vertical_distance(alpha, 1.0, 32), rel=1e-4)
    assert r.constraint_residual <= 1e-6


def test_refinement_decreases_estimate():
    d = [estimate_distance(H1, [0.0, 0.0, 1.0], K=K).d_hat for K in (8, 16, 32)]
    assert d[0] > d[1] > d[2] > vertical_distance(1.0, 1.0)


def test_identity_target():
    assert estimate_distance(H1, [0.0, 0.0, 0.0]).d_hat == 0.0


def test_homogeneity_and_symmetry():
    r = homogeneity_check(GroupContext([1.0, 2.0]), [0.5, 0.0, 0.0, 0.3, 0.4], K=32)
    assert r["pass"], r


def test_small_K_rejected():
    with pytest.raises(InputError):
        estimate_distance(H1, [0.0, 0.0, 1.0], K=4)
