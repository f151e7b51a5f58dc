import pytest

from echelon.geometry import centroid, distance, heading_difference, mean_heading


def test_distance_and_centroid():
    assert distance((0, 0), (3, 4)) == 5.0
    assert centroid([(0, 0), (2, 0), (1, 3)]) == (1.0, 1.0)


def test_heading_difference_wraps():
    assert heading_difference(350.0, 10.0) == pytest.approx(20.0)
    assert heading_difference(0.0, 180.0) == 180.0
    assert heading_difference(90.0, 90.0) == 0.0
    assert heading_difference(0.0, 359.0) == pytest.approx(1.0)


def test_mean_heading_wraps():
    assert mean_heading([350.0, 10.0]) == pytest.approx(0.0, abs=1e-9)
    assert mean_heading([90.0]) == pytest.approx(90.0)
    assert mean_heading([]) is None
    assert mean_heading(h for h in (350.0, 10.0)) == pytest.approx(0.0, abs=1e-9)
