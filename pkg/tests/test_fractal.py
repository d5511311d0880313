import numpy as np
import pytest
from hypothesis import given, strategies as st

from genbounds.dynamics import SdeConfig, integrate_coupled
from genbounds.fractal import (CoveringCurve, InsufficientResolution, box_dimension, covering_curve,
                               covering_number, dyadic_curve, estimate_box_dimension)
from genbounds.problems import ProblemConfig, make_problem, sample_dataset
from genbounds.stable_noise import StableSpec, levy_path_increments, stream

from oracles import naive_cells


def test_single_point_one_cell():
    for delta in (1e-6, 0.5, 100.0):
        assert covering_number([[0.3, -2.0]], delta) == 1


def test_segment_cells():
    pts = np.linspace(0, 1, 100)[:, None]
    assert 10 <= covering_number(pts, 0.1) <= 11


def test_lattice_square_cells():
    g = (np.arange(64) + 0.5) / 64
    pts = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    assert covering_number(pts, 1 / 8, anchor=[0.0, 0.0]) == 64


def test_rejects_bad_delta_and_empty():
    with pytest.raises(ValueError):
        covering_number([[0.0]], 0.0)
    with pytest.raises(ValueError):
        covering_number(np.empty((0, 2)), 0.1)


@given(st.integers(0, 10_000), st.floats(0.01, 2.0))
def test_matches_naive_enumeration(seed, delta):
    pts = stream(seed).standard_normal((60, 2))
    anchor = pts.min(axis=0)
    assert covering_number(pts, delta) == naive_cells(pts, delta, anchor)


@given(st.integers(0, 10_000))
def test_dyadic_counts_monotone(seed):
    pts = np.cumsum(stream(seed).standard_normal((500, 2)), axis=0)
    curve = dyadic_curve(pts, levels=10)
    assert np.all(np.diff(curve.counts) >= 0)


def test_non_nested_schedule_can_break_monotonicity():
    pts = np.array([0.0, 1.4, 1.6, 4.4, 4.6])[:, None]
    assert covering_number(pts, 1.0) < covering_number(pts, 1.5)


def test_segment_slope():
    pts = np.stack([np.linspace(0, 1, 20_000), np.zeros(20_000)], 1)
    est = box_dimension(pts, levels=12)
    assert abs(est.gamma_hat - 1) < 0.05
    assert est.r_squared > 0.99


def test_lattice_square_slope_until_resolution():
    g = (np.arange(256) + 0.5) / 256
    pts = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    curve = covering_curve(pts, 1.0, 1 / 64, 7)
    assert np.array_equal(curve.counts, 4 ** np.arange(7))
    slope = np.polyfit(np.log(1 / curve.deltas[1:]), np.log(curve.counts[1:]), 1)[0]
    assert abs(slope - 2) < 0.05


def test_repeated_point_dimension_zero():
    est = box_dimension(np.ones((50, 3)))
    assert est.gamma_hat == 0.0


def test_stable_path_dimension_range():
    spec = StableSpec(1.5, 1.0, 2)
    path = np.cumsum(levy_path_increments(spec, 1e-4, 10_000, stream(1)), axis=0)
    est = box_dimension(path)
    assert 1.2 <= est.gamma_hat <= 1.8
    assert 0 <= est.r_squared <= 1 and 0 <= est.gamma_hat <= 2.5


def test_curve_validation():
    with pytest.raises(ValueError):
        covering_curve([[0.0]], 1.0, 0.1, 3)
    with pytest.raises(ValueError):
        covering_curve([[0.0]], 0.1, 1.0, 5)
    with pytest.raises(ValueError):
        CoveringCurve(np.array([1.0, 2.0]), np.array([1, 1]), 2)
    with pytest.raises(ValueError):
        CoveringCurve(np.array([2.0, 1.0]), np.array([1, 0]), 2)


def test_insufficient_resolution():
    curve = CoveringCurve(np.array([8.0, 4.0, 2.0, 1.0]), np.array([1, 3, 3, 3]), 4)
    with pytest.raises(InsufficientResolution):
        estimate_box_dimension(curve)


@given(st.integers(0, 1000), st.floats(0.1, 50.0))
def test_scale_invariance(seed, c):
    pts = np.cumsum(stream(seed).standard_normal((400, 2)), axis=0)
    a = dyadic_curve(pts, levels=8)
    # powers of two keep every floor exact
    c = 2.0 ** round(np.log2(c))
    b = dyadic_curve(c * pts, levels=8)
    assert np.array_equal(a.counts, b.counts)
    assert estimate_box_dimension(a).gamma_hat == pytest.approx(estimate_box_dimension(b).gamma_hat, rel=1e-12)


def test_translation_invariance():
    # coordinates on a dyadic lattice so the shift is exact in floating point
    pts = np.round(np.cumsum(stream(3).standard_normal((1000, 2)), axis=0) * 2.0 ** 20) / 2.0 ** 20
    shift = np.array([2.0 ** 5, -2.0 ** 3])
    assert box_dimension(pts).gamma_hat == box_dimension(pts + shift).gamma_hat


@given(st.integers(0, 1000))
def test_adding_points_never_decreases_counts(seed):
    rng = stream(seed)
    pts = rng.standard_normal((200, 2))
    extra = np.vstack([pts, rng.standard_normal((50, 2)) * 0.5])
    anchor = extra.min(axis=0) - 0.1
    for delta in (0.05, 0.2, 1.0):
        assert covering_number(extra, delta, anchor) >= covering_number(pts, delta, anchor)


def test_expected_paths_bounded_by_alpha():
    problem = make_problem(ProblemConfig(dim=2), stream(0))
    for alpha in (1.3, 1.7, 2.0):
        gam = []
        for r in range(20):
            rng = stream(4, r)
            ds = sample_dataset(problem, 64, rng)
            traj = integrate_coupled(problem, ds, SdeConfig(1e-3, 1.0, StableSpec(alpha, 1.0, 2)), rng)
            gam.append(box_dimension(traj.Y).gamma_hat)
        assert np.median(gam) <= alpha + 0.3


def test_estimate_json_shape():
    d = box_dimension(np.linspace(0, 1, 5000)[:, None]).to_dict()
    assert set(d) == {"gamma_hat", "window", "r2"}
