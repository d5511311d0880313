import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genbounds.bounds import BoundInputs
from genbounds.dynamics import CoupledTrajectory, SdeConfig, integral_gap, integrate_coupled
from genbounds.pacbayes import (SmoothedOccupation, eval_thm5, eval_thm6, kl_monte_carlo, kl_oracle,
                                kl_upper_bound, median_gap_scale, optimize_lambda, renyi_oracle,
                                renyi_upper_bound, sample_smoothed, thm5_terms, thm6_terms)
from genbounds.problems import ProblemConfig, full_support_dataset, make_problem, sample_dataset
from genbounds.stable_noise import StableSpec, stream


def traj_from(W, Y, h=0.1):
    W, Y = np.asarray(W, float), np.asarray(Y, float)
    if W.ndim == 1:
        W, Y = W[:, None], Y[:, None]
    k = len(W)
    return CoupledTrajectory(times=np.arange(k) * h, W=W, Y=Y, increments=np.zeros((k - 1, W.shape[1])))


def short_run(seed, d=1, points=60, n=16, alpha=1.6):
    # on the d=1 sphere only two inputs exist and the drift mismatch often vanishes
    layout = "lattice" if d == 1 else "sphere"
    problem = make_problem(ProblemConfig(dim=d, layout=layout, weights="random"), stream(seed, 0))
    rng = stream(seed, 1)
    ds = sample_dataset(problem, n, rng)
    h = 1e-2
    traj = integrate_coupled(problem, ds, SdeConfig(h, h * points, StableSpec(alpha, 1.0, d)), rng)
    return problem, ds, traj


def inputs(problem, n, **kw):
    return BoundInputs.from_problem(problem, n=n, zeta=0.1, gamma=1.0, T=1.0, **kw)


# sampling

def test_sampling_degenerate_smoothing():
    occ = SmoothedOccupation(np.array([[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5]]), 1e-9)
    x = sample_smoothed(occ, stream(0), 1000)
    dist = np.min(np.linalg.norm(x[:, None, :] - occ.support[None], axis=2), axis=1)
    assert dist.max() < 1e-6


def test_sampling_single_point_variance():
    x = sample_smoothed(SmoothedOccupation(np.zeros((1, 3)), 1.0), stream(1), 100_000)
    assert np.all(np.abs(x.var(axis=0) - 1) < 0.05)


def test_sampling_uniform_weights():
    occ = SmoothedOccupation(np.array([[0.0, 0.0], [1.0, 0.0]]), 0.01)
    x = sample_smoothed(occ, stream(2), 100_000)
    frac = np.mean(x[:, 0] > 0.5)
    assert abs(frac - 0.5) < 0.01


def test_single_draw_is_a_vector():
    occ = SmoothedOccupation(np.zeros((4, 2)), 0.5)
    assert sample_smoothed(occ, stream(3)).shape == (2,)


def test_occupation_validation():
    with pytest.raises(ValueError):
        SmoothedOccupation(np.zeros((2, 1)), 0.0)
    with pytest.raises(ValueError):
        SmoothedOccupation(np.empty((0, 2)), 1.0)


def test_logpdf_matches_scipy_mixture():
    from scipy.stats import multivariate_normal
    sup = stream(4).standard_normal((5, 2))
    occ = SmoothedOccupation(sup, 0.7)
    x = stream(5).standard_normal((10, 2))
    want = np.log(np.mean([multivariate_normal(c, 0.49 * np.eye(2)).pdf(x) for c in sup], axis=0))
    assert np.allclose(occ.logpdf(x), want, rtol=1e-12, atol=1e-12)


def test_occupation_uses_left_endpoints():
    W = np.arange(5.0)
    traj = traj_from(W, W * 0.5)
    assert np.array_equal(SmoothedOccupation.posterior(traj, 1.0).support[:, 0], W[:-1])
    assert np.array_equal(SmoothedOccupation.prior(traj, 1.0).support[:, 0], 0.5 * W[:-1])


# upper bounds

def test_upper_bounds_trivial_run():
    Z = np.cumsum(stream(6).standard_normal((30, 2)), axis=0)
    traj = traj_from(Z, Z)
    assert kl_upper_bound(traj, 0.3) == 0.0
    assert renyi_upper_bound(traj, 0.3, 2.0) == 0.0


def test_upper_bounds_constant_gap():
    c, s = 0.7, 0.4
    Y = np.cumsum(stream(7).standard_normal((50, 1)), axis=0)
    W = Y + c
    W[0] = Y[0]
    traj = traj_from(W, Y)
    # the first grid point carries zero gap; the rest carry c
    assert kl_upper_bound(traj, s) == pytest.approx(c ** 2 * 48 / 49 / (2 * s ** 2), rel=1e-12)
    W = Y + c
    traj = traj_from(np.vstack([Y[:1], W]), np.vstack([Y[:1], Y]))
    assert renyi_upper_bound(traj, s, 3.0) == pytest.approx(3 * c ** 2 / (2 * s ** 2), rel=1e-12)


def test_renyi_bound_beta_limit_dominates_kl_bound():
    _, _, traj = short_run(8)
    s = 0.05
    near_one = renyi_upper_bound(traj, s, 1 + 1e-12)
    assert near_one == pytest.approx(np.max(traj.gaps) ** 2 / (2 * s ** 2), rel=1e-10)
    assert near_one >= kl_upper_bound(traj, s)
    with pytest.raises(ValueError):
        renyi_upper_bound(traj, s, 1.0)


@given(st.floats(0.01, 10.0))
def test_upper_bounds_scale_inverse_square(s):
    _, _, traj = short_run(9)
    assert kl_upper_bound(traj, 2 * s) == pytest.approx(kl_upper_bound(traj, s) / 4, rel=1e-14)
    assert renyi_upper_bound(traj, 2 * s, 2.0) == pytest.approx(renyi_upper_bound(traj, s, 2.0) / 4, rel=1e-14)


def test_median_gap_scale_floor():
    Z = np.zeros((10, 1))
    assert median_gap_scale(traj_from(Z, Z)) == 1e-6


# oracles

def test_oracles_identical_mixtures():
    occ = SmoothedOccupation(stream(10).standard_normal((20, 2)), 0.3)
    assert abs(kl_oracle(occ, occ)) < 1e-6
    assert abs(renyi_oracle(occ, occ, 2.0)) < 1e-6


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("delta,s", [(0.5, 1.0), (1.0, 0.3), (0.05, 0.1)])
def test_oracles_gaussian_equality_case(d, delta, s):
    a = np.zeros((1, d))
    b = a.copy()
    b[0, 0] = delta
    post, prior = SmoothedOccupation(a, s), SmoothedOccupation(b, s)
    exact = delta ** 2 / (2 * s ** 2)
    assert kl_oracle(post, prior) == pytest.approx(exact, abs=1e-6, rel=1e-6)
    for beta in (1.5, 2.0, 4.0):
        assert renyi_oracle(post, prior, beta) == pytest.approx(beta * exact, abs=1e-6, rel=1e-6)


def test_oracle_input_checks():
    a = SmoothedOccupation(np.zeros((3, 3)), 1.0)
    with pytest.raises(ValueError):
        kl_oracle(a, a)
    with pytest.raises(ValueError):
        kl_oracle(SmoothedOccupation(np.zeros((201, 1)), 1.0), SmoothedOccupation(np.zeros((2, 1)), 1.0))
    with pytest.raises(ValueError):
        kl_oracle(SmoothedOccupation(np.zeros((2, 1)), 1.0), SmoothedOccupation(np.zeros((2, 1)), 2.0))


@pytest.mark.parametrize("d,k,seed", [(1, 20, 0), (2, 8, 1)])
def test_kl_oracle_matches_monte_carlo(d, k, seed):
    rng = stream(11, seed)
    post = SmoothedOccupation(rng.standard_normal((k, d)), 0.5)
    prior = SmoothedOccupation(post.support + 0.4 * rng.standard_normal((k, d)), 0.5)
    mc, se = kl_monte_carlo(post, prior, 10 ** 7, stream(12, seed))
    assert se < 5e-4
    assert abs(kl_oracle(post, prior) - mc) < 1e-3


def test_renyi_tends_to_kl():
    rng = stream(13)
    post = SmoothedOccupation(rng.standard_normal((15, 1)), 0.4)
    prior = SmoothedOccupation(post.support + 0.3, 0.4)
    assert abs(renyi_oracle(post, prior, 1 + 1e-4) - kl_oracle(post, prior)) < 1e-3


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_divergences_nonnegative(seed):
    rng = stream(14, seed)
    post = SmoothedOccupation(rng.standard_normal((10, 1)), 0.5)
    prior = SmoothedOccupation(rng.standard_normal((10, 1)), 0.5)
    assert kl_oracle(post, prior) >= 0
    assert renyi_oracle(post, prior, 2.0) >= 0


def test_dominance_on_fifty_trajectories():
    for case in range(50):
        _, _, traj = short_run(100 + case, points=100)
        s = median_gap_scale(traj)
        post, prior = SmoothedOccupation.posterior(traj, s), SmoothedOccupation.prior(traj, s)
        assert kl_oracle(post, prior) <= kl_upper_bound(traj, s) + 1e-4, case
        assert renyi_oracle(post, prior, 2.0) <= renyi_upper_bound(traj, s, 2.0) + 1e-4, case


def test_dominance_in_two_dimensions():
    for case in range(5):
        _, _, traj = short_run(200 + case, d=2, points=40)
        s = median_gap_scale(traj)
        post, prior = SmoothedOccupation.posterior(traj, s), SmoothedOccupation.prior(traj, s)
        assert kl_oracle(post, prior) <= kl_upper_bound(traj, s) + 1e-4
        assert renyi_oracle(post, prior, 2.0) <= renyi_upper_bound(traj, s, 2.0) + 1e-4


def test_oracle_decreases_in_s():
    for case in range(5):
        _, _, traj = short_run(300 + case, points=80)
        s = median_gap_scale(traj)
        vals = [kl_oracle(SmoothedOccupation.posterior(traj, t), SmoothedOccupation.prior(traj, t))
                for t in (s, 2 * s)]
        if np.max(traj.gaps) > 0:
            assert vals[1] < vals[0]
        else:
            assert vals == [0.0, 0.0]


# lambda

@given(st.floats(0.0, 100.0), st.floats(1e-6, 0.99), st.integers(1, 10 ** 7), st.floats(0.01, 10.0))
def test_optimize_lambda_closed_form(div, zeta, n, sigma):
    a = div + math.log(1 / zeta)
    b = sigma ** 2 / (2 * n)
    assert optimize_lambda(div, zeta, n, sigma) == pytest.approx(math.sqrt(a / b), rel=1e-8)


def test_optimize_lambda_degenerate():
    with pytest.raises(ValueError):
        optimize_lambda(0.0, 0.5, 10, 0.0)


# theorem evaluators

def test_thm5_trivial_run():
    problem = make_problem(ProblemConfig(dim=2), stream(15))
    ds = full_support_dataset(problem)
    traj = integrate_coupled(problem, ds, SdeConfig(1e-3, 0.2, StableSpec(1.5, 1.0, 2)), stream(16))
    n, lam = 100, 3.0
    rep = eval_thm5(traj, problem, ds, inputs(problem, n, s=0.1, lam=lam), 1000, stream(17))
    assert rep.lhs == pytest.approx(0.0, abs=1e-14)
    assert rep.rhs == pytest.approx(math.log(10) + problem.sigma ** 2 * lam ** 2 / (2 * n), rel=1e-14)
    assert rep.holds and "C=sigma^2/2" in rep.caveats


def test_thm5_rhs_formula():
    problem, ds, traj = short_run(18, d=2)
    inp = inputs(problem, 256, s=0.2, lam=16.0)
    t = thm5_terms(traj, inp)
    assert t["divergence"] == pytest.approx(integral_gap(traj) / 0.04, rel=1e-14)
    assert t["subgaussian"] == pytest.approx(problem.sigma ** 2 / 2, rel=1e-14)
    rep = eval_thm5(traj, problem, ds, inp, 5000, stream(19))
    assert rep.extra["lhs_stderr"] > 0
    with pytest.raises(ValueError):
        eval_thm5(traj, problem, ds, inp, 999, stream(19))


def test_thm5_lhs_bounded_under_sqrt_n():
    vals = []
    for n in (64, 1024):
        problem, ds, traj = short_run(20, d=2, n=n)
        rep = eval_thm5(traj, problem, ds, inputs(problem, n, s=0.1, lam=math.sqrt(n)), 4000, stream(21))
        vals.append(abs(rep.lhs))
    assert max(vals) < 2.0


def test_thm6_trivial_run():
    problem = make_problem(ProblemConfig(dim=2), stream(22))
    ds = full_support_dataset(problem)
    traj = integrate_coupled(problem, ds, SdeConfig(1e-3, 0.2, StableSpec(1.5, 1.0, 2)), stream(23))
    rep = eval_thm6(traj, problem, ds, inputs(problem, 100, s=0.1, lam=10.0, beta=2.0), stream(24))
    assert abs(rep.lhs) < 1e-14
    assert rep.rhs >= 3 * math.log(20) > 0
    assert len(rep.extra["w"]) == 2


def test_thm6_beta_limits():
    problem, ds, traj = short_run(25, d=2)
    s, lam, n = 0.3, 5.0, 128
    g2 = np.max(traj.gaps) ** 2
    for beta in (1e6, 1e9):
        t = thm6_terms(traj, inputs(problem, n, s=s, lam=lam, beta=beta))
        assert t["confidence"] / math.log(20) == pytest.approx(2, rel=1e-5)
        assert t["divergence"] / (beta * g2 / (2 * s ** 2)) == pytest.approx(1, rel=1e-12)
        assert t["subgaussian"] / (lam ** 2 * problem.sigma ** 2 / (2 * n)) == pytest.approx(1, rel=1e-5)


def test_thm6_lhs_prefactor():
    problem, ds, traj = short_run(26, d=2)
    inp = inputs(problem, 128, s=0.3, lam=5.0, beta=3.0)
    rep = eval_thm6(traj, problem, ds, inp, stream(27))
    w = np.array(rep.extra["w"])
    losses = problem.atom_losses(w[None])
    gap = float((losses @ problem.probs - losses @ ds.weights)[0])
    assert rep.lhs == pytest.approx(5.0 * 1.5 * gap, rel=1e-12)
