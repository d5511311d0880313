"""Smoothed occupation measures, their divergence bounds and PAC-Bayes evaluators.

The occupation measure of a path on ``[0, T]`` is discretised as the uniform
law on the left-endpoint grid points ``k = 0..K-1`` (the same Riemann rule
as :func:`genbounds.dynamics.integral_gap`), and smoothed by an isotropic
Gaussian of standard deviation ``s``. Posterior and prior are the smoothed
occupation measures of ``W`` and ``Y`` respectively; pairing grid points by
time index is the coupling behind both divergence bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .bounds import BoundInputs, BoundReport, _report
from .dynamics import CoupledTrajectory, geometric_gap, integral_gap
from .problems import Dataset, LearningProblem
from .stable_noise import RandomStream

MIN_SMOOTHING = 1e-6
ORACLE_MAX_DIM = 2
ORACLE_MAX_SUPPORT = 200


@dataclass(frozen=True)
class SmoothedOccupation:
    support: np.ndarray
    s: float

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=float)
        if sup.ndim == 1:
            sup = sup[:, None]
        object.__setattr__(self, "support", sup)
        if not self.s > 0:
            raise ValueError("smoothing scale must be positive")
        if sup.shape[0] == 0:
            raise ValueError("empty support")

    @classmethod
    def posterior(cls, traj: CoupledTrajectory, s: float) -> "SmoothedOccupation":
        return cls(traj.W[:-1] if len(traj.W) > 1 else traj.W, s)

    @classmethod
    def prior(cls, traj: CoupledTrajectory, s: float) -> "SmoothedOccupation":
        return cls(traj.Y[:-1] if len(traj.Y) > 1 else traj.Y, s)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def logpdf(self, x) -> np.ndarray:
        """Log density of the equal-weight mixture at points ``x`` (npts, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        k, d = self.support.shape
        const = -math.log(k) - 0.5 * d * math.log(2 * math.pi * self.s ** 2)
        # direct differences: the expanded square loses digits when s is tiny
        chunk = max(1, 4_000_000 // (k * d))
        for i in range(0, x.shape[0], chunk):
            diff = x[i:i + chunk, None, :] - self.support[None, :, :]
            sq = np.einsum("ijk,ijk->ij", diff, diff)
            out[i:i + chunk] = logsumexp(-sq / (2 * self.s ** 2), axis=1) + const
        return out


def sample_smoothed(occ: SmoothedOccupation, rng: RandomStream, size: int | None = None) -> np.ndarray:
    """Uniform grid index plus an isotropic N(0, s^2) displacement."""
    n = 1 if size is None else int(size)
    idx = rng.integers(0, occ.support.shape[0], size=n)
    x = occ.support[idx] + occ.s * rng.standard_normal((n, occ.dim))
    return x[0] if size is None else x


def median_gap_scale(traj: CoupledTrajectory) -> float:
    """Default smoothing: median over grid points of ``||W_k - Y_k||`` (k >= 1),
    floored at ``MIN_SMOOTHING``."""
    gaps = traj.gaps[1:] if len(traj.gaps) > 1 else traj.gaps
    return max(float(np.median(gaps)), MIN_SMOOTHING)


def kl_upper_bound(traj: CoupledTrajectory, s: float) -> float:
    """KL(posterior || prior) <= (1/(2 s^2)) (1/T) int ||W - Y||^2 via the time coupling."""
    if not s > 0:
        raise ValueError("s must be positive")
    return integral_gap(traj) / (2.0 * s ** 2)


def renyi_upper_bound(traj: CoupledTrajectory, s: float, beta: float) -> float:
    """Renyi_beta(posterior || prior) <= beta sup ||W - Y||^2 / (2 s^2)."""
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    if not s > 0:
        raise ValueError("s must be positive")
    return beta * geometric_gap(traj) ** 2 / (2.0 * s ** 2)


# quadrature oracles ------------------------------------------------------

def _check_oracle(post: SmoothedOccupation, prior: SmoothedOccupation) -> bool:
    """Validate the pair; True when the two mixtures are identical."""
    if post.dim != prior.dim:
        raise ValueError("dimension mismatch")
    if post.dim > ORACLE_MAX_DIM:
        raise ValueError("quadrature oracles support d <= 2 only")
    if max(len(post.support), len(prior.support)) > ORACLE_MAX_SUPPORT:
        raise ValueError(f"support larger than {ORACLE_MAX_SUPPORT} points")
    if post.s != prior.s:
        raise ValueError("posterior and prior must share the smoothing scale")
    return post.support.shape == prior.support.shape and np.array_equal(post.support, prior.support)


MAX_NODES = 20_000_000


def _lattice_nodes(centres: np.ndarray, step: float, radius: float) -> np.ndarray:
    """Nodes of the lattice ``step * Z^d`` lying in blocks that cover every
    point within ``radius`` (sup norm) of some centre.

    Blocks have side ``>= radius``; the active ones are the blocks holding a
    centre plus their neighbours, so cost scales with the occupied region
    rather than the bounding box.
    """
    d = centres.shape[1]
    r = int(math.ceil(radius / step))
    blocks = np.unique(np.floor(centres / (r * step)).astype(np.int64), axis=0)
    nbr = np.stack(np.meshgrid(*[np.arange(-1, 2)] * d, indexing="ij"), -1).reshape(-1, d)
    blocks = np.unique((blocks[:, None, :] + nbr[None]).reshape(-1, d), axis=0)
    if blocks.shape[0] * r ** d > MAX_NODES:
        raise ValueError("quadrature grid too large; increase s or shorten the trajectory")
    inner = np.stack(np.meshgrid(*[np.arange(r)] * d, indexing="ij"), -1).reshape(-1, d)
    idx = (blocks[:, None, :] * r + inner[None]).reshape(-1, d)
    return idx * step


def _refine(integrate, s: float, d: int, tol: float):
    step = s / 4.0
    prev = integrate(step)
    for _ in range(4 if d == 1 else 1):
        step /= 2.0
        cur = integrate(step)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    return prev


def kl_oracle(post: SmoothedOccupation, prior: SmoothedOccupation, tol: float = 1e-4) -> float:
    """KL between the two Gaussian mixtures by a composite rule over the
    region within 8 s of either support, halving the spacing until two
    successive values agree within ``tol``. Densities are evaluated in log
    space so a vanishing prior density never produces inf."""
    if _check_oracle(post, prior):
        return 0.0
    s, d = post.s, post.dim
    centres = np.vstack([post.support, prior.support])

    def integrate(step):
        x = _lattice_nodes(centres, step, 8 * s)
        lp, lq = post.logpdf(x), prior.logpdf(x)
        return float(np.sum(np.exp(lp) * (lp - lq)) * step ** d)

    return max(0.0, _refine(integrate, s, d, tol))


def renyi_oracle(post: SmoothedOccupation, prior: SmoothedOccupation, beta: float, tol: float = 1e-4) -> float:
    """Renyi divergence of order ``beta`` by the same composite rule on
    ``p^beta q^(1-beta)``. That integrand is dominated by Gaussians centred
    at ``beta a - (beta - 1) b`` for support points a, b, so those tilted
    centres are covered as well."""
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    if _check_oracle(post, prior):
        return 0.0
    s, d = post.s, post.dim
    a, b = post.support, prior.support
    # q >= N(b_j)/|b| for every j, so pairing each a_i with any b_j gives a
    # dominating Gaussian at beta a_i - (beta - 1) b_j; use the time pairing
    # (when sizes agree) and the nearest prior point
    _, nearest = cKDTree(b).query(a)
    tilted = [beta * a - (beta - 1) * b[nearest]]
    if len(a) == len(b):
        tilted.append(beta * a - (beta - 1) * b)
    centres = np.vstack([a, b] + tilted)

    def integrate(step):
        x = _lattice_nodes(centres, step, 8 * s)
        lp, lq = post.logpdf(x), prior.logpdf(x)
        return float((logsumexp(beta * lp + (1 - beta) * lq) + d * math.log(step)) / (beta - 1))

    return max(0.0, _refine(integrate, s, d, tol))


def kl_monte_carlo(post: SmoothedOccupation, prior: SmoothedOccupation, draws: int, rng: RandomStream,
                   chunk: int = 200_000) -> tuple[float, float]:
    """Plain Monte-Carlo KL estimate and its standard error."""
    total, total2, done = 0.0, 0.0, 0
    while done < draws:
        m = min(chunk, draws - done)
        x = sample_smoothed(post, rng, m)
        r = post.logpdf(x) - prior.logpdf(x)
        total += r.sum()
        total2 += (r ** 2).sum()
        done += m
    mean = total / draws
    var = max(total2 / draws - mean ** 2, 0.0)
    return mean, math.sqrt(var / draws)


# PAC-Bayes evaluators ----------------------------------------------------

def _gap_at(problem: LearningProblem, dataset: Dataset, pts) -> np.ndarray:
    losses = problem.atom_losses(np.atleast_2d(pts))
    return losses @ problem.probs - losses @ dataset.weights


def thm5_terms(traj: CoupledTrajectory, inp: BoundInputs) -> dict:
    # C = sigma^2 / 2 from the sub-Gaussian moment step
    return {
        "divergence": integral_gap(traj) / inp.s ** 2,
        "confidence": math.log(1.0 / inp.zeta),
        "subgaussian": 0.5 * inp.sigma ** 2 * inp.lam ** 2 / inp.n,
    }


def eval_thm5(traj: CoupledTrajectory, problem: LearningProblem, dataset: Dataset, inp: BoundInputs,
              mc_draws: int, rng: RandomStream) -> BoundReport:
    """``lam E_post[R - R_S]`` (Monte-Carlo over fresh posterior draws) against
    the integral-gap bound."""
    if mc_draws < 1000:
        raise ValueError("use at least 1000 posterior draws")
    post = SmoothedOccupation.posterior(traj, inp.s)
    gaps = _gap_at(problem, dataset, sample_smoothed(post, rng, mc_draws))
    lhs = inp.lam * float(gaps.mean())
    se = inp.lam * float(gaps.std(ddof=1)) / math.sqrt(mc_draws)
    return _report("thm5", thm5_terms(traj, inp), inp, ["C=sigma^2/2", "grid-occupation"], lhs,
                   extra={"lhs_stderr": se, "kl_upper_bound": kl_upper_bound(traj, inp.s), "s": inp.s})


def thm6_terms(traj: CoupledTrajectory, inp: BoundInputs) -> dict:
    b = inp.beta
    return {
        "confidence": (2 * b - 1) / (b - 1) * math.log(2.0 / inp.zeta),
        "divergence": b / (2 * inp.s ** 2) * geometric_gap(traj) ** 2,
        "subgaussian": (b / (b - 1)) ** 2 * inp.lam ** 2 * inp.sigma ** 2 / (2 * inp.n),
    }


def eval_thm6(traj: CoupledTrajectory, problem: LearningProblem, dataset: Dataset, inp: BoundInputs,
              rng: RandomStream) -> BoundReport:
    """Disintegrated bound: a single posterior draw."""
    post = SmoothedOccupation.posterior(traj, inp.s)
    w = sample_smoothed(post, rng)
    b = inp.beta
    lhs = inp.lam * b / (b - 1) * float(_gap_at(problem, dataset, w)[0])
    return _report("thm6", thm6_terms(traj, inp), inp, ["grid-occupation"], lhs,
                   extra={"w": w.tolist(), "s": inp.s})


def optimize_lambda(divergence: float, zeta: float, n: int, sigma: float) -> float:
    """Minimiser over lam of ``(divergence + log(1/zeta) + sigma^2 lam^2 / (2n)) / lam``.

    Solved as the root of the stationarity condition in ``log lam``. The
    bound is stated for a fixed lam, so a data-dependent choice needs a
    union bound over a grid of candidates to stay valid.
    """
    a = divergence + math.log(1.0 / zeta)
    b = sigma ** 2 / (2.0 * n)
    if not (a > 0 and b > 0):
        raise ValueError("degenerate objective")
    def stationarity(x):
        return b * math.exp(x) - a * math.exp(-x)
    lo, hi = -50.0, 50.0
    x = brentq(stationarity, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(x)
