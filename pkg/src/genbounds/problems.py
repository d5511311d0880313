"""Synthetic learning problems with finite-support data distributions.

Finite support makes the population risk and its gradient exact sums, so
every bound term can be evaluated without an inner Monte-Carlo layer.

The loss is the bounded sigmoid ``l(w, (x, y)) = s(-y <w, x>)``, optionally
plus ``reg/2 ||w||^2`` ("sigmoid_l2"). The regulariser is data independent,
so it cancels in ``R - R_S`` and in ``grad R - grad R_S``; it only serves to
make the loss co-dissipative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .stable_noise import RandomStream

LOSSES = ("sigmoid", "sigmoid_l2")

SIGMOID_D1_MAX = 0.25
SIGMOID_D2_MAX = 1.0 / (6.0 * math.sqrt(3.0))


def sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(u, dtype=float)))


def sigmoid_d1(u):
    s = sigmoid(u)
    return s * (1.0 - s)


def sigmoid_d2(u):
    s = sigmoid(u)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


@dataclass(frozen=True)
class ProblemConfig:
    dim: int = 2
    atoms: int = 16
    data_bound: float = 1.0
    loss: str = "sigmoid"
    reg: float = 0.0
    layout: str = "sphere"
    flip_prob: float = 0.1
    symmetric: bool = False
    weights: str = "uniform"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be >= 1")
        if int(self.atoms) != self.atoms or self.atoms < 2:
            raise ValueError("need at least 2 atoms")
        if not self.data_bound > 0:
            raise ValueError("data_bound must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.loss == "sigmoid_l2" and not self.reg > 0:
            raise ValueError("sigmoid_l2 needs reg > 0")
        if self.loss == "sigmoid" and self.reg != 0:
            raise ValueError("reg is only meaningful for sigmoid_l2")
        if self.layout not in ("sphere", "lattice"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if not 0.0 <= self.flip_prob <= 0.5:
            raise ValueError("flip_prob must lie in [0, 0.5]")
        if self.symmetric and self.atoms % 2:
            raise ValueError("symmetric problems need an even atom count")
        if self.weights not in ("uniform", "random"):
            raise ValueError(f"unknown weights {self.weights!r}")


@dataclass(frozen=True)
class LearningProblem:
    """Atoms ``(x_a, y_a)`` with probabilities ``counts_a / total``.

    Probabilities are kept as integer counts so that a dataset with matching
    counts reproduces the population weights bit for bit.
    """
    x: np.ndarray
    y: np.ndarray
    counts: np.ndarray
    data_bound: float
    loss: str = "sigmoid"
    reg: float = 0.0
    name: str = "problem"

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError("x must be (atoms, d) and y (atoms,)")
        if np.any(self.counts < 0) or self.counts.sum() <= 0:
            raise ValueError("atom counts must be non-negative with a positive total")
        if np.any(np.linalg.norm(self.x, axis=1) > self.data_bound * (1 + 1e-12)):
            raise ValueError("an atom exceeds the data bound")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probabilities do not sum to one")

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.x.shape[0]

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    # constants ---------------------------------------------------------
    @property
    def L(self) -> float:
        """Gradient bound of the sigmoid part (the whole loss when reg == 0)."""
        return self.data_bound * SIGMOID_D1_MAX

    @property
    def M(self) -> float:
        return self.data_bound ** 2 * SIGMOID_D2_MAX + self.reg

    @property
    def sigma(self) -> float:
        # loss deviations live in [0, 1]; Hoeffding's lemma
        return 0.5

    @property
    def Sigma(self) -> float:
        # |d_j l| <= max_a |x_aj| / 4, so each partial lives in an interval of
        # width max|x_j| / 2; worst coordinate, Hoeffding, times sqrt(d)
        width = np.max(np.abs(self.x), axis=0).max() * SIGMOID_D1_MAX * 2
        return float(math.sqrt(self.dim) * width / 2.0)

    @property
    def lipschitz(self) -> bool:
        return self.reg == 0.0

    def constants(self) -> dict:
        return {"L": self.L, "M": self.M, "sigma": self.sigma, "Sigma": self.Sigma}

    # losses ------------------------------------------------------------
    def margins(self, w: np.ndarray) -> np.ndarray:
        """``u = -y <w, x>`` for every atom; ``w`` may be (d,) or (npts, d)."""
        return -(np.asarray(w) @ self.x.T) * self.y

    def atom_losses(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = sigmoid(self.margins(w))
        if self.reg:
            out = out + 0.5 * self.reg * np.sum(w * w, axis=-1, keepdims=w.ndim > 1)
        return out

    def atom_gradients(self, w: np.ndarray) -> np.ndarray:
        """Per-atom gradients, shape (atoms, d) for a single ``w``."""
        w = np.asarray(w, dtype=float)
        g = (-self.y * sigmoid_d1(self.margins(w)))[:, None] * self.x
        if self.reg:
            g = g + self.reg * w
        return g

    def weighted_risk(self, w, weights) -> np.ndarray:
        return self.atom_losses(w) @ weights

    def weighted_gradient(self, w, weights) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        g = (weights * -self.y * sigmoid_d1(self.margins(w))) @ self.x
        if self.reg:
            g = g + self.reg * w
        return g

    def weighted_gradients(self, pts, weights) -> np.ndarray:
        """Gradients at many points, shape (npts, d)."""
        pts = np.asarray(pts, dtype=float)
        g = (weights * -self.y * sigmoid_d1(self.margins(pts))) @ self.x
        if self.reg:
            g = g + self.reg * pts
        return g


@dataclass(frozen=True)
class Dataset:
    """n i.i.d. atom draws, stored as atom indices."""
    indices: np.ndarray
    n_atoms: int
    seed: object = None
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("a dataset needs at least one entry")
        if idx.min() < 0 or idx.max() >= self.n_atoms:
            raise ValueError("dataset entry outside the atom set")
        counts = np.bincount(idx, minlength=self.n_atoms)
        object.__setattr__(self, "weights", counts / idx.size)

    @property
    def n(self) -> int:
        return int(np.asarray(self.indices).size)


def _sphere_atoms(k: int, d: int, bound: float, rng: RandomStream) -> np.ndarray:
    g = rng.standard_normal((k, d))
    return bound * g / np.linalg.norm(g, axis=1, keepdims=True)


def _lattice_atoms(k: int, d: int, bound: float, rng: RandomStream) -> np.ndarray:
    side = 2
    while side ** d < k + 1:
        side += 1
    axis = np.linspace(-1.0, 1.0, side)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)
    grid = grid[np.linalg.norm(grid, axis=1) > 0]
    pick = rng.choice(len(grid), size=k, replace=False)
    pts = grid[pick]
    return bound * pts / np.linalg.norm(pts, axis=1).max()


def make_problem(config: ProblemConfig, rng: RandomStream) -> LearningProblem:
    """Draw atoms once: points on the radius-B sphere (or a scaled lattice),
    labels from a planted linear rule with flip noise."""
    base = config.atoms // 2 if config.symmetric else config.atoms
    if config.layout == "sphere":
        x = _sphere_atoms(base, config.dim, config.data_bound, rng)
    else:
        x = _lattice_atoms(base, config.dim, config.data_bound, rng)
    w_star = rng.standard_normal(config.dim)
    y = np.where(x @ w_star >= 0, 1.0, -1.0)
    y = np.where(rng.uniform(size=base) < config.flip_prob, -y, y)
    if config.weights == "uniform":
        counts = np.ones(base, dtype=np.int64)
    else:
        counts = rng.integers(1, 9, size=base).astype(np.int64)
    if config.symmetric:
        # every atom paired with its label-flipped copy: the population loss
        # s(u) + s(-u) = 1 is constant, so grad R vanishes identically
        x = np.concatenate([x, x])
        y = np.concatenate([y, -y])
        counts = np.concatenate([counts, counts])
    return LearningProblem(x=x, y=y, counts=counts, data_bound=config.data_bound,
                           loss=config.loss, reg=config.reg)


def sample_dataset(problem: LearningProblem, n: int, rng: RandomStream, seed=None) -> Dataset:
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    idx = rng.choice(problem.n_atoms, size=int(n), p=problem.probs)
    return Dataset(indices=idx, n_atoms=problem.n_atoms, seed=seed)


def full_support_dataset(problem: LearningProblem, repeats: int = 1) -> Dataset:
    """Dataset whose empirical measure equals the population measure exactly."""
    idx = np.repeat(np.arange(problem.n_atoms), problem.counts * int(repeats))
    return Dataset(indices=idx, n_atoms=problem.n_atoms, seed="full-support")


def _check_w(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("w must be finite")
    return w


def _weights(problem: LearningProblem, dataset: Dataset | None) -> np.ndarray:
    if dataset is None:
        return problem.probs
    if dataset.n_atoms != problem.n_atoms:
        raise ValueError("dataset was drawn from a different problem")
    return dataset.weights


def risk(w, problem: LearningProblem, dataset: Dataset | None = None) -> float:
    """Empirical risk on ``dataset``, or the exact population risk if None."""
    return float(problem.weighted_risk(_check_w(w), _weights(problem, dataset)))


def risk_gradient(w, problem: LearningProblem, dataset: Dataset | None = None) -> np.ndarray:
    return problem.weighted_gradient(_check_w(w), _weights(problem, dataset))


class NotDissipative(ValueError):
    pass


@dataclass(frozen=True)
class DissipativityCertificate:
    m: float
    K: float
    probes: int
    radius: float
    empirical: bool = True


def dissipativity_probes(problem: LearningProblem, rng: RandomStream, probes: int, radius: float):
    """Inner products ``<grad l(w',z) - grad l(w,z), w - w'>`` and ``||w - w'||^2``
    for random pairs in the radius ball and random atoms."""
    d = problem.dim
    def ball(k):
        g = rng.standard_normal((k, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return radius * rng.uniform(size=(k, 1)) ** (1.0 / d) * g
    w, wp = ball(probes), ball(probes)
    z = rng.integers(0, problem.n_atoms, size=probes)
    x, y = problem.x[z], problem.y[z]
    u = -y * np.sum(w * x, axis=1)
    up = -y * np.sum(wp * x, axis=1)
    # grad l(w) = -y s'(u) x + reg w
    inner = (sigmoid_d1(up) - sigmoid_d1(u)) * (u - up) - problem.reg * np.sum((w - wp) ** 2, axis=1)
    r2 = np.sum((w - wp) ** 2, axis=1)
    return inner, r2


def estimate_dissipativity(problem: LearningProblem, rng: RandomStream, probes: int = 10_000,
                           radius: float = 1.0, k_max: float = 1.0, probe_data=None) -> DissipativityCertificate:
    """Empirical co-dissipativity certificate on probe pairs.

    Returns the largest ``m`` whose smallest admissible ``K`` (the max over
    probes of ``inner + m r^2``) stays within ``k_max``. This certifies the
    inequality on the probes only, not globally.
    """
    if probes < 1000:
        raise ValueError("use at least 1000 probes")
    inner, r2 = probe_data if probe_data is not None else dissipativity_probes(problem, rng, probes, radius)
    pos = r2 > 0
    if np.any(inner[~pos] > k_max):
        raise NotDissipative("not dissipative at probed scale")
    m = float(np.min((k_max - inner[pos]) / r2[pos])) if pos.any() else math.inf
    if not m > 0:
        raise NotDissipative("not dissipative at probed scale")
    K = max(0.0, float(np.max(inner + (m * r2 if math.isfinite(m) else 0.0))))
    return DissipativityCertificate(m=m, K=min(K, k_max), probes=len(inner), radius=radius)


def analytic_dissipativity(problem: LearningProblem) -> DissipativityCertificate:
    """Closed-form pair for sigmoid_l2: the sigmoid part contributes at most
    ``B r / 4``, so ``m = reg/2`` and ``K = B^2 / (32 reg)`` hold globally."""
    if not problem.reg > 0:
        raise NotDissipative("bounded-gradient loss without regulariser is not co-dissipative")
    return DissipativityCertificate(m=problem.reg / 2.0, K=problem.data_bound ** 2 / (32.0 * problem.reg),
                                    probes=0, radius=math.inf, empirical=False)
