"""Coupled empirical / expected dynamics driven by one alpha-stable noise path.

Both paths start from the same point and receive the *same* increments:

    W_{k+1} = W_k - h grad R_S(W_k) + dL_k
    Y_{k+1} = Y_k - h grad R(Y_k)   + dL_k

so the difference V = W - Y only feels the drift mismatch.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .problems import Dataset, LearningProblem, sigmoid_d1
from .stable_noise import RandomStream, StableSpec, levy_path_increments

STEP_SAFETY = 0.01


class NonFiniteState(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


@dataclass(frozen=True)
class SdeConfig:
    step_h: float
    horizon_T: float
    noise: StableSpec
    init_z0: object = "zero"
    seed: object = None
    enforce_step: bool = True

    def __post_init__(self):
        if not self.step_h > 0 or not self.horizon_T > 0:
            raise ValueError("step_h and horizon_T must be positive")
        z0 = self.init_z0
        if isinstance(z0, str):
            if z0 != "zero":
                raise ValueError(f"unknown init_z0 {z0!r}")
        elif isinstance(z0, dict):
            if set(z0) != {"gaussian"} or not z0["gaussian"] > 0:
                raise ValueError("init_z0 dict must be {'gaussian': radius > 0}")
        elif len(z0) != self.noise.dim:
            raise ValueError("init_z0 vector has the wrong dimension")
        elif not all(math.isfinite(float(v)) for v in z0):
            raise ValueError("init_z0 must be finite")

    @property
    def n_steps(self) -> int:
        ratio = self.horizon_T / self.step_h
        k = round(ratio)
        return int(k) if abs(ratio - k) < 1e-9 * max(1.0, ratio) else int(math.ceil(ratio))

    @property
    def effective_T(self) -> float:
        """Horizon actually simulated (T rounded up to a whole number of steps)."""
        return self.n_steps * self.step_h


@dataclass(frozen=True)
class CoupledTrajectory:
    times: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    increments: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.times)
        if not (len(self.W) == len(self.Y) == k == len(self.increments) + 1):
            raise ValueError("inconsistent trajectory lengths")
        if not np.array_equal(self.W[0], self.Y[0]):
            raise ValueError("paths must share their initial point")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.Y))):
            raise ValueError("trajectory contains non-finite states")

    @property
    def step_h(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def V(self) -> np.ndarray:
        return self.W - self.Y

    @property
    def gaps(self) -> np.ndarray:
        return np.linalg.norm(self.W - self.Y, axis=1)

    @property
    def dim(self) -> int:
        return self.W.shape[1]


def initial_point(config: SdeConfig, rng: RandomStream) -> np.ndarray:
    z0 = config.init_z0
    d = config.noise.dim
    if isinstance(z0, str):
        return np.zeros(d)
    if isinstance(z0, dict):
        return z0["gaussian"] * rng.standard_normal(d)
    return np.asarray(z0, dtype=float).copy()


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments (same path, coarser grid)."""
    k, d = increments.shape
    if k % factor:
        raise ValueError("increment count is not a multiple of the factor")
    return increments.reshape(k // factor, factor, d).sum(axis=1)


def integrate_coupled(problem: LearningProblem, dataset: Dataset, config: SdeConfig,
                      rng: RandomStream, increments: np.ndarray | None = None,
                      z0: np.ndarray | None = None) -> CoupledTrajectory:
    """Euler-Maruyama for the coupled pair with left-endpoint drift.

    ``rng`` supplies the initial point (if random) then the increments;
    passing ``increments`` (and optionally ``z0``) reuses a given noise path.
    """
    if config.noise.dim != problem.dim:
        raise ValueError("noise dimension differs from the problem dimension")
    if dataset.n_atoms != problem.n_atoms:
        raise ValueError("dataset was drawn from a different problem")
    h = config.step_h
    if config.enforce_step and h > STEP_SAFETY * min(1.0, 1.0 / problem.M):
        raise ValueError(f"step_h={h} exceeds 0.01*min(1, 1/M); set enforce_step=False to override")
    K = config.n_steps
    start = initial_point(config, rng) if z0 is None else np.asarray(z0, dtype=float)
    if increments is None:
        increments = levy_path_increments(config.noise, h, K, rng)
    elif increments.shape != (K, problem.dim):
        raise ValueError(f"expected increments of shape {(K, problem.dim)}, got {increments.shape}")

    emp_w, pop_w = dataset.weights, problem.probs
    W = np.empty((K + 1, problem.dim))
    Y = np.empty((K + 1, problem.dim))
    W[0] = start
    Y[0] = start
    w, y = W[0], Y[0]
    with np.errstate(invalid="ignore", over="ignore"):
        for k in range(K):
            w = w - h * problem.weighted_gradient(w, emp_w) + increments[k]
            y = y - h * problem.weighted_gradient(y, pop_w) + increments[k]
            W[k + 1] = w
            Y[k + 1] = y
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(Y))):
        bad = np.flatnonzero(~(np.isfinite(W).all(1) & np.isfinite(Y).all(1)))[0]
        raise NonFiniteState(int(bad))
    meta = {"dataset_seed": _jsonable(dataset.seed), "noise_seed": _jsonable(config.seed),
            "problem": problem.name, "alpha": config.noise.alpha, "scale": config.noise.scale,
            "step_h": h, "T": K * h}
    return CoupledTrajectory(times=np.arange(K + 1) * h, W=W, Y=Y, increments=increments, meta=meta)


def refinement_study(problem: LearningProblem, dataset: Dataset, config: SdeConfig,
                     rng: RandomStream, levels: int = 3) -> dict:
    """Run the pair at ``h, h/2, ..., h/2^(levels-1)`` on one shared fine noise path.

    Returns, for every level but the finest (the reference), the grid-sup
    distance of ``V = W - Y`` and of ``W`` to the reference sampled at the
    coarse grid points.
    """
    factor = 2 ** (levels - 1)
    fine = replace(config, step_h=config.step_h / factor)
    z0 = initial_point(config, rng)
    fine_inc = levy_path_increments(config.noise, fine.step_h, config.n_steps * factor, rng)
    runs = []
    for j in range(levels):
        cfg = replace(config, step_h=config.step_h / 2 ** j)
        inc = coarsen_increments(fine_inc, factor // 2 ** j)
        runs.append(integrate_coupled(problem, dataset, cfg, rng, increments=inc, z0=z0))
    ref = runs[-1]
    out = {"h": [], "defect_V": [], "defect_W": [], "runs": runs}
    for j, run in enumerate(runs[:-1]):
        stride = factor // 2 ** j
        out["h"].append(run.step_h)
        out["defect_V"].append(float(np.linalg.norm(run.V - ref.V[::stride], axis=1).max()))
        out["defect_W"].append(float(np.linalg.norm(run.W - ref.W[::stride], axis=1).max()))
    return out


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


# trajectory geometry ---------------------------------------------------

def geometric_gap(traj: CoupledTrajectory) -> float:
    """``max_k ||W_k - Y_k||`` (grid surrogate for the sup over [0, T])."""
    return float(traj.gaps.max())


def integral_gap(traj: CoupledTrajectory) -> float:
    """Time-averaged squared gap, left-endpoint rule: ``(1/T) sum_k h ||V_k||^2``."""
    g2 = traj.gaps[:-1] ** 2
    if g2.size == 0:
        return 0.0
    return float(np.sum(np.diff(traj.times) * g2) / traj.T)


def hausdorff_distance(A, B) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ValueError("Hausdorff distance of an empty set")
    da, _ = cKDTree(B).query(A)
    db, _ = cKDTree(A).query(B)
    return float(max(da.max(), db.max()))


def worst_case_gap(traj: CoupledTrajectory, problem: LearningProblem, dataset: Dataset) -> float:
    """``max_k R(W_k) - R_S(W_k)`` with both risks exact."""
    losses = problem.atom_losses(traj.W)
    return float(np.max(losses @ problem.probs - losses @ dataset.weights))


def gradient_deviation(points, problem: LearningProblem, dataset: Dataset) -> np.ndarray:
    """``||grad R_S(w) - grad R(w)||`` at each point."""
    diff = dataset.weights - problem.probs
    # the regulariser cancels in the difference
    d1 = sigmoid_d1(problem.margins(np.asarray(points, dtype=float)))
    g = (diff * -problem.y * d1) @ problem.x
    return np.linalg.norm(g, axis=1)


def g_nabla(traj: CoupledTrajectory, problem: LearningProblem, dataset: Dataset) -> float:
    """Worst gradient deviation over the grid points of the expected path Y."""
    return float(gradient_deviation(traj.Y, problem, dataset).max())


# export ------------------------------------------------------------------

def save_trajectory(traj: CoupledTrajectory, path, extra_meta: dict | None = None) -> Path:
    """Write ``<path>`` (k, t, W_*, Y_*), ``<stem>.increments.csv`` and a JSON
    sidecar ``<stem>.json``. Floats use ``repr`` so the round trip is exact."""
    path = Path(path)
    d = traj.dim
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "t"] + [f"W_{i+1}" for i in range(d)] + [f"Y_{i+1}" for i in range(d)])
        for k in range(len(traj.times)):
            wr.writerow([k, repr(float(traj.times[k]))] + [repr(float(v)) for v in traj.W[k]]
                        + [repr(float(v)) for v in traj.Y[k]])
    with _increments_path(path).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k"] + [f"dL_{i+1}" for i in range(d)])
        for k, row in enumerate(traj.increments):
            wr.writerow([k] + [repr(float(v)) for v in row])
    meta = dict(traj.meta)
    if extra_meta:
        meta.update(extra_meta)
    meta.update({"dim": d, "steps": len(traj.increments)})
    _sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def _increments_path(path: Path) -> Path:
    return path.with_name(path.stem + ".increments.csv")


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.stem + ".json")


def load_trajectory(path) -> CoupledTrajectory:
    path = Path(path)
    with path.open() as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = (len(header) - 2) // 2
    data = np.array([[float(v) for v in r[1:]] for r in body])
    times, W, Y = data[:, 0], data[:, 1:1 + d], data[:, 1 + d:1 + 2 * d]
    inc_path = _increments_path(path)
    if inc_path.exists():
        with inc_path.open() as fh:
            inc_rows = list(csv.reader(fh))[1:]
        inc = np.array([[float(v) for v in r[1:]] for r in inc_rows]).reshape(-1, d)
    else:
        # reconstructed increments are not bit-exact; only geometry is needed downstream
        inc = np.zeros((len(times) - 1, d))
    side = _sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    return CoupledTrajectory(times=times, W=W, Y=Y, increments=inc, meta=meta)
