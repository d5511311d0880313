"""Symmetric alpha-stable variates and discretised Levy-path increments.

Parameterisation: the characteristic function of a draw is
``exp(-scale**alpha * |xi|**alpha)``, so ``alpha = 2`` is N(0, 2 scale^2).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

RandomStream = np.random.Generator

HILL_FRACTION = 0.01
MIN_TAIL_SAMPLES = 1000


def stream(master_seed: int, *key: int) -> RandomStream:
    """Independent generator for ``(master_seed, key...)``.

    Streams with distinct keys are statistically independent (SeedSequence
    spawn keys), so workers can each own one without coordination.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class StableSpec:
    alpha: float
    scale: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0) or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not (self.scale > 0.0) or not math.isfinite(self.scale):
            raise ValueError(f"scale must be positive, got {self.scale}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")

    @property
    def is_gaussian(self) -> bool:
        return self.alpha == 2.0


def _cms_unit(alpha: float, size, rng: RandomStream) -> np.ndarray:
    # Chambers-Mallows-Stuck, symmetric case.
    v = rng.uniform(-np.pi / 2, np.pi / 2, size)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(v)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos(v - alpha * v) / w) ** ((1.0 - alpha) / alpha))


def _positive_stable(a: float, size, rng: RandomStream) -> np.ndarray:
    """Kanter's representation: Laplace transform ``exp(-u**a)``, 0 < a <= 1."""
    if a == 1.0:
        return np.ones(size)
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    return (np.sin(a * u) / np.sin(u) ** (1.0 / a)
            * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a))


def sample_stable_scalar(spec: StableSpec, rng: RandomStream, size=None):
    """Symmetric stable draw(s) with the declared scale.

    ``size=None`` returns a Python float, otherwise an array of that shape.
    """
    x = spec.scale * _cms_unit(spec.alpha, size if size is not None else 1, rng)
    return float(x[0]) if size is None else x


def sample_isotropic_stable_vector(spec: StableSpec, rng: RandomStream, count=None) -> np.ndarray:
    """Rotationally invariant stable vector(s) by Gaussian subordination.

    ``X = scale * sqrt(2 A) * G`` with ``A`` positive (alpha/2)-stable
    (Laplace ``exp(-u**(alpha/2))``) and ``G`` standard normal in R^d; the
    characteristic function is then ``exp(-scale**alpha ||xi||**alpha)``.
    Returns shape ``(dim,)`` when ``count`` is None, else ``(count, dim)``.
    """
    n = 1 if count is None else int(count)
    a = _positive_stable(spec.alpha / 2.0, n, rng)
    g = rng.standard_normal((n, spec.dim))
    x = spec.scale * np.sqrt(2.0 * a)[:, None] * g
    return x[0] if count is None else x


def levy_path_increments(spec: StableSpec, step_h: float, count: int, rng: RandomStream) -> np.ndarray:
    """``count`` i.i.d. increments of L^alpha over steps of length ``step_h``.

    By self-similarity each increment is ``step_h**(1/alpha)`` times a unit
    isotropic draw. Shape ``(count, dim)``; ``count == 0`` gives an empty array.
    """
    if not step_h > 0:
        raise ValueError("step_h must be positive")
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return np.empty((0, spec.dim))
    return step_h ** (1.0 / spec.alpha) * sample_isotropic_stable_vector(spec, rng, count)


def hill_curve(samples, fraction: float = HILL_FRACTION):
    """Hill estimates of the tail exponent's inverse for k = 1..ceil(fraction n).

    Returns ``(ks, inverse_alpha)``.
    """
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    n = x.size
    kmax = min(int(math.ceil(fraction * n)), n - 1)
    top = -np.sort(-x)[: kmax + 1]
    logs = np.log(top)
    ks = np.arange(1, kmax + 1)
    inv = np.cumsum(logs[:-1]) / ks - logs[1:]
    return ks, inv


def estimate_tail_index(samples, fraction: float = HILL_FRACTION) -> float:
    """Tail exponent of ``|samples|`` from the top ``ceil(fraction n)`` order statistics.

    Hill's estimator for stable laws carries a bias linear in ``k/n`` (the
    second-order tail term decays like ``x**(-2 alpha)``), which is
    noticeable already at alpha = 1.8. The Hill curve over the top order
    statistics is therefore regressed on ``k/n`` and extrapolated to
    ``k/n -> 0``. Estimates at or above 2 are outside the stable range and
    are logged as being at the boundary (e.g. Gaussian data).
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_TAIL_SAMPLES:
        raise ValueError(f"need at least {MIN_TAIL_SAMPLES} samples, got {x.size}")
    ks, inv = hill_curve(x, fraction)
    sel = ks >= max(10, ks[-1] // 20)
    if sel.sum() >= 10:
        design = np.column_stack([np.ones(sel.sum()), ks[sel] / x.size])
        intercept = np.linalg.lstsq(design, inv[sel], rcond=None)[0][0]
    else:
        intercept = inv[-1]
    if intercept <= 0:
        # extrapolation broke down (no power tail at all); fall back to plain Hill
        intercept = inv[-1]
    alpha = 1.0 / intercept
    if at_boundary(alpha):
        log.info("tail-index estimate %.3f is at the Gaussian boundary", alpha)
    return float(alpha)


def at_boundary(alpha_hat: float) -> bool:
    return alpha_hat >= 2.0
