"""Right-hand sides of the trajectory generalisation bounds.

Every evaluator returns the additive terms separately; the total is their
``math.fsum``. Logarithms whose argument must exceed one (the covering radius
``1/(c sqrt(n))`` has to be below one) raise instead of being clamped.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import CoupledTrajectory, gradient_deviation
from .problems import Dataset, LearningProblem

VARIANTS = ("lipschitz", "coordinates")

ASYMPTOTIC_N = "asymptotic-N"
GRID_SUP = "grid-sup"


class BoundDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    n: int
    zeta: float
    gamma: float
    L: float
    M: float
    sigma: float
    Sigma: float
    T: float
    d: int
    s: float = 1.0
    lam: float = 1.0
    beta: float = 2.0
    m: float | None = None
    K: float | None = None
    gamma_source: str = "alpha"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if not 0 <= self.gamma <= self.d + 0.5:
            raise ValueError("gamma must lie in [0, d + 0.5]")
        for name in ("L", "M", "sigma", "Sigma"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")
        if not self.s > 0 or not self.lam > 0:
            raise ValueError("s and lam must be positive")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if self.K is not None and self.K < 0:
            raise ValueError("K must be non-negative")

    @classmethod
    def from_problem(cls, problem: LearningProblem, n: int, zeta: float, gamma: float, T: float, **kw):
        return cls(n=n, zeta=zeta, gamma=gamma, T=T, d=problem.dim, **problem.constants(), **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BoundReport:
    theorem: str
    rhs: float
    terms: dict
    lhs: float | None = None
    caveats: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool | None:
        return None if self.lhs is None else bool(self.lhs <= self.rhs)

    @property
    def ratio(self) -> float | None:
        if self.lhs is None or self.rhs == 0:
            return None
        return self.lhs / self.rhs

    def with_lhs(self, lhs: float) -> "BoundReport":
        self.lhs = float(lhs)
        return self

    def to_dict(self) -> dict:
        out = {"theorem": self.theorem, "lhs": self.lhs, "rhs": self.rhs, "terms": dict(self.terms),
               "holds": self.holds, "caveats": list(self.caveats), "inputs": dict(self.inputs)}
        if self.extra:
            out["extra"] = dict(self.extra)
        return out


def _report(theorem, terms, inp: BoundInputs, caveats, lhs=None, extra=None) -> BoundReport:
    return BoundReport(theorem=theorem, rhs=math.fsum(terms.values()), terms=terms, lhs=lhs,
                       caveats=list(caveats) + [f"gamma-source:{inp.gamma_source}"],
                       inputs=inp.to_dict(), extra=extra or {})


def expm1_factor(M: float, T: float) -> float:
    """``(e^{MT} - 1) / M``, equal to ``T`` at ``M = 0``."""
    if M < 0:
        raise ValueError("M must be non-negative")
    if M == 0:
        return float(T)
    return math.expm1(M * T) / M


def _log_cover(c: float, n: int, what: str) -> float:
    val = c * math.sqrt(n)
    if not val > 1:
        raise BoundDomainError(f"n too small for covering schedule delta_n = 1/({what} sqrt(n))")
    return math.log(val)


def _complexity(gamma: float, log_cover: float, log_conf: float, n: int) -> float:
    return math.sqrt((2.0 * gamma * log_cover + log_conf) / (2.0 * n))


def thm2_terms(geom_gap: float, inp: BoundInputs) -> dict:
    if inp.n < 2:
        raise BoundDomainError("n must be at least 2")
    lc = _log_cover(inp.L, inp.n, "L")
    return {
        "geometric": 2.0 * inp.L * geom_gap,
        "cover": 2.0 / math.sqrt(inp.n),
        "concentration": 2.0 * inp.sigma * _complexity(inp.gamma, lc, math.log(1.0 / inp.zeta), inp.n),
    }


def rhs_thm2(geom_gap: float, inp: BoundInputs, lhs: float | None = None) -> BoundReport:
    """Worst-case gap over the empirical trajectory (probability 1 - 2 zeta)."""
    return _report("thm2", thm2_terms(geom_gap, inp), inp, [ASYMPTOTIC_N, GRID_SUP], lhs,
                   extra={"geom_gap": geom_gap})


def lemma16_terms(inp: BoundInputs, variant: str = "lipschitz") -> dict:
    lc = _log_cover(inp.M, inp.n, "M")
    if variant == "lipschitz":
        return {
            "cover": 2.0 / math.sqrt(inp.n),
            "mean": inp.L * math.sqrt(2.0 / inp.n),
            "concentration": 2.0 * inp.L * _complexity(inp.gamma, lc, math.log(1.0 / inp.zeta), inp.n),
        }
    if variant == "coordinates":
        return {
            "cover": 2.0 / math.sqrt(inp.n),
            "concentration": 2.0 * inp.Sigma * _complexity(inp.gamma, lc, math.log(2.0 * inp.d / inp.zeta), inp.n),
        }
    raise ValueError(f"unknown variant {variant!r}")


def rhs_lemma16(inp: BoundInputs, variant: str = "lipschitz") -> float:
    """Bound on the worst gradient deviation over the expected trajectory."""
    return math.fsum(lemma16_terms(inp, variant).values())


def rhs_thm3(inp: BoundInputs, variant: str = "lipschitz") -> float:
    """Bound on ``sup_t ||W_t - Y_t||``."""
    return expm1_factor(inp.M, inp.T) * rhs_lemma16(inp, variant)


def report_thm3(geom_gap: float, inp: BoundInputs, variant: str = "lipschitz") -> BoundReport:
    f = expm1_factor(inp.M, inp.T)
    terms = {k: f * v for k, v in lemma16_terms(inp, variant).items()}
    return _report(f"thm3-{variant}", terms, inp, [ASYMPTOTIC_N, GRID_SUP], geom_gap,
                   extra={"expm1_factor": f})


def thm4_constants(inp: BoundInputs, variant: str = "lipschitz") -> dict:
    f = expm1_factor(inp.M, inp.T)
    if variant == "lipschitz":
        return {"C0": max(inp.M, inp.L), "C1": 2.0 + math.sqrt(2.0) * inp.L,
                "C2": 4.0 * inp.L ** 2 * f + 2.0 * inp.sigma, "C3": 1.0}
    if variant == "coordinates":
        return {"C0": max(inp.M, inp.L), "C1": 2.0,
                "C2": 4.0 * inp.Sigma * inp.L * f + 2.0 * inp.sigma, "C3": 2.0 * inp.d}
    raise ValueError(f"unknown variant {variant!r}")


def rhs_thm4(inp: BoundInputs, variant: str = "lipschitz", lhs: float | None = None) -> BoundReport:
    """Combined worst-case bound (probability 1 - 4 zeta)."""
    c = thm4_constants(inp, variant)
    lc = _log_cover(c["C0"], inp.n, "C0")
    f = expm1_factor(inp.M, inp.T)
    terms = {
        "cover": 2.0 / math.sqrt(inp.n),
        "drift": 2.0 * inp.L / math.sqrt(inp.n) * c["C1"] * f,
        "concentration": c["C2"] * _complexity(inp.gamma, lc, math.log(c["C3"] / inp.zeta), inp.n),
    }
    return _report(f"thm4-{variant}", terms, inp, [ASYMPTOTIC_N, GRID_SUP], lhs, extra=c)


def thm13_terms(inp: BoundInputs) -> dict:
    if inp.m is None or not inp.m > 0:
        raise BoundDomainError("co-dissipativity certificate required (m > 0)")
    K = 0.0 if inp.K is None else inp.K
    lc = _log_cover(inp.M, inp.n, "M")
    inner = 2.0 / inp.n + inp.Sigma ** 2 / inp.n * (2.0 * inp.gamma * lc + math.log(2.0 * inp.d / inp.zeta))
    return {"dissipative": 2.0 * K / inp.m, "concentration": 4.0 / inp.m ** 2 * inner}


def rhs_thm13(inp: BoundInputs) -> float:
    """Bound on the *squared* sup gap under co-dissipativity."""
    return math.fsum(thm13_terms(inp).values())


def report_thm13(sq_gap: float, inp: BoundInputs) -> BoundReport:
    return _report("thm13", thm13_terms(inp), inp, [ASYMPTOTIC_N, GRID_SUP, "empirical-(m,K)"], sq_gap)


def composition_thm2_thm3(inp: BoundInputs, variant: str = "lipschitz") -> dict:
    """Thm 2 fed with the Thm 3 gap bound, next to the combined statement.

    The two differ by how the union bounds are regrouped; reported, not asserted.
    """
    composed = rhs_thm2(rhs_thm3(inp, variant), inp).rhs
    combined = rhs_thm4(inp, variant).rhs
    return {"composed": composed, "combined": combined, "ratio": composed / combined}


# pathwise Gronwall -------------------------------------------------------

@dataclass(frozen=True)
class ToleranceModel:
    """``tol(h) = c * h * T * M * L + floor``; ``floor`` absorbs rounding."""
    c: float = 1.0
    floor: float = 1e-12

    def __call__(self, h: float, T: float, M: float, L: float) -> float:
        return self.c * h * T * M * L + self.floor


@dataclass
class GronwallReport:
    holds: bool
    G: float
    tol: float
    max_excess: float
    worst_step: int
    margins: np.ndarray = field(repr=False)

    @property
    def offending_steps(self) -> np.ndarray:
        return np.flatnonzero(self.margins < 0)


def gronwall_envelope(G: float, M: float, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if M == 0:
        return G * times
    return G * np.expm1(M * times) / M


def gronwall_pathwise_check(traj: CoupledTrajectory, problem: LearningProblem, dataset: Dataset,
                            tol_model: ToleranceModel | None = None) -> GronwallReport:
    """Check ``||V_k|| <= (G/M)(e^{M t_k} - 1) + tol(h)`` at every grid point.

    ``G`` is the largest gradient deviation over the grid points of both paths.
    ``max_excess`` is ``max_k (||V_k|| - envelope_k)`` before tolerance.
    """
    tol_model = tol_model or ToleranceModel()
    G = float(max(gradient_deviation(traj.W, problem, dataset).max(),
                  gradient_deviation(traj.Y, problem, dataset).max()))
    env = gronwall_envelope(G, problem.M, traj.times)
    tol = tol_model(traj.step_h, traj.T, problem.M, problem.L)
    excess = traj.gaps - env
    margins = tol - excess
    worst = int(np.argmax(excess))
    return GronwallReport(holds=bool(np.all(margins >= 0)), G=G, tol=tol,
                          max_excess=float(excess[worst]), worst_step=worst, margins=margins)
