"""Trajectory-based generalisation bounds for heavy-tailed learning dynamics."""
from .stable_noise import StableSpec, stream
from .problems import ProblemConfig, LearningProblem, Dataset, make_problem, sample_dataset
from .dynamics import SdeConfig, CoupledTrajectory, integrate_coupled
from .fractal import box_dimension
from .bounds import BoundInputs, BoundReport

__all__ = ["StableSpec", "stream", "ProblemConfig", "LearningProblem", "Dataset", "make_problem",
           "sample_dataset", "SdeConfig", "CoupledTrajectory", "integrate_coupled", "box_dimension",
           "BoundInputs", "BoundReport"]
