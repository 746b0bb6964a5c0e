from models.base_model import BaseRecord
from models.constant_model import ConstantEstimate, WorkingConstants
from models.energy_model import EnergyBreakdown, FiberBase
from models.fiber_model import CriticalPoint, FiberReport, GProfile, ScalarProfile
from models.kernel_model import RieszKernel
from models.problem_params_model import DerivedExponents, ProblemParams, same_exponent
from models.radial_model import RadialFunction, RadialGrid
from models.solution_model import BoundCheck, SolutionRecord, SweepRow, SweepTable, VerificationCheck
from models.solver_settings_model import SolverSettings
from models.threshold_model import CriticalLevel, HypothesisCheck, ThresholdSet

__all__ = [
    "BaseRecord",
    "ProblemParams",
    "DerivedExponents",
    "same_exponent",
    "ThresholdSet",
    "HypothesisCheck",
    "CriticalLevel",
    "RadialGrid",
    "RadialFunction",
    "RieszKernel",
    "EnergyBreakdown",
    "FiberBase",
    "CriticalPoint",
    "FiberReport",
    "ScalarProfile",
    "GProfile",
    "ConstantEstimate",
    "WorkingConstants",
    "SolverSettings",
    "SolutionRecord",
    "SweepRow",
    "SweepTable",
    "BoundCheck",
    "VerificationCheck",
]
