from .exponents_service import ExponentsService
from .radial_field_service import RadialFieldService
from .riesz_service import RieszService
from .functional_service import FunctionalService
from .fiber_geometry_service import FiberGeometryService
from .constants_estimation_service import ConstantsEstimationService
from .solver_service import SolverService
from .verification_service import VerificationService

__all__ = [
    "ExponentsService",
    "RadialFieldService",
    "RieszService",
    "FunctionalService",
    "FiberGeometryService",
    "ConstantsEstimationService",
    "SolverService",
    "VerificationService",
]
