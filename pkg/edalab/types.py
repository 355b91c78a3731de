from typing import Dict, List, Optional, Union, Any
from typing_extensions import NotRequired, TypedDict
from enum import Enum

class ErrorCode(str, Enum):
    """Library error codes"""
    UNKNOWN_ERROR = 'UNKNOWN_ERROR'
    INVALID_REQUEST = 'INVALID_REQUEST'
    CONSISTENCY_VIOLATION = 'CONSISTENCY_VIOLATION'
    ACCEPTANCE_OVERFLOW = 'ACCEPTANCE_OVERFLOW'
    NORMALIZATION_FAILURE = 'NORMALIZATION_FAILURE'
    NON_CONVERGENCE = 'NON_CONVERGENCE'
    REDUCIBLE_CHAIN = 'REDUCIBLE_CHAIN'
    STATE_SPACE_TOO_LARGE = 'STATE_SPACE_TOO_LARGE'
    CELL_FAILED = 'CELL_FAILED'

class EdaLabError(Exception):
    """Standardized error handling for edalab"""

    def __init__(
        self,
        message: str,
        code: str = ErrorCode.UNKNOWN_ERROR,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.code = ErrorCode(code)
        self.details = details or {}
        super().__init__(self.message)

    @classmethod
    def invalid(cls, message: str, **details: Any) -> 'EdaLabError':
        """Build an INVALID_REQUEST error"""
        return cls(message, ErrorCode.INVALID_REQUEST, details)

    @classmethod
    def from_exception(cls, error: Exception) -> 'EdaLabError':
        """Convert any exception to EdaLabError"""
        if isinstance(error, EdaLabError):
            return error
        return cls(
            message=f"{type(error).__name__}: {error}",
            code=ErrorCode.UNKNOWN_ERROR,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'code': self.code.value,
            'message': self.message,
            'details': self.details,
        }

    def __str__(self) -> str:
        """Consistent error message format"""
        return f"Error code: {self.code.value} - {self.message}"

class ConsistencyViolation(EdaLabError):
    """No memoryless stergm matches both the edge probability and the duration"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCode.CONSISTENCY_VIOLATION, details)

class AcceptanceOverflow(EdaLabError):
    """An acceptance ratio R_ij / P(j|i) exceeded one"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCode.ACCEPTANCE_OVERFLOW, details)

class NormalizationFailure(EdaLabError):
    """Some state of R has total outflow above one"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCode.NORMALIZATION_FAILURE, details)

class NonConvergence(EdaLabError):
    """A calibration loop ran out of iterations"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCode.NON_CONVERGENCE, details)

class ReducibleChain(EdaLabError):
    """Stationary distribution is not unique"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCode.REDUCIBLE_CHAIN, details)

class StateSpaceTooLarge(EdaLabError):
    """Too many nodes or states for exact enumeration"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, ErrorCode.STATE_SPACE_TOO_LARGE, details)

class Variant(str, Enum):
    """Coefficient convention used to build a discrete-time EDA tergm"""
    OLD = 'old'
    NEW = 'new'
    EXACT = 'exact'
    R = 'R'  # infinitesimal chain, only meaningful for experiments

class ProposalKind(str, Enum):
    RANDOM_TOGGLE = 'random_toggle'
    TNT_ANALOGUE = 'tnt_analogue'

class Design(str, Enum):
    DEG1_SWEEP = 'deg1_sweep'
    GWESP_SWEEP = 'gwesp_sweep'
    SINGLE_DYAD = 'single_dyad'
    ORACLE_SUITE = 'oracle_suite'

# Configuration Types
class ModelEntry(TypedDict):
    """One line of a model file"""
    term: str
    coef: float

class TergmConfig(TypedDict):
    """Input of `simulate-tergm`"""
    nodes: int
    model: List[ModelEntry]
    duration: NotRequired[Union[float, Dict[str, float]]]  # per dyad type
    variant: NotRequired[str]  # default "new"
    constraint: NotRequired[str]  # default "none"
    burn_in: NotRequired[int]
    steps: NotRequired[int]
    monitored: NotRequired[List[str]]
    targets: NotRequired[Dict[str, float]]
    proposals_per_phase: NotRequired[Optional[int]]
    exact_formation: NotRequired[bool]
    attributes: NotRequired[Dict[str, List[Any]]]
    duration_attribute: NotRequired[Optional[str]]
    initial: NotRequired[Optional[str]]  # edge-list file

class RConfig(TypedDict):
    """Input of `simulate-r`"""
    nodes: int
    model: List[ModelEntry]
    duration_base: NotRequired[Union[float, Dict[str, float]]]
    lam: NotRequired[Optional[float]]
    proposal: NotRequired[str]  # default "tnt_analogue"
    odds_bound: NotRequired[Optional[float]]
    edge_bound: NotRequired[Optional[int]]
    safety_factor: NotRequired[float]
    constraint: NotRequired[str]
    burn_in: NotRequired[int]
    steps: NotRequired[int]
    thin: NotRequired[int]
    monitored: NotRequired[List[str]]
    targets: NotRequired[Dict[str, float]]
    attributes: NotRequired[Dict[str, List[Any]]]
    duration_attribute: NotRequired[Optional[str]]
    initial: NotRequired[Optional[str]]

class ExperimentConfig(TypedDict):
    """Input of `experiment`"""
    design: str
    node_count: NotRequired[int]
    mean_degree: NotRequired[List[float]]
    degree1_target: NotRequired[List[float]]
    include_reference: NotRequired[bool]
    degree2_target: NotRequired[float]
    gwesp_target: NotRequired[List[float]]
    duration: NotRequired[List[float]]
    variants: NotRequired[List[str]]
    replications: NotRequired[int]
    seed: NotRequired[int]
    proposals_multiplier: NotRequired[float]
    burn_in: NotRequired[int]
    steps: NotRequired[int]
    r_steps_per_time: NotRequired[int]
    reference_steps: NotRequired[int]
    calibration_budget: NotRequired[int]
    convergence_check: NotRequired[bool]
    full_scale: NotRequired[bool]
    lambdas: NotRequired[List[float]]
    oracle_nodes: NotRequired[int]
    single_dyad_p: NotRequired[List[float]]

# Result Types
class DurationEstimate(TypedDict):
    completed_mean: float
    hazard_inverse: float
    completed: int
    censored: int

class StatSummary(TypedDict):
    mean: float
    stderr: float
    target: NotRequired[float]
    rel_error: NotRequired[float]
    rel_stderr: NotRequired[float]

class PlotRow(TypedDict):
    """One line of the long-format experiment CSV"""
    design: str
    node_count: int
    mean_degree: float
    degree1_target: float
    gwesp_target: float
    edge_prob: float
    duration: float
    lam: float
    replicate: int
    variant: str
    statistic: str
    rel_error: float
    stderr: float
