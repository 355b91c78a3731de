from .base import BaseCapability
from .transforms import TransformCapabilities
from .tergm import TergmCapabilities
from .rchain import RChainCapabilities
from .oracle import OracleCapabilities
from .calibrate import CalibrateCapabilities
from .experiments import ExperimentCapabilities

__all__ = [
    "BaseCapability",
    "TransformCapabilities",
    "TergmCapabilities",
    "RChainCapabilities",
    "OracleCapabilities",
    "CalibrateCapabilities",
    "ExperimentCapabilities",
]
