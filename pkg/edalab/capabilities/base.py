from abc import ABC, abstractmethod
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ..types import EdaLabError

if TYPE_CHECKING:
    from ..client import LabClient


class BaseCapability(ABC):
    """Base class for all capabilities"""
    def __init__(self, client: 'LabClient'):
        self._client = client

    @property
    @abstractmethod
    def name(self) -> str:
        """Short name used for the capability's output subdirectory"""
        pass

    def output_path(self, filename: str, subdir: str = '') -> Path:
        """
        Build a full output path under the client's output directory

        Args:
            filename: The file name
            subdir: Optional directory below the output root

        Returns:
            The path, with parent directories created
        """
        return self._client.output_path(filename, subdir)

    def rng(self, seed=None) -> np.random.Generator:
        """Generator seeded from `seed`, or the client's seed when omitted"""
        return np.random.default_rng(self._client.seed if seed is None else seed)

    def _handle_error(self, error: Exception) -> EdaLabError:
        """Convert any error to EdaLabError format"""
        return EdaLabError.from_exception(error)
