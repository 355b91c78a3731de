import csv
import json
import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .types import EdaLabError

logger = logging.getLogger(__name__)


@dataclass
class CellResult:
    """Outcome of one unit of work run through `LabClient.run_cells`"""
    key: Any
    success: bool
    value: Any = None
    error: Optional[EdaLabError] = None


def _run_cell(fn: Callable[[Any], Any], key: Any, payload: Any) -> CellResult:
    """Run one cell, converting any failure into a CellResult"""
    try:
        return CellResult(key=key, success=True, value=fn(payload))
    except Exception as e:
        error = EdaLabError.from_exception(e)
        logger.warning("Cell %s failed: %s", key, error)
        return CellResult(key=key, success=False, error=error)


class LabClient:
    """Shared services for all capabilities: seeds, workers and output files"""

    def __init__(
        self,
        seed: int = 0,
        out_dir: str = "eda-out",
        workers: int = 1
    ):
        if workers < 1:
            raise EdaLabError.invalid("workers must be at least 1", workers=workers)
        self._seed = int(seed)
        self._out_dir = Path(out_dir)
        self._workers = workers
        self._pool: Optional[Executor] = None

        # Initialize capabilities
        from .capabilities.transforms import TransformCapabilities
        from .capabilities.tergm import TergmCapabilities
        from .capabilities.rchain import RChainCapabilities
        from .capabilities.oracle import OracleCapabilities
        from .capabilities.calibrate import CalibrateCapabilities
        from .capabilities.experiments import ExperimentCapabilities

        self.transforms = TransformCapabilities(self)
        self.tergm = TergmCapabilities(self)
        self.rchain = RChainCapabilities(self)
        self.oracle = OracleCapabilities(self)
        self.calibrate = CalibrateCapabilities(self)
        self.experiments = ExperimentCapabilities(self)

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def workers(self) -> int:
        return self._workers

    @property
    def out_dir(self) -> Path:
        return self._out_dir

    def spawn_seeds(self, count: int, seed: Optional[int] = None) -> List[int]:
        """
        Derive independent child seeds

        Child i depends only on (seed, i), so results can be merged by
        position regardless of which worker finished first.
        """
        root = np.random.SeedSequence(self._seed if seed is None else seed)
        return [int(child.generate_state(1, dtype=np.uint64)[0] >> 1) for child in root.spawn(count)]

    def output_path(self, filename: str, subdir: str = '') -> Path:
        directory = self._out_dir / subdir if subdir else self._out_dir
        directory.mkdir(parents=True, exist_ok=True)
        return directory / filename

    def write_json(self, path: Path, data: Any) -> Path:
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
        return Path(path)

    def write_csv(self, path: Path, columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> Path:
        with open(path, 'w', newline='') as handle:
            writer = csv.DictWriter(handle, fieldnames=list(columns), extrasaction='ignore', lineterminator='\n')
            writer.writeheader()
            for row in rows:
                writer.writerow({c: _csv_value(row.get(c)) for c in columns})
        return Path(path)

    def _executor(self) -> Executor:
        if self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=self._workers)
        return self._pool

    def run_cells(
        self,
        fn: Callable[[Any], Any],
        cells: Sequence[Any],
        keys: Optional[Sequence[Any]] = None
    ) -> List[CellResult]:
        """
        Run `fn` over every cell, in parallel when workers > 1

        A failing cell is reported in its CellResult instead of aborting the
        others. Results come back in input order.
        """
        keys = list(keys) if keys is not None else list(range(len(cells)))
        if self._workers == 1 or len(cells) <= 1:
            return [_run_cell(fn, key, cell) for key, cell in zip(keys, cells)]
        pool = self._executor()
        futures = [pool.submit(_run_cell, fn, key, cell) for key, cell in zip(keys, cells)]
        return [f.result() for f in futures]

    def close(self):
        """Shut down the worker pool"""
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        """Context manager entry"""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Context manager exit"""
        self.close()


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, 'value'):
        return value.value
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def _csv_value(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, np.generic):
        return _csv_value(value.item())
    return value
