from .client import LabClient
from .types import EdaLabError


class EdaLab:
    """
    Main entry point for EDA tergm experiments

    Example:
        ```python
        from edalab import EdaLab
        from edalab.stats import Model

        with EdaLab(seed=7, out_dir="runs", workers=4) as lab:
            pair = lab.transforms.transform(theta=-2.0, duration=50, variant="new")
            model = Model.from_specs(["edges", "degree(1)"], [-4.9, 0.3])
            report = lab.oracle.report(model, node_count=3)
        ```
    """

    def __init__(
        self,
        seed: int = 0,
        out_dir: str = "eda-out",
        workers: int = 1
    ):
        self._client = LabClient(
            seed=seed,
            out_dir=out_dir,
            workers=workers
        )

        self.transforms = self._client.transforms
        self.tergm = self._client.tergm
        self.rchain = self._client.rchain
        self.oracle = self._client.oracle
        self.calibrate = self._client.calibrate
        self.experiments = self._client.experiments

    @property
    def seed(self) -> int:
        return self._client.seed

    def close(self):
        """Shut down worker processes"""
        self._client.close()

    def __enter__(self):
        """Context manager entry"""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Context manager exit"""
        self.close()


__all__ = ["EdaLab", "EdaLabError"]
