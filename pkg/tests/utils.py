from colorama import Fore, Style
from typing import Any, Sequence
from contextlib import contextmanager
import math
import time

import numpy as np

def log_test_step(message: str, indent: int = 4) -> None:
    print(f"{' ' * indent}{message}")

def log_response(name: str, data: Any, indent: int = 4) -> None:
    if isinstance(data, (dict, list)):
        from pprint import pformat
        formatted = pformat(data, indent=2)
        print(f"{' ' * indent}Result ({name}):\n{' ' * (indent+2)}{formatted}")
    else:
        print(f"{' ' * indent}Result ({name}): {data}")

def assert_with_log(condition: bool, message: str, indent: int = 4) -> None:
    if not condition:
        print(f"{' ' * indent}{Fore.RED}Assertion failed: {message}{Style.RESET_ALL}")
    assert condition, message

def assert_close(actual: float, expected: float, tol: float, message: str) -> None:
    assert_with_log(abs(actual - expected) <= tol, f"{message}: {actual} vs {expected} (tol {tol})")

def assert_within_se(actual: float, expected: float, stderr: float, message: str, z: float = 3.0) -> None:
    """Monte Carlo agreement within z standard errors"""
    assert_with_log(
        abs(actual - expected) <= z * stderr,
        f"{message}: {actual} vs {expected}, more than {z} x stderr {stderr}"
    )

def binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)

def series_se(values: Sequence[float], batches: int = 20) -> float:
    """Batch-means standard error, for checks independent of the library's estimator"""
    values = np.asarray(values, dtype=float)
    size = len(values) // batches
    means = values[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))

@contextmanager
def timing(operation: str, indent: int = 4):
    start = time.time()
    try:
        yield
    finally:
        duration = time.time() - start
        print(f"{' ' * indent}Operation '{operation}' took {duration:.2f}s")

def geometric_fit_pvalue(ages: Sequence[int], mean: float, edges: Sequence[float] = (3, 6, 10, 15, 22, 35)) -> float:
    """Binned chi-square p-value of spell ages against Geometric(1/mean) on {1, 2, ...}"""
    from scipy import stats

    ages = np.asarray(ages)
    cuts = np.asarray(edges, dtype=float) * mean / 10.0
    cuts = np.unique(np.floor(cuts))
    observed = np.bincount(np.digitize(ages, cuts + 0.5), minlength=len(cuts) + 1)
    cdf = stats.geom.cdf(cuts, 1.0 / mean)
    probs = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    return float(stats.chisquare(observed, probs * observed.sum()).pvalue)
