"""
Closed-form EDA coefficient transforms for a single dyad

Notation: p is the ergm edge probability, theta = logit(p), D the mean edge
duration in time steps and q the per-step formation probability.
"""
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from scipy import special

from ..types import ConsistencyViolation, EdaLabError, Variant
from .base import BaseCapability

INF = math.inf


def _log(x: float) -> float:
    return -INF if x == 0 else math.log(x)


def logit(p: float) -> float:
    """logit with logit(0) = -inf and logit(1) = +inf"""
    return float(special.logit(p))


def expit(x: float) -> float:
    return float(special.expit(x))


@dataclass(frozen=True)
class CoefficientPair:
    """Formation and dissolution linear predictors; either may be infinite"""
    theta_plus: float
    theta_minus: float

    @property
    def formation_prob(self) -> float:
        return expit(self.theta_plus)

    @property
    def dissolution_prob(self) -> float:
        """Per-step probability that an existing edge ends"""
        return 1.0 - expit(self.theta_minus)

    def as_dict(self) -> Dict[str, float]:
        return {'theta_plus': self.theta_plus, 'theta_minus': self.theta_minus}


def _check_duration(D: float) -> None:
    if not (D >= 1 and math.isfinite(D)):
        raise EdaLabError.invalid(f"Duration must satisfy 1 <= D < inf, got {D}", duration=D)


def _check_probability(p: float) -> None:
    if not 0 < p < 1:
        raise EdaLabError.invalid(f"Edge probability must lie in (0, 1), got {p}", p=p)


def dissolution_coef(D: float) -> float:
    _check_duration(D)
    return _log(D - 1.0)


def transform_old(theta: float, D: float) -> CoefficientPair:
    """theta+ = theta - log(D - 1)"""
    theta_minus = dissolution_coef(D)
    return CoefficientPair(theta - theta_minus, theta_minus)


def transform_new(theta: float, D: float) -> CoefficientPair:
    """theta+ = theta - log(D), the sparse limit of the exact transform"""
    theta_minus = dissolution_coef(D)
    return CoefficientPair(theta - math.log(D), theta_minus)


def transform_exact(theta: float, D: float) -> CoefficientPair:
    """theta+ = theta - log(D - exp(theta)); matches p and D exactly"""
    theta_minus = dissolution_coef(D)
    slack = D - math.exp(theta)
    if slack < 0:
        raise ConsistencyViolation(
            f"No memoryless stergm reaches odds {math.exp(theta):.6g} with duration {D:g}",
            {'theta': theta, 'duration': D, 'q': math.exp(theta) / D},
        )
    if slack == 0:
        return CoefficientPair(INF, theta_minus)
    return CoefficientPair(theta - math.log(slack), theta_minus)


_TRANSFORMS = {
    Variant.OLD: transform_old,
    Variant.NEW: transform_new,
    Variant.EXACT: transform_exact,
}


def transform(theta: float, D: float, variant: Union[str, Variant]) -> CoefficientPair:
    variant = Variant(variant)
    if variant not in _TRANSFORMS:
        raise EdaLabError.invalid(f"No closed-form transform for variant '{variant.value}'")
    return _TRANSFORMS[variant](theta, D)


def formation_offset(theta: float, D: float, variant: Union[str, Variant]) -> float:
    """theta+ - theta for one dyad; +inf when the dyad must always form"""
    variant = Variant(variant)
    if variant == Variant.OLD:
        return -_log(D - 1.0)
    if variant == Variant.NEW:
        return -math.log(D)
    pair = transform_exact(theta, D)
    return pair.theta_plus - theta


def formation_prob(p: float, D: float) -> float:
    """q = p / ((1 - p) D), the formation probability that keeps p stationary"""
    _check_probability(p)
    _check_duration(D)
    q = p / ((1.0 - p) * D)
    if q > 1.0:
        raise ConsistencyViolation(
            f"p={p:g} with D={D:g} needs formation probability {q:.6g} > 1",
            {'p': p, 'duration': D, 'q': q},
        )
    return q


def equilibrium_edge_prob(q: float, D: float) -> float:
    """Stationary edge probability qD / (qD + 1) of the two-state chain"""
    if not 0 <= q <= 1:
        raise EdaLabError.invalid(f"Formation probability must lie in [0, 1], got {q}")
    _check_duration(D)
    return q * D / (q * D + 1.0)


def two_state_matrix(q: float, D: float) -> np.ndarray:
    """Single-dyad transition matrix over (no edge, edge)"""
    if not 0 <= q <= 1:
        raise EdaLabError.invalid(f"Formation probability must lie in [0, 1], got {q}")
    _check_duration(D)
    return np.array([[1.0 - q, q], [1.0 / D, 1.0 - 1.0 / D]])


def predicted_equilibrium(theta: float, D: float, variant: Union[str, Variant]) -> float:
    """Edge probability the stergm built with `variant` actually attains"""
    pair = transform(theta, D, variant)
    return equilibrium_edge_prob(pair.formation_prob, D)


def _alpha(variant: Union[str, Variant]) -> int:
    variant = Variant(variant)
    if variant == Variant.OLD:
        return 1
    if variant == Variant.NEW:
        return 0
    raise EdaLabError.invalid(f"Error formulas exist for old/new only, got '{variant.value}'")


def approx_equilibrium(p: float, D: float, variant: Union[str, Variant]) -> float:
    """p_alpha = p D / (D + p + alpha (p - 1)); alpha = 1 old, 0 new"""
    _check_probability(p)
    _check_duration(D)
    alpha = _alpha(variant)
    return p * D / (D + p + alpha * (p - 1.0))


def relative_error(p: float, D: float, variant: Union[str, Variant]) -> float:
    _check_probability(p)
    _check_duration(D)
    if _alpha(variant) == 1:
        return (1.0 - 2.0 * p) / (D + 2.0 * p - 1.0)
    return -p / (D + p)


def crossover_roots(D: float) -> Tuple[float, float]:
    """Both roots of 4p^2 - p(2 - 3D) - D"""
    _check_duration(D)
    disc = math.sqrt(4.0 + 4.0 * D + 9.0 * D * D)
    return (2.0 - 3.0 * D - disc) / 8.0, (2.0 - 3.0 * D + disc) / 8.0


def crossover_threshold(D: float) -> float:
    """Edge probability below which the new transform has the smaller error"""
    _check_duration(D)
    # 2 - 3D + sqrt(...) cancels badly for large D; use the conjugate form
    disc = math.sqrt(4.0 + 4.0 * D + 9.0 * D * D)
    b = 3.0 * D - 2.0
    if b > 0:
        return 2.0 * D / (b + disc)
    return (disc - b) / 8.0


def new_beats_old(p: float, D: float) -> bool:
    _check_probability(p)
    return p < crossover_threshold(D)


def error_table(D: float, ps: Optional[Iterable[float]] = None) -> List[Dict[str, float]]:
    """Rows of (p, err_old, err_new, crossover) for a fixed duration"""
    ps = ps if ps is not None else np.round(np.arange(1, 100) * 0.01, 2)
    threshold = crossover_threshold(D)
    return [
        {
            'p': float(p),
            'err_old': relative_error(float(p), D, Variant.OLD),
            'err_new': relative_error(float(p), D, Variant.NEW),
            'crossover': threshold,
        }
        for p in ps
    ]


class TransformCapabilities(BaseCapability):
    """Closed-form transforms and error predictions"""

    @property
    def name(self) -> str:
        return 'transforms'

    def transform(self, theta: float, duration: float, variant: str = 'new') -> Dict[str, float]:
        """
        Coefficients and predicted equilibrium for one dyad

        Args:
            theta: ergm linear predictor logit(p)
            duration: mean edge duration D in time steps
            variant: old, new or exact

        Returns:
            theta_plus, theta_minus, formation_prob and predicted_equilibrium
        """
        pair = transform(theta, duration, variant)
        return {
            'variant': Variant(variant).value,
            'theta': theta,
            'duration': duration,
            **pair.as_dict(),
            'formation_prob': pair.formation_prob,
            'target_prob': expit(theta),
            'predicted_equilibrium': equilibrium_edge_prob(pair.formation_prob, duration),
        }

    def error_table(self, duration: float, ps: Optional[Iterable[float]] = None) -> List[Dict[str, float]]:
        return error_table(duration, ps)

    def write_error_table(self, duration: float, filename: str = 'error_table.csv') -> str:
        rows = error_table(duration)
        path = self.output_path(filename)
        self._client.write_csv(path, ['p', 'err_old', 'err_new', 'crossover'], rows)
        return str(path)
