"""Moment matching: ergm coefficients whose expectations hit target statistics"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from ..config import bernoulli_network
from ..network import Constraint
from ..stats import Model, Term, TermKind
from ..types import EdaLabError, NonConvergence, StatSummary
from .base import BaseCapability
from .oracle import StateSpace, enumerate_states, exact_expectations
from .rchain import ergm_expectations, sample_ergm
from .transforms import logit

logger = logging.getLogger(__name__)

EXACT_TOL = 1e-8
EXACT_MAX_ITER = 100
DEFAULT_TOLERANCE = 0.02
MIN_BUDGET = 20


@dataclass
class CalibrationResult:
    terms: List[Term]
    coefs: np.ndarray
    targets: np.ndarray
    method: str
    iterations: int
    summary: Dict[str, StatSummary] = field(default_factory=dict)
    trace: List[List[float]] = field(default_factory=list)

    @property
    def model(self) -> Model:
        return Model(list(self.terms), self.coefs.copy())

    def to_dict(self) -> Dict[str, Any]:
        return {
            'method': self.method,
            'iterations': self.iterations,
            'model': self.model.to_entries(),
            'targets': {t.label: float(v) for t, v in zip(self.terms, self.targets)},
            'summary': self.summary,
        }


def target_vector(terms: Sequence[Term], targets: Union[Mapping[str, float], Sequence[float]]) -> np.ndarray:
    """Targets aligned with `terms`, from a label mapping or a list"""
    if isinstance(targets, Mapping):
        missing = [t.label for t in terms if t.label not in targets]
        if missing:
            raise EdaLabError.invalid(f"No target for {missing}")
        return np.array([float(targets[t.label]) for t in terms])
    values = np.asarray(targets, dtype=float)
    if values.shape != (len(terms),):
        raise EdaLabError.invalid(f"{len(terms)} terms but {values.size} targets")
    return values


def edges_only_coef(target_edges: float, node_count: int) -> float:
    """Closed form logit(mu / N) for an edges-only model"""
    dyads = node_count * (node_count - 1) / 2
    if not 0 < target_edges < dyads:
        raise NonConvergence(
            f"Edge target {target_edges} is outside (0, {dyads:g})",
            {'target': target_edges, 'dyads': dyads},
        )
    return logit(target_edges / dyads)


def _initial_coefs(terms: Sequence[Term], targets: np.ndarray, node_count: int) -> np.ndarray:
    theta = np.zeros(len(terms))
    for idx, term in enumerate(terms):
        if term.kind == TermKind.EDGES:
            theta[idx] = edges_only_coef(targets[idx], node_count)
    return theta


def check_feasible(terms: Sequence[Term], targets: np.ndarray, node_count: int) -> None:
    """Reject targets outside the achievable range of their statistic"""
    dyads = node_count * (node_count - 1) / 2
    for term, value in zip(terms, targets):
        if term.kind == TermKind.EDGES:
            upper = dyads
        elif term.kind == TermKind.DEGREE:
            upper = node_count
        else:
            upper = math.inf
        if not 0 <= value <= upper:
            raise NonConvergence(
                f"Target {value:g} for {term.label} is outside [0, {upper:g}]",
                {'term': term.label, 'target': float(value)},
            )


def calibrate_exact(
    space: StateSpace,
    terms: Sequence[Term],
    targets: Union[Mapping[str, float], Sequence[float]],
    max_iter: int = EXACT_MAX_ITER,
    tol: float = EXACT_TOL
) -> CalibrationResult:
    """
    Newton's method on log C(theta) - theta . t with the exact covariance as Hessian

    Raises:
        NonConvergence: targets not matched within `tol` after `max_iter` steps
    """
    terms = list(terms)
    t = target_vector(terms, targets)
    check_feasible(terms, t, space.node_count)
    G = space.stat_table(terms)[space.masks]

    def objective(theta: np.ndarray) -> float:
        return float(logsumexp(G @ theta) - theta @ t)

    theta = _initial_coefs(terms, t, space.node_count)
    trace: List[List[float]] = []
    for iteration in range(1, max_iter + 1):
        model = Model(terms, theta)
        mean, cov = exact_expectations(space, model)
        gap = t - mean
        trace.append(gap.tolist())
        if np.max(np.abs(gap)) < tol:
            return CalibrationResult(terms, theta, t, 'exact', iteration, _exact_summary(terms, mean, t), trace)
        step = np.linalg.lstsq(cov, gap, rcond=None)[0]
        # rounding slack so that near-optimal full steps are accepted
        current = objective(theta) + 1e-12 * max(1.0, abs(objective(theta)))
        scale = 1.0
        while scale > 1e-10 and not objective(theta + scale * step) <= current:
            scale *= 0.5
        if scale <= 1e-10:
            break
        theta = theta + scale * step
    raise NonConvergence(
        f"Exact calibration did not reach {tol:g} in {max_iter} iterations",
        {'residual': trace[-1] if trace else None, 'coefs': theta.tolist()},
    )


def _exact_summary(terms: Sequence[Term], mean: np.ndarray, targets: np.ndarray) -> Dict[str, StatSummary]:
    summary: Dict[str, StatSummary] = {}
    for term, m, t in zip(terms, mean, targets):
        entry: StatSummary = {'mean': float(m), 'stderr': 0.0, 'target': float(t)}
        if t != 0:
            entry['rel_error'] = float((m - t) / t)
            entry['rel_stderr'] = 0.0
        summary[term.label] = entry
    return summary


def calibrate_stochastic(
    terms: Sequence[Term],
    targets: Union[Mapping[str, float], Sequence[float]],
    node_count: int,
    budget: int = 400,
    seed: Optional[int] = None,
    tolerance: float = DEFAULT_TOLERANCE,
    steps_per_iteration: Optional[int] = None,
    confirmation_steps: Optional[int] = None,
    constraint: Optional[Constraint] = None,
    attributes: Optional[Mapping[str, Sequence[Any]]] = None,
    gain: float = 0.5
) -> CalibrationResult:
    """
    Robbins-Monro moment matching driven by the ergm sampler

    Steps are theta += a_t (t - g_bar) with a_t = a0 / (1 + t / tau),
    a0 = gain / pilot variance and tau = budget / 10; the answer is the
    average of the second half of the iterates, checked by a confirmation
    run. A statistic passes when its mean is within `tolerance` relative or
    three standard errors of the target.

    Raises:
        NonConvergence: infeasible targets or a failed confirmation run
    """
    terms = list(terms)
    if budget < MIN_BUDGET:
        raise EdaLabError.invalid(f"Calibration budget must be at least {MIN_BUDGET}")
    t = target_vector(terms, targets)
    check_feasible(terms, t, node_count)
    constraint = constraint or Constraint.none()
    dyads = node_count * (node_count - 1) // 2
    steps_per_iteration = steps_per_iteration or max(2 * dyads, 1000)
    confirmation_steps = confirmation_steps or 50 * steps_per_iteration

    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(budget + 3)]
    theta = _initial_coefs(terms, t, node_count)
    edge_targets = [v for term, v in zip(terms, t) if term.kind == TermKind.EDGES]
    density = edge_targets[0] / dyads if edge_targets else 0.01
    net = bernoulli_network(node_count, density, np.random.default_rng(seeds[0]), constraint, attributes)

    pilot = sample_ergm(Model(terms, theta), net, 5 * steps_per_iteration, terms, seeds[1], constraint=constraint)
    variance = np.maximum(pilot.stat_series.var(axis=0), 1.0)
    a0 = gain / variance
    tau = budget / 10.0
    net = pilot.final_network

    trace: List[List[float]] = []
    history: List[np.ndarray] = []
    for iteration in range(budget):
        record = sample_ergm(Model(terms, theta), net, steps_per_iteration, terms, seeds[iteration + 2], constraint=constraint)
        net = record.final_network
        gap = t - record.stat_series.mean(axis=0)
        trace.append(gap.tolist())
        theta = theta + a0 / (1.0 + iteration / tau) * gap
        history.append(theta.copy())
    averaged = np.mean(history[budget // 2:], axis=0)

    summary = ergm_expectations(Model(terms, averaged), terms, net, confirmation_steps, seeds[-1], constraint=constraint)
    for term, target in zip(terms, t):
        entry = summary[term.label]
        entry['target'] = float(target)
        if target != 0:
            entry['rel_error'] = (entry['mean'] - target) / target
            entry['rel_stderr'] = entry['stderr'] / abs(target)
    failed = [
        term.label for term, target in zip(terms, t)
        if abs(summary[term.label]['mean'] - target) > max(tolerance * abs(target), 3 * summary[term.label]['stderr'])
    ]
    if failed:
        raise NonConvergence(
            f"Calibrated model misses targets for {failed}",
            {'coefs': averaged.tolist(), 'summary': summary, 'trace_tail': trace[-10:]},
        )
    logger.info("Stochastic calibration converged: %s", dict(zip([t.label for t in terms], averaged.round(4))))
    return CalibrationResult(terms, averaged, t, 'stochastic', budget, summary, trace)


class CalibrateCapabilities(BaseCapability):
    """Target-statistic calibration of ergm coefficients"""

    @property
    def name(self) -> str:
        return 'calibrate'

    def exact(
        self,
        terms: Sequence[Term],
        targets: Union[Mapping[str, float], Sequence[float]],
        node_count: int,
        constraint: Optional[Constraint] = None
    ) -> CalibrationResult:
        return calibrate_exact(enumerate_states(node_count, constraint), terms, targets)

    def stochastic(
        self,
        terms: Sequence[Term],
        targets: Union[Mapping[str, float], Sequence[float]],
        node_count: int,
        budget: int = 400,
        seed: Optional[int] = None,
        **kwargs: Any
    ) -> CalibrationResult:
        return calibrate_stochastic(terms, targets, node_count, budget, self._client.seed if seed is None else seed, **kwargs)

    def write(self, result: CalibrationResult, filename: str = 'coefs.json') -> str:
        """Write the calibrated model in model-file format, with a sidecar report"""
        path = self.output_path(filename)
        result.model.save(path)
        self._client.write_json(path.with_name(path.stem + '.report.json'), result.to_dict())
        return str(path)
