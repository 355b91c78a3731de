"""
Exact computations over enumerated small state spaces

States are edge-set bitmasks over `dyad_list(n)`; bit b is dyad b. The ergm
potential is tabulated for every mask (valid or not) because the discrete
chain T weighs union networks that may violate the constraint.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve
from scipy.special import logsumexp

from ..network import Constraint, ConstraintKind, Dyad, DyadTyper, Network, dyad_list
from ..stats import Model, Term, stats_vector
from ..types import (
    EdaLabError,
    NormalizationFailure,
    ReducibleChain,
    StateSpaceTooLarge,
    Variant,
)
from .base import BaseCapability
from .rchain import ChainDiagnostics, RSpec, _transition
from .tergm import DurationSpec, StatTracker

logger = logging.getLogger(__name__)

MAX_NODES = 6
# T is dense, so it stops here; R switches to scipy.sparse above this many states
DENSE_STATE_LIMIT = 4096
ROW_SUM_TOL = 1e-12
RESIDUAL_TOL = 1e-12
CROSS_CHECK_TOL = 1e-8
_MAX_SQUARINGS = 64

Matrix = Union[np.ndarray, sparse.spmatrix]


@dataclass
class StateSpace:
    """Valid edge sets of an n-node network under a constraint"""
    node_count: int
    constraint: Constraint
    dyads: List[Dyad]
    masks: np.ndarray
    index: Dict[int, int]
    connected: bool
    attributes: Dict[str, Sequence[Any]] = field(default_factory=dict)
    typer: DyadTyper = field(default_factory=DyadTyper.homogeneous)
    _stat_tables: Dict[Tuple[str, ...], np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.masks)

    @property
    def dyad_count(self) -> int:
        return len(self.dyads)

    def network(self, mask: int) -> Network:
        return Network.from_bitmask(self.node_count, int(mask), self.attributes or None, self.dyads)

    def bit(self, dyad: Dyad) -> int:
        return self.dyads.index(dyad)

    def dyad_types(self) -> np.ndarray:
        return np.array([self.typer.type_of(d) for d in self.dyads], dtype=int)

    def stat_table(self, terms: Sequence[Term]) -> np.ndarray:
        """Statistics of every mask in 0 .. 2^N - 1, shape (2^N, len(terms))"""
        key = tuple(t.label for t in terms)
        if key not in self._stat_tables:
            table = np.empty((1 << self.dyad_count, len(terms)))
            for mask in range(1 << self.dyad_count):
                table[mask] = stats_vector(terms, self.network(mask))
            self._stat_tables[key] = table
        return self._stat_tables[key]

    def potential_table(self, model: Model) -> np.ndarray:
        """theta . g for every mask"""
        return self.stat_table(model.terms) @ model.coefs

    def require_dense(self) -> None:
        if self.size > DENSE_STATE_LIMIT:
            raise StateSpaceTooLarge(
                f"{self.size} states exceed the dense-matrix limit of {DENSE_STATE_LIMIT}",
                {'states': self.size, 'limit': DENSE_STATE_LIMIT},
            )


def _bit_matrix(count: int) -> np.ndarray:
    masks = np.arange(1 << count)
    return ((masks[:, None] >> np.arange(count)) & 1).astype(np.int64)


def enumerate_states(
    node_count: int,
    constraint: Optional[Constraint] = None,
    attributes: Optional[Mapping[str, Sequence[Any]]] = None,
    typer: Optional[DyadTyper] = None
) -> StateSpace:
    """
    All valid edge sets, plus whether single toggles connect them

    Raises:
        StateSpaceTooLarge: node_count above 6
    """
    if node_count > MAX_NODES:
        raise StateSpaceTooLarge(
            f"Exact enumeration supports at most {MAX_NODES} nodes, got {node_count}",
            {'node_count': node_count},
        )
    if node_count < 2:
        raise EdaLabError.invalid("Enumeration needs at least two nodes")
    constraint = constraint or Constraint.none()
    dyads = dyad_list(node_count)
    bits = _bit_matrix(len(dyads))
    incidence = np.zeros((len(dyads), node_count), dtype=np.int64)
    for b, (i, j) in enumerate(dyads):
        incidence[b, i] = incidence[b, j] = 1
    degrees = bits @ incidence
    if constraint.kind == ConstraintKind.MAX_DEGREE:
        valid = np.all(degrees <= constraint.bound, axis=1)
    elif constraint.kind == ConstraintKind.MIN_DEGREE:
        valid = np.all(degrees >= constraint.bound, axis=1)
    else:
        valid = np.ones(len(bits), dtype=bool)
    masks = np.flatnonzero(valid)
    index = {int(m): s for s, m in enumerate(masks)}

    graph = nx.Graph()
    graph.add_nodes_from(range(len(masks)))
    for s, mask in enumerate(masks):
        for b in range(len(dyads)):
            other = int(mask) ^ (1 << b)
            if other > mask and other in index:
                graph.add_edge(s, index[other])
    connected = len(masks) > 0 and nx.is_connected(graph)
    if not connected:
        logger.warning("Valid states under %s are not connected by single toggles", constraint)

    return StateSpace(
        node_count=node_count,
        constraint=constraint,
        dyads=dyads,
        masks=masks,
        index=index,
        connected=connected,
        attributes=dict(attributes or {}),
        typer=typer or DyadTyper.homogeneous(),
    )


def exact_pi(space: StateSpace, model: Model) -> np.ndarray:
    """The ergm distribution normalized over valid states only"""
    phi = space.potential_table(model)[space.masks]
    return np.exp(phi - logsumexp(phi))


def exact_expectations(space: StateSpace, model: Model, terms: Optional[Sequence[Term]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of `terms` (default: the model's) under exact_pi"""
    terms = model.terms if terms is None else terms
    pi = exact_pi(space, model)
    g = space.stat_table(terms)[space.masks]
    mean = pi @ g
    centered = g - mean
    cov = centered.T @ (centered * pi[:, None])
    return mean, cov


def _per_type(space: StateSpace, durations: DurationSpec) -> np.ndarray:
    return np.array([durations.duration(k) for k in space.dyad_types()])


def _bit_sums(space: StateSpace, values: np.ndarray) -> np.ndarray:
    """Sum of `values[b]` over the set bits of every mask"""
    return _bit_matrix(space.dyad_count) @ values


def build_T(space: StateSpace, model: Model, durations: DurationSpec, variant: Variant = Variant.OLD) -> np.ndarray:
    """
    Exact one-step transition matrix of the discrete EDA tergm

    T_ij is proportional to pi(i | j) / pi(i) times (D_k - 1)^-1 per
    dissolved edge and (D_k - 1)^-1 (old) or D_k^-1 (new) per formed edge;
    rows are normalized over the valid states.
    """
    variant = Variant(variant)
    if variant not in (Variant.OLD, Variant.NEW):
        raise EdaLabError.invalid(f"build_T supports the old and new variants, got '{variant.value}'")
    space.require_dense()
    d = _per_type(space, durations)
    if np.any(d <= 1):
        raise EdaLabError.invalid("build_T needs D_k > 1 for every dyad type", durations=durations.durations())
    log_dissolve = _bit_sums(space, -np.log(d - 1.0))
    log_form = _bit_sums(space, -np.log(d - 1.0) if variant == Variant.OLD else -np.log(d))
    phi = space.potential_table(model)
    masks = space.masks
    T = np.empty((space.size, space.size))
    for s, i in enumerate(masks):
        union = masks | i
        formed = masks & ~i
        dissolved = i & ~masks
        logw = phi[union] - phi[i] + log_form[formed] + log_dissolve[dissolved]
        w = np.exp(logw - logw.max())
        T[s] = w / w.sum()
    return T


def build_R(
    space: StateSpace,
    model: Model,
    durations: DurationSpec,
    sparse_output: Optional[bool] = None
) -> Matrix:
    """
    Exact matrix of the infinitesimal-time chain over valid states

    Dense up to DENSE_STATE_LIMIT states and a scipy.sparse CSR matrix above
    it, unless `sparse_output` says otherwise.

    Raises:
        NormalizationFailure: some state's outflow exceeds one; details carry
            the state, its outflow and the smallest sufficient lam
    """
    if sparse_output is None:
        sparse_output = space.size > DENSE_STATE_LIMIT
    if not sparse_output:
        space.require_dense()
    d = _per_type(space, durations)
    phi = space.potential_table(model)
    masks = space.masks
    position = np.full(1 << space.dyad_count, -1, dtype=np.int64)
    position[masks] = np.arange(space.size)
    rows, cols, rates = [], [], []
    for b in range(space.dyad_count):
        others = masks ^ (1 << b)
        target = position[others]
        keep = target >= 0
        present = (masks >> b & 1).astype(bool)
        with np.errstate(over='ignore'):
            rate = np.where(present, 1.0 / d[b], np.exp(phi[others] - phi[masks]) / d[b])
        rows.append(np.flatnonzero(keep))
        cols.append(target[keep])
        rates.append(rate[keep])
    rows, cols, rates = np.concatenate(rows), np.concatenate(cols), np.concatenate(rates)
    outflow = np.bincount(rows, weights=rates, minlength=space.size)
    worst = int(np.argmax(outflow))
    if outflow[worst] > 1.0 + ROW_SUM_TOL:
        minimal = durations.scale * float(outflow[worst])
        raise NormalizationFailure(
            f"State {int(masks[worst])} has outflow {outflow[worst]:.6g} > 1; lam must be at least {minimal:.6g}",
            {'state': int(masks[worst]), 'outflow': float(outflow[worst]), 'minimal_lam': minimal},
        )
    diagonal = np.arange(space.size)
    if sparse_output:
        return sparse.csr_matrix(
            (np.concatenate([rates, 1.0 - outflow]),
             (np.concatenate([rows, diagonal]), np.concatenate([cols, diagonal]))),
            shape=(space.size, space.size),
        )
    R = np.zeros((space.size, space.size))
    R[rows, cols] = rates
    R[diagonal, diagonal] = 1.0 - outflow
    return R


def _power_limit(matrix: np.ndarray) -> np.ndarray:
    """Rows of the lazy chain's high power, by repeated squaring"""
    P = 0.5 * (np.eye(len(matrix)) + matrix)
    for _ in range(_MAX_SQUARINGS):
        Q = P @ P
        Q /= Q.sum(axis=1, keepdims=True)
        if np.max(np.abs(Q - P)) < 1e-13:
            return Q
        P = Q
    return P


def _sparse_solve(A: sparse.spmatrix, b: np.ndarray) -> np.ndarray:
    """spsolve that raises LinAlgError on a singular or non-finite system"""
    with warnings.catch_warnings():
        warnings.simplefilter('error', MatrixRankWarning)
        try:
            x = spsolve(sparse.csc_matrix(A), b)
        except MatrixRankWarning as e:
            raise linalg.LinAlgError(str(e))
    if not np.all(np.isfinite(x)):
        raise linalg.LinAlgError("Sparse solve returned non-finite values")
    return x


def stationary(matrix: Matrix) -> np.ndarray:
    """
    Left fixed vector of a row-stochastic matrix

    Solves (I - M^T) x = 0 with one equation replaced by sum(x) = 1, then
    cross-checks against the lazy chain's power limit. Sparse matrices are
    solved with spsolve and checked by their residual and sign only.

    Raises:
        ReducibleChain: the solve is singular or disagrees with the power limit
    """
    if sparse.issparse(matrix):
        return _sparse_stationary(matrix)
    size = len(matrix)
    A = np.eye(size) - matrix.T
    A[-1, :] = 1.0
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        pi = linalg.solve(A, b)
    except (linalg.LinAlgError, ValueError) as e:
        raise ReducibleChain(f"Stationary system is singular: {e}")
    residual = float(np.max(np.abs(pi @ matrix - pi)))
    if residual > RESIDUAL_TOL:
        raise ReducibleChain(f"Stationary residual {residual:.3g} exceeds {RESIDUAL_TOL}", {'residual': residual})
    limit = _power_limit(matrix)
    spread = float(np.max(np.abs(limit - pi[None, :])))
    if spread > CROSS_CHECK_TOL:
        raise ReducibleChain(
            f"Power iteration disagrees with the linear solve by {spread:.3g}",
            {'disagreement': spread},
        )
    return pi


def _sparse_stationary(matrix: sparse.spmatrix) -> np.ndarray:
    size = matrix.shape[0]
    A = (sparse.identity(size, format='csr') - matrix.T.tocsr()).tocsr()
    A = sparse.vstack([A[:-1], sparse.csr_matrix(np.ones((1, size)))])
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        pi = _sparse_solve(A, b)
    except linalg.LinAlgError as e:
        raise ReducibleChain(f"Stationary system is singular: {e}")
    residual = float(np.max(np.abs(matrix.T @ pi - pi)))
    if residual > RESIDUAL_TOL:
        raise ReducibleChain(f"Stationary residual {residual:.3g} exceeds {RESIDUAL_TOL}", {'residual': residual})
    if pi.min() < -CROSS_CHECK_TOL:
        raise ReducibleChain(f"Stationary solve has negative mass {pi.min():.3g}", {'minimum': float(pi.min())})
    return pi


def detailed_balance_residual(matrix: Matrix, pi: np.ndarray) -> float:
    """max over i, j of |pi_i M_ij - pi_j M_ji|"""
    if sparse.issparse(matrix):
        flow = sparse.diags(pi) @ matrix
        gap = abs(flow - flow.T)
        return float(gap.max()) if gap.nnz else 0.0
    flow = pi[:, None] * matrix
    return float(np.max(np.abs(flow - flow.T)))


def total_variation(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(a) - np.asarray(b))))


def mean_edge_duration_exact(
    matrix: Matrix,
    space: StateSpace,
    dyad: Dyad,
    pi: Optional[np.ndarray] = None
) -> float:
    """
    Expected lifetime in steps of an edge on `dyad`

    Absorption time of the chain restricted to states holding the edge,
    started from the stationary inflow into those states.
    """
    bit = space.bit(dyad)
    pi = stationary(matrix) if pi is None else pi
    holds = (space.masks >> bit & 1).astype(bool)
    inside = np.flatnonzero(holds)
    outside = np.flatnonzero(~holds)
    if sparse.issparse(matrix):
        matrix = matrix.tocsr()
        inflow = matrix[outside][:, inside].T @ pi[outside]
        Q = matrix[inside][:, inside]
        system = sparse.identity(len(inside), format='csr') - Q
        solve = _sparse_solve
    else:
        inflow = pi[outside] @ matrix[np.ix_(outside, inside)]
        system = np.eye(len(inside)) - matrix[np.ix_(inside, inside)]
        solve = linalg.solve
    if inflow.sum() <= 0:
        raise EdaLabError.invalid(f"Dyad {dyad} never forms an edge; it is not free")
    try:
        times = solve(system, np.ones(len(inside)))
    except linalg.LinAlgError:
        raise EdaLabError.invalid(f"An edge on {dyad} can persist forever; it is not free")
    return float(inflow @ times / inflow.sum())


def duration_errors(matrix: Matrix, space: StateSpace, durations: DurationSpec, pi: Optional[np.ndarray] = None) -> Dict[Dyad, float]:
    """Relative error (duration - D_k) / D_k for every dyad that can form"""
    pi = stationary(matrix) if pi is None else pi
    errors = {}
    for dyad in space.dyads:
        try:
            value = mean_edge_duration_exact(matrix, space, dyad, pi)
        except EdaLabError:
            continue
        target = durations.duration(space.typer.type_of(dyad))
        errors[dyad] = (value - target) / target
    return errors


def _slope(lams: Sequence[float], values: Sequence[float]) -> Optional[float]:
    pairs = [(math.log(l), math.log(v)) for l, v in zip(lams, values) if v > 0]
    if len(pairs) < 2:
        return None
    x, y = zip(*pairs)
    return float(np.polyfit(x, y, 1)[0])


def asymptotic_report(
    space: StateSpace,
    model: Model,
    duration_base: Mapping[int, float],
    lams: Sequence[float],
    variants: Sequence[Variant] = (Variant.OLD, Variant.NEW)
) -> Dict[str, Any]:
    """
    Distances between T and R as lam grows

    Per lam and variant: max|T - R|, TV(stationary(T), pi) and the largest
    relative duration error under T; plus log-log slopes across `lams`.
    """
    lams = sorted(float(l) for l in lams)
    pi = exact_pi(space, model)
    rows: List[Dict[str, Any]] = []
    for lam in lams:
        durations = DurationSpec(dict(duration_base), lam)
        R = build_R(space, model, durations)
        for variant in variants:
            variant = Variant(variant)
            T = build_T(space, model, durations, variant)
            pi_T = stationary(T)
            errors = duration_errors(T, space, durations, pi_T)
            rows.append({
                'lam': lam,
                'variant': variant.value,
                'max_abs_diff': float(np.max(np.abs(T - R))),
                'tv_distance': total_variation(pi_T, pi),
                'max_duration_error': max((abs(e) for e in errors.values()), default=0.0),
            })
    slopes: Dict[str, Dict[str, Optional[float]]] = {}
    for variant in variants:
        variant = Variant(variant)
        mine = [r for r in rows if r['variant'] == variant.value]
        slopes[variant.value] = {
            metric: _slope([r['lam'] for r in mine], [r[metric] for r in mine])
            for metric in ('max_abs_diff', 'tv_distance', 'max_duration_error')
        }
    return {'rows': rows, 'slopes': slopes}


def simulate_visits(
    space: StateSpace,
    spec: RSpec,
    steps: int,
    seed: Optional[int] = None,
    thin: int = 1,
    initial_mask: int = 0
) -> np.ndarray:
    """State-visit counts of the simulated R chain, one visit per `thin` steps"""
    if spec.node_count != space.node_count:
        raise EdaLabError.invalid("RSpec and state space have different node counts")
    if initial_mask not in space.index:
        raise EdaLabError.invalid(f"Initial mask {initial_mask} is not a valid state")
    rng = np.random.default_rng(seed)
    net = space.network(initial_mask)
    tracker = StatTracker([], net)
    diagnostics = ChainDiagnostics()
    counts = np.zeros(space.size, dtype=np.int64)
    mask = initial_mask
    draws = rng.random((steps, 4))
    for t, u in enumerate(draws, start=1):
        accepted, _ = _transition(spec, net, u, t, tracker, diagnostics)
        if accepted:
            mask = net.to_bitmask(space.dyads)
        if t % thin == 0:
            counts[space.index[mask]] += 1
    return counts


def oracle_report(
    space: StateSpace,
    model: Model,
    duration_base: Mapping[int, float],
    lams: Sequence[float]
) -> Dict[str, Any]:
    """Certificates for R at every lam plus the T-versus-R asymptotics"""
    pi = exact_pi(space, model)
    certificates = []
    for lam in sorted(lams):
        durations = DurationSpec(dict(duration_base), float(lam))
        R = build_R(space, model, durations)
        pi_R = stationary(R)
        errors = duration_errors(R, space, durations, pi_R)
        certificates.append({
            'lam': float(lam),
            'detailed_balance_residual': detailed_balance_residual(R, pi),
            'stationary_max_diff': float(np.max(np.abs(pi_R - pi))),
            'max_duration_error': max((abs(e) for e in errors.values()), default=0.0),
            'row_sum_error': float(np.max(np.abs(np.asarray(R.sum(axis=1)).ravel() - 1.0))),
        })
    if space.size > DENSE_STATE_LIMIT:
        logger.warning("T is dense; skipping the T-versus-R asymptotics over %d states", space.size)
        asymptotics = None
    else:
        asymptotics = asymptotic_report(space, model, duration_base, lams)
    return {
        'node_count': space.node_count,
        'constraint': str(space.constraint),
        'states': space.size,
        'single_toggle_connected': space.connected,
        'free_edges_removable': space.constraint.free_edges_removable,
        'model': model.to_entries(),
        'duration_base': {str(k): v for k, v in duration_base.items()},
        'pi': pi.tolist(),
        'certificates': certificates,
        'asymptotics': asymptotics,
    }


class OracleCapabilities(BaseCapability):
    """Exact enumeration reports"""

    @property
    def name(self) -> str:
        return 'oracle'

    def enumerate(self, node_count: int, constraint: Optional[Constraint] = None) -> StateSpace:
        return enumerate_states(node_count, constraint)

    def report(
        self,
        model: Model,
        node_count: int,
        constraint: Optional[Constraint] = None,
        lams: Sequence[float] = (16.0, 32.0, 64.0, 128.0),
        duration_base: Optional[Mapping[int, float]] = None,
        filename: str = 'report.json'
    ) -> Dict[str, Any]:
        """
        Build and write report.json for a small model

        Args:
            model: ergm with coefficients
            node_count: at most 6
            constraint: degree constraint, default none
            lams: time-step scales, ascending
            duration_base: D0 per dyad type, default 1 natural unit

        Returns:
            The report dictionary
        """
        space = enumerate_states(node_count, constraint)
        report = oracle_report(space, model, duration_base or {1: 1.0}, lams)
        self._client.write_json(self.output_path(filename), report)
        logger.info("Oracle report over %d states written to %s", space.size, self.output_path(filename))
        return report
