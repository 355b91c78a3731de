"""
Infinitesimal-time EDA chain R

Off-diagonal entries are (pi(j)/pi(i)) / D_k for on-toggles and 1 / D_k for
off-toggles, with D_k = lam * D0_k. One step draws a dyad (or nothing) from
a proposal P and accepts with probability R_ij / P(j|i), so P must dominate R.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config import DEFAULT_R_CONFIG, build_typer, merge_defaults, parse_durations
from ..network import Constraint, Dyad, DyadTyper, Network, Spell
from ..stats import Model, Term, parse_terms
from ..types import AcceptanceOverflow, EdaLabError, ProposalKind, StatSummary
from .base import BaseCapability
from .tergm import (
    DurationSpec,
    SimulationRecord,
    StatTracker,
    _censored_spells,
    initial_from_config,
    summarize_series,
    tnt_log_proposal_ratio,
    write_record,
)

logger = logging.getLogger(__name__)

OVERFLOW_TOLERANCE = 1e-12
BOUNDARY_WARN_RATE = 0.01
ODDS_BOUND_MARGIN = 2.0
_BLOCK = 65536


def lambda_min_random_toggle(dyad_count: int, duration_base: float, odds_bound: float = 1.0) -> float:
    """Smallest lam for the random-toggle proposal: lam * D0 = N * max(1, c)"""
    if dyad_count < 1 or duration_base <= 0:
        raise EdaLabError.invalid("Need at least one dyad and a positive base duration")
    return dyad_count * max(1.0, odds_bound) / duration_base


def lambda_tnt_analogue(dyad_count: int, edge_bound: int, odds_bound: float, duration_base: float) -> float:
    """lam = (2 / D0) * max(N * N_E / (N + N_E), c * N)"""
    if not 0 < edge_bound <= dyad_count:
        raise EdaLabError.invalid(f"Edge bound must lie in [1, {dyad_count}], got {edge_bound}")
    if odds_bound <= 0 or duration_base <= 0:
        raise EdaLabError.invalid("Odds bound and base duration must be positive")
    n, ne = float(dyad_count), float(edge_bound)
    return 2.0 / duration_base * max(n * ne / (n + ne), odds_bound * n)


@dataclass
class ChainDiagnostics:
    proposals: int = 0
    accepted: int = 0
    max_ratio: float = 0.0
    boundary_hits: int = 0

    @property
    def boundary_rate(self) -> float:
        return self.boundary_hits / self.proposals if self.proposals else 0.0

    def as_dict(self) -> Dict[str, Any]:
        return {
            'proposals': self.proposals,
            'accepted': self.accepted,
            'max_acceptance_ratio': self.max_ratio,
            'boundary_hits': self.boundary_hits,
            'boundary_hit_rate': self.boundary_rate,
        }


@dataclass
class RSpec:
    """
    The chain R for one ergm and base durations

    `lam=None` picks the smallest valid lam for the proposal, times
    `safety_factor`. `odds_bound` is the caller's bound c on conditional edge
    odds; a wrong bound surfaces as AcceptanceOverflow. Without `edge_bound`
    the tnt analogue uses N_E = N.
    """
    model: Model
    node_count: int
    duration_base: Dict[int, float]
    lam: Optional[float] = None
    odds_bound: float = 1.0
    edge_bound: Optional[int] = None
    proposal: ProposalKind = ProposalKind.TNT_ANALOGUE
    constraint: Constraint = field(default_factory=Constraint.none)
    dyad_typer: DyadTyper = field(default_factory=DyadTyper.homogeneous)
    safety_factor: float = 1.0

    def __post_init__(self):
        self.proposal = ProposalKind(self.proposal)
        if isinstance(self.duration_base, (int, float)):
            self.duration_base = {1: float(self.duration_base)}
        if self.node_count < 2:
            raise EdaLabError.invalid("The chain needs at least two nodes")
        for kind in range(1, self.dyad_typer.type_count + 1):
            if kind not in self.duration_base:
                raise EdaLabError.invalid(f"No base duration for dyad type {kind}")
        if self.odds_bound <= 0:
            raise EdaLabError.invalid(f"Odds bound must be positive, got {self.odds_bound}")
        if self.safety_factor < 1:
            raise EdaLabError.invalid("safety_factor below 1 would break the lam bound")
        if self.edge_bound is not None and not 0 < self.edge_bound <= self.dyad_count:
            raise EdaLabError.invalid(f"Edge bound must lie in [1, {self.dyad_count}]")
        if self.lam is None:
            self.lam = self.minimal_lam() * self.safety_factor
        self.durations = DurationSpec(dict(self.duration_base), float(self.lam))
        shortest = min(self.durations.durations().values())
        if shortest < 1:
            raise EdaLabError.invalid(
                f"lam={self.lam:g} gives a duration {shortest:g} < 1 step; rates would exceed one",
            )
        self._min_base = min(self.duration_base.values())

    @property
    def dyad_count(self) -> int:
        return self.node_count * (self.node_count - 1) // 2

    @property
    def proposal_edge_bound(self) -> int:
        return self.edge_bound if self.edge_bound is not None else self.dyad_count

    def minimal_lam(self) -> float:
        base = min(self.duration_base.values())
        if self.proposal == ProposalKind.RANDOM_TOGGLE:
            return lambda_min_random_toggle(self.dyad_count, base, self.odds_bound)
        return lambda_tnt_analogue(self.dyad_count, self.proposal_edge_bound, self.odds_bound, base)

    def weight(self, kind: int) -> float:
        """Per-type proposal thinning minD0 / D0_k"""
        return self._min_base / self.duration_base[kind]

    def at_edge_bound(self, net: Network, dyad: Dyad) -> bool:
        return self.edge_bound is not None and not net.has_edge(dyad) and net.edge_count >= self.edge_bound


def r_rate(spec: RSpec, net: Network, dyad: Dyad) -> float:
    """R_ij for the network j that toggles `dyad`"""
    if not spec.constraint.toggle_is_valid(net, dyad):
        return 0.0
    d = spec.durations.duration(spec.dyad_typer.type_of(dyad))
    if net.has_edge(dyad):
        return 1.0 / d
    if spec.at_edge_bound(net, dyad):
        return 0.0
    return math.exp(spec.model.conditional_logodds(net, dyad)) / d


def proposal_prob(spec: RSpec, net: Network, dyad: Dyad) -> float:
    """P(j|i), type thinning included"""
    w = spec.weight(spec.dyad_typer.type_of(dyad))
    n = spec.dyad_count
    if spec.proposal == ProposalKind.RANDOM_TOGGLE:
        return w / n
    extra = 1.0 / (2 * spec.proposal_edge_bound) if net.has_edge(dyad) else 0.0
    return w * (0.5 / n + extra)


def _propose(spec: RSpec, net: Network, u: Sequence[float]) -> Optional[Dyad]:
    if spec.proposal == ProposalKind.RANDOM_TOGGLE:
        return net.random_dyad(u[1], u[2])
    if u[0] < 0.5:
        return net.random_dyad(u[1], u[2])
    if u[0] < 0.5 + net.edge_count / (2.0 * spec.proposal_edge_bound):
        return net.random_edge(u[1])
    return None


def _transition(
    spec: RSpec,
    net: Network,
    u: Sequence[float],
    time: int,
    tracker: StatTracker,
    diagnostics: ChainDiagnostics
) -> Tuple[bool, Optional[Spell]]:
    diagnostics.proposals += 1
    dyad = _propose(spec, net, u)
    if dyad is None:
        return False, None
    if spec.at_edge_bound(net, dyad):
        diagnostics.boundary_hits += 1
        return False, None
    rate = r_rate(spec, net, dyad)
    if rate == 0.0:
        return False, None
    kind = spec.dyad_typer.type_of(dyad)
    ratio = rate / proposal_prob(spec, net, dyad)
    if ratio > diagnostics.max_ratio:
        diagnostics.max_ratio = ratio
    if ratio > 1.0 + OVERFLOW_TOLERANCE:
        raise AcceptanceOverflow(
            f"Acceptance ratio {ratio:.6g} > 1 for dyad {dyad}; raise lam or the odds bound",
            {'dyad': list(dyad), 'ratio': ratio, 'lam': spec.lam, 'odds_bound': spec.odds_bound},
        )
    # type thinning and acceptance combined
    if u[3] >= spec.weight(kind) * ratio:
        return False, None
    diagnostics.accepted += 1
    return True, tracker.toggle(net, dyad, time, spec.dyad_typer)


def step_R(spec: RSpec, net: Network, rng: np.random.Generator, time: int = 0) -> Network:
    """One propose/accept step of R; modifies and returns `net`"""
    _transition(spec, net, rng.random(4), time, StatTracker([], net), ChainDiagnostics())
    return net


def _check_initial(spec: RSpec, initial: Network) -> None:
    if initial.node_count != spec.node_count:
        raise EdaLabError.invalid(f"Initial network has {initial.node_count} nodes, spec has {spec.node_count}")
    if not spec.constraint.is_valid(initial):
        raise EdaLabError.invalid(f"Initial network violates {spec.constraint}")
    if spec.edge_bound is not None and initial.edge_count > spec.edge_bound:
        raise EdaLabError.invalid(
            f"Initial network has {initial.edge_count} edges, above the bound {spec.edge_bound}"
        )


def simulate_R(
    spec: RSpec,
    initial: Network,
    burn_in: int,
    steps: int,
    monitored: Sequence[Term],
    seed: Optional[int] = None,
    thin: int = 1
) -> SimulationRecord:
    """
    Iterate step_R for burn_in + steps steps

    Statistics are recorded every `thin` steps; spells are in steps, so their
    mean is D_k = lam * D0_k steps (D0_k natural time units).
    """
    _check_initial(spec, initial)
    if burn_in < 0 or steps < 1 or thin < 1:
        raise EdaLabError.invalid("burn_in must be >= 0, steps and thin >= 1")
    rng = np.random.default_rng(seed)
    net = initial.copy()
    net.reset_formation_times(-1)
    tracker = StatTracker(monitored, net)
    diagnostics = ChainDiagnostics()
    total = burn_in + steps
    rows: List[np.ndarray] = []
    completed: List[Spell] = []
    done = 0
    while done < total:
        block = rng.random((min(_BLOCK, total - done), 4))
        for u in block:
            t = done
            _, spell = _transition(spec, net, u, t, tracker, diagnostics)
            if spell is not None and t - spell.age >= burn_in:
                completed.append(spell)
            done += 1
            if done % thin == 0:
                rows.append(tracker.values.copy())
    if diagnostics.boundary_rate > BOUNDARY_WARN_RATE:
        logger.warning(
            "Edge bound %s was hit on %.2f%% of proposals; the restricted chain may be distorted",
            spec.edge_bound, 100 * diagnostics.boundary_rate,
        )
    series = np.array(rows) if rows else np.empty((0, len(tracker.terms)))
    return SimulationRecord(
        labels=[t.label for t in tracker.terms],
        stat_series=series,
        burn_in=burn_in // thin,
        completed_spells=completed,
        censored_spells=_censored_spells(net, spec.dyad_typer, total - 1, burn_in),
        seed=seed,
        config={
            'kind': 'R',
            'lam': spec.lam,
            'durations': spec.durations.durations(),
            'model': spec.model.to_entries(),
            'constraint': str(spec.constraint),
            'proposal': spec.proposal.value,
            'burn_in': burn_in,
            'steps': steps,
            'thin': thin,
        },
        final_network=net,
        diagnostics=diagnostics.as_dict(),
    )


def sample_ergm(
    model: Model,
    initial: Network,
    steps: int,
    monitored: Sequence[Term],
    seed: Optional[int] = None,
    burn_in: int = 0,
    thin: int = 1,
    constraint: Optional[Constraint] = None
) -> SimulationRecord:
    """
    Tie-no-tie Metropolis-Hastings sampler for the cross-sectional ergm

    Diagnostics carry the largest conditional log-odds met by any proposal,
    which is what the odds-bound pilot needs.
    """
    constraint = constraint or Constraint.none()
    if not constraint.is_valid(initial):
        raise EdaLabError.invalid(f"Initial network violates {constraint}")
    if burn_in < 0 or steps < 1 or thin < 1:
        raise EdaLabError.invalid("burn_in must be >= 0, steps and thin >= 1")
    rng = np.random.default_rng(seed)
    net = initial.copy()
    tracker = StatTracker(monitored, net)
    total_dyads = net.dyad_count
    max_logodds = -math.inf
    accepted = 0
    rows: List[np.ndarray] = []
    total = burn_in + steps
    done = 0
    while done < total:
        block = rng.random((min(_BLOCK, total - done), 4))
        for u in block:
            done += 1
            edges = net.edge_count
            if edges > 0 and u[0] < 0.5:
                dyad = net.random_edge(u[1])
            else:
                dyad = net.random_dyad(u[1], u[2])
            if constraint.toggle_is_valid(net, dyad):
                turning_on = not net.has_edge(dyad)
                logodds = model.conditional_logodds(net, dyad)
                max_logodds = max(max_logodds, logodds)
                log_ratio = (logodds if turning_on else -logodds) + tnt_log_proposal_ratio(total_dyads, edges, turning_on)
                if log_ratio >= 0 or u[3] < math.exp(log_ratio):
                    tracker.toggle(net, dyad, done)
                    accepted += 1
            if done % thin == 0:
                rows.append(tracker.values.copy())
    series = np.array(rows) if rows else np.empty((0, len(tracker.terms)))
    return SimulationRecord(
        labels=[t.label for t in tracker.terms],
        stat_series=series,
        burn_in=burn_in // thin,
        completed_spells=[],
        censored_spells=[],
        seed=seed,
        config={'kind': 'ergm', 'model': model.to_entries(), 'burn_in': burn_in, 'steps': steps, 'thin': thin},
        final_network=net,
        diagnostics={'accepted': accepted, 'max_logodds': max_logodds},
    )


def ergm_expectations(
    model: Model,
    terms: Sequence[Term],
    initial: Network,
    steps: int,
    seed: Optional[int] = None,
    burn_in: int = 0,
    thin: int = 1,
    constraint: Optional[Constraint] = None
) -> Dict[str, StatSummary]:
    """Monte Carlo means and batch-means standard errors of `terms` under the ergm"""
    record = sample_ergm(model, initial, steps, terms, seed, burn_in, thin, constraint)
    return summarize_series(record.labels, record.sampled)


def estimate_odds_bound(
    model: Model,
    initial: Network,
    steps: int = 20000,
    seed: Optional[int] = None,
    margin: float = ODDS_BOUND_MARGIN,
    constraint: Optional[Constraint] = None
) -> float:
    """exp(largest conditional log-odds seen in a pilot ergm run) * margin"""
    record = sample_ergm(model, initial, steps, [], seed, constraint=constraint)
    bound = math.exp(record.diagnostics['max_logodds']) * margin
    logger.debug("Pilot odds bound %.6g from %d steps", bound, steps)
    return bound


def spec_from_config(config: Mapping[str, Any], odds_bound: Optional[float] = None) -> RSpec:
    return RSpec(
        model=Model.from_entries(config['model']),
        node_count=int(config['nodes']),
        duration_base=parse_durations(config['duration_base']),
        lam=config['lam'],
        odds_bound=odds_bound if odds_bound is not None else (config['odds_bound'] or 1.0),
        edge_bound=config['edge_bound'],
        proposal=ProposalKind(config['proposal']),
        constraint=Constraint.parse(config['constraint']),
        dyad_typer=build_typer(config),
        safety_factor=float(config['safety_factor']),
    )


class RChainCapabilities(BaseCapability):
    """Simulation of the infinitesimal-time chain R"""

    @property
    def name(self) -> str:
        return 'rchain'

    def simulate(
        self,
        spec: RSpec,
        initial: Network,
        burn_in: int,
        steps: int,
        monitored: Sequence[Term],
        seed: Optional[int] = None,
        thin: int = 1
    ) -> SimulationRecord:
        return simulate_R(spec, initial, burn_in, steps, monitored, self._client.seed if seed is None else seed, thin)

    def run_config(self, config: Mapping[str, Any], seed: Optional[int] = None, subdir: str = '') -> Dict[str, Any]:
        """
        Simulate R from a `simulate-r` config

        Writes the simulate-tergm file set plus lambda.json. Without an
        explicit odds bound, one is estimated from a pilot ergm run.
        """
        config = merge_defaults(config, DEFAULT_R_CONFIG)
        seed = self._client.seed if seed is None else seed
        init_seed, pilot_seed, chain_seed = self._client.spawn_seeds(3, seed)
        model = Model.from_entries(config['model'])
        constraint = Constraint.parse(config['constraint'])
        initial = initial_from_config(config, model, constraint, np.random.default_rng(init_seed))
        odds_bound = config['odds_bound']
        if odds_bound is None:
            odds_bound = estimate_odds_bound(model, initial, seed=pilot_seed, constraint=constraint)
        spec = spec_from_config(config, odds_bound)
        logger.info("Simulating R on %d nodes with lam=%.6g", spec.node_count, spec.lam)
        record = simulate_R(
            spec, initial, config['burn_in'], config['steps'],
            parse_terms(config['monitored']), chain_seed, config['thin'],
        )
        record.seed = seed
        summary = write_record(self, record, config['targets'], subdir)
        lam_report = {
            'lam': spec.lam,
            'odds_bound': spec.odds_bound,
            'edge_bound': spec.edge_bound,
            'proposal': spec.proposal.value,
            'safety_factor': spec.safety_factor,
            'minimal_lam': spec.minimal_lam(),
            'durations': spec.durations.durations(),
            **record.diagnostics,
        }
        self._client.write_json(self.output_path('lambda.json', subdir), lam_report)
        summary['lambda'] = lam_report
        return summary
