"""
Discrete-time EDA tergm simulation

Each time step runs a formation phase (edges may only be added to dyads that
were empty at the start of the step) followed by a dissolution phase acting on
the edges present at the start of the step, so no dyad both forms and
dissolves within one step.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..config import (
    DEFAULT_TERGM_CONFIG,
    bernoulli_network,
    build_typer,
    edges_density,
    merge_defaults,
    parse_durations,
)
from ..network import Constraint, Dyad, DyadTyper, Network, Spell, iter_dyads
from ..stats import Model, Term, change_stat, parse_terms, stats_vector
from ..types import DurationEstimate, EdaLabError, StatSummary, TergmConfig, Variant
from .base import BaseCapability
from .transforms import expit, formation_offset

logger = logging.getLogger(__name__)

MIN_PROPOSALS = 10_000
PROPOSALS_PER_EDGE = 20


@dataclass
class DurationSpec:
    """Base durations D0 per dyad type and the time-step scale; D_k = scale * D0_k"""
    base: Dict[int, float]
    scale: float = 1.0

    def __post_init__(self):
        if not self.base:
            raise EdaLabError.invalid("At least one dyad type needs a duration")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise EdaLabError.invalid(f"Time-step scale must be positive, got {self.scale}")

    @classmethod
    def homogeneous(cls, duration: float, scale: float = 1.0) -> 'DurationSpec':
        return cls({1: float(duration)}, scale)

    def duration(self, kind: int) -> float:
        try:
            return self.scale * self.base[kind]
        except KeyError:
            raise EdaLabError.invalid(f"No duration given for dyad type {kind}", dyad_type=kind)

    def durations(self) -> Dict[int, float]:
        return {k: self.scale * d for k, d in sorted(self.base.items())}


@dataclass
class SimulationRecord:
    """Statistic time series and edge spells of one chain"""
    labels: List[str]
    stat_series: np.ndarray
    burn_in: int
    completed_spells: List[Spell]
    censored_spells: List[Spell]
    seed: Optional[int]
    config: Dict[str, Any] = field(default_factory=dict)
    final_network: Optional[Network] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def sampled(self) -> np.ndarray:
        return self.stat_series[self.burn_in:]

    def summary(self, targets: Optional[Mapping[str, float]] = None) -> Dict[str, StatSummary]:
        return summarize_series(self.labels, self.sampled, targets)


class StatTracker:
    """Keeps monitored statistics current by applying change statistics on every toggle"""

    def __init__(self, terms: Sequence[Term], net: Network):
        self.terms = list(terms)
        self.values = stats_vector(self.terms, net)

    def toggle(self, net: Network, dyad: Dyad, time: int, typer: Optional[DyadTyper] = None) -> Optional[Spell]:
        if self.terms:
            sign = -1.0 if net.has_edge(dyad) else 1.0
            for idx, term in enumerate(self.terms):
                self.values[idx] += sign * change_stat(term, net, dyad)
        return net.toggle(dyad, time, typer)


@dataclass
class TergmSpec:
    """
    A separable EDA tergm

    The formation log-odds of a dyad of type k is the ergm's conditional
    log-odds plus the variant's offset: -log(D_k - 1) (old), -log(D_k) (new),
    or the per-dyad exact offset (dyad-independent models only). Dissolution
    is dyad-independent with probability 1/D_k.
    """
    model: Model
    durations: DurationSpec
    variant: Variant = Variant.NEW
    constraint: Constraint = field(default_factory=Constraint.none)
    proposals_per_phase: Optional[int] = None
    dyad_typer: DyadTyper = field(default_factory=DyadTyper.homogeneous)
    exact_formation: bool = True
    proposals_multiplier: float = 1.0

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.variant == Variant.R:
            raise EdaLabError.invalid("The infinitesimal chain is simulated by the rchain capability")
        if self.variant == Variant.EXACT and not self.model.is_dyad_independent:
            raise EdaLabError.invalid("The exact transform needs a dyad-independent model")
        for kind in range(1, self.dyad_typer.type_count + 1):
            d = self.durations.duration(kind)
            if not (d >= 1 and math.isfinite(d)):
                raise EdaLabError.invalid(f"Duration of type {kind} must satisfy 1 <= D < inf, got {d}")
        if self.proposals_multiplier <= 0:
            raise EdaLabError.invalid("proposals_multiplier must be positive")
        if self.proposals_per_phase is not None and self.proposals_per_phase < 1:
            raise EdaLabError.invalid("proposals_per_phase must be positive")

    @cached_property
    def _offsets(self) -> Dict[int, float]:
        return {
            k: formation_offset(0.0, self.durations.duration(k), self.variant)
            for k in range(1, self.dyad_typer.type_count + 1)
        }

    def dissolution_prob(self, kind: int) -> float:
        return 1.0 / self.durations.duration(kind)

    def dissolution_coefs(self) -> Dict[int, float]:
        """theta- = log(D_k - 1) per dyad type"""
        return {
            k: (-math.inf if d == 1 else math.log(d - 1.0))
            for k, d in ((k, self.durations.duration(k)) for k in range(1, self.dyad_typer.type_count + 1))
        }

    def formation_logodds(self, net: Network, dyad: Dyad) -> float:
        theta = self.model.conditional_logodds(net, dyad)
        kind = self.dyad_typer.type_of(dyad)
        if self.variant == Variant.EXACT:
            return theta + formation_offset(theta, self.durations.duration(kind), Variant.EXACT)
        return theta + self._offsets[kind]

    def proposals_for(self, net: Network) -> int:
        if self.proposals_per_phase is not None:
            base = self.proposals_per_phase
        else:
            base = max(PROPOSALS_PER_EDGE * net.edge_count, MIN_PROPOSALS)
        return max(1, int(round(base * self.proposals_multiplier)))

    @property
    def uses_exact_formation(self) -> bool:
        return self.exact_formation and self.model.is_dyad_independent and self.constraint.kind.value == 'none'

    @cached_property
    def uniform_formation_logodds(self) -> Optional[float]:
        """The common formation log-odds when every dyad shares it, else None"""
        if not self.model.is_dyad_independent or self.dyad_typer.type_count != 1:
            return None
        if any(t.kind.value == 'nodematch' and c != 0 for t, c in zip(self.model.terms, self.model.coefs)):
            return None
        theta = sum(c for t, c in zip(self.model.terms, self.model.coefs) if t.kind.value == 'edges')
        if self.variant == Variant.EXACT:
            return theta + formation_offset(theta, self.durations.duration(1), Variant.EXACT)
        return theta + self._offsets[1]


def tnt_log_proposal_ratio(total: int, added: int, turning_on: bool) -> float:
    """
    log q(reverse) / q(forward) for the tie-no-tie style mixture

    `total` dyads are proposable uniformly; `added` of them are edges that can
    also be drawn from the edge list (half the mass once any exist).
    """
    if turning_on:
        q_forward = 0.5 / total if added > 0 else 1.0 / total
        q_reverse = 0.5 / total + 0.5 / (added + 1)
    else:
        q_forward = 0.5 / total + 0.5 / added
        q_reverse = 0.5 / total if added > 1 else 1.0 / total
    return math.log(q_reverse / q_forward)


def _free_dyad(net: Network, occupied: set, rng: np.random.Generator) -> Dyad:
    """Uniform draw among dyads not in `occupied` (rejection sampling)"""
    while True:
        dyad = net.random_dyad(rng.random(), rng.random())
        if dyad not in occupied:
            return dyad


def _exact_formation(net: Network, spec: TergmSpec, rng: np.random.Generator, time: int, tracker: StatTracker) -> None:
    free_count = net.dyad_count - net.edge_count
    if free_count == 0:
        return
    logodds = spec.uniform_formation_logodds
    if logodds is None:
        empty = [d for d in iter_dyads(net.node_count) if not net.has_edge(d)]
        probs = np.array([expit(spec.formation_logodds(net, d)) for d in empty])
        draws = rng.random(len(empty))
        for dyad in [d for d, u, q in zip(empty, draws, probs) if u < q]:
            tracker.toggle(net, dyad, time)
        return
    q = expit(logodds)
    count = int(rng.binomial(free_count, q))
    if count == 0:
        return
    occupied = set(net.formation_time)
    if count * 4 <= free_count:
        chosen = set()
        while len(chosen) < count:
            chosen.add(_free_dyad(net, occupied, rng))
        formed = sorted(chosen)
    else:
        empty = [d for d in iter_dyads(net.node_count) if d not in occupied]
        picks = rng.choice(len(empty), size=count, replace=False)
        formed = sorted(empty[int(x)] for x in picks)
    for dyad in formed:
        tracker.toggle(net, dyad, time)


def step_formation(
    net: Network,
    spec: TergmSpec,
    rng: np.random.Generator,
    time: int = 0,
    tracker: Optional[StatTracker] = None
) -> Network:
    """
    Formation phase: Metropolis-Hastings on the dyads empty at phase start

    Proposals mix a uniform draw over those dyads with a uniform draw over the
    edges added earlier in this phase (50/50 once any exist). Edges present at
    phase start are never proposed. Modifies and returns `net`.
    """
    tracker = tracker or StatTracker([], net)
    if spec.uses_exact_formation:
        _exact_formation(net, spec, rng, time, tracker)
        return net
    start = set(net.formation_time)
    free = net.dyad_count - len(start)
    if free == 0:
        return net
    added: List[Dyad] = []
    position: Dict[Dyad, int] = {}
    for _ in range(spec.proposals_for(net)):
        a = len(added)
        if a > 0 and rng.random() < 0.5:
            dyad = added[int(rng.random() * a)]
        else:
            dyad = _free_dyad(net, start, rng)
        turning_on = dyad not in position
        if not spec.constraint.toggle_is_valid(net, dyad):
            continue
        logodds = spec.formation_logodds(net, dyad)
        log_ratio = (logodds if turning_on else -logodds) + tnt_log_proposal_ratio(free, a, turning_on)
        if not (log_ratio >= 0 or rng.random() < math.exp(log_ratio)):
            continue
        tracker.toggle(net, dyad, time)
        if turning_on:
            position[dyad] = len(added)
            added.append(dyad)
        else:
            pos = position.pop(dyad)
            last = added.pop()
            if last != dyad:
                added[pos] = last
                position[last] = pos
    return net


def step_dissolution(
    net: Network,
    spec: TergmSpec,
    rng: np.random.Generator,
    time: int = 0,
    tracker: Optional[StatTracker] = None,
    candidates: Optional[Sequence[Dyad]] = None,
    spells: Optional[List[Spell]] = None
) -> Network:
    """
    Dissolution phase: each candidate edge ends independently with probability 1/D_k

    `candidates` defaults to every current edge; the simulator passes the
    edges present at the start of the time step.
    """
    tracker = tracker or StatTracker([], net)
    candidates = net.edges() if candidates is None else list(candidates)
    if not candidates:
        return net
    draws = rng.random(len(candidates))
    typer = spec.dyad_typer
    for dyad, u in zip(candidates, draws):
        if u < spec.dissolution_prob(typer.type_of(dyad)):
            spell = tracker.toggle(net, dyad, time, typer)
            if spells is not None:
                spells.append(spell)
    return net


def simulate_tergm(
    spec: TergmSpec,
    initial: Network,
    burn_in: int,
    steps: int,
    monitored: Sequence[Term],
    seed: Optional[int] = None
) -> SimulationRecord:
    """
    Run burn_in + steps time steps of formation then dissolution

    The series holds one row per time step (burn-in included); spells are
    kept only for edges formed at or after the end of burn-in.
    """
    if not spec.constraint.is_valid(initial):
        raise EdaLabError.invalid(f"Initial network violates {spec.constraint}")
    if burn_in < 0 or steps < 1:
        raise EdaLabError.invalid("burn_in must be >= 0 and steps >= 1")
    rng = np.random.default_rng(seed)
    net = initial.copy()
    net.reset_formation_times(-1)
    tracker = StatTracker(monitored, net)
    total = burn_in + steps
    series = np.empty((total, len(tracker.terms)))
    completed: List[Spell] = []
    proposals = 0
    exact = spec.uses_exact_formation
    for t in range(total):
        start = net.edges()
        if not exact:
            proposals += spec.proposals_for(net)
        step_formation(net, spec, rng, t, tracker)
        ended: List[Spell] = []
        step_dissolution(net, spec, rng, t, tracker, candidates=start, spells=ended)
        completed.extend(s for s in ended if t - s.age >= burn_in)
        series[t] = tracker.values
    censored = _censored_spells(net, spec.dyad_typer, total - 1, burn_in)
    return SimulationRecord(
        labels=[t.label for t in tracker.terms],
        stat_series=series,
        burn_in=burn_in,
        completed_spells=completed,
        censored_spells=censored,
        seed=seed,
        config={
            'kind': 'tergm',
            'variant': spec.variant.value,
            'durations': spec.durations.durations(),
            'dissolution_coefs': spec.dissolution_coefs(),
            'model': spec.model.to_entries(),
            'constraint': str(spec.constraint),
            'proposals_per_phase': spec.proposals_per_phase,
            'exact_formation': spec.uses_exact_formation,
            'burn_in': burn_in,
            'steps': steps,
        },
        final_network=net,
        diagnostics={
            'formation': 'exact' if exact else 'metropolis',
            'mean_proposals_per_phase': proposals / total,
        },
    )


def _censored_spells(net: Network, typer: DyadTyper, end: int, burn_in: int) -> List[Spell]:
    spells = []
    for dyad in net.edges():
        formed = net.formation_time[dyad]
        age = end - formed
        if formed >= burn_in and age >= 1:
            spells.append(Spell(typer.type_of(dyad), age, censored=True))
    return spells


def mean_duration_estimates(record: SimulationRecord) -> Dict[int, DurationEstimate]:
    """
    Per-type mean duration estimates

    completed_mean averages completed spells only (biased low under
    censoring); hazard_inverse is edge-steps at risk over dissolutions.
    """
    completed: Dict[int, List[int]] = defaultdict(list)
    censored: Dict[int, List[int]] = defaultdict(list)
    for spell in record.completed_spells:
        completed[spell.dyad_type].append(spell.age)
    for spell in record.censored_spells:
        censored[spell.dyad_type].append(spell.age)
    estimates: Dict[int, DurationEstimate] = {}
    for kind in sorted(set(completed) | set(censored)):
        ages = completed.get(kind, [])
        if not ages:
            logger.warning("No completed spells for dyad type %s; omitting its duration estimate", kind)
            continue
        at_risk = sum(ages) + sum(censored.get(kind, []))
        estimates[kind] = {
            'completed_mean': float(np.mean(ages)),
            'hazard_inverse': at_risk / len(ages),
            'completed': len(ages),
            'censored': len(censored.get(kind, [])),
        }
    return estimates


def batch_means_se(series: np.ndarray, batches: int = 20) -> float:
    """Standard error of the mean of an autocorrelated series"""
    series = np.asarray(series, dtype=float)
    n = series.size
    if n < 2:
        return math.nan
    size = n // batches
    if size < 2:
        return float(np.std(series, ddof=1) / math.sqrt(n))
    means = series[: size * batches].reshape(batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(batches))


def summarize_series(
    labels: Sequence[str],
    sampled: np.ndarray,
    targets: Optional[Mapping[str, float]] = None
) -> Dict[str, StatSummary]:
    targets = targets or {}
    summary: Dict[str, StatSummary] = {}
    for idx, label in enumerate(labels):
        column = sampled[:, idx]
        entry: StatSummary = {'mean': float(column.mean()), 'stderr': batch_means_se(column)}
        if label in targets and targets[label] != 0:
            target = float(targets[label])
            entry['target'] = target
            entry['rel_error'] = (entry['mean'] - target) / target
            entry['rel_stderr'] = entry['stderr'] / abs(target)
        summary[label] = entry
    return summary


def write_record(capability: BaseCapability, record: SimulationRecord, targets: Mapping[str, float], subdir: str = '') -> Dict[str, Any]:
    """Write stats.csv, spells.csv, summary.json and final_network.txt"""
    client = capability._client
    rows = [
        {'step': step, **{label: value for label, value in zip(record.labels, row)}}
        for step, row in enumerate(record.stat_series)
    ]
    client.write_csv(capability.output_path('stats.csv', subdir), ['step', *record.labels], rows)
    spell_rows = [
        {'type': s.dyad_type, 'age': s.age, 'censored': int(s.censored)}
        for s in [*record.completed_spells, *record.censored_spells]
    ]
    client.write_csv(capability.output_path('spells.csv', subdir), ['type', 'age', 'censored'], spell_rows)
    summary = {
        'seed': record.seed,
        'config': record.config,
        'statistics': record.summary(targets),
        'durations': {str(k): v for k, v in mean_duration_estimates(record).items()},
    }
    client.write_json(capability.output_path('summary.json', subdir), summary)
    if record.final_network is not None:
        record.final_network.write_edgelist(capability.output_path('final_network.txt', subdir))
    return summary


def spec_from_config(config: Mapping[str, Any]) -> TergmSpec:
    typer = build_typer(config)
    return TergmSpec(
        model=Model.from_entries(config['model']),
        durations=DurationSpec(parse_durations(config['duration'])),
        variant=Variant(config['variant']),
        constraint=Constraint.parse(config['constraint']),
        proposals_per_phase=config['proposals_per_phase'],
        dyad_typer=typer,
        exact_formation=bool(config['exact_formation']),
    )


def initial_from_config(config: Mapping[str, Any], model: Model, constraint: Constraint, rng: np.random.Generator) -> Network:
    attributes = config.get('attributes') or None
    if config.get('initial'):
        return Network.read_edgelist(config['initial'], attributes)
    edges_coef = sum(c for t, c in zip(model.terms, model.coefs) if t.label == 'edges')
    density = edges_density(config.get('targets') or {}, config['nodes'], expit(edges_coef))
    return bernoulli_network(config['nodes'], density, rng, constraint, attributes)


class TergmCapabilities(BaseCapability):
    """Discrete-time EDA tergm simulation"""

    @property
    def name(self) -> str:
        return 'tergm'

    def simulate(
        self,
        spec: TergmSpec,
        initial: Network,
        burn_in: int,
        steps: int,
        monitored: Sequence[Term],
        seed: Optional[int] = None
    ) -> SimulationRecord:
        return simulate_tergm(spec, initial, burn_in, steps, monitored, self._client.seed if seed is None else seed)

    def run_config(self, config: TergmConfig, seed: Optional[int] = None, subdir: str = '') -> Dict[str, Any]:
        """
        Simulate from a `simulate-tergm` config and write its output files

        Args:
            config: Parsed config (defaults are filled in)
            seed: Overrides the client seed
            subdir: Output subdirectory

        Returns:
            The summary written to summary.json
        """
        config = merge_defaults(config, DEFAULT_TERGM_CONFIG)
        seed = self._client.seed if seed is None else seed
        spec = spec_from_config(config)
        init_seed, chain_seed = self._client.spawn_seeds(2, seed)
        initial = initial_from_config(config, spec.model, spec.constraint, np.random.default_rng(init_seed))
        monitored = parse_terms(config['monitored'])
        logger.info("Simulating %s-variant tergm on %d nodes for %d steps", spec.variant.value, initial.node_count, config['burn_in'] + config['steps'])
        record = simulate_tergm(spec, initial, config['burn_in'], config['steps'], monitored, chain_seed)
        record.seed = seed
        return write_record(self, record, config['targets'], subdir)
