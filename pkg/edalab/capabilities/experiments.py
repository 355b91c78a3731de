"""
Batch experiments over grids of targets, durations and variants

Work is split in two rounds of cells. A model cell calibrates coefficients
to the cell's targets and estimates the ergm expectations they imply; a
simulation cell runs one variant at one duration and reports relative
errors against those expectations. Cells are seeded by position, so results
do not depend on worker count or completion order.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import DEFAULT_EXPERIMENT_CONFIG, FULL_SCALE_NODE_COUNT, bernoulli_network, merge_defaults
from ..network import Network
from ..stats import Model, Term
from ..types import Design, EdaLabError, ErrorCode, ExperimentConfig, PlotRow, ProposalKind, Variant
from .base import BaseCapability
from .calibrate import calibrate_stochastic
from .oracle import asymptotic_report, build_R, detailed_balance_residual, enumerate_states, exact_pi
from .rchain import RSpec, ergm_expectations, estimate_odds_bound, simulate_R
from .tergm import DurationSpec, TergmSpec, simulate_tergm
from .transforms import logit

logger = logging.getLogger(__name__)

PLOT_COLUMNS = list(PlotRow.__annotations__)
GWESP_DECAY = 0.5
SPOT_CHECK_SE = 3.0

# small models for the oracle suite: (terms, coefficients)
ORACLE_SUITE_MODELS: List[Tuple[List[str], List[float]]] = [
    (['edges'], [-0.5]),
    (['edges', 'degree(1)'], [-1.0, 0.5]),
    (['edges', 'gwesp(0.5)'], [-1.0, 0.5]),
]


@dataclass(frozen=True)
class Cell:
    """Grid coordinates of one simulation; unused axes hold 0"""
    design: str
    node_count: int
    mean_degree: float = 0.0
    degree1_target: float = 0.0
    gwesp_target: float = 0.0
    edge_prob: float = 0.0
    duration: float = 0.0
    lam: float = 0.0
    replicate: int = 0
    variant: str = ''


@dataclass
class ExperimentResult:
    rows: List[PlotRow] = field(default_factory=list)
    cells: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def failed(self) -> List[Dict[str, Any]]:
        return [c for c in self.cells if not c['success']]


def dyad_independent_degree1(node_count: int, p: float) -> float:
    """Expected degree(1) count n (n-1) p (1-p)^(n-2) of a Bernoulli(p) graph"""
    return node_count * (node_count - 1) * p * (1.0 - p) ** (node_count - 2)


def scaled_targets(config: ExperimentConfig) -> Tuple[int, float]:
    """Node count and the per-node factor applied to count targets"""
    if config['full_scale']:
        return FULL_SCALE_NODE_COUNT, 1.0
    n = int(config['node_count'])
    return n, n / FULL_SCALE_NODE_COUNT


def _row(cell: Cell, statistic: str, rel_error: float, stderr: float) -> PlotRow:
    return {
        'design': cell.design,
        'node_count': cell.node_count,
        'mean_degree': cell.mean_degree,
        'degree1_target': cell.degree1_target,
        'gwesp_target': cell.gwesp_target,
        'edge_prob': cell.edge_prob,
        'duration': cell.duration,
        'lam': cell.lam,
        'replicate': cell.replicate,
        'variant': cell.variant,
        'statistic': statistic,
        'rel_error': float(rel_error),
        'stderr': float(stderr),
    }


def _model_cell(payload: Dict[str, Any]) -> Dict[str, Any]:
    """Coefficients and reference expectations for one target set"""
    terms = [Term.parse(s) for s in payload['terms']]
    n = payload['node_count']
    targets = np.asarray(payload['targets'], dtype=float)
    if payload['closed_form']:
        p = targets[0] / (n * (n - 1) / 2)
        coefs = [logit(p)] + [0.0] * (len(terms) - 1)
        expectations = {
            label: {'mean': float(v), 'stderr': 0.0}
            for label, v in zip([t.label for t in terms], targets)
        }
        return {'coefs': coefs, 'expectations': expectations, 'calibration': 'closed_form'}
    seeds = np.random.SeedSequence(payload['seed']).spawn(3)
    result = calibrate_stochastic(
        terms, targets, n, budget=payload['budget'], seed=int(seeds[0].generate_state(1)[0]),
    )
    model = result.model
    initial = bernoulli_network(n, targets[0] / (n * (n - 1) / 2), np.random.default_rng(seeds[1]))
    expectations = ergm_expectations(
        model, terms, initial, payload['reference_steps'], int(seeds[2].generate_state(1)[0]),
        burn_in=payload['reference_steps'] // 10,
    )
    return {'coefs': model.coefs.tolist(), 'expectations': expectations, 'calibration': 'stochastic'}


def _compare(record_summary: Dict[str, Dict[str, float]], expectations: Dict[str, Dict[str, float]]) -> Dict[str, Tuple[float, float]]:
    """Relative error and its standard error per statistic"""
    out = {}
    for label, ref in expectations.items():
        mean = ref['mean']
        if mean == 0:
            continue
        sim = record_summary[label]
        stderr = math.sqrt(sim['stderr'] ** 2 + ref['stderr'] ** 2) / abs(mean)
        out[label] = ((sim['mean'] - mean) / mean, stderr)
    return out


def _tergm_run(model: Model, terms: List[Term], payload: Dict[str, Any], multiplier: float, seed: int):
    n = payload['node_count']
    spec = TergmSpec(
        model=model,
        durations=DurationSpec.homogeneous(payload['duration']),
        variant=Variant(payload['variant']),
        proposals_multiplier=multiplier,
    )
    rng = np.random.default_rng(seed)
    initial = bernoulli_network(n, payload['density'], rng)
    record = simulate_tergm(spec, initial, payload['burn_in'], payload['steps'], terms, int(rng.integers(2**62)))
    return spec, record


def _sim_cell(payload: Dict[str, Any]) -> Dict[str, Any]:
    """One variant at one duration: simulate and compare with the expectations"""
    terms = [Term.parse(s) for s in payload['terms']]
    model = Model(terms, np.asarray(payload['coefs']))
    n = payload['node_count']
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(payload['seed']).spawn(3)]
    info: Dict[str, Any] = {}
    if payload['variant'] == Variant.R.value:
        initial = bernoulli_network(n, payload['density'], np.random.default_rng(seeds[0]))
        odds_bound = estimate_odds_bound(model, initial, seed=seeds[1])
        edges_target = payload['density'] * n * (n - 1) / 2
        edge_bound = int(min(n * (n - 1) // 2, max(4 * edges_target, edges_target + 10 * math.sqrt(edges_target), 10)))
        spec = RSpec(
            model=model,
            node_count=n,
            duration_base={1: payload['duration']},
            odds_bound=odds_bound,
            edge_bound=edge_bound,
            proposal=ProposalKind.TNT_ANALOGUE,
        )
        per_time = payload['r_steps_per_time']
        record = simulate_R(
            spec, initial, payload['burn_in'] * per_time, payload['steps'] * per_time, terms, seeds[2], thin=per_time,
        )
        info.update({'lam': spec.lam, 'odds_bound': odds_bound, 'edge_bound': edge_bound, **record.diagnostics})
    else:
        spec, record = _tergm_run(model, terms, payload, payload['multiplier'], seeds[0])
        info.update(record.diagnostics)
        if payload['convergence_check'] and not spec.uses_exact_formation:
            _, doubled = _tergm_run(model, terms, payload, 2 * payload['multiplier'], seeds[1])
            info['spot_check'] = _spot_check(record.summary(), doubled.summary())
    comparison = _compare(record.summary(), payload['expectations'])
    return {'comparison': comparison, 'info': info}


def _spot_check(base: Dict[str, Dict[str, float]], doubled: Dict[str, Dict[str, float]]) -> Dict[str, Any]:
    disagree = []
    for label, entry in base.items():
        se = math.sqrt(entry['stderr'] ** 2 + doubled[label]['stderr'] ** 2)
        if abs(entry['mean'] - doubled[label]['mean']) > SPOT_CHECK_SE * se:
            disagree.append(label)
    if disagree:
        logger.warning("Doubling the proposals moved %s by more than %g standard errors", disagree, SPOT_CHECK_SE)
    return {'agrees': not disagree, 'disagreeing': disagree, 'doubled_means': {k: v['mean'] for k, v in doubled.items()}}


def _target_sets(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """Model cells of the deg1 and gwesp sweeps"""
    n, scale = scaled_targets(config)
    dyads = n * (n - 1) / 2
    sets: List[Dict[str, Any]] = []
    design = Design(config['design'])
    for mean_degree in config['mean_degree']:
        edges = mean_degree * n / 2.0
        if not 0 < edges < dyads:
            raise EdaLabError.invalid(f"Mean degree {mean_degree} is not achievable on {n} nodes")
        p = edges / dyads
        if design == Design.DEG1_SWEEP:
            terms = ['edges', 'degree(1)']
            for deg1 in config['degree1_target']:
                sets.append({'mean_degree': mean_degree, 'degree1_target': float(deg1),
                             'terms': terms, 'targets': [edges, deg1 * scale], 'closed_form': False})
            if config['include_reference']:
                reference = dyad_independent_degree1(n, p)
                sets.append({'mean_degree': mean_degree, 'degree1_target': reference / scale,
                             'terms': terms, 'targets': [edges, reference], 'closed_form': True})
        else:
            terms = ['edges', 'degree(1)', 'degree(2)', f'gwesp({GWESP_DECAY:g})']
            for gwesp in config['gwesp_target']:
                sets.append({'mean_degree': mean_degree, 'gwesp_target': float(gwesp), 'terms': terms,
                             'targets': [edges, config['degree1_target'][0] * scale,
                                         config['degree2_target'] * scale, gwesp * scale],
                             'closed_form': False})
    return sets


class ExperimentCapabilities(BaseCapability):
    """Grid experiments and their long-format output"""

    @property
    def name(self) -> str:
        return 'experiments'

    def run(self, config: ExperimentConfig, seed: Optional[int] = None) -> ExperimentResult:
        """
        Run every cell of the configured design

        Failing cells are recorded with success=False and do not stop the
        sweep. Writes plotdata.csv and cells.json.
        """
        config = merge_defaults(config, DEFAULT_EXPERIMENT_CONFIG)
        if not config['variants']:
            raise EdaLabError.invalid("At least one variant is required")
        seed = int(config['seed'] if seed is None else seed)
        design = Design(config['design'])
        if design in (Design.DEG1_SWEEP, Design.GWESP_SWEEP):
            result = self._sweep(config, seed)
        elif design == Design.SINGLE_DYAD:
            result = self._single_dyad(config, seed)
        else:
            result = self._oracle_suite(config)
        if result.rows:
            self.emit_plotdata(result.rows)
        self._client.write_json(self.output_path('cells.json'), result.cells)
        if result.failed:
            logger.warning("%d of %d cells failed", len(result.failed), len(result.cells))
        return result

    def _sweep(self, config: ExperimentConfig, seed: int) -> ExperimentResult:
        if config['design'] == Design.GWESP_SWEEP.value and not config['degree1_target']:
            raise EdaLabError.invalid("The gwesp sweep needs a degree(1) target")
        n, _ = scaled_targets(config)
        dyads = n * (n - 1) / 2
        sets = _target_sets(config)
        reps = int(config['replications'])
        model_seeds = self._client.spawn_seeds(len(sets) * reps, seed)
        model_payloads = []
        for r in range(reps):
            for idx, target_set in enumerate(sets):
                model_payloads.append({
                    **target_set,
                    'node_count': n,
                    'seed': model_seeds[r * len(sets) + idx],
                    'budget': config['calibration_budget'],
                    'reference_steps': config['reference_steps'],
                })
        model_results = self._client.run_cells(_model_cell, model_payloads)

        result = ExperimentResult()
        cells: List[Cell] = []
        payloads: List[Dict[str, Any]] = []
        for k, (payload, outcome) in enumerate(zip(model_payloads, model_results)):
            replicate = k // len(sets)
            for duration in config['duration']:
                for variant in config['variants']:
                    cell = Cell(
                        config['design'], n,
                        mean_degree=payload['mean_degree'],
                        degree1_target=payload.get('degree1_target', 0.0),
                        gwesp_target=payload.get('gwesp_target', 0.0),
                        duration=float(duration),
                        replicate=replicate,
                        variant=variant,
                    )
                    if not outcome.success:
                        result.cells.append(self._failure(cell, outcome.error))
                        continue
                    cells.append(cell)
                    payloads.append({
                        'terms': payload['terms'],
                        'coefs': outcome.value['coefs'],
                        'expectations': outcome.value['expectations'],
                        'node_count': n,
                        'density': payload['targets'][0] / dyads,
                        'duration': float(duration),
                        'variant': variant,
                        'burn_in': config['burn_in'],
                        'steps': config['steps'],
                        'multiplier': config['proposals_multiplier'],
                        'convergence_check': config['convergence_check'],
                        'r_steps_per_time': config['r_steps_per_time'],
                    })
        sim_seeds = self._client.spawn_seeds(len(payloads), seed + 1)
        for payload, cell_seed in zip(payloads, sim_seeds):
            payload['seed'] = cell_seed
        outcomes = self._client.run_cells(_sim_cell, payloads, keys=cells)
        for cell, payload, outcome in zip(cells, payloads, outcomes):
            if not outcome.success:
                result.cells.append(self._failure(cell, outcome.error))
                continue
            for statistic, (rel, se) in outcome.value['comparison'].items():
                result.rows.append(_row(cell, statistic, rel, se))
            result.cells.append({
                **asdict(cell),
                'success': True,
                'coefs': payload['coefs'],
                'expectations': payload['expectations'],
                **outcome.value['info'],
            })
        return result

    def _single_dyad(self, config: ExperimentConfig, seed: int) -> ExperimentResult:
        result = ExperimentResult()
        variants = list(dict.fromkeys([*config['variants'], Variant.EXACT.value]))
        cells, payloads = [], []
        for p in config['single_dyad_p']:
            for duration in config['duration']:
                for variant in variants:
                    cells.append(Cell(Design.SINGLE_DYAD.value, 2, edge_prob=float(p), duration=float(duration), variant=variant))
                    payloads.append({'p': float(p), 'duration': float(duration), 'variant': variant,
                                     'burn_in': config['burn_in'], 'steps': config['steps'],
                                     'r_steps_per_time': config['r_steps_per_time']})
        for payload, cell_seed in zip(payloads, self._client.spawn_seeds(len(payloads), seed)):
            payload['seed'] = cell_seed
        outcomes = self._client.run_cells(_single_dyad_cell, payloads, keys=cells)
        for cell, outcome in zip(cells, outcomes):
            if not outcome.success:
                result.cells.append(self._failure(cell, outcome.error))
                continue
            rel, se = outcome.value['comparison']
            result.rows.append(_row(cell, 'edges', rel, se))
            result.cells.append({**asdict(cell), 'success': True, **outcome.value['info']})
        return result

    def _oracle_suite(self, config: ExperimentConfig) -> ExperimentResult:
        result = ExperimentResult()
        space = enumerate_states(int(config['oracle_nodes']))
        variants = [v for v in config['variants'] if v in (Variant.OLD.value, Variant.NEW.value)]
        for terms, coefs in ORACLE_SUITE_MODELS:
            model = Model.from_specs(terms, coefs)
            label = ' + '.join(terms)
            base = Cell(Design.ORACLE_SUITE.value, space.node_count)
            try:
                report = asymptotic_report(space, model, {1: 1.0}, config['lambdas'], variants)
                pi = exact_pi(space, model)
                for lam in config['lambdas']:
                    R = build_R(space, model, DurationSpec({1: 1.0}, float(lam)))
                    cell = Cell(base.design, base.node_count, lam=float(lam), variant=Variant.R.value)
                    result.rows.append(_row(cell, f'{label}:detailed_balance_residual', detailed_balance_residual(R, pi), 0.0))
            except EdaLabError as e:
                result.cells.append({**asdict(base), 'model': label, **self._failure(base, e)})
                continue
            for entry in report['rows']:
                cell = Cell(base.design, base.node_count, lam=entry['lam'], variant=entry['variant'])
                for metric in ('max_abs_diff', 'tv_distance', 'max_duration_error'):
                    result.rows.append(_row(cell, f'{label}:{metric}', entry[metric], 0.0))
            result.cells.append({**asdict(base), 'model': label, 'success': True, 'slopes': report['slopes']})
        return result

    @staticmethod
    def _failure(cell: Cell, error: Optional[EdaLabError]) -> Dict[str, Any]:
        error = error or EdaLabError("Cell failed", ErrorCode.CELL_FAILED)
        return {**asdict(cell), 'success': False, 'error': error.to_dict()}

    def emit_plotdata(self, rows: Sequence[PlotRow], filename: str = 'plotdata.csv') -> str:
        """Write rows as long-format CSV in a fixed order"""
        if not rows:
            raise EdaLabError.invalid("No rows to write")
        ordered = sorted(rows, key=lambda r: tuple(r[c] for c in PLOT_COLUMNS))
        path = self.output_path(filename)
        self._client.write_csv(path, PLOT_COLUMNS, ordered)
        return str(path)


def _single_dyad_cell(payload: Dict[str, Any]) -> Dict[str, Any]:
    """Prevalence of one dyad under a variant, against the target p"""
    p, duration, variant = payload['p'], payload['duration'], payload['variant']
    model = Model([Term.edges()], [logit(p)])
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(payload['seed']).spawn(2)]
    initial = Network(2)
    if variant == Variant.R.value:
        odds = p / (1.0 - p)
        spec = RSpec(model=model, node_count=2, duration_base={1: duration}, odds_bound=odds,
                     proposal=ProposalKind.RANDOM_TOGGLE)
        per_time = payload['r_steps_per_time']
        record = simulate_R(spec, initial, payload['burn_in'] * per_time, payload['steps'] * per_time,
                            [Term.edges()], seeds[0], thin=per_time)
        info = {'lam': spec.lam, **record.diagnostics}
    else:
        spec = TergmSpec(model=model, durations=DurationSpec.homogeneous(duration), variant=Variant(variant))
        record = simulate_tergm(spec, initial, payload['burn_in'], payload['steps'], [Term.edges()], seeds[0])
        info = dict(record.diagnostics)
    summary = record.summary()['edges']
    return {'comparison': ((summary['mean'] - p) / p, summary['stderr'] / p), 'info': info}
