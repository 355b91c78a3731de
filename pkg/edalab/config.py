"""Configuration defaults and loaders for the command-line runs"""
import copy
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import numpy as np

from .network import Constraint, ConstraintKind, DyadTyper, Network, dyad_list
from .types import EdaLabError, ExperimentConfig, RConfig, TergmConfig

DEFAULT_TERGM_CONFIG: TergmConfig = {
    'nodes': 100,
    'model': [{'term': 'edges', 'coef': -4.9488}],
    'duration': 50.0,
    'variant': 'new',
    'constraint': 'none',
    'burn_in': 500,
    'steps': 5000,
    'monitored': ['edges', 'degree(1)'],
    'targets': {},
    'proposals_per_phase': None,
    'exact_formation': True,
    'attributes': {},
    'duration_attribute': None,
    'initial': None,
}

DEFAULT_R_CONFIG: RConfig = {
    'nodes': 100,
    'model': [{'term': 'edges', 'coef': -4.9488}],
    'duration_base': 50.0,
    'lam': None,
    'proposal': 'tnt_analogue',
    'odds_bound': None,
    'edge_bound': None,
    'safety_factor': 1.0,
    'constraint': 'none',
    'burn_in': 50000,
    'steps': 500000,
    'thin': 100,
    'monitored': ['edges', 'degree(1)'],
    'targets': {},
    'attributes': {},
    'duration_attribute': None,
    'initial': None,
}

# Desk scale; `full_scale` switches node_count to 1000 and unscaled targets
DEFAULT_EXPERIMENT_CONFIG: ExperimentConfig = {
    'design': 'deg1_sweep',
    'node_count': 100,
    'mean_degree': [0.7, 1.0, 1.3, 2.0],
    'degree1_target': [200.0, 300.0, 400.0, 500.0, 600.0],
    'include_reference': True,
    'degree2_target': 350.0,
    'gwesp_target': [3.0, 30.0, 100.0, 200.0, 300.0],
    'duration': [15.0, 50.0, 100.0],
    'variants': ['old', 'new', 'R'],
    'replications': 1,
    'seed': 0,
    'proposals_multiplier': 1.0,
    'burn_in': 1000,
    'steps': 10000,
    'r_steps_per_time': 20,
    'reference_steps': 200000,
    'calibration_budget': 400,
    'convergence_check': True,
    'full_scale': False,
    'lambdas': [16.0, 32.0, 64.0, 128.0],
    'oracle_nodes': 3,
    'single_dyad_p': [0.05, 0.2, 0.3, 0.5],
}

FULL_SCALE_NODE_COUNT = 1000


def all_defaults() -> Dict[str, Any]:
    return {
        'simulate-tergm': DEFAULT_TERGM_CONFIG,
        'simulate-r': DEFAULT_R_CONFIG,
        'experiment': DEFAULT_EXPERIMENT_CONFIG,
    }


def merge_defaults(config: Mapping[str, Any], defaults: Mapping[str, Any]) -> Dict[str, Any]:
    """Defaults overlaid with the keys present in `config`; unknown keys are rejected"""
    unknown = set(config) - set(defaults)
    if unknown:
        raise EdaLabError.invalid(f"Unknown configuration keys: {sorted(unknown)}")
    merged = copy.deepcopy(dict(defaults))
    merged.update(copy.deepcopy(dict(config)))
    return merged


def load_config(path: Union[str, Path], defaults: Mapping[str, Any]) -> Dict[str, Any]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise EdaLabError.invalid(f"Cannot read config {path}: {e}")
    if not isinstance(raw, dict):
        raise EdaLabError.invalid(f"Config {path} must hold a JSON object")
    return merge_defaults(raw, defaults)


def parse_durations(value: Union[float, Mapping[str, float]]) -> Dict[int, float]:
    """A scalar duration or a {type: duration} mapping, as {int: float}"""
    if isinstance(value, Mapping):
        durations = {int(k): float(v) for k, v in value.items()}
    else:
        durations = {1: float(value)}
    if not durations or any(not np.isfinite(v) or v <= 0 for v in durations.values()):
        raise EdaLabError.invalid(f"Durations must be positive and finite, got {value}")
    return durations


def build_typer(config: Mapping[str, Any]) -> DyadTyper:
    name = config.get('duration_attribute')
    if not name:
        return DyadTyper.homogeneous()
    attributes = config.get('attributes') or {}
    if name not in attributes:
        raise EdaLabError.invalid(f"duration_attribute '{name}' is not among the node attributes")
    return DyadTyper(attributes[name])


def bernoulli_network(
    node_count: int,
    density: float,
    rng: np.random.Generator,
    constraint: Optional[Constraint] = None,
    attributes: Optional[Mapping[str, Sequence[Any]]] = None
) -> Network:
    """
    Independent Bernoulli(density) draw per dyad, repaired to satisfy `constraint`

    Under max-degree, edges that would break the bound are skipped; under
    min-degree, deficient nodes are joined to random partners.
    """
    constraint = constraint or Constraint.none()
    dyads = dyad_list(node_count)
    density = min(max(density, 0.0), 1.0)
    count = int(rng.binomial(len(dyads), density)) if dyads else 0
    chosen = np.sort(rng.choice(len(dyads), size=count, replace=False)) if count else []
    net = Network(node_count, attributes)
    for index in chosen:
        dyad = dyads[int(index)]
        if constraint.kind != ConstraintKind.MAX_DEGREE or constraint.toggle_is_valid(net, dyad):
            net.toggle(dyad, 0)
    if constraint.kind == ConstraintKind.MIN_DEGREE:
        if constraint.bound >= node_count:
            raise EdaLabError.invalid(f"{constraint} cannot be met on {node_count} nodes")
        for node in range(node_count):
            while net.degree(node) < constraint.bound:
                other = int(rng.integers(node_count))
                if other != node:
                    dyad = (min(node, other), max(node, other))
                    if not net.has_edge(dyad):
                        net.toggle(dyad, 0)
    if not constraint.is_valid(net):
        raise EdaLabError.invalid(f"Could not build an initial network satisfying {constraint}")
    return net


def edges_density(targets: Mapping[str, float], node_count: int, fallback: float) -> float:
    dyads = node_count * (node_count - 1) / 2
    if 'edges' in targets and dyads > 0:
        return float(targets['edges']) / dyads
    return fallback


def dump_config(config: Mapping[str, Any]) -> str:
    return json.dumps(config, indent=2, sort_keys=True)
