import csv
import json
import os
from dataclasses import dataclass

import pytest

from edalab import EdaLab
from edalab.capabilities.experiments import PLOT_COLUMNS, dyad_independent_degree1, scaled_targets
from edalab.capabilities.transforms import logit, predicted_equilibrium, relative_error
from edalab.config import DEFAULT_EXPERIMENT_CONFIG, merge_defaults
from edalab.types import EdaLabError
from tests.config import TEST_CONFIG
from tests.utils import log_test_step, log_response, assert_with_log, assert_close, assert_within_se, timing

@dataclass
class SuiteCase:
    name: str
    func: callable
    description: str = ""

def _lab(name: str) -> EdaLab:
    return EdaLab(seed=TEST_CONFIG['seed'], out_dir=os.path.join(TEST_CONFIG['out_dir'], name), workers=1)

def _read_rows(path: str):
    with open(path, newline='') as handle:
        return list(csv.DictReader(handle))

def test_target_helpers():
    """Reference degree(1) count and target scaling"""
    with timing("target_helpers"):
        p = 35.0 / 4950.0
        assert_close(dyad_independent_degree1(100, p), 100 * 99 * p * (1 - p) ** 98, tol=1e-9, message="Bernoulli degree(1)")
        assert_with_log(scaled_targets(merge_defaults({}, DEFAULT_EXPERIMENT_CONFIG)) == (100, 0.1), "Desk scale")
        assert_with_log(scaled_targets(merge_defaults({'full_scale': True}, DEFAULT_EXPERIMENT_CONFIG)) == (1000, 1.0),
                        "Full scale")

def test_single_dyad_design():
    """Single-dyad prevalence per variant, with the exact transform added"""
    with timing("single_dyad_design"):
        p, D = 0.3, 10.0
        config = {'design': 'single_dyad', 'single_dyad_p': [p], 'duration': [D],
                  'variants': ['old', 'new'], 'burn_in': 200, 'steps': 30000}
        with _lab('single_dyad') as lab:
            result = lab.experiments.run(config)
            path = os.path.join(TEST_CONFIG['out_dir'], 'single_dyad', 'plotdata.csv')
            first = open(path).read()
            lab.experiments.run(config)
            second = open(path).read()
        assert_with_log(first == second, "Same seed, same plot data")
        assert_with_log(not result.failed, "No failed cells")

        rows = {row['variant']: row for row in result.rows}
        assert_with_log(set(rows) == {'old', 'new', 'exact'}, f"Variants {sorted(rows)}")
        for variant, row in rows.items():
            predicted = predicted_equilibrium(logit(p), D, variant) / p - 1.0
            log_test_step(f"{variant}: {row['rel_error']:.4f} +- {row['stderr']:.4f}, predicted {predicted:.4f}")
            assert_within_se(row['rel_error'], predicted, row['stderr'], f"{variant} prevalence error")
            assert_with_log(row['edge_prob'] == p and row['node_count'] == 2, "Cell coordinates")

        header = open(path).readline().strip().split(',')
        assert_with_log(header == PLOT_COLUMNS, f"Header {header}")

def test_failed_cell_reported():
    """An infeasible cell is flagged and the others still run"""
    with timing("failed_cell_reported"):
        config = {'design': 'single_dyad', 'single_dyad_p': [0.9], 'duration': [1.5],
                  'variants': ['new'], 'burn_in': 10, 'steps': 500}
        with _lab('failed_cell') as lab:
            result = lab.experiments.run(config)
        log_response("cells", result.cells)
        assert_with_log(len(result.failed) == 1, "Exactly one failed cell")
        failed = result.failed[0]
        assert_with_log(failed['variant'] == 'exact', "The exact transform is infeasible")
        assert_with_log(failed['error']['code'] == 'CONSISTENCY_VIOLATION', "Error code recorded")
        assert_with_log(len(result.rows) == 1 and result.rows[0]['variant'] == 'new', "The new cell still ran")
        with open(os.path.join(TEST_CONFIG['out_dir'], 'failed_cell', 'cells.json')) as handle:
            assert_with_log(len(json.load(handle)) == 2, "cells.json lists every cell")

def test_reference_cell():
    """Dyad-independent reference cell: errors follow the closed forms and shrink with D"""
    with timing("reference_cell"):
        config = {
            'design': 'deg1_sweep', 'node_count': 100, 'mean_degree': [0.7], 'degree1_target': [],
            'include_reference': True, 'duration': [15.0, 100.0], 'variants': ['old', 'new'],
            'burn_in': 300, 'steps': 20000, 'convergence_check': False,
        }
        with _lab('reference_cell') as lab:
            result = lab.experiments.run(config)
        assert_with_log(not result.failed, "No failed cells")
        assert_with_log(len(result.rows) == 8, "Two durations x two variants x two statistics")

        p = 35.0 / 4950.0
        edges = {(r['variant'], r['duration']): r for r in result.rows if r['statistic'] == 'edges'}
        for (variant, D), row in sorted(edges.items()):
            predicted = relative_error(p, D, variant)
            log_test_step(f"{variant} D={D:g}: {row['rel_error']:.4f} +- {row['stderr']:.4f}, predicted {predicted:.4f}")
            assert_within_se(row['rel_error'], predicted, row['stderr'], f"{variant} at D={D:g}")
        assert_with_log(abs(edges[('new', 15.0)]['rel_error']) < abs(edges[('old', 15.0)]['rel_error']),
                        "New transform beats old at sparse p")
        assert_with_log(edges[('old', 15.0)]['rel_error'] > edges[('old', 100.0)]['rel_error'],
                        "Old error shrinks as D grows")
        rows = _read_rows(os.path.join(TEST_CONFIG['out_dir'], 'reference_cell', 'plotdata.csv'))
        assert_with_log(len(rows) == 8, "Plot data holds every row")

def test_dependent_cell_ordering():
    """Away from the dyad-independent value, old overshoots new and R carries no bias"""
    with timing("dependent_cell_ordering"):
        # 30 nodes, 15 edges; degree1 target 500 scales to 15 nodes of degree one (reference is about 11)
        config = {
            'design': 'deg1_sweep', 'node_count': 30, 'mean_degree': [1.0], 'degree1_target': [500.0],
            'include_reference': False, 'duration': [15.0], 'variants': ['old', 'new', 'R'],
            'burn_in': 500, 'steps': 20000, 'reference_steps': 600000, 'proposals_multiplier': 0.01,
            'convergence_check': False,
        }
        with _lab('dependent_cell') as lab:
            result = lab.experiments.run(config)
        assert_with_log(not result.failed, "No failed cells")
        rows = {(r['variant'], r['statistic']): r for r in result.rows}
        assert_with_log(len(rows) == 6, "Three variants x two statistics")
        for (variant, statistic), row in sorted(rows.items()):
            log_test_step(f"{variant} {statistic}: {row['rel_error']:.4f} +- {row['stderr']:.4f}")

        old, new, chain = rows[('old', 'edges')], rows[('new', 'edges')], rows[('R', 'edges')]
        assert_with_log(old['rel_error'] > new['rel_error'], "Old formation odds exceed new by D/(D-1)")
        assert_with_log(old['rel_error'] > chain['rel_error'], "Old overshoots the R chain")
        for statistic in ('edges', 'degree(1)'):
            row = rows[('R', statistic)]
            assert_within_se(row['rel_error'], 0.0, row['stderr'], f"R {statistic} matches the ergm expectation")

def test_oracle_suite_design():
    """The oracle suite reports exact distances for each small model"""
    with timing("oracle_suite_design"):
        config = {'design': 'oracle_suite', 'oracle_nodes': 3, 'lambdas': [16.0, 32.0], 'variants': ['old', 'new', 'R']}
        with _lab('oracle_suite') as lab:
            result = lab.experiments.run(config)
        assert_with_log(not result.failed and len(result.cells) == 3, "Three models, all succeed")
        statistics = {r['statistic'] for r in result.rows}
        assert_with_log('edges:tv_distance' in statistics, "TV rows present")
        balance = [r for r in result.rows if r['statistic'].endswith('detailed_balance_residual')]
        assert_with_log(len(balance) == 6, "One residual per model and lam")
        assert_with_log(all(r['rel_error'] <= 1e-14 for r in balance), "R is reversible")

def test_empty_plotdata():
    """Refuses to write an empty table"""
    with timing("empty_plotdata"):
        with _lab('empty') as lab:
            with pytest.raises(EdaLabError):
                lab.experiments.emit_plotdata([])
            with pytest.raises(EdaLabError):
                lab.experiments.run({'design': 'single_dyad', 'variants': []})

TEST_CASES = [
    SuiteCase(
        name="target_helpers",
        func=test_target_helpers,
        description="Target helpers"
    ),
    SuiteCase(
        name="single_dyad_design",
        func=test_single_dyad_design,
        description="Single-dyad design"
    ),
    SuiteCase(
        name="failed_cell_reported",
        func=test_failed_cell_reported,
        description="Per-cell failure capture"
    ),
    SuiteCase(
        name="reference_cell",
        func=test_reference_cell,
        description="Dyad-independent reference cell"
    ),
    SuiteCase(
        name="dependent_cell_ordering",
        func=test_dependent_cell_ordering,
        description="Variant ordering at a dyad-dependent cell"
    ),
    SuiteCase(
        name="oracle_suite_design",
        func=test_oracle_suite_design,
        description="Oracle suite design"
    ),
    SuiteCase(
        name="empty_plotdata",
        func=test_empty_plotdata,
        description="Empty output"
    )
]

def experiments_tests():
    """Run all experiment tests"""
    for test in TEST_CASES:
        print(f"\n  Running {test.name}...")
        try:
            test.func()
            print(f"  ✓ {test.name} passed")
        except Exception as e:
            print(f"  ✗ {test.name} failed: {str(e)}")
            raise
