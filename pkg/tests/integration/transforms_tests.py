import math
import os
from dataclasses import dataclass

import numpy as np
import pytest

from edalab import EdaLab
from edalab.capabilities.oracle import stationary
from edalab.capabilities.transforms import (
    approx_equilibrium,
    crossover_roots,
    crossover_threshold,
    equilibrium_edge_prob,
    error_table,
    expit,
    formation_prob,
    logit,
    new_beats_old,
    predicted_equilibrium,
    relative_error,
    transform,
    transform_exact,
    two_state_matrix,
)
from edalab.types import ConsistencyViolation, EdaLabError, ErrorCode
from tests.config import TEST_CONFIG
from tests.utils import log_test_step, log_response, assert_with_log, assert_close, timing

@dataclass
class SuiteCase:
    name: str
    func: callable
    description: str = ""

PROBS = [0.01, 0.05, 0.1, 0.3, 0.5]
DURATIONS = [2.0, 5.0, 10.0, 100.0]

def test_coefficient_values():
    """The three transforms subtract log(D-1), log D and log(D - e^theta)"""
    with timing("coefficient_values"):
        theta, D = -2.0, 10.0
        old, new, exact = (transform(theta, D, v) for v in ('old', 'new', 'exact'))
        log_response("old", old.as_dict())
        assert_close(old.theta_plus, theta - math.log(9.0), tol=1e-12, message="old theta+")
        assert_close(new.theta_plus, theta - math.log(10.0), tol=1e-12, message="new theta+")
        assert_close(exact.theta_plus, theta - math.log(10.0 - math.exp(theta)), tol=1e-12, message="exact theta+")
        for pair in (old, new, exact):
            assert_close(pair.theta_minus, math.log(9.0), tol=1e-12, message="theta-")
            assert_close(pair.dissolution_prob, 0.1, tol=1e-12, message="dissolution probability 1/D")

def test_boundaries():
    """D = 1 and D = e^theta give infinite coefficients"""
    with timing("boundaries"):
        pair = transform(-1.0, 1.0, 'new')
        assert_with_log(pair.theta_minus == -math.inf, "D = 1 dissolves every edge")
        assert_with_log(pair.dissolution_prob == 1.0, "Dissolution probability 1")
        assert_with_log(transform(-1.0, 1.0, 'old').theta_plus == math.inf, "old transform at D = 1")
        assert_with_log(transform_exact(0.0, 1.0).theta_plus == math.inf, "Formation certain at D = e^theta")
        assert_with_log(logit(0.0) == -math.inf and logit(1.0) == math.inf, "logit at the ends")
        with pytest.raises(EdaLabError):
            transform(-1.0, 0.5, 'new')

def test_consistency_violation():
    """Odds above D cannot be matched"""
    with timing("consistency_violation"):
        with pytest.raises(ConsistencyViolation) as info:
            transform_exact(math.log(20.0), 10.0)
        assert_with_log(info.value.code == ErrorCode.CONSISTENCY_VIOLATION, "Error code set")
        with pytest.raises(ConsistencyViolation):
            formation_prob(0.7, 2.0)

def test_formation_prob_identity():
    """equilibrium_edge_prob inverts formation_prob"""
    with timing("formation_prob_identity"):
        for p in PROBS:
            for D in DURATIONS:
                q = formation_prob(p, D)
                assert_close(equilibrium_edge_prob(q, D), p, tol=1e-12, message=f"p={p}, D={D}")

def test_exact_transform_matches_target():
    """The exact transform reaches p for every consistent (p, D)"""
    with timing("exact_transform_matches_target"):
        for p in PROBS:
            for D in DURATIONS:
                got = predicted_equilibrium(logit(p), D, 'exact')
                assert_close(got, p, tol=1e-12, message=f"exact equilibrium at p={p}, D={D}")

def test_relative_error_closed_forms():
    """Relative errors agree with the approximate equilibria"""
    with timing("relative_error_closed_forms"):
        for variant in ('old', 'new'):
            for p in PROBS:
                for D in DURATIONS:
                    approx = approx_equilibrium(p, D, variant) / p - 1.0
                    assert_close(relative_error(p, D, variant), approx, tol=1e-12,
                                 message=f"{variant} error at p={p}, D={D}")
        assert_close(relative_error(0.5, 10.0, 'old'), 0.0, tol=1e-15, message="old transform exact at p = 1/2")

def test_crossover():
    """Crossover threshold and the error ordering around it"""
    with timing("crossover"):
        root = (math.sqrt(17.0) - 1.0) / 8.0
        assert_close(crossover_threshold(1.0), root, tol=1e-12, message="threshold at D = 1")
        assert_close(crossover_roots(1.0)[1], root, tol=1e-12, message="upper root at D = 1")
        assert_close(crossover_threshold(1e6), 1.0 / 3.0, tol=1e-6, message="large-D limit")

        for D in (2.0, 10.0, 50.0):
            threshold = crossover_threshold(D)
            log_test_step(f"D={D}: threshold {threshold:.6f}")
            for p in (0.01, 0.1, 0.2, 0.45, 0.6, 0.9):
                smaller = abs(relative_error(p, D, 'new')) < abs(relative_error(p, D, 'old'))
                assert_with_log(new_beats_old(p, D) == (p < threshold), f"Threshold test at p={p}")
                if abs(p - threshold) > 1e-3:
                    assert_with_log(smaller == (p < threshold), f"Error ordering at p={p}, D={D}")

def test_two_state_chain():
    """The single-dyad chain has stationary (1 - p, p)"""
    with timing("two_state_chain"):
        q, D = 0.1, 5.0
        pi = stationary(two_state_matrix(q, D))
        assert_with_log(np.allclose(pi, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12), f"Stationary {pi}")
        assert_close(expit(logit(0.3)), 0.3, tol=1e-15, message="expit inverts logit")

def test_error_table_file():
    """Error table rows and output file"""
    with timing("error_table_file"):
        rows = error_table(10.0)
        assert_with_log(len(rows) == 99, "p runs over 0.01 .. 0.99")
        assert_with_log(rows[0]['p'] == 0.01 and rows[-1]['p'] == 0.99, "Grid endpoints")

        with EdaLab(**TEST_CONFIG) as lab:
            result = lab.transforms.transform(-2.0, 50.0, 'new')
            assert_close(result['formation_prob'], expit(-2.0 - math.log(50.0)), tol=1e-15, message="formation_prob")
            path = lab.transforms.write_error_table(10.0)
        assert_with_log(os.path.exists(path), f"{path} written")
        with open(path) as handle:
            lines = handle.read().splitlines()
        assert_with_log(lines[0] == 'p,err_old,err_new,crossover', "Header row")
        assert_with_log(len(lines) == 100, "Header plus 99 rows")

TEST_CASES = [
    SuiteCase(
        name="coefficient_values",
        func=test_coefficient_values,
        description="old, new and exact coefficients"
    ),
    SuiteCase(
        name="boundaries",
        func=test_boundaries,
        description="Infinite coefficients at the boundary"
    ),
    SuiteCase(
        name="consistency_violation",
        func=test_consistency_violation,
        description="Infeasible (p, D)"
    ),
    SuiteCase(
        name="formation_prob_identity",
        func=test_formation_prob_identity,
        description="q = p / ((1-p) D)"
    ),
    SuiteCase(
        name="exact_transform_matches_target",
        func=test_exact_transform_matches_target,
        description="Exact transform equilibrium"
    ),
    SuiteCase(
        name="relative_error_closed_forms",
        func=test_relative_error_closed_forms,
        description="Closed-form relative errors"
    ),
    SuiteCase(
        name="crossover",
        func=test_crossover,
        description="Crossover threshold"
    ),
    SuiteCase(
        name="two_state_chain",
        func=test_two_state_chain,
        description="Single-dyad transition matrix"
    ),
    SuiteCase(
        name="error_table_file",
        func=test_error_table_file,
        description="Error table output"
    )
]

def transforms_tests():
    """Run all transform tests"""
    for test in TEST_CASES:
        print(f"\n  Running {test.name}...")
        try:
            test.func()
            print(f"  ✓ {test.name} passed")
        except Exception as e:
            print(f"  ✗ {test.name} failed: {str(e)}")
            raise
