import math
from dataclasses import dataclass

import numpy as np
import pytest

from edalab import EdaLab
from edalab.capabilities.oracle import enumerate_states, exact_expectations
from edalab.capabilities.rchain import (
    RSpec,
    estimate_odds_bound,
    lambda_min_random_toggle,
    lambda_tnt_analogue,
    proposal_prob,
    r_rate,
    sample_ergm,
    simulate_R,
    step_R,
)
from edalab.capabilities.transforms import expit
from edalab.network import Constraint, Network
from edalab.stats import Model, Term
from edalab.types import AcceptanceOverflow, EdaLabError, ProposalKind
from tests.config import TEST_CONFIG
from tests.utils import (
    log_test_step,
    log_response,
    assert_with_log,
    assert_close,
    assert_within_se,
    geometric_fit_pvalue,
    timing,
)

@dataclass
class SuiteCase:
    name: str
    func: callable
    description: str = ""

def _edges_model(theta: float) -> Model:
    return Model([Term.edges()], [theta])

def test_lambda_formulas():
    """Minimal lam for both proposals"""
    with timing("lambda_formulas"):
        assert_close(lambda_min_random_toggle(45, 5.0), 9.0, tol=1e-12, message="N / D0")
        assert_close(lambda_min_random_toggle(45, 5.0, odds_bound=2.0), 18.0, tol=1e-12, message="N c / D0")
        assert_close(lambda_tnt_analogue(10, 4, 0.3, 5.0), 1.2, tol=1e-12, message="c N dominates")
        assert_close(lambda_tnt_analogue(10, 4, 0.2, 5.0), 0.4 * 40.0 / 14.0, tol=1e-12, message="edge term dominates")
        with pytest.raises(EdaLabError):
            lambda_tnt_analogue(10, 11, 1.0, 1.0)

def test_rates():
    """R entries: 1/D off, odds/D on, zero when the constraint forbids"""
    with timing("rates"):
        spec = RSpec(_edges_model(-1.0), node_count=4, duration_base={1: 1.0}, lam=10.0,
                     constraint=Constraint.max_degree(2))
        net = Network.from_edges(4, [(0, 1), (1, 2)])
        assert_close(r_rate(spec, net, (0, 1)), 0.1, tol=1e-15, message="off-toggle rate")
        assert_close(r_rate(spec, net, (2, 3)), math.exp(-1.0) / 10.0, tol=1e-15, message="on-toggle rate")
        assert_with_log(r_rate(spec, net, (1, 3)) == 0.0, "Degree 3 at node 1 is forbidden")

def test_random_toggle_acceptance():
    """At the minimal lam the random-toggle acceptance ratio is the odds (on) or one (off)"""
    with timing("random_toggle_acceptance"):
        theta = -0.7
        spec = RSpec(_edges_model(theta), node_count=4, duration_base={1: 2.0},
                     proposal=ProposalKind.RANDOM_TOGGLE)
        assert_close(spec.lam, 3.0, tol=1e-12, message="lam = N / D0")
        net = Network.from_edges(4, [(0, 1)])
        on = r_rate(spec, net, (2, 3)) / proposal_prob(spec, net, (2, 3))
        off = r_rate(spec, net, (0, 1)) / proposal_prob(spec, net, (0, 1))
        assert_close(on, math.exp(theta), tol=1e-12, message="on ratio")
        assert_close(off, 1.0, tol=1e-12, message="off ratio")

def test_acceptance_overflow():
    """A lam below the bound is refused at the first proposal"""
    with timing("acceptance_overflow"):
        spec = RSpec(_edges_model(0.0), node_count=4, duration_base={1: 1.0}, lam=1.0,
                     proposal=ProposalKind.RANDOM_TOGGLE)
        with pytest.raises(AcceptanceOverflow) as info:
            step_R(spec, Network(4), np.random.default_rng(TEST_CONFIG['seed']))
        log_response("overflow details", info.value.details)
        assert_close(info.value.details['ratio'], 6.0, tol=1e-9, message="ratio N / (lam D0)")

def test_invalid_specs():
    """Durations under one step and unsafe factors are rejected"""
    with timing("invalid_specs"):
        with pytest.raises(EdaLabError):
            RSpec(_edges_model(0.0), node_count=4, duration_base={1: 1.0}, lam=0.5)
        with pytest.raises(EdaLabError):
            RSpec(_edges_model(0.0), node_count=4, duration_base={1: 1.0}, safety_factor=0.5)

def test_single_dyad_chain():
    """One dyad under R: Geometric(1/D) spells and prevalence expit(theta)"""
    with timing("single_dyad_chain"):
        D = 10.0
        spec = RSpec(_edges_model(0.0), node_count=2, duration_base={1: 1.0}, lam=D,
                     proposal=ProposalKind.RANDOM_TOGGLE)
        record = simulate_R(spec, Network(2), 100, 100000, [Term.edges()], seed=TEST_CONFIG['seed'])
        ages = [s.age for s in record.completed_spells]
        log_test_step(f"{len(ages)} spells, mean {np.mean(ages):.3f}")
        spread = math.sqrt(D * (D - 1.0) / len(ages))
        assert_within_se(float(np.mean(ages)), D, spread, "Mean spell length in steps")
        pvalue = geometric_fit_pvalue(ages, D)
        assert_with_log(pvalue > 0.001, f"Geometric fit p-value {pvalue:.4f}")
        edges = record.summary()['edges']
        assert_within_se(edges['mean'], expit(0.0), edges['stderr'], "Prevalence")

def test_edge_bound_respected():
    """The tnt analogue never exceeds its edge bound"""
    with timing("edge_bound_respected"):
        spec = RSpec(_edges_model(0.0), node_count=5, duration_base={1: 1.0}, odds_bound=1.0, edge_bound=3)
        record = simulate_R(spec, Network(5), 0, 20000, [Term.edges()], seed=TEST_CONFIG['seed'])
        log_response("diagnostics", record.diagnostics)
        assert_with_log(record.stat_series.max() <= 3, "At most three edges")
        assert_with_log(record.diagnostics['boundary_hits'] > 0, "Bound was reached")
        assert_with_log(record.diagnostics['max_acceptance_ratio'] <= 1.0 + 1e-12, "Ratios stay below one")

def test_sample_ergm_edges():
    """The ergm sampler recovers N expit(theta) edges"""
    with timing("sample_ergm_edges"):
        theta = -0.5
        record = sample_ergm(_edges_model(theta), Network(5), 50000, [Term.edges()],
                             seed=TEST_CONFIG['seed'], burn_in=1000)
        edges = record.summary()['edges']
        assert_within_se(edges['mean'], 10 * expit(theta), edges['stderr'], "Mean edge count")
        assert_close(record.diagnostics['max_logodds'], theta, tol=1e-12, message="Constant conditional log-odds")
        bound = estimate_odds_bound(_edges_model(theta), Network(5), steps=2000, seed=1)
        assert_close(bound, 2.0 * math.exp(theta), tol=1e-12, message="Pilot odds bound")

def test_R_matches_exact_expectations():
    """Simulated R means agree with enumeration on 4 nodes"""
    with timing("R_matches_exact_expectations"):
        model = Model.from_specs(['edges', 'degree(1)'], [-1.0, 0.5])
        mean, _ = exact_expectations(enumerate_states(4), model)
        # conditional log-odds lie in [-2, 0], so c = 1 bounds the odds
        spec = RSpec(model, node_count=4, duration_base={1: 1.0}, odds_bound=1.0)
        with EdaLab(**TEST_CONFIG) as lab:
            record = lab.rchain.simulate(spec, Network(4), 2000, 200000, model.terms, thin=10)
        summary = record.summary()
        for label, expected in zip(model.labels, mean):
            log_test_step(f"{label}: {summary[label]['mean']:.4f} vs exact {expected:.4f}")
            assert_within_se(summary[label]['mean'], expected, summary[label]['stderr'], label)
        spells = [s.age for s in record.completed_spells]
        spread = math.sqrt(spec.lam * (spec.lam - 1.0) / len(spells))
        assert_within_se(float(np.mean(spells)), spec.lam, spread, "Mean spell is lam * D0 steps")

TEST_CASES = [
    SuiteCase(
        name="lambda_formulas",
        func=test_lambda_formulas,
        description="Minimal lam formulas"
    ),
    SuiteCase(
        name="rates",
        func=test_rates,
        description="Rate of each toggle"
    ),
    SuiteCase(
        name="random_toggle_acceptance",
        func=test_random_toggle_acceptance,
        description="Acceptance ratios at the minimal lam"
    ),
    SuiteCase(
        name="acceptance_overflow",
        func=test_acceptance_overflow,
        description="Overflowing acceptance ratio"
    ),
    SuiteCase(
        name="invalid_specs",
        func=test_invalid_specs,
        description="Rejected chain settings"
    ),
    SuiteCase(
        name="single_dyad_chain",
        func=test_single_dyad_chain,
        description="Single-dyad spells and prevalence"
    ),
    SuiteCase(
        name="edge_bound_respected",
        func=test_edge_bound_respected,
        description="Edge bound of the tnt analogue"
    ),
    SuiteCase(
        name="sample_ergm_edges",
        func=test_sample_ergm_edges,
        description="Cross-sectional ergm sampler"
    ),
    SuiteCase(
        name="R_matches_exact_expectations",
        func=test_R_matches_exact_expectations,
        description="R against enumeration"
    )
]

def rchain_tests():
    """Run all R chain tests"""
    for test in TEST_CASES:
        print(f"\n  Running {test.name}...")
        try:
            test.func()
            print(f"  ✓ {test.name} passed")
        except Exception as e:
            print(f"  ✗ {test.name} failed: {str(e)}")
            raise
