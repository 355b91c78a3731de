import os
from dataclasses import dataclass

import pytest

from edalab.network import (
    Constraint,
    ConstraintKind,
    DyadTyper,
    Network,
    Spell,
    canonical,
    dyad_list,
    is_valid,
    toggle_is_valid,
)
from edalab.types import EdaLabError
from tests.config import TEST_CONFIG
from tests.utils import log_test_step, assert_with_log, timing

@dataclass
class SuiteCase:
    name: str
    func: callable
    description: str = ""

def test_toggle_and_spells():
    """Toggling an edge off returns its completed spell"""
    with timing("toggle_and_spells"):
        log_test_step("Toggling dyads on a 4-node network...")
        net = Network(4)
        assert_with_log(net.toggle((0, 1), 3) is None, "Turning an edge on returns no spell")
        net.toggle((1, 2), 4)
        assert_with_log(net.edge_count == 2, "Two edges present")
        assert_with_log(net.degree(1) == 2 and net.degree(3) == 0, "Degrees follow the edges")
        assert_with_log(net.neighbors(1) == {0, 2}, "Neighbor sets are maintained")

        spell = net.toggle((0, 1), 8)
        assert_with_log(spell == Spell(dyad_type=1, age=5), f"Spell should have age 5, got {spell}")
        assert_with_log(net.edges() == [(1, 2)], "Only (1, 2) remains")
        assert_with_log(net.random_edge(0.99) == (1, 2), "Uniform edge draw picks the only edge")

def test_dyad_helpers():
    """canonical and dyad_list agree on ordering"""
    with timing("dyad_helpers"):
        assert_with_log(canonical(3, 1) == (1, 3), "canonical sorts the pair")
        with pytest.raises(EdaLabError):
            canonical(2, 2)
        assert_with_log(dyad_list(3) == [(0, 1), (0, 2), (1, 2)], "Lexicographic dyad order")
        net = Network(5)
        seen = {net.random_dyad(u / 10, v / 10) for u in range(10) for v in range(10)}
        assert_with_log(all(i < j for i, j in seen), "Random dyads are canonical")
        assert_with_log(len(seen) == net.dyad_count, "Every dyad is reachable by the uniform draw")

def test_bitmask_conversion():
    """Bit b of the mask is dyad_list(n)[b]"""
    with timing("bitmask_conversion"):
        net = Network.from_bitmask(3, 0b101)
        log_test_step(f"Network from mask 0b101: {net.edges()}")
        assert_with_log(net.edges() == [(0, 1), (1, 2)], "Bits 0 and 2 are (0,1) and (1,2)")
        assert_with_log(net.to_bitmask() == 5, "Mask conversion is consistent")
        assert_with_log(net == Network.from_edges(3, [(2, 1), (1, 0)]), "Equality ignores edge order")

def test_edgelist_file():
    """Edge lists keep node count and formation times"""
    with timing("edgelist_file"):
        path = os.path.join(TEST_CONFIG['out_dir'], 'network_edgelist.txt')
        net = Network(6)
        net.toggle((0, 5), 2)
        net.toggle((2, 3), 7)
        net.write_edgelist(path)
        with open(path) as handle:
            lines = handle.read().split("\n")
        assert_with_log(lines[0] == "nodes=6", "Header line first")
        assert_with_log(lines[1] == "1 6 2", "Edges are written 1-based with formation time")

        loaded = Network.read_edgelist(path)
        assert_with_log(loaded == net, "Reading back gives the same edge set")
        assert_with_log(loaded.formation_time[(2, 3)] == 7, "Formation times survive")

def test_dyad_typer():
    """Dyad types depend only on endpoint labels"""
    with timing("dyad_typer"):
        labels = ['a', 'a', 'b']
        match = DyadTyper(labels, mode='match')
        assert_with_log(match.type_of((0, 1)) == 2, "Matched dyads are type 2")
        assert_with_log(match.type_of((0, 2)) == 1, "Mixed dyads are type 1")

        pair = DyadTyper(labels)
        assert_with_log(pair.type_count == 3, "Three unordered label pairs")
        assert_with_log(pair.type_of((0, 2)) == pair.type_of((1, 2)), "Same label pair, same type")
        assert_with_log(DyadTyper.homogeneous().type_of((0, 2)) == 1, "Homogeneous typer gives 1")

def test_constraints():
    """Degree constraints parse, validate and mask toggles"""
    with timing("constraints"):
        bound = Constraint.parse('max-degree(2)')
        assert_with_log(bound.kind == ConstraintKind.MAX_DEGREE and bound.bound == 2, "Parsed max-degree(2)")
        assert_with_log(str(bound) == 'max-degree(2)', "String form round-trips")
        with pytest.raises(EdaLabError):
            Constraint.parse('fixed-edges(3)')

        net = Network.from_edges(4, [(0, 1), (0, 2)])
        assert_with_log(bound.is_valid(net), "Degree 2 satisfies max-degree(2)")
        assert_with_log(not bound.toggle_is_valid(net, (0, 3)), "A third edge at node 0 is invalid")
        assert_with_log(bound.toggle_is_valid(net, (0, 1)), "Removing an edge stays valid")

        floor = Constraint.min_degree(1)
        assert_with_log(not floor.toggle_is_valid(net, (0, 1)), "Removing (0,1) would isolate node 1")
        assert_with_log(floor.single_toggle_connected and not floor.free_edges_removable,
                        "min-degree keeps connectivity but not free removal")

def test_constraints_exhaustive():
    """toggle_is_valid agrees with is_valid after the toggle on every valid network up to 5 nodes"""
    with timing("constraints_exhaustive"):
        constraints = [Constraint.none()] + [Constraint.max_degree(b) for b in (1, 2, 3)] \
            + [Constraint.min_degree(b) for b in (1, 2)]
        for n in range(2, 6):
            dyads = dyad_list(n)
            nets = [Network.from_bitmask(n, mask) for mask in range(1 << len(dyads))]
            for constraint in constraints:
                checked = 0
                disagree, stuck = [], []
                for mask, net in enumerate(nets):
                    if not is_valid(net, constraint):
                        continue
                    for bit, dyad in enumerate(dyads):
                        allowed = toggle_is_valid(net, dyad, constraint)
                        if allowed != is_valid(nets[mask ^ 1 << bit], constraint):
                            disagree.append((mask, dyad))
                        if net.has_edge(dyad) and constraint.free_edges_removable and not allowed:
                            stuck.append((mask, dyad))
                        checked += 1
                log_test_step(f"{constraint} on {n} nodes: {checked} toggles checked")
                assert_with_log(not disagree, f"{constraint}: toggle check matches validity, mismatches {disagree[:3]}")
                assert_with_log(not stuck, f"{constraint}: every edge removable, blocked {stuck[:3]}")

        assert_with_log(Constraint.none().free_edges_removable and Constraint.max_degree(2).free_edges_removable,
                        "none and max-degree allow removing any edge")

TEST_CASES = [
    SuiteCase(
        name="toggle_and_spells",
        func=test_toggle_and_spells,
        description="Edge toggles, degrees and spell ages"
    ),
    SuiteCase(
        name="dyad_helpers",
        func=test_dyad_helpers,
        description="Canonical dyads and uniform dyad draws"
    ),
    SuiteCase(
        name="bitmask_conversion",
        func=test_bitmask_conversion,
        description="Bitmask encoding of edge sets"
    ),
    SuiteCase(
        name="edgelist_file",
        func=test_edgelist_file,
        description="Edge-list serialization"
    ),
    SuiteCase(
        name="dyad_typer",
        func=test_dyad_typer,
        description="Dyad typing from node labels"
    ),
    SuiteCase(
        name="constraints",
        func=test_constraints,
        description="Degree constraints"
    ),
    SuiteCase(
        name="constraints_exhaustive",
        func=test_constraints_exhaustive,
        description="Toggle validity on every small network"
    )
]

def network_tests():
    """Run all network tests"""
    for test in TEST_CASES:
        print(f"\n  Running {test.name}...")
        try:
            test.func()
            print(f"  ✓ {test.name} passed")
        except Exception as e:
            print(f"  ✗ {test.name} failed: {str(e)}")
            raise
