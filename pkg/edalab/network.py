"""Undirected network state, dyad typing and degree constraints"""
import re
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, Hashable, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from .types import EdaLabError

Dyad = Tuple[int, int]


def canonical(i: int, j: int) -> Dyad:
    """Return the (min, max) form of an unordered node pair"""
    if i == j:
        raise EdaLabError.invalid(f"Self-loop dyad ({i}, {j})", dyad=[i, j])
    return (i, j) if i < j else (j, i)


def dyad_list(node_count: int) -> List[Dyad]:
    """All dyads in lexicographic order; position is the dyad's bit index"""
    return list(combinations(range(node_count), 2))


@dataclass(frozen=True)
class Spell:
    """One edge lifetime, measured in time steps"""
    dyad_type: int
    age: int
    censored: bool = False


class Network:
    """
    Undirected simple graph with per-edge formation times

    Nodes are 0-based integers. Degrees and adjacency are maintained
    incrementally so toggles and change statistics stay O(degree).
    """

    def __init__(
        self,
        node_count: int,
        attributes: Optional[Dict[str, Sequence[Any]]] = None
    ):
        if node_count < 1:
            raise EdaLabError.invalid("node_count must be positive", node_count=node_count)
        self.node_count = node_count
        self.attributes: Dict[str, Sequence[Any]] = dict(attributes or {})
        for name, values in self.attributes.items():
            if len(values) != node_count:
                raise EdaLabError.invalid(
                    f"Attribute '{name}' has {len(values)} values for {node_count} nodes"
                )
        self.formation_time: Dict[Dyad, int] = {}
        self._adj: List[set] = [set() for _ in range(node_count)]
        # dense edge index for O(1) uniform edge draws
        self._edge_list: List[Dyad] = []
        self._edge_pos: Dict[Dyad, int] = {}

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[Tuple[int, int]],
        time: int = 0,
        attributes: Optional[Dict[str, Sequence[Any]]] = None
    ) -> 'Network':
        net = cls(node_count, attributes)
        for i, j in edges:
            dyad = canonical(i, j)
            if not net.has_edge(dyad):
                net.toggle(dyad, time)
        return net

    @property
    def dyad_count(self) -> int:
        return self.node_count * (self.node_count - 1) // 2

    @property
    def edge_count(self) -> int:
        return len(self.formation_time)

    def edges(self) -> List[Dyad]:
        """Current edges, sorted"""
        return sorted(self.formation_time)

    def has_edge(self, dyad: Dyad) -> bool:
        return dyad in self.formation_time

    def degree(self, node: int) -> int:
        return len(self._adj[node])

    def degrees(self) -> List[int]:
        return [len(a) for a in self._adj]

    def neighbors(self, node: int) -> set:
        return self._adj[node]

    def toggle(self, dyad: Dyad, time: int, typer: Optional['DyadTyper'] = None) -> Optional[Spell]:
        """
        Flip the edge state of `dyad` in place

        Returns the completed spell when an edge is turned off, None otherwise.
        """
        i, j = dyad
        if dyad in self.formation_time:
            formed = self.formation_time.pop(dyad)
            self._adj[i].discard(j)
            self._adj[j].discard(i)
            pos = self._edge_pos.pop(dyad)
            last = self._edge_list.pop()
            if last != dyad:
                self._edge_list[pos] = last
                self._edge_pos[last] = pos
            kind = typer.type_of(dyad) if typer is not None else 1
            return Spell(dyad_type=kind, age=time - formed)
        if i == j or not (0 <= i < j < self.node_count):
            raise EdaLabError.invalid(f"Invalid dyad {dyad}", dyad=list(dyad))
        self.formation_time[dyad] = time
        self._adj[i].add(j)
        self._adj[j].add(i)
        self._edge_pos[dyad] = len(self._edge_list)
        self._edge_list.append(dyad)
        return None

    def random_edge(self, u: float) -> Dyad:
        """The edge selected by a uniform draw u in [0, 1)"""
        return self._edge_list[int(u * len(self._edge_list))]

    def random_dyad(self, u: float, v: float) -> Dyad:
        """The dyad selected by two uniform draws, uniformly over all dyads"""
        n = self.node_count
        i = int(u * n)
        j = int(v * (n - 1))
        if j >= i:
            j += 1
        return (i, j) if i < j else (j, i)

    def copy(self) -> 'Network':
        other = Network(self.node_count, self.attributes)
        other.formation_time = dict(self.formation_time)
        other._adj = [set(a) for a in self._adj]
        other._edge_list = list(self._edge_list)
        other._edge_pos = dict(self._edge_pos)
        return other

    def reset_formation_times(self, time: int) -> None:
        for dyad in self.formation_time:
            self.formation_time[dyad] = time

    def to_bitmask(self, dyads: Optional[Sequence[Dyad]] = None) -> int:
        """Edge set as an integer; bit b is dyad_list(n)[b]"""
        dyads = dyads if dyads is not None else dyad_list(self.node_count)
        mask = 0
        for bit, dyad in enumerate(dyads):
            if dyad in self.formation_time:
                mask |= 1 << bit
        return mask

    @classmethod
    def from_bitmask(
        cls,
        node_count: int,
        mask: int,
        attributes: Optional[Dict[str, Sequence[Any]]] = None,
        dyads: Optional[Sequence[Dyad]] = None
    ) -> 'Network':
        dyads = dyads if dyads is not None else dyad_list(node_count)
        return cls.from_edges(
            node_count,
            (d for bit, d in enumerate(dyads) if mask >> bit & 1),
            attributes=attributes
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return self.node_count == other.node_count and set(self.formation_time) == set(other.formation_time)

    def __repr__(self) -> str:
        return f"Network(nodes={self.node_count}, edges={self.edge_count})"

    def write_edgelist(self, path: Union[str, Path]) -> None:
        """Write `nodes=<n>` then one 1-based `i j formation_time` line per edge"""
        lines = [f"nodes={self.node_count}"]
        lines += [f"{i + 1} {j + 1} {self.formation_time[(i, j)]}" for i, j in self.edges()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read_edgelist(
        cls,
        path: Union[str, Path],
        attributes: Optional[Dict[str, Sequence[Any]]] = None
    ) -> 'Network':
        text = Path(path).read_text().split("\n")
        header = re.fullmatch(r"\s*nodes\s*=\s*(\d+)\s*", text[0])
        if not header:
            raise EdaLabError.invalid(f"Missing 'nodes=<n>' header in {path}")
        net = cls(int(header.group(1)), attributes)
        for line in text[1:]:
            if not line.strip():
                continue
            i, j, t = (int(x) for x in line.split())
            dyad = canonical(i - 1, j - 1)
            net.toggle(dyad, t)
        return net


class DyadTyper:
    """
    Maps a dyad to a positive integer type from its endpoint labels only

    `mode="pair"` numbers every unordered pair of label levels (1, 2, ...);
    `mode="match"` gives 1 to mixed dyads and 2 to matched ones. Without an
    attribute every dyad has type 1.
    """

    def __init__(self, labels: Optional[Sequence[Hashable]] = None, mode: str = 'pair'):
        if mode not in ('pair', 'match'):
            raise EdaLabError.invalid(f"Unknown typer mode '{mode}'")
        self.labels = list(labels) if labels is not None else None
        self.mode = mode
        self._codes: Dict[Tuple[Hashable, Hashable], int] = {}
        if self.labels is not None and mode == 'pair':
            levels = sorted(set(self.labels), key=repr)
            pairs = [(a, b) for x, a in enumerate(levels) for b in levels[x:]]
            self._codes = {pair: k + 1 for k, pair in enumerate(pairs)}

    @classmethod
    def homogeneous(cls) -> 'DyadTyper':
        return cls()

    @property
    def type_count(self) -> int:
        if self.labels is None:
            return 1
        return 2 if self.mode == 'match' else len(self._codes)

    def type_of(self, dyad: Dyad) -> int:
        if self.labels is None:
            return 1
        a, b = self.labels[dyad[0]], self.labels[dyad[1]]
        if self.mode == 'match':
            return 2 if a == b else 1
        key = (a, b) if repr(a) <= repr(b) else (b, a)
        return self._codes[key]


class ConstraintKind(str, Enum):
    NONE = 'none'
    MAX_DEGREE = 'max-degree'
    MIN_DEGREE = 'min-degree'


@dataclass(frozen=True)
class Constraint:
    """
    Degree bound imposed on the instantaneous network

    `single_toggle_connected`: valid states are connected by single toggles.
    `free_edges_removable`: any free edge can be toggled off without leaving
    the valid set.
    """
    kind: ConstraintKind = ConstraintKind.NONE
    bound: int = 0

    GUARANTEES = {
        ConstraintKind.NONE: (True, True),
        ConstraintKind.MAX_DEGREE: (True, True),
        ConstraintKind.MIN_DEGREE: (True, False),
    }

    @classmethod
    def none(cls) -> 'Constraint':
        return cls()

    @classmethod
    def max_degree(cls, bound: int) -> 'Constraint':
        return cls(ConstraintKind.MAX_DEGREE, bound)

    @classmethod
    def min_degree(cls, bound: int) -> 'Constraint':
        return cls(ConstraintKind.MIN_DEGREE, bound)

    @classmethod
    def parse(cls, spec: Optional[str]) -> 'Constraint':
        """Parse `none`, `max-degree(b)` or `min-degree(b)`"""
        if spec is None or spec.strip() in ('', 'none'):
            return cls.none()
        match = re.fullmatch(r"\s*(max-degree|min-degree)\((\d+)\)\s*", spec)
        if not match:
            raise EdaLabError.invalid(f"Unknown constraint '{spec}'")
        return cls(ConstraintKind(match.group(1)), int(match.group(2)))

    @property
    def single_toggle_connected(self) -> bool:
        return self.GUARANTEES[self.kind][0]

    @property
    def free_edges_removable(self) -> bool:
        return self.GUARANTEES[self.kind][1]

    def __str__(self) -> str:
        if self.kind == ConstraintKind.NONE:
            return 'none'
        return f"{self.kind.value}({self.bound})"

    def degree_ok(self, degree: int) -> bool:
        if self.kind == ConstraintKind.MAX_DEGREE:
            return degree <= self.bound
        if self.kind == ConstraintKind.MIN_DEGREE:
            return degree >= self.bound
        return True

    def is_valid(self, net: Network) -> bool:
        if self.kind == ConstraintKind.NONE:
            return True
        return all(self.degree_ok(d) for d in net.degrees())

    def toggle_is_valid(self, net: Network, dyad: Dyad) -> bool:
        """Whether the instantaneous network stays valid after toggling `dyad`"""
        if self.kind == ConstraintKind.NONE:
            return True
        i, j = dyad
        step = -1 if net.has_edge(dyad) else 1
        return self.degree_ok(net.degree(i) + step) and self.degree_ok(net.degree(j) + step)


def is_valid(net: Network, constraint: Constraint) -> bool:
    return constraint.is_valid(net)


def toggle_is_valid(net: Network, dyad: Dyad, constraint: Constraint) -> bool:
    return constraint.toggle_is_valid(net, dyad)


def iter_dyads(node_count: int) -> Iterator[Dyad]:
    return combinations(range(node_count), 2)
