"""Network statistics, change statistics and the ergm potential"""
import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .network import Dyad, Network
from .types import EdaLabError, ModelEntry


class TermKind(str, Enum):
    EDGES = 'edges'
    DEGREE = 'degree'
    GWESP = 'gwesp'
    NODEMATCH = 'nodematch'


_TERM_PATTERN = re.compile(r"\s*(edges|degree|gwesp|nodematch)\s*(?:\(\s*([^)]*?)\s*\))?\s*")


@dataclass(frozen=True)
class Term:
    """A model term with its global statistic and exact change statistic"""
    kind: TermKind
    k: int = 0
    alpha: float = 0.0
    attribute: str = ''

    @classmethod
    def edges(cls) -> 'Term':
        return cls(TermKind.EDGES)

    @classmethod
    def degree(cls, k: int) -> 'Term':
        if k < 0:
            raise EdaLabError.invalid(f"degree({k}) needs a nonnegative k")
        return cls(TermKind.DEGREE, k=k)

    @classmethod
    def gwesp(cls, alpha: float) -> 'Term':
        if alpha < 0:
            raise EdaLabError.invalid(f"gwesp decay must be nonnegative, got {alpha}")
        return cls(TermKind.GWESP, alpha=float(alpha))

    @classmethod
    def nodematch(cls, attribute: str) -> 'Term':
        return cls(TermKind.NODEMATCH, attribute=attribute)

    @classmethod
    def parse(cls, spec: str) -> 'Term':
        """Parse `edges`, `degree(1)`, `gwesp(0.5)` or `nodematch(attr)`"""
        match = _TERM_PATTERN.fullmatch(spec)
        if not match:
            raise EdaLabError.invalid(f"Unknown term '{spec}'")
        name, arg = match.group(1), match.group(2)
        try:
            if name == 'edges':
                return cls.edges()
            if name == 'degree':
                return cls.degree(int(arg))
            if name == 'gwesp':
                # "gwesp(0.5, fixed = TRUE)" is accepted; only fixed decay exists
                return cls.gwesp(float(arg.split(',')[0]))
            if not arg:
                raise ValueError("missing attribute")
            return cls.nodematch(arg)
        except (TypeError, ValueError) as e:
            raise EdaLabError.invalid(f"Bad arguments in term '{spec}': {e}")

    @property
    def label(self) -> str:
        if self.kind == TermKind.EDGES:
            return 'edges'
        if self.kind == TermKind.DEGREE:
            return f"degree({self.k})"
        if self.kind == TermKind.GWESP:
            return f"gwesp({self.alpha:g})"
        return f"nodematch({self.attribute})"

    @property
    def dyad_independent(self) -> bool:
        return self.kind in (TermKind.EDGES, TermKind.NODEMATCH)

    def __str__(self) -> str:
        return self.label


def _shared_partners(net: Network, i: int, j: int, exclude: Optional[int] = None) -> int:
    common = net.neighbors(i) & net.neighbors(j)
    if exclude is not None and exclude in common:
        return len(common) - 1
    return len(common)


def _gwesp_weight(alpha: float, partners: int) -> float:
    if partners == 0:
        return 0.0
    return math.exp(alpha) * (1.0 - (1.0 - math.exp(-alpha)) ** partners)


def stat(term: Term, net: Network) -> float:
    """The term's global statistic g_t(net)"""
    if term.kind == TermKind.EDGES:
        return float(net.edge_count)
    if term.kind == TermKind.DEGREE:
        return float(sum(1 for d in net.degrees() if d == term.k))
    if term.kind == TermKind.GWESP:
        return float(sum(
            _gwesp_weight(term.alpha, _shared_partners(net, i, j))
            for i, j in net.edges()
        ))
    labels = _attribute(net, term.attribute)
    return float(sum(1 for i, j in net.edges() if labels[i] == labels[j]))


def change_stat(term: Term, net: Network, dyad: Dyad) -> float:
    """g_t(net with dyad on) - g_t(net with dyad off), computed locally"""
    i, j = dyad
    present = net.has_edge(dyad)
    if term.kind == TermKind.EDGES:
        return 1.0
    if term.kind == TermKind.DEGREE:
        k = term.k
        delta = 0
        for node in (i, j):
            off = net.degree(node) - (1 if present else 0)
            delta += (off + 1 == k) - (off == k)
        return float(delta)
    if term.kind == TermKind.GWESP:
        # Off-state shared-partner counts; the toggled dyad itself is never a partner
        ratio = 1.0 - math.exp(-term.alpha)
        common = net.neighbors(i) & net.neighbors(j)
        delta = _gwesp_weight(term.alpha, len(common))
        for z in common:
            delta += ratio ** _shared_partners(net, i, z, exclude=j if present else None)
            delta += ratio ** _shared_partners(net, j, z, exclude=i if present else None)
        return delta
    labels = _attribute(net, term.attribute)
    return 1.0 if labels[i] == labels[j] else 0.0


def _attribute(net: Network, name: str) -> Sequence:
    try:
        return net.attributes[name]
    except KeyError:
        raise EdaLabError.invalid(f"Network has no node attribute '{name}'", attribute=name)


def stats_vector(terms: Sequence[Term], net: Network) -> np.ndarray:
    return np.array([stat(t, net) for t in terms], dtype=float)


def change_stats(terms: Sequence[Term], net: Network, dyad: Dyad) -> np.ndarray:
    return np.array([change_stat(t, net, dyad) for t in terms], dtype=float)


@dataclass
class Model:
    """An ergm potential theta . g(y) over an ordered term list"""
    terms: List[Term]
    coefs: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.coefs is None:
            self.coefs = np.zeros(len(self.terms))
        self.coefs = np.asarray(self.coefs, dtype=float)
        if self.coefs.shape != (len(self.terms),):
            raise EdaLabError.invalid(
                f"{len(self.terms)} terms but {self.coefs.size} coefficients"
            )
        if not np.all(np.isfinite(self.coefs)):
            raise EdaLabError.invalid("Model coefficients must be finite")

    @classmethod
    def from_specs(cls, specs: Sequence[str], coefs: Sequence[float]) -> 'Model':
        return cls([Term.parse(s) for s in specs], np.asarray(coefs, dtype=float))

    @classmethod
    def from_entries(cls, entries: Sequence[ModelEntry]) -> 'Model':
        return cls.from_specs([e['term'] for e in entries], [e['coef'] for e in entries])

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'Model':
        """
        Read a model file

        Either a JSON list of {"term": ..., "coef": ...} or text lines of the
        form `term=<spec>, coef=<real>`; blank lines and `#` comments are skipped.
        """
        text = Path(path).read_text()
        if text.lstrip().startswith('['):
            try:
                return cls.from_entries(json.loads(text))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise EdaLabError.invalid(f"Malformed model file {path}: {e}")
        return cls.from_entries(parse_model_text(text))

    def to_entries(self) -> List[ModelEntry]:
        return [{'term': t.label, 'coef': float(c)} for t, c in zip(self.terms, self.coefs)]

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_entries(), indent=2) + "\n")

    def with_coefs(self, coefs: Sequence[float]) -> 'Model':
        return Model(list(self.terms), np.asarray(coefs, dtype=float))

    @property
    def labels(self) -> List[str]:
        return [t.label for t in self.terms]

    @property
    def is_dyad_independent(self) -> bool:
        """True when every term with a nonzero coefficient is dyad-independent"""
        return all(t.dyad_independent or c == 0.0 for t, c in zip(self.terms, self.coefs))

    def potential(self, net: Network) -> float:
        return float(self.coefs @ stats_vector(self.terms, net))

    def conditional_logodds(self, net: Network, dyad: Dyad) -> float:
        total = 0.0
        for term, coef in zip(self.terms, self.coefs):
            if coef != 0.0:
                total += coef * change_stat(term, net, dyad)
        return total

    def potential_ratio(self, net_i: Network, net_j: Network) -> float:
        """pi(j) / pi(i); j need not satisfy any constraint"""
        if net_i.node_count != net_j.node_count:
            raise EdaLabError.invalid("Networks have different node sets")
        return math.exp(self.potential(net_j) - self.potential(net_i))


def conditional_logodds(model: Model, net: Network, dyad: Dyad) -> float:
    return model.conditional_logodds(net, dyad)


def potential_ratio(model: Model, net_i: Network, net_j: Network) -> float:
    return model.potential_ratio(net_i, net_j)


_MODEL_LINE = re.compile(r"\s*term\s*=\s*(.+?)\s*[,;]\s*coef\s*=\s*(\S+)\s*")


def parse_model_text(text: str) -> List[ModelEntry]:
    """Entries of a `term=<spec>, coef=<real>` model file, in file order"""
    entries: List[ModelEntry] = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0]
        if not line.strip():
            continue
        match = _MODEL_LINE.fullmatch(line)
        if not match:
            raise EdaLabError.invalid(f"Model line {number} is not 'term=<spec>, coef=<real>': {line.strip()}")
        try:
            coef = float(match.group(2))
        except ValueError:
            raise EdaLabError.invalid(f"Model line {number} has a non-numeric coefficient '{match.group(2)}'")
        entries.append({'term': match.group(1), 'coef': coef})
    if not entries:
        raise EdaLabError.invalid("Model file has no terms")
    return entries


def parse_terms(specs: Union[str, Sequence[str]]) -> List[Term]:
    """Accept a list of term specs or a single 'edges + degree(1)' string"""
    if isinstance(specs, str):
        parts = re.split(r"\s*\+\s*|\s*;\s*", specs.strip())
        specs = [p for p in parts if p]
    return [Term.parse(s) for s in specs]
