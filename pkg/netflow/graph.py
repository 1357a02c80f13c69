from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import NamedTuple, Sequence

from networkx.utils import UnionFind

from .errors import NetflowError


log = logging.getLogger(__name__)


class MalformedInputError(NetflowError):
    module = "graph"


class UnsupportedInputError(NetflowError):
    module = "graph"


class GraphValidationError(NetflowError):
    module = "graph"

    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__("; ".join(self.violations))


def vertex_label(v: int) -> str:
    return f"v{v + 1}"


def edge_label(j: int) -> str:
    return f"e{j + 1}"


# edges of G_1 as drawn in the example network, 0-based
LADDER_BASE_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0), (1, 3))
# right-hand vertex pair of G_1 where the first cell attaches: (v2, v3)
LADDER_BASE_ANCHOR = (1, 2)


@dataclass(frozen=True)
class DirectedGraph:
    vertex_count: int
    edges: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self, "edges", tuple((int(t), int(h)) for t, h in self.edges)
        )

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def tails(self) -> tuple:
        return tuple(t for t, _ in self.edges)

    @property
    def heads(self) -> tuple:
        return tuple(h for _, h in self.edges)

    @cached_property
    def edge_index(self) -> dict:
        index = {}
        for j, e in enumerate(self.edges):
            index.setdefault(e, j)
        return index

    def has_edge(self, tail: int, head: int) -> bool:
        return (tail, head) in self.edge_index

    def out_degrees(self) -> list:
        degrees = [0] * self.vertex_count
        for t, _ in self.edges:
            if 0 <= t < self.vertex_count:
                degrees[t] += 1
        return degrees

    def max_out_degree(self) -> int:
        return max(self.out_degrees(), default=0)

    def __str__(self):
        edges = ", ".join(
            f"{edge_label(j)}=({vertex_label(t)},{vertex_label(h)})"
            for j, (t, h) in enumerate(self.edges)
        )
        return f"G(|V|={self.vertex_count}, |E|={self.edge_count}: {edges})"


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple = ()
    max_out_degree: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class GraphHomomorphism:
    source: DirectedGraph
    target: DirectedGraph
    vertex_map: tuple
    edge_map: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "vertex_map", tuple(int(v) for v in self.vertex_map))

    @property
    def injective(self) -> bool:
        return len(set(self.vertex_map)) == len(self.vertex_map)

    def __call__(self, v: int) -> int:
        return self.vertex_map[v]


@dataclass(frozen=True)
class HomomorphismCheck:
    violations: tuple
    injective: bool
    homomorphism: GraphHomomorphism

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def edge_map(self):
        return self.homomorphism.edge_map

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class GraphSequence:
    graphs: tuple
    links: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "links", tuple(self.links))

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, n):
        return self.graphs[n]


class DirectLimit(NamedTuple):
    limit: DirectedGraph
    injections: tuple
    degree_bounds: tuple


def validate_graph(g: DirectedGraph) -> ValidationResult:
    violations = []
    if g.vertex_count < 0:
        violations.append(f"negative vertex count {g.vertex_count}")
    first_seen = {}
    for j, (t, h) in enumerate(g.edges):
        out_of_range = [v for v in (t, h) if not 0 <= v < g.vertex_count]
        if out_of_range:
            names = ", ".join(vertex_label(v) for v in out_of_range)
            violations.append(
                f"{edge_label(j)} references {names} outside v1..v{g.vertex_count}"
            )
            continue
        if t == h:
            violations.append(f"loop at {vertex_label(t)} ({edge_label(j)})")
            continue
        if (t, h) in first_seen:
            violations.append(
                f"parallel edge {edge_label(j)} duplicates "
                f"{edge_label(first_seen[(t, h)])} ({vertex_label(t)}, {vertex_label(h)})"
            )
            continue
        first_seen[(t, h)] = j
    return ValidationResult(tuple(violations), g.max_out_degree())


def check_homomorphism(h: GraphHomomorphism) -> HomomorphismCheck:
    if len(h.vertex_map) != h.source.vertex_count:
        raise MalformedInputError(
            f"vertex map has {len(h.vertex_map)} entries, "
            f"source has {h.source.vertex_count} vertices"
        )
    for v, image in enumerate(h.vertex_map):
        if not 0 <= image < h.target.vertex_count:
            raise MalformedInputError(
                f"{vertex_label(v)} is sent to {vertex_label(image)}, "
                f"target has {h.target.vertex_count} vertices"
            )
    for role, g in (("source", h.source), ("target", h.target)):
        result = validate_graph(g)
        if not result:
            raise MalformedInputError(
                f"{role} graph is not simple: {'; '.join(result.violations)}"
            )

    violations = []
    edge_map = []
    for j, (a, b) in enumerate(h.source.edges):
        image = (h.vertex_map[a], h.vertex_map[b])
        if image in h.target.edge_index:
            edge_map.append(h.target.edge_index[image])
        else:
            violations.append(
                f"image of {edge_label(j)}=({vertex_label(a)},{vertex_label(b)}) is "
                f"({vertex_label(image[0])},{vertex_label(image[1])}), not an edge"
            )

    checked = replace(h, edge_map=None if violations else tuple(edge_map))
    return HomomorphismCheck(tuple(violations), h.injective, checked)


def identity_homomorphism(g: DirectedGraph) -> GraphHomomorphism:
    return GraphHomomorphism(g, g, range(g.vertex_count), tuple(range(g.edge_count)))


def compose(outer: GraphHomomorphism, inner: GraphHomomorphism) -> GraphHomomorphism:
    """ outer ∘ inner """
    if inner.target != outer.source:
        raise MalformedInputError("cannot compose: codomain and domain differ")
    return GraphHomomorphism(
        inner.source, outer.target, tuple(outer(v) for v in inner.vertex_map)
    )


def validate_sequence(seq: GraphSequence) -> ValidationResult:
    violations = []
    if len(seq.links) != max(len(seq.graphs) - 1, 0):
        violations.append(
            f"{len(seq.graphs)} graphs need {len(seq.graphs) - 1} links, "
            f"got {len(seq.links)}"
        )
    for n, g in enumerate(seq.graphs):
        violations.extend(f"G_{n + 1}: {v}" for v in validate_graph(g).violations)
    for n, link in enumerate(seq.links[: len(seq.graphs) - 1]):
        name = f"phi_{n + 1}"
        if link.source != seq.graphs[n] or link.target != seq.graphs[n + 1]:
            violations.append(f"{name} does not map G_{n + 1} into G_{n + 2}")
            continue
        if not link.injective:
            violations.append(f"{name} is not injective")
        try:
            result = check_homomorphism(link)
        except MalformedInputError as e:
            violations.append(f"{name}: {e}")
            continue
        violations.extend(f"{name}: {v}" for v in result.violations)
    bound = max((g.max_out_degree() for g in seq.graphs), default=0)
    return ValidationResult(tuple(violations), bound)


def direct_limit(seq: GraphSequence) -> DirectLimit:
    for n, link in enumerate(seq.links):
        if not link.injective:
            raise UnsupportedInputError(
                f"phi_{n + 1} is not injective; only subgraph inclusions are supported"
            )
    result = validate_sequence(seq)
    if not result:
        raise MalformedInputError("; ".join(result.violations))

    classes = UnionFind()
    for n, g in enumerate(seq.graphs):
        for v in range(g.vertex_count):
            classes[(n, v)]
    for n, link in enumerate(seq.links):
        for v, image in enumerate(link.vertex_map):
            classes.union((n, v), (n + 1, image))

    # fresh vertices are numbered in discovery order
    numbering = {}
    vertex_maps = []
    for n, g in enumerate(seq.graphs):
        vertex_map = []
        for v in range(g.vertex_count):
            root = classes[(n, v)]
            if root not in numbering:
                numbering[root] = len(numbering)
            vertex_map.append(numbering[root])
        vertex_maps.append(tuple(vertex_map))

    edges = {}
    for n, g in enumerate(seq.graphs):
        psi = vertex_maps[n]
        for t, h in g.edges:
            edges.setdefault((psi[t], psi[h]), len(edges))
    limit = DirectedGraph(len(numbering), tuple(edges))

    injections = []
    for g, vertex_map in zip(seq.graphs, vertex_maps):
        injections.append(check_homomorphism(GraphHomomorphism(g, limit, vertex_map)).homomorphism)

    for n, link in enumerate(seq.links):
        for v in range(link.source.vertex_count):
            if vertex_maps[n + 1][link(v)] != vertex_maps[n][v]:
                raise UnsupportedInputError(
                    f"psi_{n + 2} o phi_{n + 1} != psi_{n + 1} at {vertex_label(v)}"
                )

    bounds = tuple(g.max_out_degree() for g in seq.graphs)
    log.info("direct limit: |V|=%d |E|=%d, out-degree bounds %s",
             limit.vertex_count, limit.edge_count, bounds)
    if len(bounds) >= 3 and bounds[-3] < bounds[-2] < bounds[-1]:
        log.warning(
            "out-degree bound keeps growing along the sequence %s; "
            "the limit may not be uniformly locally finite", bounds
        )
    return DirectLimit(limit, tuple(injections), bounds)


def factor_through_limit(result: DirectLimit, cocone: Sequence) -> GraphHomomorphism:
    """ The unique alpha with alpha o psi_n = theta_n for a commuting family theta_n. """
    if len(cocone) != len(result.injections):
        raise MalformedInputError(
            f"cocone has {len(cocone)} arrows, sequence has {len(result.injections)} graphs"
        )
    target = cocone[0].target
    alpha = [None] * result.limit.vertex_count
    for n, (psi, theta) in enumerate(zip(result.injections, cocone)):
        if theta.target != target:
            raise MalformedInputError(f"theta_{n + 1} has a different codomain")
        for v in range(psi.source.vertex_count):
            w = psi(v)
            if alpha[w] is not None and alpha[w] != theta(v):
                raise UnsupportedInputError(
                    f"cocone does not commute: {vertex_label(w)} of the limit is sent "
                    f"to both {vertex_label(alpha[w])} and {vertex_label(theta(v))}"
                )
            alpha[w] = theta(v)
    check = check_homomorphism(GraphHomomorphism(result.limit, target, alpha))
    if not check:
        raise UnsupportedInputError("; ".join(check.violations))
    return check.homomorphism


def ladder_sequence(n_max: int) -> GraphSequence:
    if n_max < 1:
        raise MalformedInputError(f"n_max must be at least 1, got {n_max}")
    graphs = [DirectedGraph(4, LADDER_BASE_EDGES)]
    links = []
    top, bottom = LADDER_BASE_ANCHOR
    for _ in range(1, n_max):
        previous = graphs[-1]
        a, b = previous.vertex_count, previous.vertex_count + 1
        cell = ((top, a), (a, b), (b, bottom), (a, bottom))
        graphs.append(DirectedGraph(previous.vertex_count + 2, previous.edges + cell))
        links.append(
            GraphHomomorphism(
                previous, graphs[-1], range(previous.vertex_count),
                tuple(range(previous.edge_count)),
            )
        )
        top, bottom = a, b
    return GraphSequence(tuple(graphs), tuple(links))


def cycle_graph(length: int) -> DirectedGraph:
    if length < 2:
        raise MalformedInputError("a simple directed cycle needs at least 2 vertices")
    return DirectedGraph(length, tuple((v, (v + 1) % length) for v in range(length)))


def constant_sequence(g: DirectedGraph, count: int) -> GraphSequence:
    links = [identity_homomorphism(g) for _ in range(count - 1)]
    return GraphSequence((g,) * count, tuple(links))
