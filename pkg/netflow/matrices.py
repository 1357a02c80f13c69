from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .errors import NetflowError
from .graph import DirectedGraph, GraphValidationError, edge_label, validate_graph


log = logging.getLogger(__name__)


class InvalidVelocityError(NetflowError):
    module = "matrices"


class ConsistencyError(NetflowError):
    module = "matrices"


@dataclass(frozen=True, eq=False)
class NetworkMatrices:
    graph: DirectedGraph
    phi_minus: sparse.csr_matrix
    phi_plus: sparse.csr_matrix
    phi: sparse.csr_matrix
    adjacency: sparse.csr_matrix = None
    line_adjacency: sparse.csr_matrix = None

    @property
    def edge_count(self) -> int:
        return self.graph.edge_count


@dataclass(frozen=True, eq=False)
class VelocityProfile:
    c: np.ndarray
    m_bound: float = None
    M_bound: float = None

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        bad = np.flatnonzero(~np.isfinite(c) | (c <= 0))
        if bad.size:
            j = int(bad[0])
            raise InvalidVelocityError(
                f"velocity of {edge_label(j)} must be positive and finite, got {c[j]}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        if self.m_bound is None:
            object.__setattr__(self, "m_bound", float(c.min(initial=1.0)))
        if self.M_bound is None:
            object.__setattr__(self, "M_bound", float(c.max(initial=1.0)))
        if not 0 < self.m_bound <= self.M_bound:
            raise InvalidVelocityError(
                f"velocity bounds must satisfy 0 < m <= M, got m={self.m_bound}, M={self.M_bound}"
            )
        outside = np.flatnonzero((c < self.m_bound) | (c > self.M_bound))
        if outside.size:
            j = int(outside[0])
            raise InvalidVelocityError(
                f"velocity {c[j]} of {edge_label(j)} is outside [{self.m_bound}, {self.M_bound}]"
            )

    @classmethod
    def unit(cls, edge_count: int) -> "VelocityProfile":
        return cls(np.ones(edge_count))

    def __len__(self):
        return len(self.c)

    @property
    def is_unit(self) -> bool:
        return bool(np.all(self.c == 1.0))

    @property
    def max_c(self) -> float:
        return float(self.c.max(initial=1.0))

    def summary(self) -> str:
        if self.is_unit:
            return "unit"
        return f"min={self.c.min():.6g} max={self.c.max():.6g}"


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    b_c: sparse.csr_matrix
    velocities: VelocityProfile = field(repr=False, default=None)

    @property
    def norm(self) -> float:
        """ l1 operator norm, the largest column sum. """
        if self.b_c.shape[1] == 0:
            return 0.0
        return float(abs(self.b_c).sum(axis=0).max())

    def __matmul__(self, vector):
        return self.b_c @ vector


def incidence_matrices(g: DirectedGraph) -> NetworkMatrices:
    result = validate_graph(g)
    if not result:
        raise GraphValidationError(result.violations)
    m = g.edge_count
    columns = np.arange(m)
    ones = np.ones(m, dtype=np.int64)
    shape = (g.vertex_count, m)
    phi_minus = sparse.csr_matrix((ones, (np.array(g.tails, dtype=int), columns)), shape=shape)
    phi_plus = sparse.csr_matrix((ones, (np.array(g.heads, dtype=int), columns)), shape=shape)
    return NetworkMatrices(g, phi_minus, phi_plus, (phi_plus - phi_minus).tocsr())


def adjacency(nm: NetworkMatrices) -> sparse.csr_matrix:
    """ A[i][j] = 1 iff there is an edge v_j -> v_i. """
    a = (nm.phi_plus @ nm.phi_minus.T).tocsr()
    a.sort_indices()
    return a


def line_graph_adjacency_entrywise(g: DirectedGraph) -> sparse.csr_matrix:
    by_tail = defaultdict(list)
    for i, t in enumerate(g.tails):
        by_tail[t].append(i)
    rows, cols = [], []
    for j, h in enumerate(g.heads):
        for i in by_tail[h]:
            rows.append(i)
            cols.append(j)
    m = g.edge_count
    return sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(m, m)
    )


def line_graph_adjacency(nm: NetworkMatrices) -> sparse.csr_matrix:
    """ B[i][j] = 1 iff the head of e_j is the tail of e_i. """
    product = (nm.phi_minus.T @ nm.phi_plus).tocsr()
    product.eliminate_zeros()
    product.sort_indices()
    entrywise = line_graph_adjacency_entrywise(nm.graph)
    mismatch = (product != entrywise).nnz
    if mismatch:
        raise ConsistencyError(
            f"product and entrywise line-graph adjacency differ in {mismatch} entries"
        )
    return product


def network_matrices(g: DirectedGraph) -> NetworkMatrices:
    nm = incidence_matrices(g)
    nm = replace(nm, adjacency=adjacency(nm), line_adjacency=line_graph_adjacency(nm))
    log.debug("matrices for |V|=%d |E|=%d, nnz(B)=%d",
              g.vertex_count, g.edge_count, nm.line_adjacency.nnz)
    return nm


def boundary_operator(b, v) -> BoundaryOperator:
    """ B_C = C^-1 B C, entrywise (c_j / c_i) B[i][j]. """
    if not isinstance(v, VelocityProfile):
        v = VelocityProfile(v)
    b = sparse.csr_matrix(b, dtype=float)
    if b.shape[0] != b.shape[1]:
        raise ConsistencyError(f"boundary matrix must be square, got {b.shape}")
    if b.shape[0] != len(v):
        raise InvalidVelocityError(
            f"{len(v)} velocities given for {b.shape[0]} edges"
        )
    if b.nnz and b.data.min() < 0:
        raise ConsistencyError("boundary weights must be nonnegative")
    if not len(v):
        return BoundaryOperator(b, v)
    b_c = (sparse.diags(1.0 / v.c) @ b @ sparse.diags(v.c)).tocsr()
    b_c.sort_indices()
    return BoundaryOperator(b_c, v)
