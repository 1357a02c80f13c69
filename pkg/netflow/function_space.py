from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NetflowError
from .graph import GraphHomomorphism, check_homomorphism


class DimensionError(NetflowError):
    module = "function_space"


class NonFiniteError(NetflowError):
    module = "function_space"


@dataclass(frozen=True, eq=False)
class GridFunction:
    """ Cell averages of an L1([0,1], C^m) function, values[j][k] on [k/N, (k+1)/N). """

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DimensionError(f"expected an m x N array with m, N >= 1, got shape {values.shape}")
        if np.iscomplexobj(values):
            values = values.astype(complex)
        else:
            values = values.astype(float)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("grid function has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def edge_count(self) -> int:
        return self.values.shape[0]

    @property
    def cells(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def h(self) -> float:
        return 1.0 / self.cells

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def _other_values(self, other):
        if isinstance(other, GridFunction):
            if other.shape != self.shape:
                raise DimensionError(f"shapes differ: {self.shape} and {other.shape}")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.values + self._other_values(other))

    def __sub__(self, other):
        return GridFunction(self.values - self._other_values(other))

    def __mul__(self, scalar):
        return GridFunction(self.values * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return GridFunction(self.values / scalar)

    def __neg__(self):
        return GridFunction(-self.values)


@dataclass(frozen=True)
class ApproxPair:
    small_edges: int
    large_edges: int
    edge_injection: tuple

    def __post_init__(self):
        injection = tuple(int(j) for j in self.edge_injection)
        object.__setattr__(self, "edge_injection", injection)
        if len(injection) != self.small_edges:
            raise DimensionError(
                f"edge injection has {len(injection)} entries for {self.small_edges} edges"
            )
        if self.small_edges > self.large_edges:
            raise DimensionError(f"cannot embed {self.small_edges} edges into {self.large_edges}")
        if len(set(injection)) != len(injection):
            raise DimensionError("edge injection is not injective")
        if any(not 0 <= j < self.large_edges for j in injection):
            raise DimensionError("edge injection leaves the large edge range")

    @classmethod
    def prefix(cls, small_edges: int, large_edges: int) -> "ApproxPair":
        """ The labeling convention of nested graphs: e_j of G_n is e_j of the larger graph. """
        return cls(small_edges, large_edges, tuple(range(small_edges)))

    @property
    def index(self) -> list:
        return list(self.edge_injection)


def approx_pair(h: GraphHomomorphism) -> ApproxPair:
    """ E_n and P_n induced by an injective homomorphism. """
    if not h.injective:
        raise DimensionError("only injective homomorphisms induce an embedding")
    edge_map = h.edge_map
    if edge_map is None:
        check = check_homomorphism(h)
        if not check:
            raise DimensionError("; ".join(check.violations))
        edge_map = check.edge_map
    return ApproxPair(h.source.edge_count, h.target.edge_count, edge_map)


def l1_norm(f: GridFunction) -> float:
    return float(np.abs(f.values).sum() / f.cells)


def embed(p: ApproxPair, f: GridFunction) -> GridFunction:
    if f.edge_count != p.small_edges:
        raise DimensionError(f"embedding expects {p.small_edges} edges, got {f.edge_count}")
    values = np.zeros((p.large_edges, f.cells), dtype=f.values.dtype)
    values[p.index] = f.values
    return GridFunction(values)


def project(p: ApproxPair, f: GridFunction) -> GridFunction:
    if f.edge_count != p.large_edges:
        raise DimensionError(f"cut-off expects {p.large_edges} edges, got {f.edge_count}")
    return GridFunction(f.values[p.index])


def boundary_traces(f: GridFunction) -> tuple:
    """ (f(0), f(1)): values of the first and last cell of every edge. """
    return f.values[:, 0].copy(), f.values[:, -1].copy()


def zeros(edge_count: int, cells: int, dtype=float) -> GridFunction:
    return GridFunction(np.zeros((edge_count, cells), dtype=dtype))


def constant(edge_count: int, cells: int, value=1.0, edges: Sequence = None) -> GridFunction:
    values = np.zeros((edge_count, cells), dtype=np.result_type(value, float))
    values[list(range(edge_count)) if edges is None else list(edges)] = value
    return GridFunction(values)


def indicator(edge: int, edge_count: int, cells: int, lower=0.0, upper=1.0) -> GridFunction:
    """ 1 on the cells of `edge` whose midpoint lies in [lower, upper). """
    if not 0 <= edge < edge_count:
        raise DimensionError(f"edge {edge} outside 0..{edge_count - 1}")
    midpoints = (np.arange(cells) + 0.5) / cells
    values = np.zeros((edge_count, cells))
    values[edge] = (midpoints >= lower) & (midpoints < upper)
    return GridFunction(values)


def sample(functions: Sequence[Callable], cells: int) -> GridFunction:
    """ Midpoint values of one vectorized callable per edge. """
    midpoints = (np.arange(cells) + 0.5) / cells
    rows = [np.broadcast_to(fn(midpoints), midpoints.shape) for fn in functions]
    return GridFunction(np.vstack(rows))


def piecewise_random(rng: np.random.Generator, edge_count: int, cells: int,
                     pieces: int = 8, edges: Sequence = None) -> GridFunction:
    """ Uniform [0, 1) values, constant on `pieces` equal parts of each selected edge.

    The same generator state gives the same function on every grid that `pieces` divides.
    """
    if cells % pieces:
        raise DimensionError(f"{cells} cells cannot be split into {pieces} pieces")
    edges = list(range(edge_count)) if edges is None else list(edges)
    values = np.zeros((edge_count, cells))
    values[edges] = np.repeat(rng.random((len(edges), pieces)), cells // pieces, axis=1)
    return GridFunction(values)


def refine(f: GridFunction, factor: int) -> GridFunction:
    if factor < 1:
        raise DimensionError(f"refinement factor must be positive, got {factor}")
    return GridFunction(np.repeat(f.values, factor, axis=1))


def coarsen(f: GridFunction, factor: int) -> GridFunction:
    if factor < 1 or f.cells % factor:
        raise DimensionError(f"{f.cells} cells cannot be coarsened by {factor}")
    return GridFunction(f.values.reshape(f.edge_count, f.cells // factor, factor).mean(axis=2))
