from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .errors import NetflowError
from .function_space import DimensionError, GridFunction, boundary_traces, l1_norm
from .graph import DirectedGraph
from .matrices import (
    BoundaryOperator,
    NetworkMatrices,
    VelocityProfile,
    boundary_operator,
    network_matrices,
)


log = logging.getLogger(__name__)

ALIGNMENT_TOLERANCE = 1e-9


class UnsupportedVelocityError(NetflowError):
    module = "flow"


class ParameterError(NetflowError):
    module = "flow"


class AlignmentError(NetflowError):
    module = "flow"

    def __init__(self, t, cells):
        self.t = t
        self.cells = cells
        self.below = math.floor(t * cells) / cells
        self.above = math.ceil(t * cells) / cells
        super().__init__(
            f"t={t!r} is not a multiple of 1/{cells}; "
            f"nearest aligned times are {self.below!r} and {self.above!r}"
        )


class BoundaryPowers:
    """ Lazily extended list of B_C^k. Call `extend` before sharing across threads. """

    def __init__(self, b_c):
        self.b_c = b_c
        self._powers = [sparse.identity(b_c.shape[0], format="csr")]
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._powers)

    def extend(self, k: int):
        with self._lock:
            while len(self._powers) <= k:
                power = (self.b_c @ self._powers[-1]).tocsr()
                power.sort_indices()
                self._powers.append(power)

    def __getitem__(self, k: int):
        if k >= len(self._powers):
            self.extend(k)
        return self._powers[k]


@dataclass(frozen=True, eq=False)
class FlowSystem:
    """ Transport along the edges, tail (x = 1) to head (x = 0), with f(1) = B_C f(0). """

    graph: DirectedGraph
    matrices: NetworkMatrices
    velocities: VelocityProfile
    boundary: BoundaryOperator
    powers: BoundaryPowers = field(init=False, repr=False)

    def __post_init__(self):
        m = self.graph.edge_count
        if len(self.velocities) != m or self.boundary.b_c.shape != (m, m):
            raise DimensionError(
                f"flow system on {m} edges has {len(self.velocities)} velocities "
                f"and a {self.boundary.b_c.shape} boundary operator"
            )
        object.__setattr__(self, "powers", BoundaryPowers(self.boundary.b_c))

    @property
    def edge_count(self) -> int:
        return self.graph.edge_count

    def prepare(self, t_max: float):
        self.powers.extend(math.ceil(t_max) + 1)


class DomainCheck(NamedTuple):
    residual: float
    inside: bool

    def __bool__(self):
        return self.inside


def flow_system(g: DirectedGraph, velocities=None, weights=None) -> FlowSystem:
    """ `weights` replaces the 0/1 line-graph adjacency by a nonnegative matrix of the same shape. """
    nm = network_matrices(g)
    if velocities is None:
        velocities = VelocityProfile.unit(g.edge_count)
    elif not isinstance(velocities, VelocityProfile):
        velocities = VelocityProfile(velocities)
    b = nm.line_adjacency if weights is None else weights
    return FlowSystem(g, nm, velocities, boundary_operator(b, velocities))


def _check_shape(sys: FlowSystem, f: GridFunction):
    if f.edge_count != sys.edge_count:
        raise DimensionError(
            f"function has {f.edge_count} edges, network has {sys.edge_count}"
        )


def aligned_shift(t: float, cells: int) -> int:
    if t < 0:
        raise ParameterError(f"time must be nonnegative, got {t}")
    shift = round(t * cells)
    if abs(t * cells - shift) > ALIGNMENT_TOLERANCE * max(1.0, t * cells):
        raise AlignmentError(t, cells)
    return shift


def aligned_times(times, cells: int) -> tuple:
    """ The times of `times` that land on the grid of `cells` cells per edge. """
    kept = []
    for t in times:
        try:
            aligned_shift(t, cells)
        except AlignmentError:
            log.info("dropping t=%g, not aligned to 1/%d", t, cells)
            continue
        kept.append(t)
    return tuple(kept)


def in_domain(sys: FlowSystem, f: GridFunction, tol: float = 1e-12) -> DomainCheck:
    _check_shape(sys, f)
    at_zero, at_one = boundary_traces(f)
    residual = float(np.abs(at_one - sys.boundary @ at_zero).sum())
    return DomainCheck(residual, residual <= tol)


def evolve_exact(sys: FlowSystem, f: GridFunction, t: float) -> GridFunction:
    """ (T(t)f)(s) = B^k f(s + t - k), k = floor(s + t), for grid-aligned t. """
    _check_shape(sys, f)
    if not sys.velocities.is_unit:
        raise UnsupportedVelocityError(
            "the shift formula needs unit velocities; use the upwind evaluator"
        )
    cells = f.cells
    shift = aligned_shift(t, cells)
    if shift == 0:
        return f

    position = np.arange(cells) + shift
    windings = position // cells
    source = position % cells
    values = np.empty_like(f.values)
    for k in np.unique(windings):
        columns = np.flatnonzero(windings == k)
        values[:, columns] = sys.powers[int(k)] @ f.values[:, source[columns]]
    return GridFunction(values)


def _upstream(sys: FlowSystem, u: np.ndarray) -> np.ndarray:
    upstream = np.empty_like(u)
    upstream[:, :-1] = u[:, 1:]
    upstream[:, -1] = sys.boundary @ u[:, 0]
    return upstream


def evolve_upwind(sys: FlowSystem, f: GridFunction, t: float, cfl: float = 1.0) -> GridFunction:
    _check_shape(sys, f)
    if not 0 < cfl <= 1:
        raise ParameterError(f"cfl must lie in (0, 1], got {cfl}")
    if t < 0:
        raise ParameterError(f"time must be nonnegative, got {t}")
    cells = f.cells
    c = sys.velocities.c[:, None]
    c_max = sys.velocities.max_c
    dt = cfl / (cells * c_max)

    steps = int(math.floor(t / dt + ALIGNMENT_TOLERANCE))
    rest = t - steps * dt
    if rest <= 1e-12 * dt:
        rest = 0.0
    log.debug("upwind: %d steps of %.6g, final step %.6g", steps, dt, rest)

    u = f.values
    courant = cfl * c / c_max
    for _ in range(steps):
        u = (1 - courant) * u + courant * _upstream(sys, u)
    if rest:
        courant = c * rest * cells
        u = (1 - courant) * u + courant * _upstream(sys, u)
    return GridFunction(u) if u is not f.values else f


def evolve(sys: FlowSystem, f: GridFunction, t: float, method: str = None,
           cfl: float = 1.0) -> GridFunction:
    """ method is "exact", "upwind" or None (exact for unit velocities). """
    if method is None:
        method = "exact" if sys.velocities.is_unit else "upwind"
    if method == "exact":
        return evolve_exact(sys, f, t)
    if method == "upwind":
        return evolve_upwind(sys, f, t, cfl)
    raise ParameterError(f"unknown evaluator {method!r}")


def apply_generator(sys: FlowSystem, u: GridFunction) -> GridFunction:
    """ Upwind difference c_j (u(x + h) - u(x)) / h, the ghost cell past x = 1 being B_C u(0). """
    _check_shape(sys, u)
    c = sys.velocities.c[:, None]
    return GridFunction(c * (_upstream(sys, u.values) - u.values) * u.cells)


def semigroup_law_check(sys: FlowSystem, f: GridFunction, t: float, s: float,
                        method: str = None, cfl: float = 1.0) -> float:
    """ ||T(t + s)f - T(t)T(s)f|| """
    combined = evolve(sys, f, t + s, method, cfl)
    stepped = evolve(sys, evolve(sys, f, s, method, cfl), t, method, cfl)
    return l1_norm(combined - stepped)


def total_mass(f: GridFunction):
    mass = f.values.sum() / f.cells
    return complex(mass) if f.is_complex else float(mass)


def growth_bound(sys: FlowSystem) -> float:
    """ Largest column sum of B_C; ||T(t)|| <= growth_bound ** ceil(t) for the shift formula. """
    return sys.boundary.norm
