from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.signal import lfilter

from .errors import NetflowError
from .flow import FlowSystem, apply_generator, growth_bound, in_domain
from .function_space import DimensionError, GridFunction, l1_norm


log = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12


class ResolventSetError(NetflowError):
    module = "resolvent"


class SingularityError(NetflowError):
    module = "resolvent"

    def __init__(self, condition, lam=None, index=None):
        self.condition = condition
        self.lam = lam
        self.index = index
        where = f" at lambda={lam}" if lam is not None else ""
        if index is not None:
            where += f" on G_{index}"
        super().__init__(f"1 - B_C,lambda is numerically singular{where} (condition {condition:.3g})")


class InvalidProbeError(NetflowError):
    module = "resolvent"


def _scalar(lam):
    """ Real lambdas stay real so that real data gives real resolvents. """
    lam = complex(lam)
    if lam.real <= 0:
        raise ResolventSetError(f"lambda={lam} is not in the half plane Re(lambda) > 0")
    return lam.real if lam.imag == 0 else lam


@dataclass(frozen=True, eq=False)
class ResolventOperator:
    system: FlowSystem
    lam: complex
    kernel_factor: np.ndarray
    condition: float

    def __call__(self, f: GridFunction) -> GridFunction:
        return apply_resolvent(self, f)


def resolvent_operator(sys: FlowSystem, lam) -> ResolventOperator:
    lam = _scalar(lam)
    sigma = growth_bound(sys)
    if sigma > 1 and lam.real <= sys.velocities.max_c * math.log(sigma):
        log.warning(
            "Re(lambda)=%g is below the Neumann threshold %g; invertibility is not guaranteed",
            lam.real, sys.velocities.max_c * math.log(sigma),
        )
    b_c = sys.boundary.b_c.toarray()
    b_lam = np.exp(-lam / sys.velocities.c)[:, None] * b_c
    matrix = np.eye(sys.edge_count) - b_lam
    if not sys.edge_count:
        return ResolventOperator(sys, lam, b_lam, 1.0)

    condition = float(np.abs(np.linalg.cond(matrix, 1)))
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularityError(condition, lam)
    kernel = lu_solve(lu_factor(matrix), b_lam)
    log.debug("resolvent at lambda=%s: condition %.3g", lam, condition)
    return ResolventOperator(sys, lam, kernel, condition)


def _r_lambda(sys: FlowSystem, lam, values: np.ndarray):
    """ Cell averages of R_lambda f and its nodal value at x = 0. """
    cells = values.shape[1]
    h = 1.0 / cells
    dtype = np.result_type(values, lam, float)
    averages = np.empty(values.shape, dtype=dtype)
    at_zero = np.empty(values.shape[0], dtype=dtype)
    for j, c in enumerate(sys.velocities.c):
        ah = lam / c * h
        q = np.exp(-ah)
        # nodal values u_k = q u_{k+1} + f_k (1 - q) / lam, u_N = 0, run right to left
        nodes = np.zeros(cells + 1, dtype=dtype)
        nodes[:cells] = lfilter([1.0], [1.0, -q], values[j, ::-1] * (-np.expm1(-ah) / lam))[::-1]
        level = values[j] / lam
        averages[j] = level + (nodes[1:] - level) * (-np.expm1(-ah) / ah)
        at_zero[j] = nodes[0]
    return averages, at_zero


def _check_shape(sys: FlowSystem, f: GridFunction):
    if f.edge_count != sys.edge_count:
        raise DimensionError(f"function has {f.edge_count} edges, network has {sys.edge_count}")


def apply_r_lambda(sys: FlowSystem, lam, f: GridFunction) -> GridFunction:
    """ (R_lambda f)_j(s) = int_s^1 exp(lambda (s - t) / c_j) f_j(t) / c_j dt """
    _check_shape(sys, f)
    averages, _ = _r_lambda(sys, _scalar(lam), f.values)
    return GridFunction(averages)


def apply_resolvent(r: ResolventOperator, f: GridFunction) -> GridFunction:
    sys = r.system
    _check_shape(sys, f)
    averages, at_zero = _r_lambda(sys, r.lam, f.values)
    correction = r.kernel_factor @ at_zero
    a = r.lam / sys.velocities.c
    ah = a / f.cells
    left = np.arange(f.cells) / f.cells
    # cell average of exp(a s) is exp(a x_k) (exp(a h) - 1) / (a h)
    growth = np.exp(a[:, None] * left[None, :]) * (np.expm1(ah) / ah)[:, None]
    return GridFunction(averages + correction[:, None] * growth)


def resolve(sys: FlowSystem, lam, f: GridFunction) -> GridFunction:
    return apply_resolvent(resolvent_operator(sys, lam), f)


def pseudoresolvent_defect(sys: FlowSystem, lam, mu, f: GridFunction) -> float:
    """ ||R(lambda)f - R(mu)f - (mu - lambda) R(lambda)R(mu)f||, zero for a true resolvent. """
    r_lam = resolvent_operator(sys, lam)
    r_mu = r_lam if complex(lam) == complex(mu) else resolvent_operator(sys, mu)
    from_mu = r_mu(f)
    gap = r_mu.lam - r_lam.lam
    return l1_norm(r_lam(f) - from_mu - gap * r_lam(from_mu))


def generator_defect(sys: FlowSystem, lam, f: GridFunction) -> float:
    """ ||lambda u - A_h u - f|| for u = R(lambda)f with the upwind generator A_h. """
    r = resolvent_operator(sys, lam)
    u = r(f)
    return l1_norm(r.lam * u - apply_generator(sys, u) - f)


def boundary_residual(sys: FlowSystem, lam, f: GridFunction) -> float:
    """ ||u(1) - B_C u(0)|| for u = R(lambda)f. """
    return in_domain(sys, resolve(sys, lam, f)).residual


def hille_yosida_bound(sys: FlowSystem, lam, k_max: int, f: GridFunction) -> list:
    """ ||(lambda R(lambda))^k f|| / ||f|| for k = 0..k_max """
    if complex(lam).imag:
        raise ResolventSetError(f"power bounds are taken along real lambda, got {lam}")
    norm = l1_norm(f)
    if norm == 0:
        raise InvalidProbeError("the zero function cannot probe an operator norm")
    r = resolvent_operator(sys, lam)
    ratios = [1.0]
    u = f
    for _ in range(k_max):
        u = r.lam * r(u)
        ratios.append(l1_norm(u) / norm)
    return ratios


def hille_yosida_constant(sys: FlowSystem, lambdas: Iterable, k_max: int,
                          probes: Sequence[GridFunction]) -> float:
    """ Empirical M: the largest power ratio over all lambdas and probes. """
    return max(
        max(hille_yosida_bound(sys, lam, k_max, f))
        for lam in lambdas
        for f in probes
    )
