from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, partial
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.stats import spearmanr

from .errors import NetflowError
from .flow import FlowSystem, ParameterError, evolve, flow_system
from .function_space import (
    ApproxPair,
    GridFunction,
    approx_pair,
    constant,
    embed,
    indicator,
    l1_norm,
    piecewise_random,
    project,
)
from .graph import GraphSequence, direct_limit, edge_label, ladder_sequence
from .matrices import VelocityProfile
from .resolvent import SingularityError, resolve, resolvent_operator


log = logging.getLogger(__name__)

RESOLVENT = "resolvent"
SEMIGROUP = "semigroup"
KINDS = (RESOLVENT, SEMIGROUP)
RANDOM_PROBES = 5
RANDOM_PIECES = 8


class InsufficientDataError(NetflowError):
    module = "harness"


class PreconditionError(NetflowError):
    module = "harness"


def format_time(t: float) -> str:
    return f"{float(t):.17g}"


def format_lambda(lam) -> str:
    lam = complex(lam)
    if lam.imag == 0:
        return f"{lam.real:.17g}"
    return f"{lam.real:.17g}{lam.imag:+.17g}j"


def parse_param(kind: str, text: str):
    if kind == RESOLVENT:
        return complex(text)
    return float(text)


class ReportRow(NamedTuple):
    kind: str
    n: int
    param: str
    probe: str
    error: float


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if not (math.isfinite(row.error) and row.error >= 0):
                raise PreconditionError(f"error {row.error} of {row} is not finite and nonnegative")

    def __len__(self):
        return len(self.rows)

    def merge(self, other: "ConvergenceReport") -> "ConvergenceReport":
        return ConvergenceReport(self.rows + other.rows, {**self.metadata, **other.metadata})

    def select(self, kind=None, probe=None, param=None, n=None) -> list:
        return [
            row for row in self.rows
            if (kind is None or row.kind == kind)
            and (probe is None or row.probe == probe)
            and (param is None or row.param == param)
            and (n is None or row.n == n)
        ]

    def probes(self) -> list:
        return list(dict.fromkeys(row.probe for row in self.rows))

    def indices(self, kind=None) -> list:
        return sorted({row.n for row in self.select(kind)})

    def params(self, kind) -> list:
        return list(dict.fromkeys(row.param for row in self.select(kind)))

    def error(self, kind, n, param, probe) -> float:
        rows = self.select(kind, probe, param, n)
        if not rows:
            raise KeyError((kind, n, param, probe))
        return rows[0].error

    def series(self, kind, probe, param) -> list:
        """ errors ordered by n """
        return [row.error for row in sorted(self.select(kind, probe, param), key=lambda r: r.n)]

    def sup_over_params(self, kind) -> dict:
        """ {(n, probe): max error over the parameter list} """
        sup = {}
        for row in self.select(kind):
            key = (row.n, row.probe)
            sup[key] = max(sup.get(key, 0.0), row.error)
        return sup

    def sup_series(self, kind, probe) -> list:
        sup = self.sup_over_params(kind)
        return [sup[(n, probe)] for n in self.indices(kind) if (n, probe) in sup]


@dataclass(frozen=True, eq=False)
class TKExperiment:
    """ A nested sequence compared against its truncation G_reference_index. """

    sequence: GraphSequence
    velocities: tuple
    reference_index: int
    times: tuple
    lambdas: tuple
    probes: tuple
    cells: int
    indices: tuple = None
    seed: int = 0
    method: str = None
    cfl: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "velocities", tuple(
            v if isinstance(v, VelocityProfile) else VelocityProfile(v) for v in self.velocities
        ))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "lambdas", tuple(complex(lam) for lam in self.lambdas))
        object.__setattr__(self, "probes", tuple(self.probes))
        if self.indices is None:
            object.__setattr__(self, "indices", tuple(range(1, self.reference_index + 1)))
        object.__setattr__(self, "indices", tuple(sorted(set(self.indices))))

        if not 1 <= self.reference_index <= len(self.sequence):
            raise PreconditionError(
                f"reference index {self.reference_index} outside 1..{len(self.sequence)}"
            )
        if any(not 1 <= n <= self.reference_index for n in self.indices):
            raise PreconditionError(
                f"compared indices {self.indices} must lie in 1..{self.reference_index}"
            )
        if len(self.velocities) < self.reference_index:
            raise PreconditionError("one velocity profile per graph up to the reference is required")
        for n, (g, v) in enumerate(zip(self.sequence.graphs, self.velocities), start=1):
            if len(v) != g.edge_count:
                raise PreconditionError(f"G_{n} has {g.edge_count} edges but {len(v)} velocities")
        if any(t < 0 for t in self.times):
            raise PreconditionError(f"times must be nonnegative, got {self.times}")
        if any(lam.real <= 0 for lam in self.lambdas):
            raise PreconditionError(f"every lambda needs a positive real part, got {self.lambdas}")
        edges = self.reference.limit.edge_count
        for probe_id, x in self.probes:
            if x.shape != (edges, self.cells):
                raise PreconditionError(
                    f"probe {probe_id} has shape {x.shape}, reference space is {(edges, self.cells)}"
                )

    @cached_property
    def reference(self):
        n = self.reference_index
        truncated = GraphSequence(self.sequence.graphs[:n], self.sequence.links[: n - 1])
        return direct_limit(truncated)

    @cached_property
    def reference_velocities(self) -> VelocityProfile:
        """ Velocities carried to the reference graph along psi_n; retained edges keep theirs. """
        c = np.full(self.reference.limit.edge_count, np.nan)
        for n, psi in enumerate(self.reference.injections, start=1):
            for e, image in enumerate(psi.edge_map):
                value = self.velocities[n - 1].c[e]
                if np.isnan(c[image]):
                    c[image] = value
                elif c[image] != value:
                    raise PreconditionError(
                        f"{edge_label(e)} of G_{n} has velocity {value}, "
                        f"its image {edge_label(image)} already carries {c[image]}"
                    )
        return VelocityProfile(c)

    @cached_property
    def reference_system(self) -> FlowSystem:
        return flow_system(self.reference.limit, self.reference_velocities)

    @cached_property
    def systems(self) -> dict:
        return {
            n: flow_system(self.sequence.graphs[n - 1], self.velocities[n - 1])
            for n in self.indices
        }

    @cached_property
    def pairs(self) -> dict:
        return {n: approx_pair(self.reference.injections[n - 1]) for n in self.indices}

    @property
    def evaluator(self) -> str:
        if self.method:
            return self.method
        return "exact" if self.reference_velocities.is_unit else "upwind"

    def metadata(self) -> dict:
        return {
            "cells": self.cells,
            "evaluator": self.evaluator,
            "velocities": self.reference_velocities.summary(),
            "reference": self.reference_index,
            "seed": self.seed,
        }


def default_probes(sequence: GraphSequence, reference_index: int, cells: int, seed: int = 0) -> tuple:
    """ Indicator of e1, constant on G_1, and seeded random functions on G_1, all on the reference. """
    limit = direct_limit(
        GraphSequence(sequence.graphs[:reference_index], sequence.links[: reference_index - 1])
    )
    first = limit.injections[0].edge_map
    edges = limit.limit.edge_count
    probes = [
        ("indicator-e1", indicator(first[0], edges, cells)),
        ("constant-G1", constant(edges, cells, 1.0, first)),
    ]
    rng = np.random.default_rng(seed)
    pieces = math.gcd(cells, RANDOM_PIECES)
    for i in range(RANDOM_PROBES):
        probes.append((f"random-{i}", piecewise_random(rng, edges, cells, pieces, first)))
    return tuple(probes)


def ladder_experiment(n_max: int, reference: int, cells: int, times: Sequence,
                      lambdas: Sequence, seed: int = 0, velocities: Sequence = None,
                      method: str = None, cfl: float = 1.0) -> TKExperiment:
    if reference < n_max:
        raise PreconditionError(f"reference index {reference} is below n_max {n_max}")
    sequence = ladder_sequence(reference)
    if velocities is None:
        velocities = [VelocityProfile.unit(g.edge_count) for g in sequence.graphs]
    return TKExperiment(
        sequence=sequence,
        velocities=tuple(velocities),
        reference_index=reference,
        times=tuple(times),
        lambdas=tuple(lambdas),
        probes=default_probes(sequence, reference, cells, seed),
        cells=cells,
        indices=tuple(range(1, n_max + 1)),
        seed=seed,
        method=method,
        cfl=cfl,
    )


def _map(threads, fn, tasks) -> list:
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def check_preconditions(exp: TKExperiment, tolerance: float = 1e-12) -> dict:
    """ ||E_n|| <= 1, ||P_n|| <= 1 and P_n E_n = Id, measured on every probe. """
    embedding = cutoff = 0.0
    for n, pair in exp.pairs.items():
        for probe_id, x in exp.probes:
            norm = l1_norm(x)
            small = project(pair, x)
            if norm:
                cutoff = max(cutoff, l1_norm(small) / norm)
            back = embed(pair, small)
            if l1_norm(small):
                embedding = max(embedding, l1_norm(back) / l1_norm(small))
            if not np.array_equal(project(pair, back).values, small.values):
                raise PreconditionError(f"P_{n} E_{n} is not the identity on probe {probe_id}")
    if embedding > 1 + tolerance or cutoff > 1 + tolerance:
        raise PreconditionError(
            f"embedding norm {embedding} and cut-off norm {cutoff} must not exceed 1"
        )
    return {"embedding_norm": embedding, "cutoff_norm": cutoff}


def _approximant(pair: ApproxPair, operator: Callable, x: GridFunction) -> GridFunction:
    return embed(pair, operator(project(pair, x)))


def _resolvent(sys: FlowSystem, lam, index=None):
    try:
        return resolvent_operator(sys, lam)
    except SingularityError as e:
        raise SingularityError(e.condition, lam, index) from e


def tk1_resolvent_errors(exp: TKExperiment, threads: int = None) -> ConvergenceReport:
    """ ||E_n R(lambda, A_n) P_n x - R(lambda, A_ref) x|| """
    check_preconditions(exp)
    systems = exp.systems
    reference = {lam: _resolvent(exp.reference_system, lam, exp.reference_index) for lam in exp.lambdas}
    targets = {
        (lam, probe_id): reference[lam](x) for lam in exp.lambdas for probe_id, x in exp.probes
    }

    def compute(task):
        n, lam = task
        sys, pair = systems[n], exp.pairs[n]
        r = _resolvent(sys, lam, n)
        return [
            ReportRow(RESOLVENT, n, format_lambda(lam), probe_id,
                      l1_norm(_approximant(pair, r, x) - targets[(lam, probe_id)]))
            for probe_id, x in exp.probes
        ]

    tasks = [(n, lam) for n in exp.indices for lam in exp.lambdas]
    rows = [row for chunk in _map(threads, compute, tasks) for row in chunk]
    log.info("resolvent errors: %d rows", len(rows))
    return ConvergenceReport(rows, exp.metadata())


def tk1_semigroup_errors(exp: TKExperiment, threads: int = None) -> ConvergenceReport:
    """ ||E_n T_n(t) P_n x - T_ref(t) x|| """
    check_preconditions(exp)
    method = exp.evaluator
    t_max = max(exp.times, default=0.0)
    exp.reference_system.prepare(t_max)
    for sys in exp.systems.values():
        sys.prepare(t_max)

    def reference(task):
        t, (probe_id, x) = task
        return (t, probe_id), evolve(exp.reference_system, x, t, method, exp.cfl)

    targets = dict(_map(threads, reference, [(t, p) for t in exp.times for p in exp.probes]))

    def compute(task):
        n, t = task
        sys, pair = exp.systems[n], exp.pairs[n]
        step = partial(evolve, sys, t=t, method=method, cfl=exp.cfl)
        return [
            ReportRow(SEMIGROUP, n, format_time(t), probe_id,
                      l1_norm(_approximant(pair, step, x) - targets[(t, probe_id)]))
            for probe_id, x in exp.probes
        ]

    tasks = [(n, t) for n in exp.indices for t in exp.times]
    rows = [row for chunk in _map(threads, compute, tasks) for row in chunk]
    log.info("semigroup errors (%s): %d rows", method, len(rows))
    return ConvergenceReport(rows, exp.metadata())


def _real_columns(values: np.ndarray, complex_data: bool) -> np.ndarray:
    """ Columns of real coordinates; complex data becomes stacked real and imaginary parts. """
    if not complex_data:
        return values.real
    return np.vstack([
        np.hstack([values.real, -values.imag]),
        np.hstack([values.imag, values.real]),
    ])


def _l1_distance(basis: np.ndarray, target: np.ndarray) -> float:
    """ min over c of sum |target - basis c|, as a linear program in (c, slack). """
    rows, unknowns = basis.shape
    slack = sparse.identity(rows, format="csr")
    fit = sparse.csr_matrix(basis)
    result = linprog(
        np.r_[np.zeros(unknowns), np.ones(rows)],
        A_ub=sparse.vstack([sparse.hstack([fit, -slack]), sparse.hstack([-fit, -slack])]),
        b_ub=np.r_[target, -target],
        bounds=[(None, None)] * unknowns + [(0, None)] * rows,
        method="highs",
    )
    if result.status != 0:
        raise InsufficientDataError(f"range distance could not be computed: {result.message}")
    return float(result.fun)


def range_density_proxy(images: Sequence[GridFunction], targets: Sequence[GridFunction]) -> float:
    """ Largest relative L1 distance from a target to the span of the images.

    Zero lies in the span, so the value is in [0, 1]. Complex data is measured with
    |re| + |im| per cell.
    """
    if not images:
        raise InsufficientDataError("no images to span")
    complex_data = any(f.is_complex for f in list(images) + list(targets))
    columns = np.column_stack([image.values.reshape(-1) for image in images])
    basis = _real_columns(columns, complex_data)
    worst = 0.0
    for y in targets:
        target = _real_columns(y.values.reshape(-1, 1), complex_data)[:, 0]
        norm = np.abs(target).sum()
        if norm == 0:
            continue
        worst = max(worst, min(1.0, max(0.0, _l1_distance(basis, target) / norm)))
    return worst


class LimitCandidate(NamedTuple):
    index: int
    operator: Callable
    cauchy_gap: float
    range_density_proxy: float
    gaps: tuple


def tk2_limit_candidate(exp: TKExperiment, lam) -> LimitCandidate:
    """ x -> E_n R(lambda, A_n) P_n x at the top index, with the Cauchy gaps along the sequence. """
    if len(exp.indices) < 2:
        raise InsufficientDataError(
            f"a Cauchy check needs two compared indices, got {exp.indices}"
        )
    check_preconditions(exp)
    approximants = {}
    for n in exp.indices:
        r = _resolvent(exp.systems[n], lam, n)
        approximants[n] = partial(_approximant, exp.pairs[n], r)

    images = {n: [approximants[n](x) for _, x in exp.probes] for n in exp.indices}
    gaps = tuple(
        max((l1_norm(b - a) for a, b in zip(images[low], images[high])), default=0.0)
        for low, high in zip(exp.indices, exp.indices[1:])
    )
    top = exp.indices[-1]
    proxy = range_density_proxy(images[top], [x for _, x in exp.probes])
    log.info("limit candidate at G_%d: cauchy gap %.3g, range proxy %.3g", top, gaps[-1], proxy)
    return LimitCandidate(top, approximants[top], gaps[-1], proxy, gaps)


def exponential_formula(resolvent_at: Callable, t: float, f: GridFunction, steps: int) -> GridFunction:
    """ ((k/t) R(k/t))^k f with k = steps. """
    if t <= 0:
        raise ParameterError(f"the exponential formula needs t > 0, got {t}")
    if steps < 1:
        raise ParameterError(f"steps must be positive, got {steps}")
    lam = steps / t
    r = resolvent_at(lam)
    u = f
    for _ in range(steps):
        u = lam * r(u)
    return u


def tk2_semigroup_from_resolvent(sys_ref: FlowSystem, lambda_base: float, t: float,
                                 f: GridFunction, steps: int) -> GridFunction:
    """ Rebuild T(t)f from resolvents R(lambda) with lambda > lambda_base only. """
    if lambda_base <= 0:
        raise ParameterError(f"lambda_base must be positive, got {lambda_base}")
    if t > 0 and steps / t <= lambda_base:
        raise ParameterError(
            f"steps/t = {steps / t:g} does not exceed lambda_base = {lambda_base:g}; "
            f"use at least {math.floor(lambda_base * t) + 1} steps"
        )
    return exponential_formula(partial(resolvent_operator, sys_ref), t, f, steps)


def restriction_defect(small: FlowSystem, large: FlowSystem, pair: ApproxPair, f: GridFunction,
                       t: float, method: str = None, cfl: float = 1.0) -> float:
    """ ||P T_large(t) E f - T_small(t) f|| """
    moved = project(pair, evolve(large, embed(pair, f), t, method, cfl))
    return l1_norm(moved - evolve(small, f, t, method, cfl))


def resolvent_restriction_defect(small: FlowSystem, large: FlowSystem, pair: ApproxPair, lam,
                                 f: GridFunction) -> float:
    """ ||P R(lambda, A_large) E f - R(lambda, A_small) f||, of order exp(-lambda T) / lambda**2
    where T is the first time material can leave the small network and come back. """
    moved = project(pair, resolve(large, lam, embed(pair, f)))
    return l1_norm(moved - resolve(small, lam, f))


def _rank_agreement(a: list, b: list) -> float:
    if len(a) < 2:
        raise InsufficientDataError("trend agreement needs at least two indices")
    flat_a, flat_b = np.ptp(a) == 0, np.ptp(b) == 0
    if flat_a or flat_b:
        return 1.0 if flat_a and flat_b else 0.0
    return float(spearmanr(a, b)[0])


def trend_agreement(report: ConvergenceReport) -> dict:
    """ Spearman correlation, per probe, of resolvent and semigroup error trends in n. """
    agreement = {}
    for probe in report.probes():
        resolvent = report.sup_series(RESOLVENT, probe)
        semigroup = report.sup_series(SEMIGROUP, probe)
        if len(resolvent) != len(semigroup):
            raise InsufficientDataError(f"probe {probe}: index lists of both kinds differ")
        agreement[probe] = _rank_agreement(resolvent, semigroup)
    return agreement
