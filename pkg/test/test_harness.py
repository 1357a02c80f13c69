import logging
import math

import numpy as np
import pytest

from netflow.flow import ParameterError, evolve_exact
from netflow.function_space import ApproxPair, constant, indicator, l1_norm, sample
from netflow.harness import (
    RESOLVENT,
    SEMIGROUP,
    ConvergenceReport,
    InsufficientDataError,
    PreconditionError,
    ReportRow,
    TKExperiment,
    check_preconditions,
    default_probes,
    exponential_formula,
    format_lambda,
    format_time,
    ladder_experiment,
    range_density_proxy,
    resolvent_restriction_defect,
    restriction_defect,
    tk1_resolvent_errors,
    tk1_semigroup_errors,
    tk2_limit_candidate,
    tk2_semigroup_from_resolvent,
    trend_agreement,
)
from netflow.matrices import VelocityProfile
from netflow.resolvent import resolvent_operator


PROBES = ["indicator-e1", "constant-G1"] + [f"random-{i}" for i in range(5)]


@pytest.fixture
def ladder_exp():
    return ladder_experiment(4, 6, cells=16, times=(0, 1, 2, 3), lambdas=(1, 4), seed=3)


def test_formatting():
    assert format_time(0.5) == "0.5"
    assert format_time(3) == "3"
    assert format_lambda(2) == "2"
    assert format_lambda(1 + 2j) == "1+2j"
    assert format_lambda(complex(0.5, -1)) == "0.5-1j"


def test_default_probes(ladder3):
    probes = default_probes(ladder3, 3, 16, seed=1)
    assert [probe_id for probe_id, _ in probes] == PROBES
    for _, x in probes:
        assert x.shape == (13, 16)
        assert not x.values[5:].any()
        assert np.all(x.values >= 0)
    assert l1_norm(probes[0][1]) == pytest.approx(1.0)
    assert l1_norm(probes[1][1]) == pytest.approx(5.0)


def test_probes_depend_on_seed(ladder3):
    first = default_probes(ladder3, 3, 16, seed=1)
    again = default_probes(ladder3, 3, 16, seed=1)
    other = default_probes(ladder3, 3, 16, seed=2)
    assert np.array_equal(first[2][1].values, again[2][1].values)
    assert not np.array_equal(first[2][1].values, other[2][1].values)


def test_experiment_defaults(ladder_exp):
    assert ladder_exp.indices == (1, 2, 3, 4)
    assert ladder_exp.evaluator == "exact"
    assert ladder_exp.reference.limit.edge_count == 25
    assert ladder_exp.metadata() == {
        "cells": 16, "evaluator": "exact", "velocities": "unit", "reference": 6, "seed": 3,
    }


def test_reference_below_n_max():
    with pytest.raises(PreconditionError):
        ladder_experiment(5, 3, cells=8, times=(0,), lambdas=(2,))


def test_experiment_rejects_bad_parameters(ladder3):
    probes = default_probes(ladder3, 3, 8)
    unit = [VelocityProfile.unit(g.edge_count) for g in ladder3.graphs]
    common = dict(sequence=ladder3, velocities=unit, probes=probes, cells=8)
    with pytest.raises(PreconditionError):
        TKExperiment(reference_index=4, times=(0,), lambdas=(2,), **common)
    with pytest.raises(PreconditionError):
        TKExperiment(reference_index=3, times=(-1,), lambdas=(2,), **common)
    with pytest.raises(PreconditionError):
        TKExperiment(reference_index=3, times=(0,), lambdas=(-2,), **common)
    with pytest.raises(PreconditionError):
        TKExperiment(reference_index=2, times=(0,), lambdas=(2,), **common)


def test_inconsistent_velocities(ladder3):
    velocities = [np.ones(5), np.r_[np.full(5, 2.0), np.ones(4)], np.ones(13)]
    exp = ladder_experiment(3, 3, cells=8, times=(0,), lambdas=(2,), velocities=velocities)
    with pytest.raises(PreconditionError) as error:
        exp.reference_velocities
    assert "e1 of G_2" in str(error.value)


def test_embedding_and_cutoff_norms(ladder_exp):
    norms = check_preconditions(ladder_exp)
    assert norms["embedding_norm"] == pytest.approx(1.0)
    assert norms["cutoff_norm"] == pytest.approx(1.0)


def test_resolvent_errors(ladder_exp):
    report = tk1_resolvent_errors(ladder_exp)
    assert len(report) == 4 * 2 * 7
    assert report.params(RESOLVENT) == ["1", "4"]
    for probe in PROBES:
        for lam in ("1", "4"):
            series = report.series(RESOLVENT, probe, lam)
            assert all(fine < coarse for coarse, fine in zip(series, series[1:]))
        for n in ladder_exp.indices:
            assert report.error(RESOLVENT, n, "4", probe) < report.error(RESOLVENT, n, "1", probe)


def test_resolvent_errors_decrease_at_lambda_two():
    exp = ladder_experiment(4, 6, cells=16, times=(0,), lambdas=(2,), seed=3)
    report = tk1_resolvent_errors(exp)
    for probe in PROBES:
        series = report.series(RESOLVENT, probe, "2")
        assert all(fine < coarse for coarse, fine in zip(series, series[1:]))


def test_semigroup_errors_vanish_until_mass_reaches_the_cut(ladder_exp):
    report = tk1_semigroup_errors(ladder_exp)
    assert len(report) == 4 * 4 * 7
    for row in report.rows:
        if float(row.param) <= row.n - 1:
            assert row.error == 0.0
        else:
            assert row.error > 0.0


def test_threads_do_not_change_results(ladder_exp):
    serial = tk1_resolvent_errors(ladder_exp, threads=1)
    parallel = tk1_resolvent_errors(ladder_exp, threads=4)
    assert serial.rows == parallel.rows


def test_upwind_experiment():
    # velocities depend only on the edge number, so retained edges keep theirs
    velocities = [1.0 + 0.25 * (np.arange(m) % 3) for m in (5, 9, 13)]
    exp = ladder_experiment(2, 3, cells=16, times=(0.5,), lambdas=(2,), velocities=velocities, cfl=0.5)
    assert exp.evaluator == "upwind"
    assert exp.metadata()["velocities"] == "min=1 max=1.5"
    report = tk1_semigroup_errors(exp)
    assert len(report) == 2 * 7
    assert report.metadata["evaluator"] == "upwind"


def test_limit_candidate(ladder_exp):
    candidate = tk2_limit_candidate(ladder_exp, 2.0)
    assert candidate.index == 4
    assert len(candidate.gaps) == 3
    assert all(fine < coarse for coarse, fine in zip(candidate.gaps, candidate.gaps[1:]))
    assert candidate.cauchy_gap == candidate.gaps[-1]
    assert 0.0 <= candidate.range_density_proxy <= 1.0
    x = ladder_exp.probes[0][1]
    assert candidate.operator(x).shape == x.shape


def test_limit_candidate_needs_two_indices():
    exp = ladder_experiment(1, 2, cells=8, times=(0,), lambdas=(2,))
    with pytest.raises(InsufficientDataError):
        tk2_limit_candidate(exp, 2.0)


def test_range_density_proxy():
    x = indicator(0, 3, 8)
    y = constant(3, 8)
    assert range_density_proxy([x, y], [2 * x - y]) == pytest.approx(0.0, abs=1e-6)
    assert range_density_proxy([x], [y]) == pytest.approx(2 / 3)
    with pytest.raises(InsufficientDataError):
        range_density_proxy([], [y])


def test_trend_agreement(ladder_exp):
    report = tk1_resolvent_errors(ladder_exp).merge(tk1_semigroup_errors(ladder_exp))
    agreement = trend_agreement(report)
    assert set(agreement) == set(PROBES)
    assert all(rho == pytest.approx(1.0) for rho in agreement.values())


def test_trend_agreement_needs_two_indices():
    rows = [ReportRow(RESOLVENT, 1, "2", "p", 0.5), ReportRow(SEMIGROUP, 1, "1", "p", 0.5)]
    with pytest.raises(InsufficientDataError):
        trend_agreement(ConvergenceReport(rows))


def test_report_rejects_bad_errors():
    with pytest.raises(PreconditionError):
        ConvergenceReport([ReportRow(RESOLVENT, 1, "2", "p", float("nan"))])
    with pytest.raises(PreconditionError):
        ConvergenceReport([ReportRow(RESOLVENT, 1, "2", "p", -1.0)])


def test_report_queries():
    rows = [
        ReportRow(SEMIGROUP, 2, "0", "p", 0.0),
        ReportRow(SEMIGROUP, 1, "0", "p", 0.0),
        ReportRow(SEMIGROUP, 1, "1", "p", 0.5),
        ReportRow(SEMIGROUP, 2, "1", "p", 0.25),
        ReportRow(SEMIGROUP, 1, "1", "q", 0.75),
    ]
    report = ConvergenceReport(rows)
    assert report.probes() == ["p", "q"]
    assert report.indices() == [1, 2]
    assert report.params(SEMIGROUP) == ["0", "1"]
    assert report.series(SEMIGROUP, "p", "1") == [0.5, 0.25]
    assert report.sup_series(SEMIGROUP, "p") == [0.5, 0.25]
    assert report.error(SEMIGROUP, 1, "1", "q") == 0.75
    with pytest.raises(KeyError):
        report.error(RESOLVENT, 1, "1", "q")


def test_restriction_identity(g1_system, g2_system):
    pair = ApproxPair.prefix(5, 9)
    f = indicator(0, 5, 16)
    for t in (0.5, 1.0, 2.0):
        assert restriction_defect(g1_system, g2_system, pair, f, t, "exact") == 0.0
    # material leaving G_1 at v2 returns through v3 within three time units
    assert restriction_defect(g1_system, g2_system, pair, f, 3.0, "exact") == pytest.approx(1.0)


def test_exponential_formula_on_cycle(two_cycle):
    f = sample([lambda x: np.cos(np.pi * x), lambda x: -np.cos(np.pi * x)], 256)
    exact = evolve_exact(two_cycle, f, 1.0)
    errors = [
        l1_norm(tk2_semigroup_from_resolvent(two_cycle, 1.0, 1.0, f, steps) - exact) / l1_norm(exact)
        for steps in (8, 16, 32, 64)
    ]
    assert errors[-1] < 0.1
    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine >= 1.5


def test_single_resolvent_step(two_cycle):
    cells = 256
    f = sample([lambda x: np.cos(np.pi * x), lambda x: -np.cos(np.pi * x)], cells)
    t = 1 / cells
    approximate = exponential_formula(lambda lam: resolvent_operator(two_cycle, lam), t, f, 1)
    exact = evolve_exact(two_cycle, f, t)
    assert l1_norm(approximate - exact) / l1_norm(exact) <= 8 / cells


def test_steps_must_exceed_lambda_base(two_cycle):
    f = constant(2, 8)
    with pytest.raises(ParameterError) as error:
        tk2_semigroup_from_resolvent(two_cycle, 2.0, 1.0, f, 2)
    assert "at least 3 steps" in str(error.value)
    with pytest.raises(ParameterError):
        tk2_semigroup_from_resolvent(two_cycle, 0.0, 1.0, f, 2)
    with pytest.raises(ParameterError):
        exponential_formula(lambda lam: None, 0.0, f, 4)


def test_runs_are_logged(ladder_exp, netflow_log):
    tk1_resolvent_errors(ladder_exp)
    assert any(r.levelno == logging.INFO and "resolvent errors" in r.getMessage() for r in netflow_log)


def test_sup_errors_do_not_grow_with_n(ladder_exp):
    report = tk1_semigroup_errors(ladder_exp)
    for probe in PROBES:
        series = report.sup_series(SEMIGROUP, probe)
        assert all(fine <= coarse for coarse, fine in zip(series, series[1:]))


def test_late_times_see_the_cut():
    exp = ladder_experiment(2, 8, cells=16, times=(5,), lambdas=(2,))
    report = tk1_semigroup_errors(exp)
    for probe in PROBES:
        assert max(report.series(SEMIGROUP, probe, "5")) > 1e-3


def test_restriction_breaks_after_return(g1_system, g2_system):
    pair = ApproxPair.prefix(5, 9)
    f = indicator(0, 5, 16)
    assert restriction_defect(g1_system, g2_system, pair, f, 5.0, "exact") > 1e-3


def test_exponential_formula_is_first_order(two_cycle):
    f = sample([lambda x: np.cos(np.pi * x), lambda x: -np.cos(np.pi * x)], 256)
    exact = evolve_exact(two_cycle, f, 1.0)
    steps = np.array([8, 16, 32, 64])
    errors = [
        l1_norm(tk2_semigroup_from_resolvent(two_cycle, 1.0, 1.0, f, k) - exact) / l1_norm(exact)
        for k in steps
    ]
    slope = -np.polyfit(np.log(steps), np.log(errors), 1)[0]
    assert 0.7 <= slope <= 1.3


@pytest.mark.parametrize("lam", [0.5, 2.0, 1 + 2j])
def test_range_proxy_is_a_relative_distance(ladder_exp, lam):
    candidate = tk2_limit_candidate(ladder_exp, lam)
    assert 0.0 <= candidate.range_density_proxy <= 1.0
    images = [candidate.operator(x) for _, x in ladder_exp.probes]
    assert range_density_proxy(images, images) == pytest.approx(0.0, abs=1e-6)


def test_range_proxy_uses_complex_coefficients():
    x = indicator(0, 2, 8)
    assert range_density_proxy([x * (1 + 1j)], [x]) == pytest.approx(0.0, abs=1e-6)
    assert range_density_proxy([x], [constant(2, 8)]) == pytest.approx(0.5)


def test_resolvent_restriction_decays_with_return_time(g1_system, g2_system):
    pair = ApproxPair.prefix(5, 9)
    f = indicator(0, 5, 64)
    lambdas = (1.0, 2.0, 4.0, 8.0)
    defects = [resolvent_restriction_defect(g1_system, g2_system, pair, lam, f) for lam in lambdas]
    # material leaving G_1 at v2 crosses two new edges before it is back on e3
    scaled = [d * math.exp(2 * lam) for d, lam in zip(defects, lambdas)]
    assert all(0.0 < s <= 5.0 for s in scaled)
    assert all(later < earlier for earlier, later in zip(scaled, scaled[1:]))
    rate = math.log(defects[2] / defects[3]) / 4
    assert 2.0 <= rate <= 2.6
