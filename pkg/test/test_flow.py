import math

import numpy as np
import pytest

from netflow.flow import (
    AlignmentError,
    ParameterError,
    UnsupportedVelocityError,
    aligned_shift,
    apply_generator,
    evolve,
    evolve_exact,
    evolve_upwind,
    flow_system,
    growth_bound,
    in_domain,
    semigroup_law_check,
    total_mass,
)
from netflow.function_space import (
    DimensionError,
    GridFunction,
    coarsen,
    constant,
    indicator,
    l1_norm,
    piecewise_random,
    sample,
)


MIXED = (1.0, 1.5, 0.8, 1.2, 1.0)


def bump(cells, edges=5):
    return sample([lambda x: np.sin(np.pi * x) ** 4] * edges, cells)


def test_growth_bounds(g1_system, g2_system, two_cycle):
    assert growth_bound(g1_system) == 2.0
    assert growth_bound(g2_system) == 3.0
    assert growth_bound(two_cycle) == 1.0


def test_zero_time_is_identity(g1_system, rng):
    f = piecewise_random(rng, 5, 16)
    assert evolve_exact(g1_system, f, 0.0) is f
    assert np.array_equal(evolve_upwind(g1_system, f, 0.0).values, f.values)


def test_unit_time_applies_boundary(g1_system, b1, rng):
    f = piecewise_random(rng, 5, 16)
    moved = evolve_exact(g1_system, f, 1.0)
    assert np.allclose(moved.values, b1 @ f.values)


def test_shift_within_an_edge(g1_system):
    f = indicator(0, 5, 8, lower=0.5)
    moved = evolve_exact(g1_system, f, 0.25)
    assert moved.values[0].tolist() == [0, 0, 1, 1, 1, 1, 0, 0]
    assert not moved.values[1:].any()


def test_shift_across_a_vertex(g1_system):
    # e1 = (v1, v2) feeds e2 and e5 at v2
    f = indicator(0, 5, 8, upper=0.25)
    moved = evolve_exact(g1_system, f, 0.5)
    assert not moved.values[0].any()
    for j in (1, 4):
        assert moved.values[j].tolist() == [0, 0, 0, 0, 1, 1, 0, 0]
    assert total_mass(moved) == pytest.approx(2 * total_mass(f))


def test_constant_mass_grows_with_in_degree(g1_system):
    f = constant(5, 8)
    assert total_mass(evolve_exact(g1_system, f, 1.0)) == pytest.approx(6.0)


def test_exact_semigroup_law(g2_system, rng):
    f = piecewise_random(rng, 9, 16)
    assert semigroup_law_check(g2_system, f, 0.25, 1.5, "exact") <= 1e-12 * l1_norm(f)
    assert semigroup_law_check(g2_system, f, 2.0, 0.0625, "exact") <= 1e-12 * l1_norm(f)


@pytest.mark.parametrize("t", [0.5, 1.25, 2.5])
def test_norm_bound(g2_system, rng, t):
    f = piecewise_random(rng, 9, 16)
    moved = evolve_exact(g2_system, f, t)
    assert l1_norm(moved) <= growth_bound(g2_system) ** math.ceil(t) * l1_norm(f) + 1e-12


def test_powers_are_cached(g1_system, b1):
    g1_system.prepare(2.5)
    assert len(g1_system.powers) >= 4
    assert np.array_equal(g1_system.powers[2].toarray(), b1 @ b1)
    assert np.array_equal(g1_system.powers[0].toarray(), np.eye(5))


def test_misaligned_time():
    with pytest.raises(AlignmentError) as error:
        aligned_shift(0.3, 16)
    assert error.value.below == 0.25
    assert error.value.above == 0.3125
    assert "0.25" in str(error.value)
    assert aligned_shift(0.375, 16) == 6


def test_negative_time(g1_system):
    with pytest.raises(ParameterError):
        aligned_shift(-0.5, 8)
    with pytest.raises(ParameterError):
        evolve_upwind(g1_system, constant(5, 8), -1.0)


def test_exact_needs_unit_velocities(g1):
    sys = flow_system(g1, MIXED)
    with pytest.raises(UnsupportedVelocityError):
        evolve_exact(sys, constant(5, 8), 0.5)
    assert evolve(sys, constant(5, 8), 0.3).cells == 8


@pytest.mark.parametrize("cfl", [0.0, -0.5, 1.5])
def test_cfl_range(g1_system, cfl):
    with pytest.raises(ParameterError):
        evolve_upwind(g1_system, constant(5, 8), 0.5, cfl)


def test_unknown_method(g1_system):
    with pytest.raises(ParameterError):
        evolve(g1_system, constant(5, 8), 0.5, "spectral")


def test_wrong_edge_count(g1_system):
    with pytest.raises(DimensionError):
        evolve(g1_system, constant(9, 8), 0.5)


def test_upwind_with_unit_courant_is_exact(g1_system, rng):
    f = piecewise_random(rng, 5, 16)
    for t in (0.25, 1.0, 1.75):
        assert np.allclose(
            evolve_upwind(g1_system, f, t, cfl=1.0).values, evolve_exact(g1_system, f, t).values
        )


def test_upwind_conserves_mass_on_cycle(two_cycle):
    f = indicator(0, 2, 128, upper=0.5)
    moved = evolve_upwind(two_cycle, f, 0.5, cfl=0.5)
    assert total_mass(moved) == pytest.approx(total_mass(f))
    assert moved.values[1].sum() / 128 > 0.4
    assert np.all(moved.values >= 0)


def test_upwind_final_partial_step(g1):
    sys = flow_system(g1, MIXED)
    f = bump(32)
    # 0.3 is not a multiple of the step; the last step is shortened
    moved = evolve_upwind(sys, f, 0.3, cfl=0.75)
    assert np.all(moved.values >= -1e-15)
    # mass crosses at most one vertex, where it splits over two edges
    assert l1_norm(moved) <= 2 * l1_norm(f)


def test_upwind_semigroup_defect_shrinks(g1):
    sys = flow_system(g1, MIXED)
    defects = [
        semigroup_law_check(sys, bump(cells), 0.3, 0.45, "upwind", cfl=0.75)
        for cells in (64, 128, 256, 512)
    ]
    for coarse, fine in zip(defects, defects[1:]):
        assert fine <= 0.75 * coarse


def test_upwind_self_convergence(g1):
    sys = flow_system(g1, MIXED)
    solutions = [evolve_upwind(sys, bump(cells), 1.0, cfl=0.75) for cells in (128, 256, 512)]
    coarse_gap = l1_norm(solutions[0] - coarsen(solutions[1], 2))
    fine_gap = l1_norm(solutions[1] - coarsen(solutions[2], 2))
    assert math.log2(coarse_gap / fine_gap) >= 0.8


def test_generator_of_constant_on_cycle(two_cycle):
    assert not apply_generator(two_cycle, constant(2, 16, 3.0)).values.any()


def test_generator_sees_boundary_mismatch(g1_system):
    a = apply_generator(g1_system, constant(5, 8))
    # e4 starts at v4, which receives e3 and e5
    expected = np.zeros((5, 8))
    expected[3, -1] = 8.0
    assert np.allclose(a.values, expected)


def test_in_domain(g1_system, b1, rng):
    values = rng.random((5, 8))
    values[:, -1] = b1 @ values[:, 0]
    assert in_domain(g1_system, GridFunction(values))
    values[0, -1] += 0.5
    check = in_domain(g1_system, GridFunction(values))
    assert not check
    assert check.residual == pytest.approx(0.5)


def test_weighted_flow_conserves_mass(g1):
    # split the outflow at v2 evenly between e2 and e5
    weights = np.array([
        [0, 0, 0, 1, 0],
        [0.5, 0, 0, 0, 0],
        [0, 1, 0, 0, 0],
        [0, 0, 1, 0, 1],
        [0.5, 0, 0, 0, 0],
    ])
    sys = flow_system(g1, weights=weights)
    f = piecewise_random(np.random.default_rng(3), 5, 16)
    assert growth_bound(sys) == 1.0
    assert total_mass(evolve_exact(sys, f, 2.5)) == pytest.approx(total_mass(f))


def test_complex_data(g1_system):
    f = GridFunction(constant(5, 8).values * (1 + 1j))
    moved = evolve_exact(g1_system, f, 1.0)
    assert moved.is_complex
    assert total_mass(moved) == pytest.approx(6 + 6j)


@pytest.mark.parametrize("seed", range(25))
def test_exact_semigroup_law_on_random_triples(g1_system, g2_system, seed):
    rng = np.random.default_rng(seed)
    for sys in (g1_system, g2_system):
        f = piecewise_random(rng, sys.edge_count, 16)
        t, s = rng.integers(0, 33, size=2) / 16
        assert semigroup_law_check(sys, f, t, s, "exact") <= 1e-12 * (1 + l1_norm(f))
