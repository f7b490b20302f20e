import numpy as np
import pytest

from tfwlab.common import EmptyConfiguration
from tfwlab.groundstate import SolverOptions, solve_ground_state
from tfwlab.nuclei import (
    NuclearConfig,
    NucleusShape,
    assemble_density,
    density_derivative,
    perturb,
    simple_cubic,
)
from tfwlab.response import LinearisedSolver
from tfwlab.siteenergy import (
    build_partition,
    energy_density,
    invariance_suite,
    site_energies,
    site_forces,
    total_force,
)


def test_partition_of_unity(pair, grid):
    partition = build_partition(pair, grid)
    assert partition.weights.shape == (2, *grid.shape)
    assert np.all(partition.weights >= 0)
    np.testing.assert_allclose(np.sum(partition.weights, axis=0), 1.0, atol=1e-12)


def test_partition_derivative_sums_to_zero(pair, grid):
    partition = build_partition(pair, grid)
    np.testing.assert_allclose(
        np.sum(partition.derivative(0, [1.0, 0.0, 0.0]), axis=0), 0.0, atol=1e-12
    )


def test_partition_needs_nuclei(grid):
    with pytest.raises(EmptyConfiguration):
        build_partition(NuclearConfig([], 8.0, background=1.0), grid)


@pytest.mark.parametrize("flavor", ["E1", "E2"])
def test_site_energies_sum_to_total(pair, grid, pair_state, flavor):
    m, state = pair_state
    report = site_energies(state, m, pair, build_partition(pair, grid), flavor)
    assert len(report.energies) == 2
    assert report.total == pytest.approx(report.reference, rel=1e-12)
    assert report.as_dict()["gauge"] == "mean(phi) = 0"


def test_energy_densities_integrate_alike(pair_state):
    m, state = pair_state
    e1 = energy_density(state, m, "E1").integrate()
    e2 = energy_density(state, m, "E2").integrate()
    assert e1 == pytest.approx(state.energy, rel=1e-12)
    assert e2 == pytest.approx(e1, rel=1e-9)


def test_unknown_flavor(pair_state):
    m, state = pair_state
    with pytest.raises(ValueError):
        energy_density(state, m, "E3")


def test_relabelling_permutes_site_energies(pair, grid, opts, pair_state):
    m, state = pair_state
    base = site_energies(state, m, pair, build_partition(pair, grid)).energies

    swapped = pair.permuted([1, 0])
    m2 = assemble_density(swapped, grid)
    other = site_energies(
        solve_ground_state(m2, opts), m2, swapped, build_partition(swapped, grid)
    ).energies
    assert other == [base[1], base[0]]


@pytest.mark.parametrize("flavor", ["E1", "E2"])
def test_site_forces_sum_to_total_force(pair, grid, pair_state, flavor):
    m, state = pair_state
    V = [1.0, 0.0, 0.0]
    m_dot = density_derivative(pair, grid, 0, V)
    lin = LinearisedSolver(state).solve(m_dot)

    row = site_forces(state, m, pair, build_partition(pair, grid), 0, V, flavor, lin=lin)
    assert row.distances[0] == 0.0
    assert row.total == pytest.approx(total_force(state, m_dot), rel=1e-6)
    assert [r[4] for r in row.rows()] == ["linearised", "linearised"]


def test_linear_response_matches_central_differences(pair, grid, opts, pair_state):
    m, state = pair_state
    partition = build_partition(pair, grid)
    V = [0.0, 1.0, 0.0]

    fd_step = 1e-2

    lin = site_forces(state, m, pair, partition, 1, V)
    fd = site_forces(
        state, m, pair, partition, 1, V, method="central-difference", opts=opts, fd_step=fd_step
    )
    np.testing.assert_allclose(lin.entries, fd.entries, rtol=0, atol=max(1e-6, 10 * fd_step ** 2))


def test_invariance_suite(pair, grid):
    report = invariance_suite(pair, grid, SolverOptions(tol=1e-10), tol=1e-8)
    assert report.permutation == 0
    assert report.passed


@pytest.mark.parametrize("k, V", [(1, [0.0, 1.0, 0.0]), (0, [1.0, 0.0, 0.0]), (1, [0.6, 0.0, 0.8])])
def test_partition_derivative_matches_rebuilt_partitions(pair, grid, k, V):
    h = 1e-4
    forward = build_partition(perturb(pair, k, V, h), grid).weights
    backward = build_partition(perturb(pair, k, V, -h), grid).weights
    expected = (forward - backward) / (2 * h)

    np.testing.assert_allclose(build_partition(pair, grid).derivative(k, V), expected, atol=1e-6)


def test_site_forces_sum_alike_for_both_flavors(pair, grid, pair_state):
    m, state = pair_state
    V = [0.0, 0.0, 1.0]
    m_dot = density_derivative(pair, grid, 1, V)
    lin = LinearisedSolver(state).solve(m_dot)
    partition = build_partition(pair, grid)

    e1 = site_forces(state, m, pair, partition, 1, V, "E1", lin=lin).total
    e2 = site_forces(state, m, pair, partition, 1, V, "E2", lin=lin).total
    assert e2 == pytest.approx(e1, rel=1e-6)
    assert e1 == pytest.approx(total_force(state, m_dot), rel=1e-6)


def test_perfect_lattice_sites_are_equal(grid, opts):
    config = simple_cubic(8.0, 2, shape=NucleusShape(1.5), background=0.05)
    m = assemble_density(config, grid)
    state = solve_ground_state(m, opts)

    energies = site_energies(state, m, config, build_partition(config, grid)).energies
    assert len(energies) == 8
    for e in energies:
        assert e == pytest.approx(energies[0], rel=1e-8)


@pytest.mark.parametrize("flavor", ["E1", "E2"])
def test_mirror_dimer_self_forces_are_opposite(grid, shape, opts, flavor):
    dimer = NuclearConfig([[3.0, 4.0, 4.0], [5.0, 4.0, 4.0]], 8.0, shape, 0.05)
    m = assemble_density(dimer, grid)
    state = solve_ground_state(m, opts)
    partition = build_partition(dimer, grid)
    V = [1.0, 0.0, 0.0]

    first = site_forces(state, m, dimer, partition, 0, V, flavor).entries[0]
    second = site_forces(state, m, dimer, partition, 1, V, flavor).entries[1]
    assert first != 0.0
    assert first == pytest.approx(-second, rel=1e-6, abs=1e-9)
