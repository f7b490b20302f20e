import numpy as np
import pytest

from tfwlab.common import MaxIterExceeded
from tfwlab.grid import ScalarField
from tfwlab.groundstate import (
    EPS,
    GroundState,
    SolverOptions,
    bounds_diagnostic,
    residuals,
    solve_ground_state,
    tfw_energy,
)
from tfwlab.nuclei import NucleusShape, assemble_density, simple_cubic


def test_jellium_is_uniform(grid):
    m0 = 0.7
    state = solve_ground_state(ScalarField(grid, m0))

    np.testing.assert_allclose(state.u.values, np.sqrt(m0), rtol=1e-14)
    np.testing.assert_allclose(state.phi.values, 0.0, atol=1e-12)
    assert state.theta == pytest.approx((5 / 3) * m0 ** (2 / 3), rel=1e-12)
    assert state.iterations == 0


def test_zero_density_gives_zero_state(grid):
    state = solve_ground_state(ScalarField.zeros(grid))
    assert state.u.sup() == 0.0
    assert state.energy == 0.0


def test_negative_density_rejected(grid):
    with pytest.raises(ValueError):
        solve_ground_state(ScalarField(grid, -1.0))


def test_converged_state(pair_state, opts):
    m, state = pair_state

    assert state.converged
    assert state.residual_u <= opts.tol
    assert state.u.min() >= 0
    assert (state.u * state.u).integrate() == pytest.approx(m.integrate(), rel=1e-12)
    assert abs(state.phi.mean()) < 1e-12

    res_u, res_phi = residuals(state, m)
    assert res_u == pytest.approx(state.residual_u, rel=1e-6, abs=1e-12)
    assert res_phi < 1e-8


def test_energy_trace_does_not_increase(pair_state):
    _, state = pair_state
    trace = state.energy_trace
    assert len(trace) == state.iterations + 1
    for a, b in zip(trace, trace[1:]):
        assert b <= a + 64 * EPS * abs(a)


def test_energy_forms_agree(pair_state):
    m, state = pair_state
    charge = tfw_energy(state.u, m, "charge")
    assert charge == pytest.approx(state.energy, rel=1e-14)
    assert tfw_energy(state.u, m, "field") == pytest.approx(charge, rel=1e-12)


def test_relabelling_gives_identical_state(pair, grid, opts, pair_state):
    _, state = pair_state
    swapped = solve_ground_state(assemble_density(pair.permuted([1, 0]), grid), opts)
    assert np.array_equal(state.u.values, swapped.u.values)
    assert state.theta == swapped.theta


def test_random_start_reaches_same_state(pair, grid, opts, pair_state):
    m, state = pair_state
    other = solve_ground_state(m, opts.replace(init="random", seed=3))
    np.testing.assert_allclose(other.u.values, state.u.values, atol=1e-6)
    assert other.energy == pytest.approx(state.energy, rel=1e-10)


def test_warm_start(pair_state, opts):
    m, state = pair_state
    again = solve_ground_state(m, opts.warm(state.u))
    assert again.iterations <= 5
    assert again.energy == pytest.approx(state.energy, rel=1e-12)


def test_iteration_cap_attaches_best(pair, grid):
    m = assemble_density(pair, grid)
    with pytest.raises(MaxIterExceeded) as info:
        solve_ground_state(m, SolverOptions(max_iter=1))

    best = info.value.best
    assert best is not None
    assert not best.converged
    assert best.residual_u > 1e-9


def test_regauge_keeps_total_potential(pair_state):
    _, state = pair_state
    shifted = state.regauge(0.3)
    np.testing.assert_allclose(
        shifted.total_potential.values, state.total_potential.values, atol=1e-14
    )


def test_bounds_diagnostic(pair_state):
    _, state = pair_state
    bounds = bounds_diagnostic(state)
    assert 0 <= bounds.u_min <= bounds.u_max
    assert bounds.phi_min < 0 < bounds.phi_max
    assert bounds.solovej_C >= 0


@pytest.mark.parametrize(
    "params",
    [
        {"tol": 0.0},
        {"max_iter": 0},
        {"step_size": 3.0},
        {"init": "supplied"},
        {"init": "guess"},
        {"precond_shift": -1.0},
    ],
)
def test_solver_options_validation(params):
    with pytest.raises(ValueError):
        SolverOptions(**params)


@pytest.mark.parametrize("form", ["charge", "field"])
def test_homogeneous_energy(grid, form):
    m0 = 0.7
    u = ScalarField(grid, np.sqrt(m0))
    energy = tfw_energy(u, ScalarField(grid, m0), form)
    assert energy == pytest.approx(m0 ** (5 / 3) * grid.L ** 3, rel=1e-12)


def test_bounds_diagnostic_on_jellium(grid):
    bounds = bounds_diagnostic(solve_ground_state(ScalarField(grid, 1.0)))
    assert bounds.u_min == pytest.approx(1.0, rel=1e-14)
    assert bounds.u_max == pytest.approx(1.0, rel=1e-14)
    assert bounds.solovej_C == 0.0


def test_residual_grows_linearly_off_the_ground_state(grid):
    m = ScalarField(grid, 1.0)
    state = solve_ground_state(m)
    q = 2 * np.pi / grid.L
    xi = ScalarField.from_function(grid, lambda x, y, z: np.cos(q * x) + 0 * y + 0 * z)

    def residual_at(eps):
        moved = GroundState(state.u + eps * xi, state.phi, state.theta, 0.0, 0.0, 0.0, 0)
        return residuals(moved, m)[0]

    small, large = residual_at(1e-4), residual_at(2e-4)
    assert small > 0
    assert large / small == pytest.approx(2.0, rel=1e-3)


def test_initialisations_agree_on_a_lattice(grid, opts):
    config = simple_cubic(8.0, 2, shape=NucleusShape(1.5), background=0.05)
    m = assemble_density(config, grid)
    uniform = solve_ground_state(m, opts)
    random = solve_ground_state(m, opts.replace(init="random", seed=11))
    assert (uniform.u - random.u).sup() <= 1e-6
