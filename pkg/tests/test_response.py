import math

import numpy as np
import pytest

from tfwlab.common import NonNeutralSource
from tfwlab.grid import ScalarField
from tfwlab.groundstate import solve_ground_state
from tfwlab.nuclei import assemble_density, density_derivative, perturb
from tfwlab.response import (
    LinearisedSolver,
    critical_coefficient,
    fd_consistency,
    homogeneous_reference,
    linearised_symbol,
    operator_form,
    screening_constants,
    solve_linearised,
)


def test_homogeneous_reference():
    u0, phi0, theta0 = homogeneous_reference(8.0)
    assert u0 == pytest.approx(math.sqrt(8.0))
    assert phi0 == 0.0
    assert theta0 == pytest.approx((5 / 3) * 4.0)


@pytest.mark.parametrize("C_W", [0.01, 1.0, 100.0])
def test_screening_constants(C_W):
    sc = screening_constants(1.0, C_W)
    assert max(sc.root_residuals()) <= 1e-10 * sc.b
    assert sc.alpha == pytest.approx(0.5 * math.sqrt(sc.a + 2 * math.sqrt(sc.b)), rel=1e-12)
    assert sc.decay_rate > 0


def test_critical_coefficient_separates_regimes():
    C = critical_coefficient(1.0)
    below, above = screening_constants(1.0, 0.5 * C), screening_constants(1.0, 2 * C)

    assert not below.oscillatory
    assert below.beta.imag == 0
    assert above.oscillatory
    assert above.beta.real == 0
    assert above.decay_rate == pytest.approx(above.alpha)


def test_linearised_symbol_solves_uniform_equations():
    m0, k2 = 1.0, np.array([0.5, 1.0, 4.0])
    u_hat, phi_hat = linearised_symbol(m0, k2)
    a = (20 / 9)
    np.testing.assert_allclose((k2 + a) * u_hat, phi_hat, rtol=1e-12)
    np.testing.assert_allclose(k2 * phi_hat, 4 * np.pi * (1 - 2 * u_hat), rtol=1e-12)


def test_linear_response_of_jellium(grid):
    m0, eps = 1.0, 1e-3
    state = solve_ground_state(ScalarField(grid, m0))
    q = 2 * np.pi / grid.L
    wave = ScalarField.from_function(grid, lambda x, y, z: np.cos(q * x) + 0 * y + 0 * z)

    lin = solve_linearised(state, eps * wave)
    u_hat, phi_hat = linearised_symbol(m0, q ** 2, eps)

    np.testing.assert_allclose(lin.u_dot.values, u_hat * wave.values, atol=1e-9)
    np.testing.assert_allclose(lin.phi_dot.values, phi_hat * wave.values, atol=1e-8)
    assert abs(lin.theta_dot) < 1e-10


def test_non_neutral_source_rejected(grid):
    state = solve_ground_state(ScalarField(grid, 1.0))
    with pytest.raises(NonNeutralSource):
        solve_linearised(state, ScalarField(grid, 1e-3))


def test_zero_state_rejected(grid):
    with pytest.raises(ValueError):
        LinearisedSolver(solve_ground_state(ScalarField.zeros(grid)))


def test_response_conserves_charge(pair, grid, pair_state):
    _, state = pair_state
    m_dot = density_derivative(pair, grid, 0, [1.0, 0.0, 0.0])
    lin = LinearisedSolver(state).solve(m_dot)

    assert abs((state.u * lin.u_dot).integrate()) < 1e-9
    assert lin.residual < 1e-8
    assert operator_form(state, lin.u_dot) >= -1e-8 * (lin.u_dot * lin.u_dot).integrate()


def test_operator_form_positive_on_jellium(grid):
    state = solve_ground_state(ScalarField(grid, 1.0))
    f = np.random.default_rng(0).standard_normal(grid.shape)
    f = ScalarField(grid, f - f.mean())
    assert operator_form(state, f) > 0


def test_difference_quotients_converge(pair, grid, opts, pair_state):
    _, state = pair_state
    V = [1.0, 0.0, 0.0]
    lin = LinearisedSolver(state).solve(density_derivative(pair, grid, 0, V))

    rows = fd_consistency(
        lambda h: assemble_density(perturb(pair, 0, V, h), grid),
        state,
        lin,
        [0.2, 0.1, 0.05, 0.025],
        opts,
    )
    assert rows[0].ratio is None
    assert all(a.error > b.error for a, b in zip(rows, rows[1:]))
    assert all(0.35 <= row.ratio <= 0.65 for row in rows[1:])
