import math

import numpy as np
import pytest
from scipy.integrate import simpson

from tfwlab.common import EmptyConfiguration, ShapeTooWide
from tfwlab.grid import Grid
from tfwlab.nuclei import (
    NuclearConfig,
    NucleusShape,
    admissibility,
    assemble_density,
    config_from_dict,
    config_to_dict,
    density_derivative,
    impurity,
    perturb,
    require_nuclei,
    simple_cubic,
)


def test_profile_has_unit_charge():
    shape = NucleusShape(1.0)
    r = np.linspace(0, 1, 20001)
    integral = simpson(4 * np.pi * r ** 2 * shape.profile(r), x=r)
    assert integral == pytest.approx(1.0, rel=1e-6)


def test_shape_too_wide():
    with pytest.raises(ShapeTooWide):
        assemble_density(NuclearConfig([[1, 1, 1]], 8.0, NucleusShape(4.0)), Grid(16, 8.0))


def test_density_carries_total_charge(pair, grid):
    m = assemble_density(pair, grid)
    assert m.integrate() == pytest.approx(pair.total_charge, rel=1e-12)
    assert m.min() >= 0


def test_relabelling_gives_identical_density(pair, grid):
    swapped = pair.permuted([1, 0])
    assert np.array_equal(assemble_density(pair, grid).values, assemble_density(swapped, grid).values)


def test_coordinates_reduced_into_cell():
    config = NuclearConfig([[-1.0, 9.0, 8.0]], 8.0)
    np.testing.assert_allclose(config.coords, [[7.0, 1.0, 0.0]])
    assert not config.coords.flags.writeable


def test_density_derivative_matches_difference_quotient(pair, grid):
    V = [1.0, 0.5, 0.0]
    m_dot = density_derivative(pair, grid, 0, V)
    h = 1e-5
    plus = assemble_density(perturb(pair, 0, V, h), grid).values
    minus = assemble_density(perturb(pair, 0, V, -h), grid).values
    quotient = (plus - minus) / (2 * h)

    assert abs(m_dot.integrate()) < 1e-10
    np.testing.assert_allclose(m_dot.values, quotient, atol=1e-5 * m_dot.sup())


def test_perturb_rejects_large_steps(pair):
    with pytest.raises(ValueError):
        perturb(pair, 0, [1.0, 0.0, 0.0], 4.0)


def test_simple_cubic_sites():
    config = simple_cubic(8.0, 2)
    assert len(config) == 8
    assert set(np.unique(config.coords)) == {2.0, 6.0}


def test_impurity_adds_charge(pair):
    config = impurity(pair, [4.0, 4.0, 4.0], 0.1)
    assert len(config) == 3
    assert config.charges[-1] == pytest.approx(0.1)
    assert config.total_charge == pytest.approx(pair.total_charge + 0.1)


def test_require_nuclei():
    with pytest.raises(EmptyConfiguration):
        require_nuclei(NuclearConfig([], 8.0, background=1.0))


def test_admissibility_floor_grows_with_radius(pair, grid):
    report = admissibility(pair, grid, sample_centers=8, radii=[1.0, 2.0, 4.0])
    assert report.M_est > 0
    assert all(a <= b for a, b in zip(report.omega, report.omega[1:]))
    assert report.as_dict()["omega_table"][0][0] == 1.0


def test_flat_format(pair):
    data = config_to_dict(pair, n=16)
    assert data["n"] == 16
    assert "charges" not in data

    config = config_from_dict(data)
    np.testing.assert_array_equal(config.coords, pair.coords)
    assert config.shape == pair.shape
    assert config.background == pair.background


def test_admissibility_on_uniform_background():
    grid = Grid(32, 8.0)
    background = NuclearConfig([], 8.0, background=1.0)
    report = admissibility(background, grid, sample_centers=4, radii=[1.5, 2.0, 3.0])
    for R, omega in report.as_dict()["omega_table"]:
        assert omega == pytest.approx(4 / 3 * math.pi * R ** 3, rel=2e-2)
