import math

import numpy as np
import pytest

from tfwlab.common import TooFewPoints
from tfwlab.experiments import (
    ExperimentReport,
    apply_perturbation,
    decay_fit,
    defect_centre,
    deletion_radii,
    locality_experiment,
    neutrality_experiment,
    outer_envelope,
    screening_experiment,
    shell_profile,
    solve_many,
    tdl_experiment,
)
from tfwlab.grid import Grid
from tfwlab.groundstate import SolverOptions
from tfwlab.nuclei import NucleusShape, assemble_density, simple_cubic


def test_decay_fit_recovers_exponential():
    r = np.linspace(1.0, 5.0, 9)
    fit = decay_fit(r, 3.0 * np.exp(-1.7 * r))
    assert fit.gamma == pytest.approx(1.7, rel=1e-10)
    assert fit.C == pytest.approx(3.0, rel=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.passes(0.99)


def test_decay_fit_drops_floor_and_needs_points():
    r = np.arange(6.0)
    y = np.array([1.0, 0.1, 0.01, 1e-13, 1e-14, 0.0])
    with pytest.raises(TooFewPoints):
        decay_fit(r, y)


def test_decay_fit_degenerate():
    fit = decay_fit(np.arange(1.0, 6.0), np.ones(5))
    assert fit.degenerate
    assert fit.gamma == 0.0
    assert not fit.passes(0.0)


def test_report_records_failed_fit():
    report = ExperimentReport("demo", {})
    assert report.add_fit("y", np.arange(3.0), np.ones(3), 1e-12, 0.9) is None
    assert report.checks == {"y_fit": False}
    assert not report.passed


def test_shell_profile(grid):
    centre = [4.0, 4.0, 4.0]
    values = np.exp(-grid.distances(centre))
    r, y = shell_profile(values, grid, centre)
    assert r[0] == pytest.approx(0.5 * grid.h)
    assert y[0] == pytest.approx(1.0)
    assert all(a >= b for a, b in zip(y, y[1:]))


def test_apply_perturbation(pair):
    moved, centre = apply_perturbation(pair, {"kind": "displace", "index": 1, "displacement": [0.5, 0, 0]})
    np.testing.assert_allclose(centre, pair.coords[1])
    np.testing.assert_allclose(moved.coords[1], pair.coords[1] + [0.5, 0, 0])

    added, centre = apply_perturbation(pair, {"kind": "impurity", "position": [1, 1, 1], "charge": 0.2})
    assert len(added) == 3
    np.testing.assert_allclose(defect_centre(pair, added), [1, 1, 1])

    with pytest.raises(ValueError):
        apply_perturbation(pair, {"kind": "swap"})


def test_solve_many_matches_serial(pair, grid, opts):
    densities = [assemble_density(pair, grid), assemble_density(pair.permuted([1, 0]), grid)]
    serial = solve_many(densities, opts)
    pooled = solve_many(densities, opts, processes=2)
    for a, b in zip(serial, pooled):
        assert np.array_equal(a.u.values, b.u.values)


def test_locality_experiment(pair, grid, opts):
    report = locality_experiment(
        pair,
        {"kind": "displace", "index": 0, "displacement": [0.25, 0.0, 0.0]},
        grid,
        opts,
        r_min=0.5,
        r_max=3.5,
    )
    header, rows = report.curves["shell_max"]
    assert header == ["r", "w", "grad_w", "lap_w", "psi"]
    assert all(len(row) == 5 for row in rows)
    assert set(report.fields) == {"w", "psi"}
    assert all(isinstance(v, bool) for v in report.checks.values())
    assert report.as_dict()["experiment"] == "locality"


def test_locality_without_change_is_trivial(pair, grid, opts):
    report = locality_experiment(
        pair, {"kind": "displace", "index": 0, "displacement": [0.0, 0.0, 0.0]}, grid, opts
    )
    assert report.checks == {"trivial": True}
    assert report.passed


def test_tdl_experiment(grid, opts):
    config = simple_cubic(8.0, 2, shape=NucleusShape(1.5), background=0.05)
    report = tdl_experiment(config, grid, [2.0, 3.0, 4.5], 1.0, opts=opts)

    header, rows = report.curves["tdl"]
    assert header[0] == "R_n"
    assert [row[2] for row in rows] == [8, 8, 0]
    assert rows[0][3:] == rows[1][3:]
    assert rows[-1][3] == 0.0 and rows[-1][4] == 0.0


def test_tdl_rejects_bad_fill(pair, grid):
    with pytest.raises(ValueError):
        tdl_experiment(pair, grid, [2.0], 1.0, fill="glass")


def test_neutrality_experiment(pair, grid, opts):
    moved, centre = apply_perturbation(pair, {"kind": "displace", "index": 0, "displacement": [0.5, 0, 0]})
    report = neutrality_experiment(pair, moved, grid, centre=centre, opts=opts)

    assert report.checks["cell_integral"]
    assert report.extras["perturbation_charge"] > 0
    header, rows = report.curves["ball_integrals"]
    assert header == ["R", "abs_integral"]
    assert all(row[1] >= 0 for row in rows)
    assert rows[-1][0] == pytest.approx(math.sqrt(3) * grid.L / 2 + grid.h)
    assert report.checks["final_ball"]


@pytest.mark.slow
def test_screening_in_jellium():
    grid = Grid(32, 16.0)
    Z = 0.1
    report = screening_experiment(1.0, Z, grid, NucleusShape(1.0), SolverOptions(tol=1e-10))

    constants = report.extras["screening_constants"]
    assert constants["decay_rate"] == pytest.approx(1.75, rel=0.01)
    assert report.extras["induced_charge"] == pytest.approx(-Z, rel=1e-2)
    assert report.checks["decay_rate"]


@pytest.mark.slow
def test_locality_acceptance():
    grid = Grid(64, 12.8)
    config = simple_cubic(12.8, 3, shape=NucleusShape(1.0))
    report = locality_experiment(
        config, {"kind": "displace", "index": 13, "displacement": [0.3, 0.0, 0.0]}, grid,
        SolverOptions(tol=1e-10),
    )
    assert report.extras["enveloped"] == ["grad_w", "lap_w"]
    assert report.fits["w"].gamma > 0
    assert report.passed


@pytest.mark.slow
def test_tdl_acceptance():
    grid = Grid(48, 12.8)
    config = simple_cubic(12.8, 8, shape=NucleusShape(1.0))
    report = tdl_experiment(config, grid, None, 1.28, opts=SolverOptions(tol=1e-10))

    assert len(report.parameters["radii"]) == 8
    assert report.checks["monotone"]
    assert report.checks["error_u_fit"]
    assert report.checks["error_phi_fit"]
    assert report.passed


def test_decay_fit_tolerates_roundoff_noise():
    r = np.linspace(1.0, 10.0, 19)
    noise = 1e-15 * np.random.default_rng(4).uniform(-1.0, 1.0, r.size)
    fit = decay_fit(r, np.exp(-r) + noise)
    assert fit.gamma == pytest.approx(1.0, abs=1e-6)
    assert fit.C == pytest.approx(1.0, rel=1e-5)


def test_outer_envelope():
    y = np.array([5.0, 1.0, 3.0, 2.0, 2.0, 1.0])
    assert outer_envelope(y).tolist() == [True, False, True, True, True, True]


def test_outer_envelope_skips_bumps_on_a_decaying_curve():
    r = np.linspace(0.0, 6.0, 61)
    y = np.exp(-r) * (1 + 0.5 * np.cos(3 * r) ** 2)
    top = outer_envelope(y)
    assert top[0] and top[-1]
    assert np.all(np.diff(y[top]) <= 0)
    assert not np.all(top)


def test_deletion_radii_separate_distinct_shells():
    config = simple_cubic(8.0, 4, shape=NucleusShape(1.0))
    radii = deletion_radii(config, [3.0, 3.0, 3.0], 8.0)
    s2, s3 = math.sqrt(2), math.sqrt(3)
    assert radii == pytest.approx([1.0, 1 + s2, s2 + s3, s3 + 2.0])
    assert deletion_radii(config, [3.0, 3.0, 3.0], 8.0, R_min=1.0) == pytest.approx(radii[1:])


def test_tdl_default_radii_delete_fewer_nuclei_each_step(grid, opts):
    config = simple_cubic(8.0, 4, shape=NucleusShape(1.0), background=0.05)
    centre = [3.0, 3.0, 3.0]
    report = tdl_experiment(config, grid, None, 1.0, centre=centre, opts=opts)

    assert report.parameters["radii"] == deletion_radii(config, centre, grid.L, 1.0)
    _, rows = report.curves["tdl"]
    assert [row[2] for row in rows] == [57, 45, 37]
