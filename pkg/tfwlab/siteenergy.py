from __future__ import annotations
from typing import Dict, List, Optional, Sequence
import logging
import math
import numpy as np
from scipy.special import softmax

from .grid import Grid, Point, ScalarField, min_distance
from .groundstate import GroundState, SolverOptions, signed_power, solve_ground_state, tfw_energy
from .nuclei import (
    NuclearConfig,
    assemble_density,
    density_derivative,
    perturb,
    require_nuclei,
)
from .response import LinearisedSolution, solve_linearised

logger = logging.getLogger(__name__)

FLAVORS = ("E1", "E2")
METHODS = ("linearised", "central-difference")
FORCE_FLOOR = 1e-14


class Partition:
    """Gaussian partition of unity phi_j = w(x - Y_j) / sum_j' w(x - Y_j').

    Attributes:
        config (NuclearConfig): nuclei the partition is built on.
        grid (Grid): grid of the weights.
        gamma_tilde (float): kernel exponent of w(x) = exp(-gamma_tilde |x|^2).
        weights (numpy.ndarray): (N, n, n, n) weights in config order.

    """

    __slots__ = ["config", "grid", "gamma_tilde", "weights"]

    def __init__(self, config: NuclearConfig, grid: Grid, gamma_tilde: float = 0.5) -> None:
        require_nuclei(config)
        if not gamma_tilde > 0:
            raise ValueError("gamma_tilde needs to be nonzero and positive!")

        # Normalise in canonical order so relabelled configs give identical bits.
        order = config.canonical_order()
        logits = np.stack([-gamma_tilde * grid.distances(config.coords[j]) ** 2 for j in order])
        weights = np.empty_like(logits)
        weights[order] = softmax(logits, axis=0)
        weights.setflags(write=False)

        self.config, self.grid = config, grid
        self.gamma_tilde, self.weights = float(gamma_tilde), weights

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, j: int) -> ScalarField:
        return ScalarField(self.grid, self.weights[j])

    def derivative(self, k: int, V: Point) -> np.ndarray:
        """d phi_j / d Y_k . V for every j, shape (N, n, n, n).

        On the minimum-image cut plane |x_i - Y_k,i| = L/2 the kernel has a kink
        and the symmetric derivative along axis i is zero.
        """
        half, atol = self.grid.L / 2, 1e-12 * self.grid.L
        disp = [
            np.where(np.abs(np.abs(d) - half) <= atol, 0.0, d)
            for d in self.grid.displacement(self.config.coords[k])
        ]
        drift = 2 * self.gamma_tilde * sum(d * v for d, v in zip(disp, np.asarray(V, dtype=float)))
        delta = np.zeros((len(self), 1, 1, 1))
        delta[k] = 1.0
        return self.weights * (delta - self.weights[k]) * drift


def build_partition(config: NuclearConfig, grid: Grid, gamma_tilde: float = 0.5) -> Partition:
    return Partition(config, grid, gamma_tilde)


def _check_flavor(flavor: str) -> None:
    if flavor not in FLAVORS:
        raise ValueError(f"flavor must be one of {', '.join(FLAVORS)}!")


def energy_density(state: GroundState, m: ScalarField, flavor: str = "E1") -> ScalarField:
    """Local TFW energy density in the zero-mean potential gauge.

    E1 = |grad u|^2 + u^(10/3) + (1/2) phi (m - u^2)
    E2 = |grad u|^2 + u^(10/3) + (1/8 pi) |grad phi|^2
    """
    _check_flavor(flavor)
    grid, u, phi = state.grid, state.u.values, state.phi.values

    local = sum(c * c for c in grid.gradient_array(u)) + np.abs(u) ** (10 / 3)
    if flavor == "E1":
        local += 0.5 * phi * (m.values - u * u)
    else:
        local += sum(c * c for c in grid.gradient_array(phi)) / (8 * np.pi)

    return ScalarField(grid, local)


class SiteEnergyReport:
    """Site energies E_j = int E(x) phi_j(x) dx.

    Attributes:
        flavor (str): energy density used, "E1" or "E2".
        energies (List[float]): E_j in config order.
        coords (numpy.ndarray): positions of the nuclei.
        total (float): sum of the E_j.
        reference (float): total energy of the state, with the Coulomb term in
            the form matching the flavor.

    """

    __slots__ = ["flavor", "energies", "coords", "total", "reference"]

    def __init__(
        self,
        flavor: str,
        energies: List[float],
        coords: np.ndarray,
        total: float,
        reference: float,
    ) -> None:
        self.flavor, self.energies, self.coords = flavor, energies, coords
        self.total, self.reference = total, reference

    def as_dict(self) -> Dict:
        return {
            "flavor": self.flavor,
            "energies": self.energies,
            "total": self.total,
            "reference": self.reference,
            "relative_gap": abs(self.total - self.reference) / max(abs(self.reference), 1e-300),
            "gauge": "mean(phi) = 0",
        }

    def rows(self) -> List[List]:
        return [[j, *self.coords[j].tolist(), e] for j, e in enumerate(self.energies)]


def _weighted_integrals(grid: Grid, density: np.ndarray, weights: np.ndarray) -> List[float]:
    return [math.fsum((density * w).ravel().tolist()) * grid.dv for w in weights]


def site_energies(
    state: GroundState,
    m: ScalarField,
    config: NuclearConfig,
    partition: Partition,
    flavor: str = "E1",
) -> SiteEnergyReport:
    if partition.grid != state.grid:
        raise ValueError("Partition and state live on different grids!")

    if len(partition) != len(config):
        raise ValueError("Partition was built for a different configuration!")

    density = energy_density(state, m, flavor).values
    energies = _weighted_integrals(state.grid, density, partition.weights)
    return SiteEnergyReport(
        flavor,
        energies,
        np.array(config.coords),
        math.fsum(energies),
        tfw_energy(state.u, m, "charge" if flavor == "E1" else "field"),
    )


class ForceMatrixRow:
    """Derivatives dE_j/dY_k . V of every site energy for one moved nucleus.

    Attributes:
        k (int): moved nucleus.
        V (numpy.ndarray): direction of motion.
        entries (List[float]): one derivative per site, tiny values set to 0.
        distances (List[float]): minimum-image |Y_j - Y_k|.
        method (str): "linearised" or "central-difference".
        flavor (str): energy density used.

    """

    __slots__ = ["k", "V", "entries", "distances", "method", "flavor"]

    def __init__(
        self,
        k: int,
        V: np.ndarray,
        entries: List[float],
        distances: List[float],
        method: str,
        flavor: str,
    ) -> None:
        self.k, self.V, self.entries, self.distances = k, V, entries, distances
        self.method, self.flavor = method, flavor

    @property
    def total(self) -> float:
        return math.fsum(self.entries)

    def rows(self) -> List[List]:
        return [
            [j, self.k, d, e, self.method]
            for j, (d, e) in enumerate(zip(self.distances, self.entries))
        ]

    def as_dict(self) -> Dict:
        return {
            "k": self.k,
            "V": self.V.tolist(),
            "entries": self.entries,
            "distances": self.distances,
            "method": self.method,
            "flavor": self.flavor,
            "total": self.total,
        }


def energy_density_derivative(
    state: GroundState, m: ScalarField, lin: LinearisedSolution, flavor: str = "E1"
) -> ScalarField:
    """Derivative of energy_density along the perturbation that produced lin."""
    _check_flavor(flavor)
    grid, u, phi = state.grid, state.u.values, state.phi.values
    u_dot, phi_dot, m_dot = lin.u_dot.values, lin.phi_dot.values, lin.m_dot.values

    d_local = 2 * sum(a * b for a, b in zip(grid.gradient_array(u), grid.gradient_array(u_dot)))
    d_local += (10 / 3) * signed_power(u, 7 / 3) * u_dot
    if flavor == "E1":
        d_local += 0.5 * phi_dot * (m.values - u * u) + 0.5 * phi * (m_dot - 2 * u * u_dot)
    else:
        d_local += sum(
            a * b for a, b in zip(grid.gradient_array(phi_dot), grid.gradient_array(phi))
        ) / (4 * np.pi)

    return ScalarField(grid, d_local)


def total_force(state: GroundState, m_dot: ScalarField) -> float:
    """dE/dY_k . V = int phi m_dot."""
    return math.fsum((state.phi.values * m_dot.values).ravel().tolist()) * state.grid.dv


def _clean(entries: Sequence[float]) -> List[float]:
    return [0.0 if abs(e) < FORCE_FLOOR else float(e) for e in entries]


def site_forces(
    state: GroundState,
    m: ScalarField,
    config: NuclearConfig,
    partition: Partition,
    k: int,
    V: Point,
    flavor: str = "E1",
    method: str = "linearised",
    lin: Optional[LinearisedSolution] = None,
    opts: Optional[SolverOptions] = None,
    fd_step: float = 1e-2,
) -> ForceMatrixRow:
    """Derivatives of all site energies as nucleus k moves along V.

    Args:
        state (GroundState): converged state of config.
        m (ScalarField): density of config.
        config (NuclearConfig): the nuclei.
        partition (Partition): partition built on config.
        k (int): moved nucleus.
        V (Point): direction of motion.
        flavor (str): "E1" or "E2".
        method (str): "linearised" uses the linear response of state,
            "central-difference" re-solves at Y_k +- fd_step V.
        lin (LinearisedSolution): precomputed response to the motion, optional.
        opts (SolverOptions): options for the central-difference solves.
        fd_step (float): central-difference step.

    Returns:
        ForceMatrixRow: the row of dE_j/dY_k . V.

    """
    require_nuclei(config)
    _check_flavor(flavor)
    if method not in METHODS:
        raise ValueError(f"method must be one of {', '.join(METHODS)}!")

    grid, V = state.grid, np.asarray(V, dtype=float)
    distances = [min_distance(config.coords[k], y, config.L) for y in config.coords]

    if method == "linearised":
        if lin is None:
            lin = solve_linearised(state, density_derivative(config, grid, k, V))
        d_density = energy_density_derivative(state, m, lin, flavor).values
        density = energy_density(state, m, flavor).values
        entries = [
            a + b
            for a, b in zip(
                _weighted_integrals(grid, d_density, partition.weights),
                _weighted_integrals(grid, density, partition.derivative(k, V)),
            )
        ]
    else:
        opts = (SolverOptions() if opts is None else opts).warm(state.u)
        sides = []
        for sign in (1, -1):
            moved = perturb(config, k, V, sign * fd_step)
            m_moved = assemble_density(moved, grid)
            sides.append(
                site_energies(
                    solve_ground_state(m_moved, opts),
                    m_moved,
                    moved,
                    build_partition(moved, grid, partition.gamma_tilde),
                    flavor,
                ).energies
            )
        entries = [(p - q) / (2 * fd_step) for p, q in zip(*sides)]

    logger.debug("Site forces for k = %d (%s, %s).", k, method, flavor)
    return ForceMatrixRow(k, V, _clean(entries), distances, method, flavor)


class InvarianceReport:
    """Largest site-energy deviations under relabelling and cell symmetries."""

    __slots__ = ["permutation", "translation", "rotation", "scale", "tol"]

    def __init__(
        self, permutation: float, translation: float, rotation: float, scale: float, tol: float
    ) -> None:
        self.permutation, self.translation, self.rotation = permutation, translation, rotation
        self.scale, self.tol = scale, tol

    @property
    def passed(self) -> bool:
        return (
            self.permutation == 0
            and self.translation <= self.tol * self.scale
            and self.rotation <= self.tol * self.scale
        )

    def as_dict(self) -> Dict:
        return {
            "permutation": self.permutation,
            "translation": self.translation,
            "rotation": self.rotation,
            "scale": self.scale,
            "tol": self.tol,
            "passed": self.passed,
        }


def invariance_suite(
    config: NuclearConfig,
    grid: Grid,
    opts: Optional[SolverOptions] = None,
    gamma_tilde: float = 0.5,
    flavor: str = "E1",
    seed: int = 0,
    tol: float = 1e-8,
) -> InvarianceReport:
    """Site energies under a relabelling, a one-spacing shift and a quarter turn.

    The relabelling must reproduce the energies exactly. The shift and the
    quarter turn map the grid onto itself and must agree to tol relative to
    the largest |E_j|.
    """
    require_nuclei(config)

    def energies(cfg: NuclearConfig) -> np.ndarray:
        m = assemble_density(cfg, grid)
        state = solve_ground_state(m, opts)
        partition = build_partition(cfg, grid, gamma_tilde)
        return np.array(site_energies(state, m, cfg, partition, flavor).energies)

    base = energies(config)
    order = np.random.default_rng(seed).permutation(len(config))

    permuted = np.empty_like(base)
    permuted[order] = energies(config.permuted(order))

    report = InvarianceReport(
        float(np.max(np.abs(permuted - base))),
        float(np.max(np.abs(energies(config.translated([grid.h, 0.0, 0.0])) - base))),
        float(np.max(np.abs(energies(config.rotated()) - base))),
        float(np.max(np.abs(base))),
        tol,
    )
    logger.info(
        "Permutation: %.3e | Translation: %.3e | Rotation: %.3e |",
        report.permutation,
        report.translation,
        report.rotation,
    )
    return report
