from __future__ import annotations
from typing import Dict, Iterator, List, Optional, Sequence, Tuple
import logging
import math
import numpy as np
from scipy.integrate import quad

from .common import EmptyConfiguration, ShapeTooWide
from .grid import Grid, Point, ScalarField, ball_weights

logger = logging.getLogger(__name__)


def _bump(s: np.ndarray) -> np.ndarray:
    """exp(-1 / (1 - s^2)) inside the unit ball, zero outside."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(-1 / (1 - s[inside] ** 2))
    return out


class NucleusShape:
    """Smooth radial bump of unit charge supported in the ball of radius R0.

    Attributes:
        R0 (float): support radius.
        norm (float): constant making the continuous profile integrate to one.

    """

    __slots__ = ["R0", "norm"]

    def __init__(self, R0: float = 1.0) -> None:
        if not R0 > 0:
            raise ValueError("R0 needs to be nonzero and positive!")

        self.R0 = float(R0)
        mass, _ = quad(lambda r: 4 * np.pi * r ** 2 * float(_bump(r / self.R0)), 0, self.R0)
        self.norm = 1 / mass

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NucleusShape):
            return NotImplemented
        return self.R0 == other.R0

    def __hash__(self) -> int:
        return hash(self.R0)

    def profile(self, r: np.ndarray) -> np.ndarray:
        return self.norm * _bump(np.asarray(r) / self.R0)

    def raw(self, r: np.ndarray) -> np.ndarray:
        return _bump(np.asarray(r) / self.R0)

    def raw_derivative(self, r: np.ndarray) -> np.ndarray:
        """Radial derivative of the unnormalised bump."""
        s = np.asarray(r, dtype=float) / self.R0
        out = np.zeros_like(s)
        inside = s < 1
        si = s[inside]
        out[inside] = np.exp(-1 / (1 - si ** 2)) * (-2 * si / (1 - si ** 2) ** 2) / self.R0
        return out

    def check_fits(self, grid: Grid) -> None:
        if self.R0 >= grid.L / 2:
            raise ShapeTooWide(
                f"R0 = {self.R0} does not fit in a cell of length {grid.L}, needs R0 < L/2."
            )

    def on_grid(self, grid: Grid, centre: Point) -> Tuple[np.ndarray, float]:
        """Unnormalised samples around centre and their quadrature."""
        raw = self.raw(grid.distances(centre))
        mass = math.fsum(raw.ravel().tolist()) * grid.dv
        if mass == 0:
            raise ValueError(f"R0 = {self.R0} is not resolved by spacing h = {grid.h}!")
        return raw, mass


class NuclearConfig:
    """Smeared nuclei in the periodic cell, with an optional uniform background.

    Attributes:
        coords (numpy.ndarray): (N, 3) positions reduced into [0, L)^3.
        L (float): cell length.
        shape (NucleusShape): common nucleus profile.
        background (float): uniform background density m0 >= 0.
        charges (numpy.ndarray): per-nucleus charges, one for ordinary nuclei.

    """

    __slots__ = ["coords", "L", "shape", "background", "charges"]

    def __init__(
        self,
        coords: Sequence[Point],
        L: float,
        shape: Optional[NucleusShape] = None,
        background: float = 0.0,
        charges: Optional[Sequence[float]] = None,
    ) -> None:
        if not L > 0:
            raise ValueError("L needs to be nonzero and positive!")

        if background < 0:
            raise ValueError("background must be non-negative!")

        coords = np.array(coords, dtype=float).reshape(-1, 3) % L
        coords[coords >= L] = 0.0  # -tiny % L rounds up to L
        coords.setflags(write=False)

        if charges is None:
            charges = np.ones(len(coords))
        charges = np.array(charges, dtype=float).reshape(-1)
        if len(charges) != len(coords):
            raise ValueError("Need one charge per nucleus!")
        if np.any(charges < 0):
            raise ValueError("Nuclear charges must be non-negative!")
        charges.setflags(write=False)

        self.coords, self.L = coords, float(L)
        self.shape = NucleusShape() if shape is None else shape
        self.background, self.charges = float(background), charges

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.coords)

    def __str__(self) -> str:
        return (
            f"{len(self)} nuclei, L = {self.L}, R0 = {self.shape.R0}, "
            + f"background = {self.background}"
        )

    @property
    def total_charge(self) -> float:
        return float(np.sum(self.charges)) + self.background * self.L ** 3

    def canonical_order(self) -> np.ndarray:
        """Indices sorting nuclei lexicographically by (x, y, z, charge)."""
        c = self.coords
        return np.lexsort((self.charges, c[:, 2], c[:, 1], c[:, 0]))

    def with_coords(self, coords: Sequence[Point]) -> NuclearConfig:
        return NuclearConfig(coords, self.L, self.shape, self.background, self.charges)

    def translated(self, t: Point) -> NuclearConfig:
        return self.with_coords(self.coords + np.asarray(t, dtype=float))

    def permuted(self, order: Sequence[int]) -> NuclearConfig:
        order = np.asarray(order)
        return NuclearConfig(
            self.coords[order], self.L, self.shape, self.background, self.charges[order]
        )

    def rotated(self) -> NuclearConfig:
        """Quarter turn about the z axis, (x, y, z) -> (-y mod L, x, z)."""
        c = self.coords
        return self.with_coords(np.column_stack([-c[:, 1], c[:, 0], c[:, 2]]))

    def subset(self, keep: np.ndarray) -> NuclearConfig:
        """The nuclei where keep is True, with the same background."""
        keep = np.asarray(keep, dtype=bool)
        return NuclearConfig(
            self.coords[keep], self.L, self.shape, self.background, self.charges[keep]
        )


class AdmissibilityReport:
    """Empirical surrogates for the uniform L2 bound and the local charge floor.

    Attributes:
        M_est (float): largest L2 norm of m over unit sample balls.
        radii (List[float]): ball radii, increasing.
        omega (List[float]): smallest charge in a ball of each radius.
        sample_centers (int): number of random ball centres.
        seed (int): seed of the centre sampler.

    """

    __slots__ = ["M_est", "radii", "omega", "sample_centers", "seed"]

    def __init__(
        self,
        M_est: float,
        radii: List[float],
        omega: List[float],
        sample_centers: int,
        seed: int,
    ) -> None:
        self.M_est, self.radii, self.omega = M_est, radii, omega
        self.sample_centers, self.seed = sample_centers, seed

    def as_dict(self) -> Dict:
        return {
            "M_est": self.M_est,
            "omega_table": [[r, w] for r, w in zip(self.radii, self.omega)],
            "sample_centers": self.sample_centers,
            "seed": self.seed,
        }


def _bump_field(config: NuclearConfig, grid: Grid, j: int) -> np.ndarray:
    raw, mass = config.shape.on_grid(grid, config.coords[j])
    return config.charges[j] * raw / mass


def _check_grid(config: NuclearConfig, grid: Grid) -> None:
    if config.L != grid.L:
        raise ValueError(f"Config cell L = {config.L} does not match grid L = {grid.L}!")
    config.shape.check_fits(grid)


def assemble_density(config: NuclearConfig, grid: Grid) -> ScalarField:
    """Sums the renormalised nucleus bumps and the background on the grid.

    Each bump is divided by its own quadrature so every nucleus carries its
    charge exactly. Nuclei are added in canonical order, so relabelling the
    configuration gives a bit-identical density.

    Args:
        config (NuclearConfig): the nuclei.
        grid (Grid): target grid, with the same cell length.

    Returns:
        ScalarField: the nuclear density m.

    Raises:
        ShapeTooWide: if R0 >= L / 2.

    """
    _check_grid(config, grid)
    m = np.full(grid.shape, config.background)
    for j in config.canonical_order():
        m += _bump_field(config, grid, j)

    logger.debug("Assembled density for %s on grid %s.", config, grid)
    return ScalarField(grid, m)


def density_derivative(
    config: NuclearConfig, grid: Grid, k: int, V: Point
) -> ScalarField:
    """Exact derivative of assemble_density with respect to Y_k along V.

    Includes the derivative of the per-nucleus quadrature, so the result
    integrates to zero up to roundoff.
    """
    _check_grid(config, grid)
    if not 0 <= k < len(config):
        raise ValueError(f"k = {k} is not a nucleus index!")

    V = np.asarray(V, dtype=float)
    shape, centre = config.shape, config.coords[k]
    disp = grid.displacement(centre)
    r = np.sqrt(sum(d ** 2 for d in disp))

    raw, mass = shape.on_grid(grid, centre)
    radial = np.zeros_like(r)
    nonzero = r > 0
    radial[nonzero] = shape.raw_derivative(r[nonzero]) / r[nonzero]

    # d/dY of raw(x - Y) is minus its spatial gradient.
    g = -radial * sum(d * v for d, v in zip(disp, V))
    dmass = math.fsum(g.ravel().tolist()) * grid.dv

    m_dot = config.charges[k] * (g - (dmass / mass) * raw) / mass
    return ScalarField(grid, m_dot)


def perturb(config: NuclearConfig, k: int, V: Point, h: float) -> NuclearConfig:
    if not 0 <= k < len(config):
        raise ValueError(f"k = {k} is not a nucleus index!")

    step = h * np.asarray(V, dtype=float)
    if np.linalg.norm(step) >= config.L / 2:
        raise ValueError("Perturbation |hV| must be smaller than L/2!")

    coords = np.array(config.coords)
    coords[k] += step
    return config.with_coords(coords)


def impurity(config: NuclearConfig, position: Point, Z: float) -> NuclearConfig:
    """Adds a smeared impurity of charge Z at position."""
    return NuclearConfig(
        np.vstack([config.coords, np.asarray(position, dtype=float).reshape(1, 3)]),
        config.L,
        config.shape,
        config.background,
        np.append(config.charges, Z),
    )


def simple_cubic(
    L: float,
    per_axis: int,
    jitter: float = 0.0,
    seed: int = 0,
    shape: Optional[NucleusShape] = None,
    background: float = 0.0,
) -> NuclearConfig:
    """Simple cubic lattice with per_axis sites per edge, centred in its cells.

    Args:
        L (float): cell length.
        per_axis (int): sites along each axis.
        jitter (float): half-width of uniform random displacements per coordinate.
        seed (int): seed for the jitter.
        shape (NucleusShape): nucleus profile.
        background (float): uniform background density.

    Returns:
        NuclearConfig: per_axis^3 nuclei in x-major order.

    """
    if per_axis < 1:
        raise ValueError("per_axis must be at least 1")

    a = L / per_axis
    idx = np.arange(per_axis)
    sites = (np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), -1).reshape(-1, 3) + 0.5) * a

    if jitter > 0:
        rng = np.random.default_rng(seed)
        sites = sites + rng.uniform(-jitter, jitter, sites.shape)

    return NuclearConfig(sites, L, shape, background)


def admissibility(
    config: NuclearConfig,
    grid: Grid,
    sample_centers: int = 64,
    radii: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> AdmissibilityReport:
    """Monte Carlo estimates of the uniform L2 bound and the ball-charge floor.

    The L2 bound uses unit balls. The charge floor for each radius is the
    smallest charge found in a ball of that radius over the sampled centres.
    """
    if radii is None:
        radii = [grid.L / 8, grid.L / 4, grid.L / 2]
    radii = sorted(float(R) for R in radii)
    if radii and (radii[0] <= 0 or radii[-1] > grid.L / 2):
        raise ValueError("Radii need to lie in (0, L/2]!")

    if sample_centers < 1:
        raise ValueError("sample_centers must be at least 1")

    m = assemble_density(config, grid).values
    centres = np.random.default_rng(seed).random((sample_centers, 3)) * grid.L

    M_est, omega = 0.0, [math.inf] * len(radii)
    for c in centres:
        M_est = max(M_est, math.sqrt(np.sum(m ** 2 * ball_weights(grid, c, 1.0)) * grid.dv))
        for i, R in enumerate(radii):
            omega[i] = min(omega[i], float(np.sum(m * ball_weights(grid, c, R))) * grid.dv)

    return AdmissibilityReport(M_est, radii, omega, sample_centers, seed)


def require_nuclei(config: NuclearConfig) -> None:
    if len(config) == 0:
        raise EmptyConfiguration("Operation needs at least one discrete nucleus.")


def config_from_dict(data: Dict) -> NuclearConfig:
    """Reads the flat nuclei format {"L", "nuclei", "R0", "background", "charges"}."""
    return NuclearConfig(
        data.get("nuclei", []),
        data["L"],
        NucleusShape(data.get("R0", 1.0)),
        data.get("background", 0.0),
        data.get("charges"),
    )


def config_to_dict(config: NuclearConfig, n: Optional[int] = None) -> Dict:
    data = {
        "L": config.L,
        "nuclei": config.coords.tolist(),
        "R0": config.shape.R0,
        "background": config.background,
    }
    if n is not None:
        data["n"] = n
    if np.any(config.charges != 1):
        data["charges"] = config.charges.tolist()
    return data
