from __future__ import annotations
from typing import Callable, Iterator, Sequence, Tuple, Union
import math
import numpy as np
from scipy import fft as sfft

from .common import NonNeutralSource

NEUTRALITY_TOL = 1e-10
NEUTRALITY_ATOL = 1e-12

Point = Union[Sequence[float], np.ndarray]


class Grid:
    """Periodic cubic grid with its spectral wavenumber tables.

    Attributes:
        n (int): points per axis.
        L (float): box edge length.
        h (float): spacing, L / n.
        k (numpy.ndarray): angular wavenumbers 2*pi*j/L along a full axis.
        k_last (numpy.ndarray): wavenumbers of the halved (real FFT) last axis.

    """

    __slots__ = ["n", "L", "h", "k", "k_last", "k2", "inv_k2", "kd", "resolved"]

    def __init__(self, n: int, L: float) -> None:
        if int(n) != n:
            raise ValueError("n must be an integer")

        if n % 2 != 0:
            raise ValueError("n must be even")

        if n < 4:
            raise ValueError("n must be at least 4")

        if not L > 0:
            raise ValueError("L needs to be nonzero and positive!")

        self.n, self.L = int(n), float(L)
        self.h = self.L / self.n

        self.k = 2 * np.pi * sfft.fftfreq(self.n, d=self.h)
        self.k_last = 2 * np.pi * sfft.rfftfreq(self.n, d=self.h)

        # First derivatives drop the Nyquist mode, which has no real derivative.
        # The Laplacian symbol is their square, so div(grad f) == laplacian(f) exactly.
        kd, kd_last = self.k.copy(), self.k_last.copy()
        kd[self.n // 2], kd_last[-1] = 0.0, 0.0
        self.kd = (kd[:, None, None], kd[None, :, None], kd_last[None, None, :])

        self.k2 = sum(c ** 2 for c in self.kd)
        self.inv_k2 = np.zeros_like(self.k2)
        self.inv_k2[self.k2 > 0] = 1 / self.k2[self.k2 > 0]

        # Modes the Poisson inverse can represent: the mean and every nonzero symbol.
        self.resolved = self.k2 > 0
        self.resolved[0, 0, 0] = True

    def __iter__(self) -> Iterator:
        return iter((self.n, self.L))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.n == other.n and self.L == other.L

    def __hash__(self) -> int:
        return hash((self.n, self.L))

    def __str__(self) -> str:
        return f"n = {self.n}, L = {self.L}, h = {self.h}"

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def dv(self) -> float:
        return self.h ** 3

    @property
    def volume(self) -> float:
        return self.L ** 3

    @property
    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def fft(self, a: np.ndarray) -> np.ndarray:
        return sfft.rfftn(a)

    def ifft(self, a_hat: np.ndarray) -> np.ndarray:
        return sfft.irfftn(a_hat, s=self.shape)

    def laplacian_array(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k2 * self.fft(a))

    def gradient_array(self, a: np.ndarray) -> Tuple[np.ndarray, ...]:
        a_hat = self.fft(a)
        return tuple(self.ifft(1j * kd * a_hat) for kd in self.kd)

    def resolve(self, a: np.ndarray) -> np.ndarray:
        """Drops the Nyquist corner modes, where the Laplacian symbol vanishes."""
        return self.ifft(self.resolved * self.fft(a))

    def inverse_laplacian(self, a: np.ndarray) -> np.ndarray:
        """Zero-mean G with -Laplacian(G a) = resolve(a) - mean(a)."""
        return self.ifft(self.inv_k2 * self.fft(a))

    def poisson_array(self, rho: np.ndarray) -> np.ndarray:
        return 4 * np.pi * self.inverse_laplacian(rho)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.axis
        return x[:, None, None], x[None, :, None], x[None, None, :]

    def displacement(self, centre: Point) -> Tuple[np.ndarray, ...]:
        """Minimum-image displacement x - centre, one broadcastable array per axis."""
        out = []
        for ax, c in enumerate(np.asarray(centre, dtype=float)):
            d = self.axis - c
            d -= self.L * np.round(d / self.L)
            shape = [1, 1, 1]
            shape[ax] = self.n
            out.append(d.reshape(shape))
        return tuple(out)

    def distances(self, centre: Point) -> np.ndarray:
        dx, dy, dz = self.displacement(centre)
        return np.sqrt(dx ** 2 + dy ** 2 + dz ** 2)


class ScalarField:
    """Real field sampled on a Grid. Values are read-only once built.

    Attributes:
        grid (Grid): the grid the samples live on.
        values (numpy.ndarray): samples of shape (n, n, n), indexed [x, y, z].

    """

    __slots__ = ["grid", "values"]

    def __init__(self, grid: Grid, values: Union[np.ndarray, float]) -> None:
        values = np.array(np.broadcast_to(values, grid.shape), dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("Field values must be finite!")

        values.setflags(write=False)
        self.grid, self.values = grid, values

    @classmethod
    def zeros(cls, grid: Grid) -> ScalarField:
        return cls(grid, 0.0)

    @classmethod
    def from_function(
        cls, grid: Grid, func: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    ) -> ScalarField:
        x, y, z = grid.coordinates()
        return cls(grid, func(x, y, z))

    def _other(self, other: Union[ScalarField, float]) -> Union[np.ndarray, float]:
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("Fields live on different grids!")
            return other.values
        return other

    def __add__(self, other: Union[ScalarField, float]) -> ScalarField:
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other: Union[ScalarField, float]) -> ScalarField:
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other: Union[ScalarField, float]) -> ScalarField:
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other: Union[ScalarField, float]) -> ScalarField:
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> ScalarField:
        return ScalarField(self.grid, self.values / other)

    def __neg__(self) -> ScalarField:
        return ScalarField(self.grid, -self.values)

    def integrate(self) -> float:
        return integrate(self)

    def mean(self) -> float:
        return math.fsum(self.values.ravel().tolist()) / self.values.size

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2_norm(self) -> float:
        return math.sqrt(integrate(self * self))

    def min(self) -> float:
        return float(np.min(self.values))


class VectorField:
    """Three ScalarField components sharing one Grid, e.g. a gradient."""

    __slots__ = ["x", "y", "z"]

    def __init__(self, x: ScalarField, y: ScalarField, z: ScalarField) -> None:
        if not (x.grid == y.grid == z.grid):
            raise ValueError("Vector components must share one grid!")
        self.x, self.y, self.z = x, y, z

    def __iter__(self) -> Iterator[ScalarField]:
        return iter((self.x, self.y, self.z))

    @property
    def grid(self) -> Grid:
        return self.x.grid

    def norm(self) -> ScalarField:
        return ScalarField(self.grid, np.sqrt(sum(c.values ** 2 for c in self)))


def make_grid(n: int, L: float) -> Grid:
    return Grid(n, L)


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, f.grid.laplacian_array(f.values))


def gradient(f: ScalarField) -> VectorField:
    return VectorField(*(ScalarField(f.grid, c) for c in f.grid.gradient_array(f.values)))


def divergence(v: VectorField) -> ScalarField:
    grid = v.grid
    total = sum(
        1j * kd * grid.fft(c.values) for kd, c in zip(grid.kd, v)
    )
    return ScalarField(grid, grid.ifft(total))


def check_neutral(
    rho: np.ndarray,
    neutrality_tol: float = NEUTRALITY_TOL,
    neutrality_atol: float = NEUTRALITY_ATOL,
) -> None:
    """Raises NonNeutralSource unless |mean(rho)| <= tol * rms(rho) + atol."""
    mean = math.fsum(rho.ravel().tolist()) / rho.size
    rms = float(np.sqrt(np.mean(rho ** 2)))
    if abs(mean) > neutrality_tol * rms + neutrality_atol:
        raise NonNeutralSource(
            f"Source is not neutral on the cell: mean {mean:.3e}, rms {rms:.3e}."
        )


def poisson_solve(
    rho: ScalarField,
    neutrality_tol: float = NEUTRALITY_TOL,
    neutrality_atol: float = NEUTRALITY_ATOL,
) -> ScalarField:
    """Solves -Laplacian(phi) = 4 pi rho with mean(phi) = 0.

    Args:
        rho (ScalarField): source, neutral on the cell.
        neutrality_tol (float): relative tolerance on mean(rho) against rms(rho).
        neutrality_atol (float): absolute floor accepted for roundoff-level sources.

    Returns:
        ScalarField: the zero-mean potential.

    Raises:
        NonNeutralSource: if the source carries net charge.

    """
    check_neutral(rho.values, neutrality_tol, neutrality_atol)
    return ScalarField(rho.grid, rho.grid.poisson_array(rho.values))


def integrate(f: ScalarField) -> float:
    """h^3 times the compensated sum of the samples."""
    return math.fsum(f.values.ravel().tolist()) * f.grid.dv


def min_distance(x: Point, y: Point, L: float) -> float:
    """Minimum-image Euclidean distance between two points of the torus."""
    absdist = np.abs(np.asarray(y, dtype=float) - np.asarray(x, dtype=float)) % L
    wrap = L * (absdist >= L / 2)
    return float(np.linalg.norm(wrap - absdist, axis=-1))


def ball_weights(grid: Grid, centre: Point, R: float) -> np.ndarray:
    """Indicator of the ball B_R(centre), ramped linearly over one spacing."""
    return np.clip((R - grid.distances(centre)) / grid.h + 0.5, 0.0, 1.0)
