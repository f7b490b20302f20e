from __future__ import annotations
from typing import Dict, List, Optional, Tuple
import logging
import math
import numpy as np
from timeit import default_timer as timer

from .common import MaxIterExceeded, NegativeDensity
from .grid import Grid, ScalarField, check_neutral, integrate

logger = logging.getLogger(__name__)

INITS = ("uniform", "random", "supplied")
ARMIJO = 1e-4
GROW = 1.25
EPS = np.finfo(float).eps


class SolverOptions:
    """Controls for the ground-state gradient flow.

    Attributes:
        tol (float): L2 tolerance on the Euler-Lagrange residual.
        max_iter (int): accepted iterations before giving up.
        step_size (float): initial step.
        max_step (float): cap on the adaptive step.
        min_step (float): step below which the line search has stalled.
        precond_shift (float): constant added to the preconditioner symbol.
        init (str): one of "uniform", "random" or "supplied".
        initial (ScalarField): starting field when init is "supplied".
        seed (int): seed of the random initialisation.
        log_steps (int): log a progress line every this many iterations.

    """

    __slots__ = [
        "tol",
        "max_iter",
        "step_size",
        "max_step",
        "min_step",
        "precond_shift",
        "init",
        "initial",
        "seed",
        "log_steps",
    ]

    def __init__(
        self,
        tol: float = 1e-9,
        max_iter: int = 50000,
        step_size: float = 1.0,
        max_step: float = 2.0,
        min_step: float = 1e-10,
        precond_shift: float = 1.0,
        init: str = "uniform",
        initial: Optional[ScalarField] = None,
        seed: int = 0,
        log_steps: int = 50,
    ) -> None:
        if not tol > 0:
            raise ValueError("tol needs to be nonzero and positive!")

        if max_iter < 1:
            raise ValueError("max_iter must be at least 1")

        if not 0 < min_step <= step_size <= max_step:
            raise ValueError("Steps must satisfy 0 < min_step <= step_size <= max_step!")

        if not precond_shift > 0:
            raise ValueError("precond_shift needs to be nonzero and positive!")

        if init not in INITS:
            raise ValueError(f"init must be one of {', '.join(INITS)}!")

        if init == "supplied" and initial is None:
            raise ValueError("init 'supplied' needs an initial field!")

        if log_steps < 1:
            raise ValueError("log_steps must be at least 1")

        self.tol, self.max_iter = float(tol), int(max_iter)
        self.step_size, self.max_step, self.min_step = step_size, max_step, min_step
        self.precond_shift, self.init, self.initial = precond_shift, init, initial
        self.seed, self.log_steps = seed, log_steps

    def replace(self, **changes) -> SolverOptions:
        params = {name: getattr(self, name) for name in self.__slots__}
        params.update(changes)
        return SolverOptions(**params)

    def warm(self, start: ScalarField) -> SolverOptions:
        return self.replace(init="supplied", initial=start)

    def as_dict(self) -> Dict:
        return {
            name: getattr(self, name) for name in self.__slots__ if name != "initial"
        }


class GroundState:
    """Discrete TFW ground state.

    The stored phi has zero mean. The total potential is phi + theta.

    Attributes:
        u (ScalarField): non-negative density amplitude.
        phi (ScalarField): zero-mean electrostatic potential.
        theta (float): charge-constraint multiplier.
        residual_u (float): L2 norm of the Euler-Lagrange residual.
        residual_phi (float): L2 norm of the Poisson residual.
        energy (float): TFW energy.
        iterations (int): accepted iterations.
        energy_trace (List[float]): energy of every accepted iterate.
        converged (bool): False only for best iterates attached to failures.

    """

    __slots__ = [
        "u",
        "phi",
        "theta",
        "residual_u",
        "residual_phi",
        "energy",
        "iterations",
        "energy_trace",
        "converged",
    ]

    def __init__(
        self,
        u: ScalarField,
        phi: ScalarField,
        theta: float,
        residual_u: float,
        residual_phi: float,
        energy: float,
        iterations: int,
        energy_trace: Optional[List[float]] = None,
        converged: bool = True,
    ) -> None:
        self.u, self.phi, self.theta = u, phi, float(theta)
        self.residual_u, self.residual_phi = float(residual_u), float(residual_phi)
        self.energy, self.iterations = float(energy), int(iterations)
        self.energy_trace = [] if energy_trace is None else list(energy_trace)
        self.converged = converged

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def total_potential(self) -> ScalarField:
        return self.phi + self.theta

    def regauge(self, c: float) -> GroundState:
        """Same state with phi shifted by c and theta by -c."""
        return GroundState(
            self.u,
            self.phi + c,
            self.theta - c,
            self.residual_u,
            self.residual_phi,
            self.energy,
            self.iterations,
            self.energy_trace,
            self.converged,
        )

    def as_dict(self) -> Dict:
        return {
            "theta": self.theta,
            "energy": self.energy,
            "residual_u": self.residual_u,
            "residual_phi": self.residual_phi,
            "iterations": self.iterations,
            "converged": self.converged,
            "gauge": "mean(phi) = 0, total potential phi + theta",
        }


class BoundsDiagnostic:
    __slots__ = ["u_min", "u_max", "phi_min", "phi_max", "solovej_C"]

    def __init__(
        self, u_min: float, u_max: float, phi_min: float, phi_max: float, solovej_C: float
    ) -> None:
        self.u_min, self.u_max = u_min, u_max
        self.phi_min, self.phi_max = phi_min, phi_max
        self.solovej_C = solovej_C

    def as_dict(self) -> Dict:
        return {name: getattr(self, name) for name in self.__slots__}


def signed_power(v: np.ndarray, p: float) -> np.ndarray:
    """|v|^p * sign(v), the odd extension of v^p."""
    return np.abs(v) ** (p - 1) * v


def _energy(grid: Grid, v: np.ndarray, m: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    rho = m - v * v
    phi = grid.poisson_array(rho)
    lap = grid.laplacian_array(v)
    energy = grid.dv * (
        np.sum(-v * lap) + np.sum(np.abs(v) ** (10 / 3)) + 0.5 * np.sum(phi * rho)
    )
    return float(energy), phi, lap


def _residual(
    grid: Grid, v: np.ndarray, phi: np.ndarray, lap: np.ndarray
) -> Tuple[float, np.ndarray, float]:
    """Rayleigh multiplier, Euler-Lagrange residual and its L2 norm."""
    g = -lap + (5 / 3) * signed_power(v, 7 / 3) - phi * v
    theta = float(np.sum(v * g) / np.sum(v * v))
    r = g - theta * v
    return theta, r, math.sqrt(grid.dv * np.sum(r * r))


def _poisson_residual(grid: Grid, u: np.ndarray, phi: np.ndarray, m: np.ndarray) -> float:
    r = -grid.laplacian_array(phi) - 4 * np.pi * grid.resolve(m - u * u)
    return math.sqrt(grid.dv * np.sum(r * r))


def preconditioner(grid: Grid, mean_m: float, shift: float) -> np.ndarray:
    """Inverse of the homogeneous-gas Hessian symbol, plus a shift."""
    u0 = math.sqrt(mean_m)
    return 1 / (
        grid.k2 + shift + (20 / 9) * u0 ** (4 / 3) + 8 * np.pi * u0 ** 2 * grid.inv_k2
    )


def _normalise(v: np.ndarray, charge: float, dv: float) -> np.ndarray:
    return v * math.sqrt(charge / (dv * np.sum(v * v)))


def _initial(opts: SolverOptions, grid: Grid, mean_m: float) -> np.ndarray:
    if opts.init == "uniform":
        return np.full(grid.shape, math.sqrt(mean_m))

    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        return math.sqrt(mean_m) * (0.5 + rng.random(grid.shape))

    if opts.initial.grid != grid:
        raise ValueError("Initial field lives on a different grid!")

    v = np.abs(opts.initial.values)
    if not np.any(v > 0):
        raise ValueError("Initial field must not vanish identically!")
    return v


def _state(
    grid: Grid,
    m: np.ndarray,
    v: np.ndarray,
    phi: np.ndarray,
    theta: float,
    res: float,
    iterations: int,
    trace: List[float],
    converged: bool = True,
) -> GroundState:
    u = ScalarField(grid, v)
    return GroundState(
        u,
        ScalarField(grid, phi),
        theta,
        res,
        _poisson_residual(grid, v, phi, m),
        tfw_energy(u, ScalarField(grid, m)),
        iterations,
        trace,
        converged,
    )


def tfw_energy(v: ScalarField, m: ScalarField, form: str = "charge") -> float:
    """TFW energy with unit coefficients.

    Args:
        v (ScalarField): trial amplitude, with integrate(v^2) = integrate(m).
        m (ScalarField): nuclear density.
        form (str): "charge" evaluates the Coulomb term as (1/2) int phi (m - v^2),
            "field" as (1/8 pi) int |grad phi|^2.

    Returns:
        float: the energy.

    Raises:
        NonNeutralSource: if v^2 and m carry different charge.

    """
    grid = v.grid
    rho = m.values - v.values ** 2
    check_neutral(rho)
    phi = grid.poisson_array(rho)

    kinetic = math.fsum(
        sum(c * c for c in grid.gradient_array(v.values)).ravel().tolist()
    )
    thomas_fermi = math.fsum((np.abs(v.values) ** (10 / 3)).ravel().tolist())
    if form == "charge":
        coulomb = 0.5 * math.fsum((phi * rho).ravel().tolist())
    elif form == "field":
        coulomb = math.fsum(
            sum(c * c for c in grid.gradient_array(phi)).ravel().tolist()
        ) / (8 * np.pi)
    else:
        raise ValueError("form must be 'charge' or 'field'!")

    return (kinetic + thomas_fermi + coulomb) * grid.dv


def solve_ground_state(m: ScalarField, opts: Optional[SolverOptions] = None) -> GroundState:
    """Minimises the TFW energy under integrate(u^2) = integrate(m).

    Runs a preconditioned gradient flow on v. Each step moves along the
    filtered residual, orthogonal to v, takes |v| and rescales to the charge
    constraint. Steps pass an Armijo test on the energy or, once the energy
    change is below roundoff, a decrease of the residual; the step grows on
    acceptance and halves on rejection.

    Args:
        m (ScalarField): non-negative nuclear density.
        opts (SolverOptions): solver controls, defaults if None.

    Returns:
        GroundState: the converged state.

    Raises:
        MaxIterExceeded: if the residual does not reach opts.tol, or the line
            search stalls; the best iterate is attached as .best.
        NegativeDensity: if the line search stalls after an iterate crossed zero.

    """
    opts = SolverOptions() if opts is None else opts
    grid, m_arr = m.grid, m.values

    if np.any(m_arr < 0):
        raise ValueError("m must be non-negative!")

    if not np.any(m_arr > 0):
        zero = ScalarField.zeros(grid)
        return GroundState(zero, zero, 0.0, 0.0, 0.0, 0.0, 0, [0.0])

    charge = integrate(m)
    mean_m = charge / grid.volume
    precond = preconditioner(grid, mean_m, opts.precond_shift)

    v = _normalise(_initial(opts, grid, mean_m), charge, grid.dv)
    energy, phi, lap = _energy(grid, v, m_arr)
    theta, r, res = _residual(grid, v, phi, lap)

    step, trace, crossed = opts.step_size, [energy], False
    best = (res, v, phi, theta)
    i, start = 0, timer()

    while res > opts.tol:
        if i >= opts.max_iter:
            logger.warning("Ground state not converged after %d iterations.", i)
            raise MaxIterExceeded(
                f"Residual {res:.3e} above tol {opts.tol:.1e} after {i} iterations.",
                best=_state(grid, m_arr, *best[1:], best[0], i, trace, False),
            )

        d = grid.ifft(precond * grid.fft(r))
        d -= (np.sum(v * d) / np.sum(v * v)) * v
        slope = 2 * grid.dv * np.sum(r * d)

        while True:
            trial = v - step * d
            negative = bool(np.any(trial < 0))
            trial = _normalise(np.abs(trial), charge, grid.dv)

            e_t, phi_t, lap_t = _energy(grid, trial, m_arr)
            theta_t, r_t, res_t = _residual(grid, trial, phi_t, lap_t)

            if e_t <= energy - ARMIJO * step * slope or (
                e_t <= energy + 64 * EPS * abs(energy) and res_t < res
            ):
                break

            step /= 2
            if step < opts.min_step:
                logger.warning("Line search stalled at iteration %d.", i)
                if crossed or negative:
                    raise NegativeDensity(
                        f"Flow stalled at residual {res:.3e} after leaving the positive cone."
                    )
                raise MaxIterExceeded(
                    f"Line search stalled at residual {res:.3e}.",
                    best=_state(grid, m_arr, *best[1:], best[0], i, trace, False),
                )

        crossed = crossed or negative
        v, energy, phi, theta, r, res = trial, e_t, phi_t, theta_t, r_t, res_t
        step = min(step * GROW, opts.max_step)
        trace.append(energy)
        if res < best[0]:
            best = (res, v, phi, theta)

        i += 1
        if i % opts.log_steps == 0 or res <= opts.tol:
            logger.info(
                "Iteration: %05d | Energy: % .12f | Residual: %.3e | Step: % .5f | Time: % .3f |",
                i,
                energy,
                res,
                step,
                timer() - start,
            )

    return _state(grid, m_arr, v, phi, theta, res, i, trace)


def residuals(state: GroundState, m: ScalarField) -> Tuple[float, float]:
    """L2 norms of the Euler-Lagrange and Poisson residuals in the stored gauge."""
    grid = state.grid
    u, phi = state.u.values, state.phi.values
    r = -grid.laplacian_array(u) + (5 / 3) * signed_power(u, 7 / 3) - (phi + state.theta) * u
    return (
        math.sqrt(grid.dv * np.sum(r * r)),
        _poisson_residual(grid, u, phi, m.values),
    )


def bounds_diagnostic(state: GroundState) -> BoundsDiagnostic:
    u, phi = state.u.values, state.phi.values
    if not np.any(u != 0):
        return BoundsDiagnostic(0.0, 0.0, 0.0, 0.0, 0.0)

    excess = (10 / 9) * np.abs(u) ** (4 / 3) - phi - state.theta
    return BoundsDiagnostic(
        float(u.min()),
        float(u.max()),
        float(phi.min()),
        float(phi.max()),
        max(float(excess.max()), 0.0),
    )
