from __future__ import annotations
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import cmath
import logging
import math
import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .common import SingularOperator
from .grid import ScalarField, check_neutral
from .groundstate import GroundState, SolverOptions, preconditioner, solve_ground_state

logger = logging.getLogger(__name__)


def homogeneous_reference(m0: float) -> Tuple[float, float, float]:
    """Uniform-gas solution (u0, phi0, theta0) for background density m0."""
    if m0 < 0:
        raise ValueError("m0 must be non-negative!")
    return math.sqrt(m0), 0.0, (5 / 3) * m0 ** (2 / 3)


class ScreeningConstants:
    """Decay constants of the linearised uniform gas.

    With s = -t the roots of s^2 - a s + b = 0, a response decays like
    exp(-sqrt(s) r) for both roots. alpha and beta are the half-sum and
    half-difference of the two square roots, so the profile behaves like
    exp(-alpha r) exp(+-beta r); beta is real below the critical C_W and
    purely imaginary above it.

    Attributes:
        m0 (float): background density.
        C_W (float): von Weizsaecker coefficient.
        u0 (float): background amplitude sqrt(m0).
        a (float): (20/9) u0^(4/3) / C_W.
        b (float): 8 pi u0^2 / C_W.
        roots (Tuple[complex, complex]): roots t of t^2 + a t + b = 0.
        alpha (float): half-sum of the decay wavenumbers.
        beta (complex): half-difference, real or purely imaginary.
        decay_rate (float): slowest decay, alpha - |Re(beta)|.
        oscillation (float): |Im(beta)|.

    """

    __slots__ = [
        "m0",
        "C_W",
        "u0",
        "a",
        "b",
        "roots",
        "alpha",
        "beta",
        "decay_rate",
        "oscillation",
    ]

    def __init__(self, m0: float, C_W: float = 1.0) -> None:
        if not m0 > 0:
            raise ValueError("m0 needs to be nonzero and positive!")

        if not C_W > 0:
            raise ValueError("C_W needs to be nonzero and positive!")

        self.m0, self.C_W = float(m0), float(C_W)
        self.u0 = math.sqrt(m0)
        self.a = (20 / 9) * self.u0 ** (4 / 3) / C_W
        self.b = 8 * math.pi * self.u0 ** 2 / C_W

        disc = cmath.sqrt(self.a ** 2 - 4 * self.b)
        self.roots = ((-self.a + disc) / 2, (-self.a - disc) / 2)

        k_plus, k_minus = cmath.sqrt(-self.roots[1]), cmath.sqrt(-self.roots[0])
        self.alpha = ((k_plus + k_minus) / 2).real
        self.beta = (k_plus - k_minus) / 2
        if abs(disc.imag) > 0:
            self.beta = complex(0.0, self.beta.imag)
        else:
            self.beta = complex(self.beta.real, 0.0)

        self.decay_rate = self.alpha - abs(self.beta.real)
        self.oscillation = abs(self.beta.imag)

    @property
    def oscillatory(self) -> bool:
        return self.oscillation > 0

    def root_residuals(self) -> List[float]:
        return [abs(t * t + self.a * t + self.b) for t in self.roots]

    def as_dict(self) -> Dict:
        return {
            "m0": self.m0,
            "C_W": self.C_W,
            "a": self.a,
            "b": self.b,
            "roots": [[t.real, t.imag] for t in self.roots],
            "alpha": self.alpha,
            "beta": [self.beta.real, self.beta.imag],
            "decay_rate": self.decay_rate,
            "oscillation": self.oscillation,
        }


def screening_constants(m0: float, C_W: float = 1.0) -> ScreeningConstants:
    return ScreeningConstants(m0, C_W)


def critical_coefficient(m0: float) -> float:
    """C_W at which the two decay wavenumbers merge; beta is imaginary above it."""
    if not m0 > 0:
        raise ValueError("m0 needs to be nonzero and positive!")
    u0 = math.sqrt(m0)
    return ((20 / 9) * u0 ** (4 / 3)) ** 2 / (32 * math.pi * u0 ** 2)


def linearised_symbol(m0: float, k2: np.ndarray, eps: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Fourier amplitudes (u_dot, phi_dot) driven by m_dot = eps * exp(ik.x), |k|^2 = k2 > 0."""
    u0, _, _ = homogeneous_reference(m0)
    a = (20 / 9) * u0 ** (4 / 3)
    k2 = np.asarray(k2, dtype=float)
    denom = k2 ** 2 + a * k2 + 8 * np.pi * u0 ** 2
    return 4 * np.pi * eps * u0 / denom, 4 * np.pi * eps * (k2 + a) / denom


class LinearisedSolution:
    """Response of a ground state to a nuclear density change m_dot.

    Attributes:
        u_dot (ScalarField): amplitude response.
        phi_dot (ScalarField): zero-mean potential response.
        theta_dot (float): response of the multiplier.
        m_dot (ScalarField): the driving density change.
        residual (float): relative L2 residual of the amplitude equation.
        iterations (int): conjugate-gradient iterations over both solves.

    """

    __slots__ = ["u_dot", "phi_dot", "theta_dot", "m_dot", "residual", "iterations"]

    def __init__(
        self,
        u_dot: ScalarField,
        phi_dot: ScalarField,
        theta_dot: float,
        m_dot: ScalarField,
        residual: float,
        iterations: int,
    ) -> None:
        self.u_dot, self.phi_dot, self.theta_dot = u_dot, phi_dot, theta_dot
        self.m_dot, self.residual, self.iterations = m_dot, residual, iterations

    def as_dict(self) -> Dict:
        return {
            "theta_dot": self.theta_dot,
            "residual": self.residual,
            "iterations": self.iterations,
        }


class LinearisedSolver:
    """Linearised TFW system about one ground state.

    Eliminating phi_dot leaves A u_dot = 4 pi u G m_dot + theta_dot u, with
    A = -Lap + (35/9) u^(4/3) - (phi + theta) + 8 pi u G(u .) symmetric
    positive definite and G the zero-mean inverse of -Lap. theta_dot is fixed
    by int u u_dot = 0, so each right-hand side costs one CG solve after the
    solve of A x = u done here.
    """

    __slots__ = ["state", "tol", "max_iter", "_diag", "_op", "_precond", "_x_u", "_iters"]

    def __init__(self, state: GroundState, tol: float = 1e-10, max_iter: int = 5000) -> None:
        if not tol > 0:
            raise ValueError("tol needs to be nonzero and positive!")

        self.state, self.tol, self.max_iter = state, tol, max_iter
        grid, u = state.grid, state.u.values
        if not np.any(u != 0):
            raise ValueError("Cannot linearise about the zero state!")

        size = grid.n ** 3

        self._diag = (35 / 9) * np.abs(u) ** (4 / 3) - (state.phi.values + state.theta)
        symbol = preconditioner(grid, float(np.mean(u * u)), 1.0)

        self._op = LinearOperator((size, size), matvec=self._apply, dtype=float)
        self._precond = LinearOperator(
            (size, size),
            matvec=lambda x: grid.ifft(symbol * grid.fft(x.reshape(grid.shape))).ravel(),
            dtype=float,
        )
        self._iters = 0
        self._x_u = self._cg(u.ravel())

    def _apply(self, x: np.ndarray) -> np.ndarray:
        grid, u = self.state.grid, self.state.u.values
        f = x.reshape(grid.shape)
        out = -grid.laplacian_array(f) + self._diag * f
        out += 8 * np.pi * u * grid.inverse_laplacian(u * f)
        return out.ravel()

    def _cg(self, b: np.ndarray) -> np.ndarray:
        count = [0]

        def callback(_: np.ndarray) -> None:
            count[0] += 1

        x, info = cg(
            self._op,
            b,
            rtol=self.tol,
            atol=0.0,
            maxiter=self.max_iter,
            M=self._precond,
            callback=callback,
        )
        self._iters += count[0]
        if info != 0:
            raise SingularOperator(
                f"Conjugate gradients stopped with info = {info} after {count[0]} iterations."
            )
        return x

    def solve(self, m_dot: ScalarField) -> LinearisedSolution:
        grid, u = self.state.grid, self.state.u.values
        if m_dot.grid != grid:
            raise ValueError("m_dot lives on a different grid!")

        check_neutral(m_dot.values)
        start = self._iters

        rhs = 4 * np.pi * u * grid.inverse_laplacian(m_dot.values)
        x_m = self._cg(rhs.ravel())
        x_u = self._x_u

        theta_dot = -float(np.dot(u.ravel(), x_m) / np.dot(u.ravel(), x_u))
        u_dot = (x_m + theta_dot * x_u).reshape(grid.shape)
        phi_dot = grid.poisson_array(m_dot.values - 2 * u * u_dot)

        r = -grid.laplacian_array(u_dot) + self._diag * u_dot - u * (phi_dot + theta_dot)
        scale = math.sqrt(np.sum(rhs * rhs))
        residual = math.sqrt(np.sum(r * r)) / scale if scale > 0 else math.sqrt(np.sum(r * r))

        logger.debug(
            "Linearised solve: theta_dot = %.6e, residual = %.3e.", theta_dot, residual
        )
        return LinearisedSolution(
            ScalarField(grid, u_dot),
            ScalarField(grid, phi_dot),
            theta_dot,
            m_dot,
            residual,
            self._iters - start,
        )


def solve_linearised(
    state: GroundState, m_dot: ScalarField, tol: float = 1e-10, max_iter: int = 5000
) -> LinearisedSolution:
    """Solves the linearised TFW equations about state for the source m_dot.

    Args:
        state (GroundState): converged ground state.
        m_dot (ScalarField): density change, integrating to zero.
        tol (float): relative tolerance of the conjugate-gradient solves.
        max_iter (int): iteration cap per solve.

    Returns:
        LinearisedSolution: u_dot, phi_dot and theta_dot.

    Raises:
        NonNeutralSource: if m_dot carries net charge.
        SingularOperator: if conjugate gradients fail to converge.

    """
    return LinearisedSolver(state, tol, max_iter).solve(m_dot)


def operator_form(state: GroundState, f: ScalarField) -> float:
    grid, u, v = state.grid, state.u.values, f.values
    diag = (35 / 9) * np.abs(u) ** (4 / 3) - (state.phi.values + state.theta)
    return float(grid.dv * np.sum(v * (-grid.laplacian_array(v) + diag * v)))


class FDRow:
    __slots__ = ["h", "error", "ratio"]

    def __init__(self, h: float, error: float, ratio: Optional[float]) -> None:
        self.h, self.error, self.ratio = h, error, ratio


def fd_consistency(
    density_at: Callable[[float], ScalarField],
    state: GroundState,
    lin: LinearisedSolution,
    h_list: Sequence[float],
    opts: Optional[SolverOptions] = None,
) -> List[FDRow]:
    """Compares difference quotients of the ground state with the linear response.

    Args:
        density_at (Callable): returns the nuclear density at step h.
        state (GroundState): state at h = 0.
        lin (LinearisedSolution): response of state to the matching m_dot.
        h_list (Sequence[float]): strictly positive steps.
        opts (SolverOptions): options for the perturbed solves, warm-started
            from state.

    Returns:
        List[FDRow]: e(h) = sup|(u_h - u)/h - u_dot| and e(h_i) / e(h_{i-1}).

    """
    if not h_list or min(h_list) <= 0:
        raise ValueError("h_list must hold strictly positive steps!")

    opts = (SolverOptions() if opts is None else opts).warm(state.u)
    u, u_dot = state.u.values, lin.u_dot.values

    rows: List[FDRow] = []
    for h in h_list:
        perturbed = solve_ground_state(density_at(h), opts)
        error = float(np.max(np.abs((perturbed.u.values - u) / h - u_dot)))
        ratio = error / rows[-1].error if rows and rows[-1].error > 0 else None
        rows.append(FDRow(h, error, ratio))
        logger.info("h: %.4e | Error: %.6e | Ratio: %s |", h, error, ratio)

    return rows
