"""Solve the change-of-profile problem and normalize the result.

The problem: find u solving du/dt = Au on (0, T) with zero boundary values
and the two-time condition u(., 0) = u(., T) + gamma.  Writing Q for the
time-T propagator, the initial profile zeta satisfies the Fredholm system

    (I - Q) zeta = gamma,

which is solved matrix-free with GMRES (each matvec is one full implicit
time march).  The trajectory is then reconstructed from zeta and scaled to
unit initial mass, giving the probability-normalized pair (alpha, p).

``dense_propagator`` assembles Q_h column by column through the identical
stepping code; it exists so the iterative route can be cross-checked
against explicit linear algebra on small grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .errors import (
    NoConvergence,
    NonpositiveMass,
    NumericalBreakdown,
    PostCheckFailure,
    TooLarge,
)
from .grid import Grid
from .operators import CoefficientField
from .propagator import ThetaStepper, TimeGrid, Trajectory, propagate

DENSE_CAP = 4096


@dataclass(frozen=True, eq=False)
class ProfileShift:
    """Prescribed difference gamma = u(., 0) - u(., T) on the interior nodes.

    ``nonneg`` requests the probability-normalized path; it asserts that
    gamma is nonnegative and nontrivial, the hypothesis under which the
    solution itself is nonnegative with positive initial mass.
    """

    gamma: np.ndarray
    nonneg: bool = False

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 1:
            raise ValueError(f"gamma must be a vector, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("gamma contains non-finite entries")
        if self.nonneg:
            if np.any(g < 0.0):
                raise ValueError("nonneg path requested but gamma has negative entries")
            if not np.any(g > 0.0):
                raise ValueError("nonneg path requested but gamma is identically zero")
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True, eq=False)
class FredholmReport:
    """Outcome of one profile-shift solve.

    cond_estimate is the 2-norm condition number of I - Q_h when a dense
    oracle has supplied one; the matrix-free path leaves it None.
    """

    zeta: np.ndarray
    trajectory: Trajectory
    iterations: int
    relative_residual: float
    alpha: float | None
    normalized: Trajectory | None
    cond_estimate: float | None = None


def solve_profile_shift(
    shift: ProfileShift,
    coeffs: CoefficientField,
    grid: Grid,
    timegrid: TimeGrid,
    advection_mode: str = "upwind",
    tol: float = 1e-10,
    max_iter: int = 200,
    restart: int = 50,
    stepper: ThetaStepper | None = None,
) -> FredholmReport:
    """Solve (I - Q) zeta = gamma matrix-free and rebuild the trajectory.

    The GMRES tolerance is relative to ||gamma||.  After the solve the
    two-time condition is re-verified from the reconstructed trajectory;
    a violation beyond tol raises PostCheckFailure, so a returned report
    is always self-consistent.  When the shift carries the nonneg flag the
    report also holds the unit-mass pair (alpha, normalized trajectory).
    """
    gamma = shift.gamma
    if gamma.shape != (grid.size,):
        raise ValueError(
            f"gamma must live on the {grid.size} interior nodes, got {gamma.shape}"
        )
    engine = stepper if stepper is not None else ThetaStepper(
        coeffs, grid, timegrid, advection_mode
    )

    gamma_norm = float(np.linalg.norm(gamma))
    if gamma_norm == 0.0:
        # gamma = 0 forces zeta = 0: the unique fixed point of Q.
        zeta = np.zeros(grid.size)
        iterations = 0
    else:
        zeta, iterations = _gmres_identity_minus_q(
            engine, gamma, tol=tol, max_iter=max_iter, restart=restart
        )

    trajectory = propagate(
        zeta, 0.0, coeffs, grid, timegrid, advection_mode,
        keep_trajectory=True, stepper=engine,
    )
    defect = trajectory.initial - trajectory.terminal - gamma
    relative_residual = float(
        np.linalg.norm(defect) / gamma_norm if gamma_norm > 0 else np.linalg.norm(defect)
    )
    if relative_residual > tol and gamma_norm > 0:
        raise PostCheckFailure(
            "reconstructed trajectory violates the two-time condition: "
            f"||u(0) - u(T) - gamma|| = {relative_residual:.3e} * ||gamma|| > {tol:.1e}"
        )

    alpha = None
    normalized = None
    if shift.nonneg:
        alpha, normalized = normalize(trajectory)

    return FredholmReport(
        zeta=zeta,
        trajectory=trajectory,
        iterations=iterations,
        relative_residual=relative_residual,
        alpha=alpha,
        normalized=normalized,
    )


def _gmres_identity_minus_q(
    engine: ThetaStepper, gamma: np.ndarray, tol: float, max_iter: int, restart: int
):
    m = gamma.shape[0]

    def matvec(x):
        return x - engine.run(x)

    op = spla.LinearOperator((m, m), matvec=matvec, dtype=float)
    history: list[float] = []

    def callback(pr_norm):
        history.append(float(pr_norm))

    zeta, info = spla.gmres(
        op,
        gamma,
        rtol=tol,
        atol=0.0,
        restart=restart,
        maxiter=max_iter,
        callback=callback,
        callback_type="pr_norm",
    )
    iterations = len(history)
    if info != 0:
        residual = float(
            np.linalg.norm(gamma - matvec(zeta)) / np.linalg.norm(gamma)
        )
        raise NoConvergence(iterations=iterations, residual=residual)
    return zeta, iterations


def normalize(trajectory: Trajectory, grid: Grid | None = None) -> tuple[float, Trajectory]:
    """Scale a trajectory to unit initial mass.

    alpha = 1 / integral of u(., 0); the integral is the cell-volume
    weighted sum over interior nodes (midpoint rule).  The initial mass
    must be strictly positive for the scaled solution to be a probability
    profile.
    """
    if grid is None:
        grid = trajectory.grid
    mass = float(np.sum(trajectory.initial)) * grid.cell_volume
    if not mass > 0.0:
        raise NonpositiveMass(
            f"initial mass {mass:.3e} is not positive; "
            "cannot normalize to a probability profile"
        )
    alpha = 1.0 / mass
    return alpha, trajectory.scaled(alpha)


def dense_propagator(
    coeffs: CoefficientField,
    grid: Grid,
    timegrid: TimeGrid,
    advection_mode: str = "upwind",
) -> np.ndarray:
    """Assemble Q_h as a dense matrix, one basis-vector march per column.

    Deliberately routed through the same stepping engine as the iterative
    solver so the two answers can only differ by linear-algebra error, not
    by discretization.  Refuses grids above DENSE_CAP nodes.
    """
    m = grid.size
    if m > DENSE_CAP:
        raise TooLarge(
            f"dense propagator needs {m}x{m} storage; cap is {DENSE_CAP} nodes"
        )
    engine = ThetaStepper(coeffs, grid, timegrid, advection_mode)
    columns = np.empty((m, m))
    basis = np.zeros(m)
    for j in range(m):
        basis[j] = 1.0
        columns[:, j] = engine.run(basis)
        basis[j] = 0.0
    return columns


@dataclass(frozen=True, eq=False)
class SpectralReport:
    """Eigenvalue / singular-value summary of Q_h and I - Q_h."""

    eigenvalues: np.ndarray
    spectral_radius: float
    sigma_max_Q: float
    sigma_min_Q: float
    log10_cond_Q: float
    cond_identity_minus_Q: float


def spectral_analysis(q_matrix: np.ndarray) -> SpectralReport:
    """Dense eigenvalue and conditioning summary of a propagator matrix.

    cond(Q_h) is reported in log10 because on fine grids it exceeds the
    double-precision range.  The SVD-based value saturates near 1e19 (the
    smallest singular values are below the noise floor of the dense matrix
    itself), so for symmetric propagators prefer ``structured_log_spectrum``.
    """
    q = np.asarray(q_matrix, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"propagator matrix must be square, got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise NumericalBreakdown("propagator matrix contains non-finite entries")
    eigs = np.linalg.eigvals(q)
    sing = scipy.linalg.svdvals(q)
    sigma_max = float(sing[0])
    sigma_min = float(sing[-1])
    if sigma_max <= 0.0:
        raise NumericalBreakdown("propagator matrix is numerically zero")
    if sigma_min <= 0.0:
        log10_cond = np.inf
    else:
        log10_cond = float(np.log10(sigma_max) - np.log10(sigma_min))
    sing_iq = scipy.linalg.svdvals(np.eye(q.shape[0]) - q)
    if sing_iq[-1] <= 0.0:
        raise NumericalBreakdown("I - Q is numerically singular")
    return SpectralReport(
        eigenvalues=eigs,
        spectral_radius=float(np.max(np.abs(eigs))),
        sigma_max_Q=sigma_max,
        sigma_min_Q=sigma_min,
        log10_cond_Q=log10_cond,
        cond_identity_minus_Q=float(sing_iq[0] / sing_iq[-1]),
    )


def structured_log_spectrum(
    coeffs: CoefficientField,
    grid: Grid,
    timegrid: TimeGrid,
    advection_mode: str = "centered",
) -> np.ndarray:
    """log10 |mu_k| for every eigenvalue mu_k of Q_h, without underflow.

    Valid when the assembled generator is symmetric (no drift, or centered
    differences with constant coefficients give symmetry only for f = 0).
    Q_h then shares eigenvectors with A_h and each generator eigenvalue
    lambda < 0 maps to the per-step multiplier

        m = (1 + (1-theta)*dt*lambda) / (1 - theta*dt*lambda),

    so log|mu| = N_t * log|m| is computed in log space via log1p.  This is
    what makes condition numbers past 1e300 representable.
    """
    from .operators import assemble

    gen = assemble(coeffs, grid, 0.0, advection_mode).matrix.toarray()
    if not np.allclose(gen, gen.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(gen).max())):
        raise NumericalBreakdown(
            "structured spectrum requires a symmetric discrete generator"
        )
    lam = scipy.linalg.eigvalsh(gen)
    dt = timegrid.dt
    theta = timegrid.theta
    # log|1 + (1-theta) dt lam| - log|1 - theta dt lam|, stable for lam << 0.
    # The explicit factor can cross zero under Crank-Nicolson, so fall back
    # from log1p to log|.| away from the well-conditioned neighborhood of 1.
    x = (1.0 - theta) * dt * lam
    with np.errstate(divide="ignore", invalid="ignore"):
        log_num = np.where(x > -0.5, np.log1p(x), np.log(np.abs(1.0 + x)))
        log_den = np.log1p(-theta * dt * lam)
    log_mu = timegrid.steps * (log_num - log_den)
    return log_mu / np.log(10.0)
