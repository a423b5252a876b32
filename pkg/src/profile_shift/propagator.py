"""Implicit theta-scheme realization of the solution operators.

``propagate`` is the initial-value solve on [s, T] (the operator sending an
initial profile to its whole trajectory) and ``apply_Q`` is its restriction
to the terminal slice, i.e. the time-T propagator whose fixed-point
structure the Fredholm module inverts.

Each step solves

    (I - theta*dt*A_h(t+dt)) u_plus = (I + (1-theta)*dt*A_h(t)) u

by sparse LU.  For time-independent coefficients the factorization is
computed once and shared by every step and every repeated application of
the propagator (the outer Krylov loop applies Q many times).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InnerSolveFailure
from .grid import Grid
from .operators import CoefficientField, assemble

INNER_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, T] with an A-stable theta in [0.5, 1]."""

    T: float
    steps: int
    theta: float = 1.0

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.steps < 1:
            raise ValueError(f"need at least one time step, got {self.steps}")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0.5, 1], got {self.theta}")

    @property
    def dt(self) -> float:
        return self.T / self.steps

    def time(self, k: int) -> float:
        return self.T * k / self.steps

    def index_of(self, s: float) -> int:
        """Index of the time-grid node at s; s must sit on the grid."""
        k = int(round(s / self.dt))
        if k < 0 or k > self.steps or abs(s - self.time(k)) > 1e-9 * max(self.T, 1.0):
            raise ValueError(f"time {s} does not coincide with a time-grid node")
        return k


@dataclass(frozen=True, eq=False)
class StateSlice:
    """Solution values on the interior nodes at one time."""

    values: np.ndarray
    t: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered solution slices from the start time to T."""

    slices: tuple[StateSlice, ...]
    grid: Grid
    timegrid: TimeGrid

    @property
    def initial(self) -> np.ndarray:
        return self.slices[0].values

    @property
    def terminal(self) -> np.ndarray:
        return self.slices[-1].values

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.slices])

    def as_array(self) -> np.ndarray:
        """Stacked values, shape (num_slices, M)."""
        return np.stack([s.values for s in self.slices])

    def scaled(self, factor: float) -> "Trajectory":
        return Trajectory(
            slices=tuple(StateSlice(factor * s.values, s.t) for s in self.slices),
            grid=self.grid,
            timegrid=self.timegrid,
        )


class ThetaStepper:
    """Reusable stepping engine with cached generators and factorizations."""

    def __init__(
        self,
        coeffs: CoefficientField,
        grid: Grid,
        timegrid: TimeGrid,
        advection_mode: str = "upwind",
    ):
        self.coeffs = coeffs
        self.grid = grid
        self.timegrid = timegrid
        self.advection_mode = advection_mode
        self._identity = sp.identity(grid.size, format="csc")
        self._cache: dict[int, tuple] = {}

    @property
    def m_matrix_certified(self) -> bool:
        return self._step_system(0)[3]

    def _step_system(self, k: int):
        """Matrices for the step t_k -> t_{k+1} (cached)."""
        key = k if self.coeffs.time_dependent else 0
        if key not in self._cache:
            tg = self.timegrid
            gen0 = assemble(self.coeffs, self.grid, tg.time(key), self.advection_mode)
            if self.coeffs.time_dependent:
                gen1 = assemble(self.coeffs, self.grid, tg.time(key + 1), self.advection_mode)
            else:
                gen1 = gen0
            explicit = (self._identity + (1.0 - tg.theta) * tg.dt * gen0.matrix).tocsr()
            implicit = (self._identity - tg.theta * tg.dt * gen1.matrix).tocsc()
            lu = spla.splu(implicit)
            self._cache[key] = (explicit, lu, implicit, gen0.m_matrix_certified)
        return self._cache[key]

    def step_values(self, values: np.ndarray, k: int) -> np.ndarray:
        explicit, lu, implicit, _ = self._step_system(k)
        rhs = explicit @ values
        out = lu.solve(rhs)
        out = self._check_inner(out, rhs, lu, implicit)
        return out

    @staticmethod
    def _check_inner(out, rhs, lu, implicit):
        # Direct solves land far below INNER_TOL; one refinement pass covers
        # ill-conditioned steps (large dt on fine grids).
        norm_rhs = float(np.linalg.norm(rhs))
        if norm_rhs == 0.0:
            return np.zeros_like(rhs)
        for _ in range(2):
            residual = rhs - implicit @ out
            if np.linalg.norm(residual) <= INNER_TOL * norm_rhs:
                if not np.all(np.isfinite(out)):
                    break
                return out
            out = out + lu.solve(residual)
        raise InnerSolveFailure(
            "implicit step solve stagnated; the assembled generator is likely broken"
        )

    def run(self, values: np.ndarray, start_index: int = 0, keep: bool = False):
        """March from time node start_index to T.

        Returns the terminal values, or the full list of per-node slices when
        ``keep`` is set.
        """
        v = np.asarray(values, dtype=float)
        kept = [v.copy()] if keep else None
        for k in range(start_index, self.timegrid.steps):
            v = self.step_values(v, k)
            if keep:
                kept.append(v.copy())
        return kept if keep else v


def step(
    u: StateSlice,
    coeffs: CoefficientField,
    grid: Grid,
    dt: float,
    theta: float,
    advection_mode: str = "upwind",
) -> StateSlice:
    """One theta-scheme step of length dt starting from slice u."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    gen0 = assemble(coeffs, grid, u.t, advection_mode)
    gen1 = gen0 if not coeffs.time_dependent else assemble(coeffs, grid, u.t + dt, advection_mode)
    identity = sp.identity(grid.size, format="csc")
    explicit = (identity + (1.0 - theta) * dt * gen0.matrix).tocsr()
    implicit = (identity - theta * dt * gen1.matrix).tocsc()
    lu = spla.splu(implicit)
    rhs = explicit @ np.asarray(u.values, dtype=float)
    out = ThetaStepper._check_inner(lu.solve(rhs), rhs, lu, implicit)
    return StateSlice(values=out, t=u.t + dt)


def propagate(
    xi,
    s: float,
    coeffs: CoefficientField,
    grid: Grid,
    timegrid: TimeGrid,
    advection_mode: str = "upwind",
    keep_trajectory: bool = True,
    stepper: ThetaStepper | None = None,
):
    """Solve the initial-value problem on [s, T] with data xi at time s.

    xi may be a StateSlice or a bare vector of interior values.  With
    ``keep_trajectory`` the full Trajectory is returned; otherwise only
    the terminal StateSlice (memory-lean mode for operator application).
    ``s`` must coincide with a time-grid node.
    """
    if isinstance(xi, StateSlice):
        xi = xi.values
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (grid.size,):
        raise ValueError(f"initial data must have length {grid.size}, got {xi.shape}")
    k0 = timegrid.index_of(s)
    engine = stepper if stepper is not None else ThetaStepper(
        coeffs, grid, timegrid, advection_mode
    )
    if keep_trajectory:
        values = engine.run(xi, start_index=k0, keep=True)
        slices = tuple(
            StateSlice(values=v, t=timegrid.time(k0 + j)) for j, v in enumerate(values)
        )
        return Trajectory(slices=slices, grid=grid, timegrid=timegrid)
    terminal = engine.run(xi, start_index=k0, keep=False)
    return StateSlice(values=terminal, t=timegrid.T)


def apply_Q(
    xi,
    coeffs: CoefficientField,
    grid: Grid,
    timegrid: TimeGrid,
    advection_mode: str = "upwind",
    stepper: ThetaStepper | None = None,
) -> StateSlice:
    """Apply the time-T propagator: xi at t=0 to the solution slice at t=T."""
    return propagate(
        xi, 0.0, coeffs, grid, timegrid, advection_mode,
        keep_trajectory=False, stepper=stepper,
    )
