"""Coefficient fields and assembly of the discrete spatial generator.

The continuous operator is in nondivergence form,

    A u = sum_ij a_ij d2u/dx_i dx_j + sum_i f_i du/dx_i - q u,

with symmetric a >= delta*I, bounded drift f and absorption rate q >= 0.
``assemble`` turns it into a sparse matrix acting on the interior nodes of a
grid: centered second differences for the diagonal diffusion terms, the
four-point cross difference for mixed terms (2D only), upwind or centered
first differences for the drift, and -q on the diagonal.  Homogeneous
Dirichlet data enters by dropping couplings to boundary (or masked-out)
nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NegativeAbsorption, NotElliptic, NotSymmetric
from .grid import Grid

ADVECTION_MODES = ("upwind", "centered")

MatrixField = Callable[[np.ndarray, float], np.ndarray]
VectorField = Callable[[np.ndarray, float], np.ndarray]
ScalarField = Callable[[np.ndarray, float], float]


@dataclass(frozen=True)
class CoefficientField:
    """Evaluable coefficients a(x,t), f(x,t), q(x,t) with ellipticity delta.

    ``a`` maps (x, t) to a symmetric dim x dim matrix, ``f`` to a dim-vector
    and ``q`` to a nonnegative scalar.  ``time_dependent=False`` lets the
    time stepper reuse one factorization for every step.
    """

    dimension: int
    a: MatrixField
    f: VectorField
    q: ScalarField
    delta: float
    time_dependent: bool = False

    def __post_init__(self):
        if self.delta <= 0:
            raise NotElliptic(f"ellipticity constant must be positive, got {self.delta}")


def heat(dimension: int = 1) -> CoefficientField:
    """Pure diffusion: a = I, f = 0, q = 0."""
    eye = np.eye(dimension)
    zero = np.zeros(dimension)
    return CoefficientField(
        dimension=dimension,
        a=lambda x, t: eye,
        f=lambda x, t: zero,
        q=lambda x, t: 0.0,
        delta=1.0,
    )


def absorb(rate: float, dimension: int = 1) -> CoefficientField:
    """Unit diffusion with constant absorption rate q = rate >= 0."""
    if rate < 0:
        raise NegativeAbsorption(f"absorption rate must be >= 0, got {rate}")
    eye = np.eye(dimension)
    zero = np.zeros(dimension)
    return CoefficientField(
        dimension=dimension,
        a=lambda x, t: eye,
        f=lambda x, t: zero,
        q=lambda x, t: float(rate),
        delta=1.0,
    )


def drift(velocity: Sequence[float], absorption: float = 0.0) -> CoefficientField:
    """Unit diffusion with constant drift vector f = velocity."""
    vel = np.asarray(velocity, dtype=float)
    dimension = vel.shape[0]
    eye = np.eye(dimension)
    if absorption < 0:
        raise NegativeAbsorption(f"absorption rate must be >= 0, got {absorption}")
    return CoefficientField(
        dimension=dimension,
        a=lambda x, t: eye,
        f=lambda x, t: vel,
        q=lambda x, t: float(absorption),
        delta=1.0,
    )


def anisotropic(axx: float, axy: float, ayy: float, absorption: float = 0.0) -> CoefficientField:
    """Constant 2D diffusion matrix [[axx, axy], [axy, ayy]]."""
    mat = np.array([[axx, axy], [axy, ayy]], dtype=float)
    delta = float(np.linalg.eigvalsh(mat)[0])
    if absorption < 0:
        raise NegativeAbsorption(f"absorption rate must be >= 0, got {absorption}")
    zero = np.zeros(2)
    return CoefficientField(
        dimension=2,
        a=lambda x, t: mat,
        f=lambda x, t: zero,
        q=lambda x, t: float(absorption),
        delta=delta,
    )


def tabulated(
    grid: Grid,
    a_values: np.ndarray,
    f_values: np.ndarray | None = None,
    q_values: np.ndarray | None = None,
    delta: float | None = None,
) -> CoefficientField:
    """Per-node coefficient arrays bound to a grid (time-independent).

    ``a_values`` has shape (M, dim, dim), ``f_values`` (M, dim), ``q_values``
    (M,).  Missing f or q default to zero.  If delta is omitted it is set to
    the smallest eigenvalue of a over all nodes.
    """
    dim = grid.dimension
    m = grid.size
    a_arr = np.asarray(a_values, dtype=float).reshape(m, dim, dim)
    f_arr = (
        np.zeros((m, dim))
        if f_values is None
        else np.asarray(f_values, dtype=float).reshape(m, dim)
    )
    q_arr = (
        np.zeros(m) if q_values is None else np.asarray(q_values, dtype=float).reshape(m)
    )
    if delta is None:
        delta = float(min(np.linalg.eigvalsh(a_arr[i])[0] for i in range(m)))

    lows = np.array([lo for lo, _ in grid.domain.box])
    steps = np.asarray(grid.h)

    def locate(x: np.ndarray) -> int:
        multi = np.rint((np.asarray(x) - lows) / steps).astype(int) - 1
        idx = grid.node_index(multi)
        if idx < 0:
            raise KeyError(f"point {x} is not an interior node of the grid")
        return idx

    return CoefficientField(
        dimension=dim,
        a=lambda x, t: a_arr[locate(x)],
        f=lambda x, t: f_arr[locate(x)],
        q=lambda x, t: float(q_arr[locate(x)]),
        delta=delta,
    )


@dataclass(frozen=True)
class CoefficientCheck:
    """Worst margins observed over all sampled (x, t) pairs."""

    symmetry_defect: float
    ellipticity_margin: float
    min_absorption: float
    warnings: tuple[str, ...] = ()


def validate_coefficients(
    coeffs: CoefficientField,
    grid: Grid,
    time_samples: Sequence[float],
) -> CoefficientCheck:
    """Check symmetry, ellipticity >= delta and q >= 0 on nodes x times.

    Raises NotSymmetric / NotElliptic / NegativeAbsorption naming the first
    violating (x, t).  On success returns the worst margins, plus a warning
    when the diffusion field jumps strongly between adjacent nodes (large
    grid-level variation is allowed but worth flagging).
    """
    coords = grid.coordinates()
    worst_sym = 0.0
    worst_margin = np.inf
    worst_q = np.inf
    a_scale = 0.0
    a_samples = np.empty((grid.size, coeffs.dimension, coeffs.dimension))

    for t in time_samples:
        for i, x in enumerate(coords):
            a = np.asarray(coeffs.a(x, t), dtype=float)
            defect = float(np.abs(a - a.T).max())
            a_scale = max(a_scale, float(np.abs(a).max()))
            if defect > 1e-10 * (1.0 + a_scale):
                raise NotSymmetric(f"a is not symmetric at x={x}, t={t} (defect {defect:.3e})")
            worst_sym = max(worst_sym, defect)

            lam_min = float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])
            margin = lam_min - coeffs.delta
            if margin < 0:
                raise NotElliptic(
                    f"smallest eigenvalue {lam_min:.6g} of a at x={x}, t={t} is below "
                    f"delta={coeffs.delta}"
                )
            worst_margin = min(worst_margin, margin)

            qval = float(coeffs.q(x, t))
            if qval < 0:
                raise NegativeAbsorption(f"q={qval:.6g} < 0 at x={x}, t={t}")
            worst_q = min(worst_q, qval)
            if t == time_samples[0]:
                a_samples[i] = a

    warnings = []
    jump = _neighbor_jump(grid, a_samples)
    if a_scale > 0 and jump > 0.5 * a_scale:
        warnings.append(
            f"diffusion coefficient jumps by {jump:.3g} (>{0.5 * a_scale:.3g}) between "
            f"adjacent nodes; the scheme tolerates this but accuracy may degrade"
        )
    return CoefficientCheck(
        symmetry_defect=worst_sym,
        ellipticity_margin=float(worst_margin),
        min_absorption=float(worst_q),
        warnings=tuple(warnings),
    )


def _neighbor_jump(grid: Grid, a_samples: np.ndarray) -> float:
    """Largest entrywise change of a between axis-adjacent interior nodes."""
    worst = 0.0
    for axis in range(grid.dimension):
        shifted = grid.nodes.copy()
        shifted[:, axis] += 1
        for row, multi in enumerate(shifted):
            col = grid.node_index(multi)
            if col >= 0:
                worst = max(worst, float(np.abs(a_samples[row] - a_samples[col]).max()))
    return worst


@dataclass(frozen=True)
class DiscreteGenerator:
    """Sparse action of A on interior nodes at a fixed time.

    ``m_matrix_certified`` is True only for upwind drift with no mixed
    diffusion terms and the verified sign pattern (off-diagonal >= 0,
    diagonal <= 0), which is what the discrete maximum principle needs.
    """

    matrix: sp.csr_matrix
    time_stamp: float
    m_matrix_certified: bool


def assemble(
    coeffs: CoefficientField,
    grid: Grid,
    t: float,
    advection_mode: str = "upwind",
) -> DiscreteGenerator:
    """Assemble the discrete generator A_h(t) on the grid's interior nodes.

    Couplings to nodes outside the interior (box boundary or masked-out
    cells) are dropped, which encodes the homogeneous Dirichlet condition.
    Coefficient sign/symmetry violations raise the corresponding errors.
    """
    if advection_mode not in ADVECTION_MODES:
        raise ValueError(f"advection_mode must be one of {ADVECTION_MODES}")

    dim = grid.dimension
    coords = grid.coordinates()
    steps = grid.h
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    mixed_present = False

    def couple(row: int, multi: np.ndarray, value: float) -> None:
        # Dirichlet: a missing neighbor contributes nothing to the row.
        col = grid.node_index(multi)
        if col >= 0:
            rows.append(row)
            cols.append(col)
            vals.append(value)

    for row in range(grid.size):
        x = coords[row]
        a = np.asarray(coeffs.a(x, t), dtype=float)
        if np.abs(a - a.T).max() > 1e-10 * (1.0 + np.abs(a).max()):
            raise NotSymmetric(f"a is not symmetric at x={x}, t={t}")
        f = np.asarray(coeffs.f(x, t), dtype=float)
        q = float(coeffs.q(x, t))
        if q < 0:
            raise NegativeAbsorption(f"q={q:.6g} < 0 at x={x}, t={t}")

        diag = -q
        base = grid.nodes[row]

        for axis in range(dim):
            h = steps[axis]
            plus = base.copy()
            plus[axis] += 1
            minus = base.copy()
            minus[axis] -= 1

            # centered second difference for a_ii d2/dx_i2
            w = a[axis, axis] / h**2
            couple(row, plus, w)
            couple(row, minus, w)
            diag -= 2.0 * w

            # drift term f_i d/dx_i
            fi = f[axis]
            if advection_mode == "upwind":
                fp = max(fi, 0.0)
                fm = max(-fi, 0.0)
                if fp:
                    couple(row, plus, fp / h)
                if fm:
                    couple(row, minus, fm / h)
                diag -= (fp + fm) / h
            else:
                couple(row, plus, fi / (2.0 * h))
                couple(row, minus, -fi / (2.0 * h))

        if dim == 2 and a[0, 1] != 0.0:
            # four-point cross difference for 2*a_xy d2/dxdy
            mixed_present = True
            w = a[0, 1] / (2.0 * steps[0] * steps[1])
            for sx, sy, sign in ((1, 1, 1.0), (-1, -1, 1.0), (1, -1, -1.0), (-1, 1, -1.0)):
                neighbor = base + np.array([sx, sy])
                couple(row, neighbor, sign * w)

        rows.append(row)
        cols.append(row)
        vals.append(diag)

    matrix = sp.csr_matrix(
        (np.array(vals), (np.array(rows), np.array(cols))),
        shape=(grid.size, grid.size),
    )
    matrix.sum_duplicates()

    certified = (
        advection_mode == "upwind"
        and not mixed_present
        and _sign_pattern_holds(matrix)
    )
    return DiscreteGenerator(matrix=matrix, time_stamp=float(t), m_matrix_certified=certified)


def _sign_pattern_holds(matrix: sp.csr_matrix) -> bool:
    """Off-diagonal entries >= 0 and diagonal entries <= 0."""
    if np.any(matrix.diagonal() > 0):
        return False
    off = matrix.copy().tolil()
    off.setdiag(0.0)
    return not np.any(off.tocsr().data < 0)
