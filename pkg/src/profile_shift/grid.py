"""Spatial domains and their uniform grid discretizations.

The domain is a 1D interval or a 2D box, optionally restricted by a cell
mask (staircase approximation of non-rectangular, non-connected or
non-simply-connected regions).  Masked-out cells act as homogeneous
Dirichlet boundary, exactly like the outer box boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import BadResolution, EmptyInterior

# Mask: predicate on physical coordinates, or a boolean raster over the
# interior nodes (shape == nodes_per_axis), or None for the whole box.
Mask = Union[Callable[[np.ndarray], bool], np.ndarray, None]


@dataclass(frozen=True)
class Domain:
    """Bounded spatial domain: 1D interval or 2D box, with optional mask."""

    dimension: int
    box: tuple[tuple[float, float], ...]
    mask: Mask = None

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise BadResolution(f"dimension must be 1 or 2, got {self.dimension}")
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if len(box) != self.dimension:
            raise BadResolution(
                f"box must give one interval per axis ({self.dimension}), got {len(box)}"
            )
        for lo, hi in box:
            if not hi > lo:
                raise BadResolution(f"box interval ({lo}, {hi}) has nonpositive extent")
        object.__setattr__(self, "box", box)

    @property
    def extents(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in self.box)


def interval(lo: float = 0.0, hi: float = np.pi, mask: Mask = None) -> Domain:
    return Domain(1, ((lo, hi),), mask)


def box2d(
    x: tuple[float, float] = (0.0, np.pi),
    y: tuple[float, float] = (0.0, np.pi),
    mask: Mask = None,
) -> Domain:
    return Domain(2, (x, y), mask)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid over a Domain's interior nodes.

    ``index_map`` has shape ``nodes_per_axis`` and holds the linear interior
    index of each node, or -1 where the mask removed the cell.  ``nodes``
    lists the multi-indices of the M interior nodes in index order, so the
    two arrays form a bijection between interior nodes and 0..M-1.
    """

    domain: Domain
    shape: tuple[int, ...]
    h: tuple[float, ...]
    index_map: np.ndarray
    nodes: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for step in self.h:
            vol *= step
        return vol

    def coordinates(self) -> np.ndarray:
        """Physical coordinates of interior nodes, shape (M, dimension)."""
        lows = np.array([lo for lo, _ in self.domain.box])
        return lows + (self.nodes + 1) * np.asarray(self.h)

    def node_index(self, multi_index: Sequence[int]) -> int:
        """Linear index of a node, or -1 if outside the interior."""
        idx = tuple(int(i) for i in multi_index)
        for i, n in zip(idx, self.shape):
            if i < 0 or i >= n:
                return -1
        return int(self.index_map[idx])

    def adjacency(self) -> sp.csr_matrix:
        """Axis-neighbor adjacency of interior nodes (M x M, symmetric)."""
        rows, cols = [], []
        for axis in range(self.dimension):
            for sign in (-1, 1):
                shifted = self.nodes.copy()
                shifted[:, axis] += sign
                for row, multi in enumerate(shifted):
                    col = self.node_index(multi)
                    if col >= 0:
                        rows.append(row)
                        cols.append(col)
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.size, self.size))

    def components(self) -> np.ndarray:
        """Connected-component label of each interior node."""
        _, labels = connected_components(self.adjacency(), directed=False)
        return labels

    def sample(self, func: Callable[[np.ndarray], float]) -> np.ndarray:
        """Evaluate a function of the physical coordinates at interior nodes."""
        coords = self.coordinates()
        return np.array([float(func(x)) for x in coords])


def build_grid(domain: Domain, nodes_per_axis: Sequence[int]) -> Grid:
    """Discretize a domain with the given interior-node counts per axis.

    Spacing is ``extent / (nodes + 1)`` per axis; the outermost node layer of
    the box is the Dirichlet boundary and is never stored.  Masked-out cells
    are likewise treated as Dirichlet boundary (staircase approximation).

    Raises BadResolution for a count below 1 and EmptyInterior if masking
    removes every node.
    """
    counts = tuple(int(n) for n in nodes_per_axis)
    if len(counts) != domain.dimension:
        raise BadResolution(
            f"expected {domain.dimension} per-axis counts, got {len(counts)}"
        )
    if any(n < 1 for n in counts):
        raise BadResolution(f"nodes_per_axis must be >= 1, got {counts}")

    h = tuple(ext / (n + 1) for ext, n in zip(domain.extents, counts))

    inside = np.ones(counts, dtype=bool)
    if domain.mask is not None:
        if callable(domain.mask):
            lows = np.array([lo for lo, _ in domain.box])
            for multi in np.ndindex(*counts):
                x = lows + (np.asarray(multi) + 1) * np.asarray(h)
                inside[multi] = bool(domain.mask(x))
        else:
            raster = np.asarray(domain.mask)
            if raster.shape != counts:
                raise BadResolution(
                    f"mask raster shape {raster.shape} does not match grid shape {counts}"
                )
            inside = raster.astype(bool)

    count = int(inside.sum())
    if count == 0:
        raise EmptyInterior("mask leaves no interior node")

    index_map = np.full(counts, -1, dtype=np.int64)
    index_map[inside] = np.arange(count)
    nodes = np.argwhere(inside)
    return Grid(domain=domain, shape=counts, h=h, index_map=index_map, nodes=nodes)
