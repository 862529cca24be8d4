"""
Cylindrical conformal placement of beam lattices.

The grid's x index runs outward in radius, y wraps around the axis and z runs
along it. Cell (i, j, k) covers rho in [rho0 + (i-1)u, rho0 + i*u],
phi in [2pi(j-1)/Ny, 2pi*j/Ny] and z in [(k-1)u, k*u]. Beams stay straight
chords between the mapped end points.
"""

import math
from dataclasses import dataclass
from typing import Dict, Tuple, Union

import numpy as np

from errors import SpecError
from topology import SkeletalGraph

Cell = Tuple[int, int, int]


@dataclass(frozen=True)
class CylindricalMap:
    inner_radius: float

    def __post_init__(self):
        if not self.inner_radius > 0:
            raise SpecError(f"inner_radius must be positive, got {self.inner_radius}", "transform.inner_radius")

    def check_grid(self, grid) -> None:
        if grid.ny < 3:
            raise SpecError(f"a cylindrical lattice needs at least 3 angular cells, got Ny={grid.ny}", "N")

    def outer_radius(self, grid) -> float:
        return self.inner_radius + grid.nx * grid.u

    def bounds(self, grid) -> Tuple[Tuple[float, float, float], Tuple[float, float, float]]:
        r = self.outer_radius(grid)
        return (-r, -r, 0.0), (r, r, grid.nz * grid.u)

    def to_dict(self) -> Dict[str, object]:
        return {"type": "cylindrical", "inner_radius": self.inner_radius}


def _check_cell(cell: Cell, grid) -> None:
    i, j, k = cell
    if not (1 <= i <= grid.nx and 1 <= k <= grid.nz and j >= 1):
        raise SpecError(f"cell {tuple(cell)} is outside the {grid.nx}x{grid.ny}x{grid.nz} grid", "cell")


def map_points(local: np.ndarray, cell: Cell, cmap: CylindricalMap, grid) -> np.ndarray:
    """Map unit-cell coordinates (a, b, c) in [0, u]^3 of one cell to world space"""
    i, j, k = cell
    u = grid.u
    local = np.asarray(local, dtype=float)
    rho = cmap.inner_radius + (i - 1) * u + local[..., 0]
    phi = 2.0 * math.pi * ((j - 1) + local[..., 1] / u) / grid.ny
    z = (k - 1) * u + local[..., 2]
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def map_graph(graph: SkeletalGraph, cell: Cell, cmap: CylindricalMap, grid) -> SkeletalGraph:
    _check_cell(cell, grid)
    return graph.with_vertices(map_points(graph.vertices, cell, cmap, grid))


def to_cylindrical(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rho, phi in [0, 2pi), z) of world points"""
    points = np.asarray(points, dtype=float)
    rho = np.hypot(points[..., 0], points[..., 1])
    phi = np.mod(np.arctan2(points[..., 1], points[..., 0]), 2.0 * math.pi)
    return rho, phi, points[..., 2]


def cell_space(points: np.ndarray, cmap: CylindricalMap, grid) -> np.ndarray:
    """World points expressed in cell units (0 at the first cell's lower face)"""
    rho, phi, z = to_cylindrical(points)
    return np.stack(
        [(rho - cmap.inner_radius) / grid.u, phi * grid.ny / (2.0 * math.pi), z / grid.u], axis=-1
    )


def cell_of(points: np.ndarray, cmap: CylindricalMap, grid) -> np.ndarray:
    """1-based containing cell; clamped in rho and z, wrapped in phi"""
    s = cell_space(points, cmap, grid)
    i = np.clip(np.floor(s[..., 0]).astype(np.int64), 0, grid.nx - 1)
    j = np.mod(np.floor(s[..., 1]).astype(np.int64), grid.ny)
    k = np.clip(np.floor(s[..., 2]).astype(np.int64), 0, grid.nz - 1)
    return np.stack([i, j, k], axis=-1) + 1


def conformal_bindings(cell: Cell, cmap: CylindricalMap, grid) -> Dict[str, float]:
    """rho is 0 on the innermost ring and 1 on the outermost; phi in [0, 1)"""
    _check_cell(cell, grid)
    i, j, _ = cell
    return {
        "rho": (i - 1) / max(grid.nx - 1, 1),
        "phi": ((j - 1) % grid.ny) / grid.ny,
    }


def continuous_bindings(space: np.ndarray, grid) -> Dict[str, Union[float, np.ndarray]]:
    """Per-point rho/phi agreeing with conformal_bindings at cell centres"""
    rho = np.clip((space[..., 0] - 0.5) / max(grid.nx - 1, 1), 0.0, 1.0)
    phi = np.mod((space[..., 1] - 0.5) / grid.ny, 1.0)
    return {"rho": rho, "phi": phi}
