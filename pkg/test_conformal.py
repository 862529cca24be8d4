#!/usr/bin/env python3
"""
Tests for cylindrical conformal placement of beam lattices
"""

import math

import numpy as np
import pytest

from conformal import (
    CylindricalMap,
    cell_of,
    conformal_bindings,
    continuous_bindings,
    cell_space,
    map_graph,
    map_points,
)
from errors import SpecError
from lattice_mesher import assemble_lattice
from parameter_field import CellGrid, ParameterField, compose
from topology import beam_topology
from triangle_mesh import mesh_diagnostics


def test_origin_vertex_lands_on_inner_radius():
    grid = CellGrid(2, 12, 1, u=10.0)
    mapped = map_points(np.zeros((1, 3)), (1, 1, 1), CylindricalMap(50.0), grid)
    np.testing.assert_allclose(mapped[0], [50.0, 0.0, 0.0], atol=1e-12)


def test_map_graph_keeps_edges():
    grid = CellGrid(1, 6, 2, u=10.0)
    unit = beam_topology("bcc", u=10.0)
    mapped = map_graph(unit, (1, 3, 2), CylindricalMap(30.0), grid)
    assert np.array_equal(mapped.edges, unit.edges)
    rho = np.hypot(mapped.vertices[:, 0], mapped.vertices[:, 1])
    assert rho.min() == pytest.approx(30.0)
    assert rho.max() == pytest.approx(40.0)
    assert mapped.vertices[:, 2].min() == pytest.approx(10.0)


def test_ring_closes():
    grid = CellGrid(2, 8, 1, u=10.0)
    cmap = CylindricalMap(25.0)
    unit = beam_topology("fcc", u=10.0)
    first = map_points(unit.vertices, (2, 1, 1), cmap, grid)
    wrapped = map_points(unit.vertices, (2, 9, 1), cmap, grid)
    assert np.max(np.abs(first - wrapped)) < 10.0 * 1e-6


def test_tangent_linearization():
    u, ny = 10.0, 360
    grid = CellGrid(1, ny, 1, u=u)
    cmap = CylindricalMap(50.0)
    local = beam_topology("fbcc", u=u).vertices
    mapped = map_points(local, (1, 1, 1), cmap, grid)

    centre = np.full(3, u / 2)
    rho_c = cmap.inner_radius + u / 2
    phi_c = 2.0 * math.pi * 0.5 / ny
    jacobian = np.array([
        [math.cos(phi_c), -rho_c * 2.0 * math.pi / (ny * u) * math.sin(phi_c), 0.0],
        [math.sin(phi_c), rho_c * 2.0 * math.pi / (ny * u) * math.cos(phi_c), 0.0],
        [0.0, 0.0, 1.0],
    ])
    linear = map_points(centre[None, :], (1, 1, 1), cmap, grid) + (local - centre) @ jacobian.T
    assert np.max(np.linalg.norm(mapped - linear, axis=1)) < u * 0.01


def test_rotation_invariance():
    ny = 6
    grid = CellGrid(1, ny, 1, u=10.0)
    cmap = CylindricalMap(20.0)
    unit = beam_topology("cubic", u=10.0)
    angle = 2.0 * math.pi / ny
    rotation = np.array([[math.cos(angle), -math.sin(angle), 0.0], [math.sin(angle), math.cos(angle), 0.0], [0, 0, 1]])
    for j in range(1, ny + 1):
        here = map_graph(unit, (1, j, 1), cmap, grid).vertices
        there = map_graph(unit, (1, j % ny + 1, 1), cmap, grid).vertices
        rotated = here @ rotation.T
        gaps = np.linalg.norm(rotated[:, None, :] - there[None, :, :], axis=-1).min(axis=1)
        assert gaps.max() < 10.0 * 1e-6


def test_bindings():
    grid = CellGrid(4, 10, 1, u=5.0)
    cmap = CylindricalMap(40.0)
    assert conformal_bindings((1, 1, 1), cmap, grid) == {"rho": 0.0, "phi": 0.0}
    assert conformal_bindings((4, 6, 1), cmap, grid) == {"rho": 1.0, "phi": 0.5}
    single = CellGrid(1, 5, 1, u=5.0)
    assert conformal_bindings((1, 5, 1), cmap, single)["rho"] == 0.0


def test_continuous_bindings_agree_at_cell_centres():
    grid = CellGrid(3, 8, 2, u=10.0)
    cmap = CylindricalMap(30.0)
    for cell in [(1, 1, 1), (2, 5, 2), (3, 8, 1)]:
        local = np.full((1, 3), 5.0)
        world = map_points(local, cell, cmap, grid)
        space = cell_space(world, cmap, grid)
        bindings = continuous_bindings(space, grid)
        expected = conformal_bindings(cell, cmap, grid)
        assert float(bindings["rho"][0]) == pytest.approx(expected["rho"])
        assert float(bindings["phi"][0]) == pytest.approx(expected["phi"])
        assert tuple(cell_of(world, cmap, grid)[0]) == cell


def test_invalid_maps():
    with pytest.raises(SpecError):
        CylindricalMap(0.0)
    with pytest.raises(SpecError, match="Ny"):
        CylindricalMap(10.0).check_grid(CellGrid(1, 2, 1, u=1.0))
    with pytest.raises(SpecError):
        map_graph(beam_topology("cubic"), (0, 1, 1), CylindricalMap(10.0), CellGrid(1, 4, 1, u=1.0))


def test_thickening_tire_diameters():
    pf = ParameterField.from_sources({"beam_diameter": "1 + 2*rho"})
    field = compose("bcc", pf, CellGrid(5, 12, 2, u=10.0), transform=CylindricalMap(60.0))
    diameters = [field.cell_parameters((i, 1, 1)).beam_diameter for i in range(1, 6)]
    assert diameters == pytest.approx([1.0, 1.5, 2.0, 2.5, 3.0])


@pytest.mark.slow
def test_small_ring_is_watertight():
    pf = ParameterField.from_sources({"beam_diameter": "2"})
    field = compose("cubic", pf, CellGrid(1, 8, 1, u=10.0), transform=CylindricalMap(20.0))
    report = mesh_diagnostics(assemble_lattice(field, 24, threads=2))
    assert report.watertight
    assert report.components == 1
    # 32 ring vertices, 64 beams: 64 - 32 + 1 independent cycles
    assert report.genus == 33


@pytest.mark.slow
def test_thickening_tire_ring_closes():
    pf = ParameterField.from_sources({"beam_diameter": "1 + 2*rho"})
    field = compose("bcc", pf, CellGrid(3, 24, 2, u=10.0), transform=CylindricalMap(60.0))
    assert field.cell_parameters((1, 7, 2)).beam_diameter == 1.0
    assert field.cell_parameters((3, 19, 1)).beam_diameter == 3.0
    report = mesh_diagnostics(assemble_lattice(field, 24, threads=4))
    assert report.watertight
    assert report.components == 1


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
