#!/usr/bin/env python3
"""
Tests for the topology catalog: skeletal graphs, TPMS surfaces and primitives
"""

import math

import numpy as np
import pytest

from errors import SpecError
from topology import (
    BEAM_TOPOLOGIES,
    COMPOSITES,
    TPMS_TOPOLOGIES,
    beam_topology,
    catalog,
    needs_trunc,
    tile_graph,
    topology_kind,
    torus_primitive,
    tpms_topology,
)

# name -> (vertices, edges, first Betti number) of the unit cell skeleton
EXPECTED_GRAPHS = {
    "cubic": (8, 12, 5),
    "bcc": (9, 8, 0),
    "s_fcc": (12, 16, 5),
    "fcc": (14, 24, 11),
    "bccz": (9, 12, 4),
    "fccz": (14, 28, 15),
    "s_fccz": (12, 20, 9),
    "fbcc": (15, 32, 18),
    "s_fbcc": (13, 24, 12),
    "s_fbccz": (13, 28, 16),
    "diamond": (14, 16, 3),
}


def test_catalog_ids():
    assert len(BEAM_TOPOLOGIES) == 13
    assert set(TPMS_TOPOLOGIES) == {"gyroid", "schwarz_p", "schwarz_d"}
    for name in BEAM_TOPOLOGIES:
        assert topology_kind(name) == "beam"
    for name in TPMS_TOPOLOGIES:
        assert topology_kind(name) == "tpms"


def test_unknown_topology_lists_valid_ids():
    with pytest.raises(SpecError) as exc_info:
        topology_kind("kagome")
    message = str(exc_info.value)
    assert "kagome" in message
    assert "cubic" in message and "gyroid" in message
    assert exc_info.value.exit_code == 3


def test_beam_graph_counts():
    for name, (vertices, edges, betti) in EXPECTED_GRAPHS.items():
        graph = beam_topology(name)
        assert (graph.vertex_count, graph.edge_count) == (vertices, edges), name
        assert graph.component_count == 1, name
        assert graph.betti_number == betti, name
        assert graph.edge_lengths().min() > 1e-9, name


def test_truncated_graph_counts():
    test_cases = [
        ("rhombicuboctahedron", 0.25, (24, 48, 25)),
        ("rhombicuboctahedron", 0.5, (6, 12, 7)),
        ("truncated_cube", 0.25, (24, 36, 13)),
        ("truncated_cube", 0.5, (12, 24, 13)),
        ("truncated_cube", 0.0, (8, 12, 5)),
    ]
    for name, trunc, (vertices, edges, betti) in test_cases:
        graph = beam_topology(name, trunc)
        assert (graph.vertex_count, graph.edge_count, graph.betti_number) == (vertices, edges, betti), (name, trunc)


def test_diamond_bond_layout():
    keys = beam_topology("diamond").edge_keys()
    test_cases = [
        ((0.75, 0.25, 0.25), (1.0, 0.0, 0.0)),
        ((0.25, 0.75, 0.25), (0.5, 1.0, 0.5)),
        ((0.75, 0.75, 0.75), (1.0, 0.5, 0.5)),
        ((0.0, 0.0, 1.0), (0.25, 0.25, 0.75)),
    ]
    for key in test_cases:
        assert key in keys, key
    assert ((0.0, 0.0, 0.0), (0.25, 0.25, 0.25)) not in keys


def test_truncated_cube_converges_to_cubic():
    assert beam_topology("truncated_cube", 0.0).edge_keys() == beam_topology("cubic").edge_keys()


def test_rhombicuboctahedron_converges_to_octahedron():
    graph = beam_topology("rhombicuboctahedron", 0.5)
    expected = {(0.5, 0.5, 0.0), (0.5, 0.5, 1.0), (0.5, 0.0, 0.5), (0.5, 1.0, 0.5), (0.0, 0.5, 0.5), (1.0, 0.5, 0.5)}
    assert {tuple(np.round(v, 9)) for v in graph.vertices} == expected
    # every octahedron edge joins two face centres a distance sqrt(2)/2 apart
    np.testing.assert_allclose(graph.edge_lengths(), math.sqrt(2) / 2)


def test_bcc_centre_is_a_node():
    graph = beam_topology("bcc", u=10.0)
    centre = np.array([5.0, 5.0, 5.0])
    distances = np.linalg.norm(graph.vertices - centre, axis=1)
    index = int(np.argmin(distances))
    assert distances[index] < 1e-9
    assert index in graph.node_vertices
    assert int(np.sum(graph.edges == index)) == 8


def test_composites_are_edge_unions():
    for name, parts in COMPOSITES.items():
        keys = beam_topology(name).edge_keys()
        beam_parts = [part for part in parts if part != "vertical"]
        union = frozenset().union(*(beam_topology(part).edge_keys() for part in beam_parts))
        assert union <= keys, name
        extra = keys - union
        if "vertical" in parts:
            # the four z-direction corner beams
            assert len(extra) == 4, name
            for a, b in extra:
                assert a[0] == b[0] and a[1] == b[1], name
        else:
            assert not extra, name


def test_graph_scales_with_u():
    small = beam_topology("fcc", u=1.0)
    large = beam_topology("fcc", u=10.0)
    np.testing.assert_allclose(large.vertices, small.vertices * 10.0)
    assert large.vertices.max() == pytest.approx(10.0)


def test_trunc_validation():
    with pytest.raises(SpecError, match="requires a trunc"):
        beam_topology("truncated_cube")
    with pytest.raises(SpecError, match=r"\[0, 0.5\]"):
        beam_topology("rhombicuboctahedron", 0.6)
    with pytest.raises(SpecError, match="takes no trunc"):
        beam_topology("cubic", 0.2)
    with pytest.raises(SpecError, match="TPMS"):
        beam_topology("gyroid")
    with pytest.raises(SpecError, match="positive"):
        beam_topology("cubic", u=0.0)
    assert needs_trunc("truncated_cube") and not needs_trunc("fcc")


def test_tiled_cubic_genus():
    cubic = beam_topology("cubic", u=2.0)
    tiled = tile_graph(lambda cell: cubic, 2, 2, 2, 2.0)
    # 27 lattice points, 54 edges
    assert tiled.vertex_count == 27
    assert tiled.edge_count == 54
    assert tiled.betti_number == 28


def test_tpms_reference_values():
    u = 10.0
    assert tpms_topology("gyroid", u)(np.zeros((1, 3)))[0] == pytest.approx(0.0, abs=1e-12)
    assert tpms_topology("schwarz_p", u)(np.full((1, 3), u / 4))[0] == pytest.approx(0.0, abs=1e-12)
    assert tpms_topology("schwarz_d", u)(np.zeros((1, 3)))[0] == pytest.approx(1.0)


def test_tpms_periodicity():
    rng = np.random.default_rng(1)
    u = 7.5
    points = rng.uniform(-20.0, 20.0, size=(1000, 3))
    for name in TPMS_TOPOLOGIES:
        surface = tpms_topology(name, u)
        base = surface(points)
        for axis in range(3):
            shift = np.zeros(3)
            shift[axis] = u
            assert np.max(np.abs(surface(points + shift) - base)) < 1e-9, (name, axis)


def test_gyroid_is_odd():
    rng = np.random.default_rng(2)
    surface = tpms_topology("gyroid", 2.0 * math.pi)
    points = rng.uniform(-10.0, 10.0, size=(500, 3))
    assert np.max(np.abs(surface(-points) + surface(points))) < 1e-12


def test_tpms_gradient_matches_analytic():
    u = 2.0 * math.pi
    surface = tpms_topology("schwarz_p", u)
    points = np.array([[0.3, 1.1, -0.7], [2.0, 0.5, 1.5]])
    np.testing.assert_allclose(surface.gradient(points), -np.sin(points), atol=1e-6)


def test_tpms_errors():
    with pytest.raises(SpecError, match="beam"):
        tpms_topology("cubic", 1.0)
    with pytest.raises(SpecError, match="positive"):
        tpms_topology("gyroid", -1.0)


def test_torus_values():
    R, r = 3.0, 1.0
    torus = torus_primitive(R, r)
    points = np.array([[R + r, 0.0, 0.0], [R, 0.0, 0.0], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(torus(points), [0.0, r * r, r * r - R * R], atol=1e-12)
    assert torus.bounded
    assert torus.upper == (R + r, R + r, r)


def test_torus_rejects_bad_radii():
    for R, r in [(1.0, 1.0), (1.0, 2.0), (1.0, 0.0)]:
        with pytest.raises(SpecError):
            torus_primitive(R, r)


def test_catalog_entries():
    entries = {entry["name"]: entry for entry in catalog()}
    assert set(entries) == set(BEAM_TOPOLOGIES) | set(TPMS_TOPOLOGIES)
    assert entries["cubic"]["betti_number"] == 5
    assert entries["fbcc"]["composed_of"] == ["bcc", "fcc"]
    assert entries["rhombicuboctahedron"]["needs_trunc"]
    assert entries["gyroid"]["kind"] == "tpms"


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
