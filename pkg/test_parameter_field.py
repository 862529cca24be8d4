#!/usr/bin/env python3
"""
Tests for parameter fields and their composition with topologies
"""

import logging

import numpy as np
import pytest

from conformal import CylindricalMap
from errors import ParameterError, SpecError, UnboundVariableError
from parameter_field import (
    DEFAULT_NODE_SCALE,
    CellGrid,
    ParameterField,
    compose,
    continuous_coords,
    evaluate_parameters,
    normalized_coords,
)

PARABOLA = "-4*6*(x-0.5)^2 + 6 + 1"


def test_normalized_coords():
    test_cases = [
        ((1, 1, 1), CellGrid(10, 10, 10, u=1.0), (0.0, 0.0, 0.0)),
        ((10, 10, 10), CellGrid(10, 10, 10, u=1.0), (1.0, 1.0, 1.0)),
        ((1, 1, 1), CellGrid(1, 1, 1, u=1.0), (0.0, 0.0, 0.0)),
        ((3, 1, 2), CellGrid(5, 1, 3, u=1.0), (0.5, 0.0, 0.5)),
    ]
    for cell, grid, expected in test_cases:
        assert normalized_coords(cell, grid) == pytest.approx(expected)


def test_normalized_coords_out_of_range():
    with pytest.raises(ParameterError) as exc_info:
        normalized_coords((0, 1, 1), CellGrid(2, 2, 2, u=1.0))
    assert exc_info.value.cell == (0, 1, 1)


def test_continuous_coords_match_cell_centres():
    grid = CellGrid(4, 3, 1, u=5.0)
    for cell in grid.cells():
        centre = np.array([[c - 0.5 for c in cell]])
        coords = continuous_coords(centre, grid)
        assert tuple(float(c[0]) for c in coords) == pytest.approx(normalized_coords(cell, grid))


def test_cell_grid_validation():
    for counts in [(0, 1, 1), (1, -2, 1), (1, 1, 1.5)]:
        with pytest.raises(SpecError):
            CellGrid(*counts, u=1.0)
    with pytest.raises(SpecError):
        CellGrid(1, 1, 1, u=0.0)
    with pytest.raises(SpecError):
        CellGrid(1, 1, 1, u=1.0, mode="smooth")
    assert list(CellGrid(2, 1, 2, u=1.0).cells()) == [(1, 1, 1), (1, 1, 2), (2, 1, 1), (2, 1, 2)]


def test_evaluate_parameters_examples():
    grid = CellGrid(10, 10, 10, u=20.0)
    pf = ParameterField.from_sources({"thickness": "6.9*z+0.1"})
    assert evaluate_parameters(pf, (0.0, 0.0, 0.0), grid).thickness == pytest.approx(0.1)
    assert evaluate_parameters(pf, (0.0, 0.0, 1.0), grid).thickness == pytest.approx(7.0)

    pf = ParameterField.from_sources({"beam_diameter": PARABOLA})
    params = evaluate_parameters(pf, (0.5, 0.0, 0.0), grid)
    assert params.beam_diameter == pytest.approx(7.0)
    assert params.node_scale == DEFAULT_NODE_SCALE
    assert params.node_radius == pytest.approx(1.1 * 7.0 / 2)


def test_sine_thickness_range():
    grid = CellGrid(10, 1, 1, u=20.0)
    pf = ParameterField.from_sources({"thickness": "3*sin(6*pi*x) + 4"})
    xs = np.linspace(0.0, 1.0, 1201)
    params = evaluate_parameters(pf, (xs, 0.0, 0.0), grid)
    assert float(np.min(params.thickness)) == pytest.approx(1.0, abs=1e-9)
    assert float(np.max(params.thickness)) == pytest.approx(7.0, abs=1e-9)


def test_numeric_sources_are_accepted():
    pf = ParameterField.from_sources({"beam_diameter": 2, "node_scale": 1.5})
    params = evaluate_parameters(pf, (0.0, 0.0, 0.0), CellGrid(1, 1, 1, u=10.0))
    assert params.beam_diameter == 2.0
    assert params.node_scale == 1.5


def test_parameter_violations_name_cell_and_key():
    pf = ParameterField.from_sources({"beam_diameter": "1 - x"})
    grid = CellGrid(3, 1, 1, u=10.0)
    with pytest.raises(ParameterError) as exc_info:
        compose("cubic", pf, grid)
    assert exc_info.value.key == "beam_diameter"
    assert exc_info.value.cell == (3, 1, 1)
    assert exc_info.value.exit_code == 5

    with pytest.raises(ParameterError, match="u/2"):
        compose("schwarz_p", ParameterField.from_sources({"thickness": "5"}), CellGrid(1, 1, 1, u=10.0))

    with pytest.raises(ParameterError, match="fillet_ratio"):
        compose(
            "cubic",
            ParameterField.from_sources({"beam_diameter": "1", "fillet_ratio": "1.5"}),
            CellGrid(1, 1, 1, u=10.0),
            profile="rounded_square",
        )


def test_node_scale_below_one_is_clamped(caplog):
    pf = ParameterField.from_sources({"beam_diameter": "1", "node_scale": "0.75"})
    with caplog.at_level(logging.WARNING):
        params = evaluate_parameters(pf, (0.0, 0.0, 0.0), CellGrid(1, 1, 1, u=10.0))
    assert params.node_scale == 1.0
    assert "node_scale" in caplog.text


def test_key_mismatch_is_rejected():
    grid = CellGrid(1, 1, 1, u=10.0)
    test_cases = [
        ("bcc", {"thickness": "1"}),
        ("schwarz_p", {"beam_diameter": "1"}),
        ("gyroid", {"thickness": "1", "node_scale": "1.2"}),
        ("cubic", {"node_scale": "1.2"}),
        ("truncated_cube", {"beam_diameter": "1"}),
        ("cubic", {"beam_diameter": "1", "trunc": "0.2"}),
    ]
    for topology, sources in test_cases:
        with pytest.raises(SpecError):
            compose(topology, ParameterField.from_sources(sources), grid)


def test_unknown_parameter_key():
    with pytest.raises(SpecError, match="unknown parameter key 'radius'"):
        ParameterField.from_sources({"radius": "1"})


def test_unbound_variable_is_reported_before_evaluation():
    pf = ParameterField.from_sources({"beam_diameter": "1 + w"})
    with pytest.raises(UnboundVariableError, match="'w'"):
        compose("cubic", pf, CellGrid(1, 1, 1, u=10.0))
    pf = ParameterField.from_sources({"beam_diameter": "1 + rho"})
    with pytest.raises(UnboundVariableError, match="'rho'"):
        compose("cubic", pf, CellGrid(1, 1, 1, u=10.0))


def test_schwarz_thickness_follows_z():
    pf = ParameterField.from_sources({"thickness": "6.9*z+0.1"})
    field = compose("schwarz_p", pf, CellGrid(1, 1, 10, u=20.0))
    thicknesses = [field.cell_parameters((1, 1, k)).thickness for k in range(1, 11)]
    expected = [0.1 + 6.9 * (k - 1) / 9 for k in range(1, 11)]
    assert thicknesses == pytest.approx(expected, abs=1e-12)
    assert thicknesses[0] == pytest.approx(0.1, abs=1e-12)
    assert thicknesses[-1] == pytest.approx(7.0, abs=1e-12)


def test_bcc_parabola_per_cell_diameters():
    pf = ParameterField.from_sources({"beam_diameter": PARABOLA})
    field = compose("bcc", pf, CellGrid(5, 3, 3, u=10.0))
    diameters = [field.cell_parameters((i, 1, 1)).beam_diameter for i in range(1, 6)]
    assert diameters == pytest.approx([1.0, 5.5, 7.0, 5.5, 1.0])
    summary = field.parameter_summary()
    assert summary["beam_diameter"] == {"min": pytest.approx(1.0), "max": pytest.approx(7.0)}
    assert summary["node_scale"]["min"] == pytest.approx(1.1)


def test_parabola_is_symmetric_along_a_row():
    pf = ParameterField.from_sources({"beam_diameter": PARABOLA})
    field = compose("bcc", pf, CellGrid(20, 1, 1, u=10.0))
    diameters = [field.cell_parameters((i, 1, 1)).beam_diameter for i in range(1, 21)]
    assert diameters[0] == 1.0
    for i in range(20):
        assert diameters[i] == pytest.approx(diameters[19 - i], abs=1e-12)


def test_single_cell_field_equals_unit_cell_field():
    pf = ParameterField.from_sources({"beam_diameter": "1"})
    field = compose("cubic", pf, CellGrid(1, 1, 1, u=10.0))
    points = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [5.0, 5.0, 5.0]])
    values = field.evaluate(points)
    assert values[0] == pytest.approx(0.55)
    assert values[1] == pytest.approx(0.5)
    assert values[2] < 0


def test_per_cell_parameters_are_constant_within_a_cell():
    pf = ParameterField.from_sources({"beam_diameter": "1 + x"})
    field = compose("cubic", pf, CellGrid(3, 1, 1, u=10.0))
    # two points on the same x-beam of cell 2 see the same radius
    a, b = field.evaluate(np.array([[12.0, 0.0, 0.0], [18.0, 0.0, 0.0]]))
    assert a == b == pytest.approx(0.75)


def test_continuous_mode_varies_inside_a_cell():
    pf = ParameterField.from_sources({"beam_diameter": "1 + x"})
    field = compose("cubic", pf, CellGrid(3, 1, 1, u=10.0, mode="continuous"))
    a, b = field.evaluate(np.array([[12.0, 0.0, 0.0], [18.0, 0.0, 0.0]]))
    assert a < b
    assert field.reach > field.cell_parameters((3, 1, 1)).node_radius


def test_monotone_thickness_gives_monotone_volume():
    pf = ParameterField.from_sources({"thickness": "i"})
    field = compose("schwarz_p", pf, CellGrid(3, 1, 1, u=20.0))
    axis = (np.arange(24) + 0.5) * (20.0 / 24)
    volumes = []
    for i in range(1, 4):
        gx, gy, gz = np.meshgrid(axis + (i - 1) * 20.0, axis, axis, indexing="ij")
        points = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
        volumes.append(int(np.count_nonzero(field.evaluate_cell((i, 1, 1), points) >= 0)))
    assert volumes[0] < volumes[1] < volumes[2]


def test_conformal_rho_binding():
    pf = ParameterField.from_sources({"beam_diameter": "1 + 2*rho"})
    field = compose("cubic", pf, CellGrid(3, 8, 1, u=10.0), transform=CylindricalMap(50.0))
    assert field.cell_parameters((1, 1, 1)).beam_diameter == pytest.approx(1.0)
    assert field.cell_parameters((2, 5, 1)).beam_diameter == pytest.approx(2.0)
    assert field.cell_parameters((3, 8, 1)).beam_diameter == pytest.approx(3.0)
    assert field.skeleton() is None


def test_conformal_rejects_tpms_and_narrow_rings():
    with pytest.raises(SpecError, match="beam"):
        compose("gyroid", ParameterField.from_sources({"thickness": "1"}), CellGrid(1, 4, 1, u=10.0),
                transform=CylindricalMap(50.0))
    with pytest.raises(SpecError, match="Ny"):
        compose("cubic", ParameterField.from_sources({"beam_diameter": "1"}), CellGrid(1, 2, 1, u=10.0),
                transform=CylindricalMap(50.0))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
