"""
Parameter fields and their composition with a topology into one lattice field.

In `per_cell` mode every cell's parameters are resolved once, at the cell's
normalized coordinates, before any sampling happens. In `continuous` mode the
expressions are evaluated per sample point; `trunc` still resolves per cell
because it changes the skeletal graph.
"""

import logging
from dataclasses import asdict, dataclass
from itertools import product
from typing import Dict, FrozenSet, Iterator, Mapping, Optional, Tuple, Union

import numpy as np

import conformal
from conformal import CylindricalMap
from cross_section import PROFILE_VARIANTS, Profile, profile_bound
from errors import DomainError, ExpressionError, ParameterError, SpecError, UnboundVariableError
from expr_parser import ExprAst, parse
from lattice_mesher import beam_cell_field, tpms_cell_field
from topology import (
    ImplicitSolid,
    SkeletalGraph,
    beam_topology,
    needs_trunc,
    tile_graph,
    topology_kind,
    tpms_topology,
)

logger = logging.getLogger(__name__)

Cell = Tuple[int, int, int]
Value = Union[float, np.ndarray]

MODES = ("per_cell", "continuous")
TPMS_KEYS = ("thickness",)
BEAM_KEYS = ("beam_diameter", "node_scale", "fillet_ratio", "trunc")
PARAMETER_KEYS = TPMS_KEYS + BEAM_KEYS
LATTICE_VARIABLES = frozenset({"x", "y", "z", "i", "j", "k", "u", "nx", "ny", "nz"})
CONFORMAL_VARIABLES = frozenset({"rho", "phi"})
DEFAULT_NODE_SCALE = 1.1

# continuous-mode reach is taken over a lattice of points in every cell
REACH_SAMPLES = 9  # per cell edge
REACH_SAMPLE_BUDGET = 500_000  # across the grid
CONTINUOUS_REACH_MARGIN = 1.05

_clamp_warnings = set()


@dataclass(frozen=True)
class CellGrid:
    nx: int
    ny: int
    nz: int
    u: float
    mode: str = "per_cell"

    def __post_init__(self):
        for name, count in (("Nx", self.nx), ("Ny", self.ny), ("Nz", self.nz)):
            if not isinstance(count, (int, np.integer)) or isinstance(count, bool) or count < 1:
                raise SpecError(f"{name} must be a positive integer, got {count!r}", "N")
        if not self.u > 0:
            raise SpecError(f"unit cell size must be positive, got {self.u}", "u")
        if self.mode not in MODES:
            raise SpecError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}", "mode")

    @property
    def counts(self) -> Tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def cell_count(self) -> int:
        return self.nx * self.ny * self.nz

    def cells(self) -> Iterator[Cell]:
        """All cells, 1-based, in lexicographic (i, j, k) order"""
        return product(range(1, self.nx + 1), range(1, self.ny + 1), range(1, self.nz + 1))

    def contains(self, cell: Cell) -> bool:
        return all(1 <= c <= n for c, n in zip(cell, self.counts))


@dataclass(frozen=True, eq=False)
class ParameterField:
    expressions: Mapping[str, ExprAst]

    @classmethod
    def from_sources(cls, sources: Mapping[str, Union[str, float, int]]) -> "ParameterField":
        expressions = {}
        for key, source in sources.items():
            if key not in PARAMETER_KEYS:
                raise SpecError(
                    f"unknown parameter key '{key}'; valid keys: {', '.join(PARAMETER_KEYS)}", f"parameters.{key}"
                )
            if isinstance(source, bool) or not isinstance(source, (str, int, float)):
                raise SpecError("expected an expression string or a number", f"parameters.{key}")
            text = source if isinstance(source, str) else repr(float(source))
            try:
                expressions[key] = parse(text)
            except ExpressionError as exc:
                raise ExpressionError(f"parameters.{key}: {exc.reason}", offset=exc.offset, source=text) from exc
        return cls(expressions)

    def __contains__(self, key: str) -> bool:
        return key in self.expressions

    def keys(self) -> FrozenSet[str]:
        return frozenset(self.expressions)

    def sources(self) -> Dict[str, str]:
        return {key: ast.source for key, ast in self.expressions.items()}

    def free_variables(self) -> FrozenSet[str]:
        names = set()
        for ast in self.expressions.values():
            names |= ast.free_variables()
        return frozenset(names)

    def check_variables(self, allowed: FrozenSet[str]) -> None:
        for key, ast in self.expressions.items():
            unknown = sorted(ast.free_variables() - allowed)
            if unknown:
                raise UnboundVariableError(unknown[0], source=ast.source)


@dataclass(frozen=True, eq=False)
class ParameterSet:
    thickness: Optional[Value] = None
    beam_diameter: Optional[Value] = None
    node_scale: Value = DEFAULT_NODE_SCALE
    fillet_ratio: Optional[Value] = None
    trunc: Optional[Value] = None

    @property
    def node_radius(self) -> Optional[Value]:
        if self.beam_diameter is None:
            return None
        return self.node_scale * self.beam_diameter / 2.0

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {k: (None if v is None else float(np.max(v))) for k, v in asdict(self).items()}


def normalized_coords(cell: Cell, grid: CellGrid) -> Tuple[float, float, float]:
    if not grid.contains(cell):
        raise ParameterError(f"cell index outside the {grid.nx}x{grid.ny}x{grid.nz} grid", cell=cell)
    return tuple((c - 1) / max(n - 1, 1) for c, n in zip(cell, grid.counts))


def continuous_coords(space: np.ndarray, grid: CellGrid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized coordinates of points given in cell units; equal to normalized_coords at cell centres"""
    return tuple(
        np.clip((space[..., a] - 0.5) / max(n - 1, 1), 0.0, 1.0) for a, n in enumerate(grid.counts)
    )


def _resolve(ast: ExprAst, bindings: Mapping[str, Value], key: str, cell: Optional[Cell]) -> Value:
    try:
        if any(isinstance(v, np.ndarray) and v.ndim for v in bindings.values()):
            return ast.evaluate_array(bindings)
        return ast.evaluate(bindings)
    except DomainError as exc:
        where = f" at cell {tuple(cell)}" if cell is not None else ""
        raise DomainError(f"{key}{where}: {exc.reason}", offset=exc.offset, source=exc.source) from exc


def _fillet(params: "ParameterSet") -> Value:
    return 0.0 if params.fillet_ratio is None else params.fillet_ratio


def _offending(value: Value, bad) -> float:
    return float(np.broadcast_to(value, np.shape(bad))[bad].flat[0]) if np.ndim(bad) else float(value)


def _check(value: Value, ok, message: str, key: str, cell: Optional[Cell]) -> None:
    bad = ~np.asarray(ok)
    if np.any(bad):
        raise ParameterError(f"{message}, got {_offending(value, bad)!r}", key=key, cell=cell)


def evaluate_parameters(pf: ParameterField, coords: Tuple[Value, Value, Value], grid: CellGrid,
                        cell: Optional[Cell] = None,
                        extra: Optional[Mapping[str, Value]] = None) -> ParameterSet:
    """Resolve and validate every parameter at one point (or a vector of points)"""
    bindings: Dict[str, Value] = {
        "x": coords[0],
        "y": coords[1],
        "z": coords[2],
        "u": grid.u,
        "nx": float(grid.nx),
        "ny": float(grid.ny),
        "nz": float(grid.nz),
    }
    if cell is not None:
        bindings.update({"i": float(cell[0]), "j": float(cell[1]), "k": float(cell[2])})
    if extra:
        bindings.update(extra)

    values: Dict[str, Value] = {
        key: _resolve(ast, bindings, key, cell) for key, ast in pf.expressions.items()
    }

    if "thickness" in values:
        t = values["thickness"]
        _check(t, np.asarray(t) > 0, "thickness must be positive", "thickness", cell)
        _check(t, np.asarray(t) < grid.u / 2, f"thickness must stay below u/2 = {grid.u / 2}", "thickness", cell)
    if "beam_diameter" in values:
        d = values["beam_diameter"]
        _check(d, np.asarray(d) > 0, "beam_diameter must be positive", "beam_diameter", cell)
    if "node_scale" in values:
        s = values["node_scale"]
        _check(s, np.asarray(s) > 0, "node_scale must be positive", "node_scale", cell)
        if np.any(np.asarray(s) < 1.0):
            source = pf.expressions["node_scale"].source
            if source not in _clamp_warnings:
                _clamp_warnings.add(source)
                logger.warning(f"⚠️ node_scale {source!r} falls below 1; nodes are clamped to the beam diameter")
            values["node_scale"] = np.maximum(s, 1.0) if isinstance(s, np.ndarray) else max(s, 1.0)
    if "fillet_ratio" in values:
        f = values["fillet_ratio"]
        _check(f, (np.asarray(f) >= 0) & (np.asarray(f) <= 1), "fillet_ratio must lie in [0, 1]", "fillet_ratio", cell)
    if "trunc" in values:
        tr = values["trunc"]
        _check(tr, (np.asarray(tr) >= 0) & (np.asarray(tr) <= 0.5), "trunc must lie in [0, 0.5]", "trunc", cell)
    return ParameterSet(**values)


# --- composition --------------------------------------------------------------

def check_keys(topology: str, keys: FrozenSet[str], profile: Optional[str]) -> str:
    """Match parameter keys to the topology kind; returns the kind"""
    kind = topology_kind(topology)
    if kind == "tpms":
        stray = sorted(keys - set(TPMS_KEYS))
        if stray:
            raise SpecError(f"'{stray[0]}' does not apply to TPMS topology '{topology}'", f"parameters.{stray[0]}")
        if "thickness" not in keys:
            raise SpecError(f"TPMS topology '{topology}' needs a thickness", "parameters.thickness")
        if profile not in (None, "circle"):
            raise SpecError("TPMS shells take no cross-section profile", "profile")
        return kind
    stray = sorted(keys - set(BEAM_KEYS))
    if stray:
        raise SpecError(f"'{stray[0]}' does not apply to beam topology '{topology}'", f"parameters.{stray[0]}")
    if "beam_diameter" not in keys:
        raise SpecError(f"beam topology '{topology}' needs a beam_diameter", "parameters.beam_diameter")
    if needs_trunc(topology) and "trunc" not in keys:
        raise SpecError(f"'{topology}' needs a trunc fraction", "parameters.trunc")
    if not needs_trunc(topology) and "trunc" in keys:
        raise SpecError(f"'{topology}' takes no trunc parameter", "parameters.trunc")
    variant = profile or "circle"
    if variant not in PROFILE_VARIANTS:
        raise SpecError(f"unknown profile '{variant}'; valid profiles: {', '.join(PROFILE_VARIANTS)}", "profile")
    if variant == "rounded_square" and "fillet_ratio" not in keys:
        raise SpecError("rounded_square profiles need a fillet_ratio", "parameters.fillet_ratio")
    if variant != "rounded_square" and "fillet_ratio" in keys:
        raise SpecError(f"fillet_ratio only applies to rounded_square profiles, not '{variant}'", "parameters.fillet_ratio")
    return kind


class LatticeField:
    """Global F over the lattice: each point is answered by its containing cell's field"""

    def __init__(self, topology: str, kind: str, pf: ParameterField, grid: CellGrid,
                 profile: str, transform: Optional[CylindricalMap]):
        self.topology = topology
        self.kind = kind
        self.parameter_field = pf
        self.grid = grid
        self.profile = profile
        self.transform = transform
        self.surface = tpms_topology(topology, grid.u) if kind == "tpms" else None
        self._parameters: Dict[Cell, ParameterSet] = {}
        self._unit_graphs: Dict[Cell, SkeletalGraph] = {}
        self._graphs: Dict[Cell, SkeletalGraph] = {}
        self._solids: Dict[Cell, ImplicitSolid] = {}

        for cell in grid.cells():
            params = evaluate_parameters(pf, normalized_coords(cell, grid), grid, cell, self._cell_extra(cell))
            self._parameters[cell] = params
            if kind == "beam":
                trunc = float(params.trunc) if params.trunc is not None else None
                unit = beam_topology(topology, trunc, grid.u)
                self._unit_graphs[cell] = unit
                self._graphs[cell] = self._place(unit, cell)
                if grid.mode == "per_cell":
                    self._solids[cell] = beam_cell_field(self._graphs[cell], params, profile)
            elif grid.mode == "per_cell":
                self._solids[cell] = tpms_cell_field(self.surface, params.thickness)

        if transform is None:
            self.lower = (0.0, 0.0, 0.0)
            self.upper = tuple(float(n * grid.u) for n in grid.counts)
        else:
            self.lower, self.upper = transform.bounds(grid)
        self.reach = self._reach()

    def _cell_extra(self, cell: Cell) -> Optional[Dict[str, float]]:
        if self.transform is None:
            return None
        return conformal.conformal_bindings(cell, self.transform, self.grid)

    def _place(self, unit: SkeletalGraph, cell: Cell) -> SkeletalGraph:
        if self.transform is not None:
            return conformal.map_graph(unit, cell, self.transform, self.grid)
        return unit.translated(tuple((c - 1) * self.grid.u for c in cell))

    def _reach(self) -> float:
        """How far the solid may extend past the lattice domain box"""
        if self.kind == "tpms":
            return 0.0
        if self.grid.mode == "continuous":
            samples = (self._cell_samples(cell) for cell in self.grid.cells())
        else:
            samples = self._parameters.values()
        reach = 0.0
        for params in samples:
            section = Profile.for_beam(self.profile, params.beam_diameter, _fillet(params))
            reach = max(reach, float(np.max(params.node_radius)), float(np.max(profile_bound(section))))
        if self.grid.mode == "continuous":
            # peaks between sub-samples
            reach *= CONTINUOUS_REACH_MARGIN
        return reach

    def _cell_samples(self, cell: Cell) -> ParameterSet:
        """Continuous-mode parameters on a lattice of points spanning one cell, faces included"""
        n = max(3, min(REACH_SAMPLES, int(round((REACH_SAMPLE_BUDGET / self.grid.cell_count) ** (1 / 3)))))
        axes = [np.linspace(c - 1, c, n) for c in cell]
        space = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        extra = conformal.continuous_bindings(space, self.grid) if self.transform is not None else None
        return evaluate_parameters(self.parameter_field, continuous_coords(space, self.grid), self.grid, cell, extra)

    # --- queries

    def cell_parameters(self, cell: Cell) -> ParameterSet:
        return self._parameters[tuple(cell)]

    def cell_graph(self, cell: Cell) -> SkeletalGraph:
        """World-space skeletal graph of one cell"""
        return self._graphs[tuple(cell)]

    def unit_graph(self, cell: Cell) -> SkeletalGraph:
        return self._unit_graphs[tuple(cell)]

    def cell_space(self, points: np.ndarray) -> np.ndarray:
        if self.transform is not None:
            return conformal.cell_space(points, self.transform, self.grid)
        return np.asarray(points, dtype=float) / self.grid.u

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """1-based containing cell of each point, clamped to the grid"""
        if self.transform is not None:
            return conformal.cell_of(points, self.transform, self.grid)
        s = np.floor(self.cell_space(points)).astype(np.int64)
        return np.clip(s, 0, np.asarray(self.grid.counts) - 1) + 1

    def _point_parameters(self, cell: Cell, points: np.ndarray) -> ParameterSet:
        space = self.cell_space(points)
        extra = None
        if self.transform is not None:
            extra = conformal.continuous_bindings(space, self.grid)
        params = evaluate_parameters(
            self.parameter_field, continuous_coords(space, self.grid), self.grid, cell, extra
        )
        return params

    def evaluate_cell(self, cell: Cell, points: np.ndarray) -> np.ndarray:
        cell = tuple(int(c) for c in cell)
        if cell in self._solids:
            solid = self._solids[cell]
        else:
            params = self._point_parameters(cell, points)
            if self.kind == "beam":
                solid = beam_cell_field(self._graphs[cell], params, self.profile)
            else:
                solid = tpms_cell_field(self.surface, params.thickness)
        values = solid.evaluate(points)
        if self.kind == "tpms":
            values = np.minimum(values, self._box(points))
        return values

    def _box(self, points: np.ndarray) -> np.ndarray:
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        return np.minimum((points - lower).min(axis=-1), (upper - points).min(axis=-1))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        cells = self.cell_of(points)
        keys, inverse = np.unique(cells, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        values = np.empty(len(points))
        for n, cell in enumerate(keys):
            mask = inverse == n
            values[mask] = self.evaluate_cell(tuple(cell), points[mask])
        return values

    __call__ = evaluate

    def as_solid(self) -> ImplicitSolid:
        lower = tuple(np.asarray(self.lower) - self.reach)
        upper = tuple(np.asarray(self.upper) + self.reach)
        return ImplicitSolid(self.evaluate, lower, upper, name=self.topology)

    def skeleton(self) -> Optional[SkeletalGraph]:
        """Merged skeletal graph of a Cartesian beam lattice (None otherwise)"""
        if self.kind != "beam" or self.transform is not None:
            return None
        return tile_graph(self.unit_graph, self.grid.nx, self.grid.ny, self.grid.nz, self.grid.u)

    def parameter_summary(self) -> Dict[str, Dict[str, float]]:
        """Min/max of each resolved parameter across cells"""
        summary: Dict[str, Dict[str, float]] = {}
        for params in self._parameters.values():
            for key, value in params.to_dict().items():
                if value is None:
                    continue
                if key not in self.parameter_field and not (key == "node_scale" and self.kind == "beam"):
                    continue
                entry = summary.setdefault(key, {"min": value, "max": value})
                entry["min"] = min(entry["min"], value)
                entry["max"] = max(entry["max"], value)
        return summary


def compose(topology: str, pf: ParameterField, grid: CellGrid, profile: Optional[str] = None,
            transform: Optional[CylindricalMap] = None) -> LatticeField:
    """Bind a parameter field to a topology over a cell grid"""
    kind = check_keys(topology, pf.keys(), profile)
    allowed = LATTICE_VARIABLES
    if transform is not None:
        if kind != "beam":
            raise SpecError("cylindrical transforms apply to beam topologies only", "transform")
        transform.check_grid(grid)
        allowed = allowed | CONFORMAL_VARIABLES
    pf.check_variables(allowed)
    field_ = LatticeField(topology, kind, pf, grid, profile or "circle", transform)
    logger.info(
        f"🧩 Composed {topology} over {grid.nx}x{grid.ny}x{grid.nz} cells ({grid.mode}, u={grid.u})"
    )
    return field_
