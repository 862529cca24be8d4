"""
Catalog of unit-cell topologies.

Beam topologies are skeletal graphs: the line segments listed for each
topology are generated in unit-cell fractions, then welded into a graph whose
vertices include every segment end point and every point where two segments
cross or touch. Composite topologies (FBCC, BCCz, ...) are plain unions of
their constituent segment lists.

TPMS topologies are implicit surfaces f(X) = 0 with one period per unit cell.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from errors import SpecError

logger = logging.getLogger(__name__)

Point = Tuple[float, float, float]
Segment = Tuple[Point, Point]

BEAM_TOPOLOGIES = (
    "cubic",
    "bcc",
    "fcc",
    "s_fcc",
    "bccz",
    "fccz",
    "s_fccz",
    "fbcc",
    "s_fbcc",
    "s_fbccz",
    "diamond",
    "rhombicuboctahedron",
    "truncated_cube",
)
TPMS_TOPOLOGIES = ("gyroid", "schwarz_p", "schwarz_d")
TRUNCATED_TOPOLOGIES = frozenset({"rhombicuboctahedron", "truncated_cube"})

# Tolerance in unit-cell fractions (i.e. 1e-9 * u)
_TOL = 1e-9


def topology_kind(name: str) -> str:
    if name in BEAM_TOPOLOGIES:
        return "beam"
    if name in TPMS_TOPOLOGIES:
        return "tpms"
    valid = ", ".join(BEAM_TOPOLOGIES + TPMS_TOPOLOGIES)
    raise SpecError(f"unknown topology '{name}'; valid ids: {valid}", "topology")


def needs_trunc(name: str) -> bool:
    return name in TRUNCATED_TOPOLOGIES


# --- skeletal graphs ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SkeletalGraph:
    """Vertices (V, 3) in world units, edges (E, 2) as vertex-index pairs"""

    name: str
    vertices: np.ndarray
    edges: np.ndarray
    node_vertices: Tuple[int, ...]
    u: float

    def __post_init__(self):
        self.vertices.setflags(write=False)
        self.edges.setflags(write=False)

    @property
    def vertex_count(self) -> int:
        return int(len(self.vertices))

    @property
    def edge_count(self) -> int:
        return int(len(self.edges))

    @property
    def component_count(self) -> int:
        if self.vertex_count == 0:
            return 0
        n = self.vertex_count
        adjacency = coo_matrix(
            (np.ones(len(self.edges)), (self.edges[:, 0], self.edges[:, 1])), shape=(n, n)
        )
        count, _ = connected_components(adjacency, directed=False)
        return int(count)

    @property
    def betti_number(self) -> int:
        """First Betti number E - V + C (independent cycles)"""
        return self.edge_count - self.vertex_count + self.component_count

    def segments(self) -> np.ndarray:
        """(E, 2, 3) array of edge end points"""
        return self.vertices[self.edges]

    def edge_lengths(self) -> np.ndarray:
        seg = self.segments()
        return np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1)

    def translated(self, offset: Sequence[float]) -> "SkeletalGraph":
        return self.with_vertices(self.vertices + np.asarray(offset, dtype=float))

    def with_vertices(self, vertices: np.ndarray) -> "SkeletalGraph":
        return SkeletalGraph(
            name=self.name,
            vertices=np.array(vertices, dtype=float),
            edges=self.edges.copy(),
            node_vertices=self.node_vertices,
            u=self.u,
        )

    def edge_keys(self, decimals: int = 6) -> frozenset:
        """Order-independent set of rounded end-point pairs, for geometric comparison"""
        keys = set()
        for a, b in self.segments():
            pa = tuple(np.round(a, decimals) + 0.0)
            pb = tuple(np.round(b, decimals) + 0.0)
            keys.add((pa, pb) if pa <= pb else (pb, pa))
        return frozenset(keys)

    def __repr__(self) -> str:
        return f"<SkeletalGraph {self.name} V={self.vertex_count} E={self.edge_count}>"


def _cross_params(p1, d1, p2, d2) -> Optional[Tuple[float, float]]:
    """Parameters where two non-parallel lines come closest, or None if parallel"""
    a = float(d1 @ d1)
    b = float(d1 @ d2)
    c = float(d2 @ d2)
    denom = a * c - b * b
    if denom <= 1e-12 * a * c:
        return None
    r = p1 - p2
    d = float(d1 @ r)
    e = float(d2 @ r)
    return (b * e - c * d) / denom, (a * e - b * d) / denom


class _VertexPool:
    """Greedy vertex welding within a fixed tolerance, insertion ordered"""

    def __init__(self, tolerance: float):
        self.tolerance = tolerance
        self.points: List[np.ndarray] = []

    def index(self, point: np.ndarray) -> int:
        if self.points:
            distances = np.linalg.norm(np.asarray(self.points) - point, axis=1)
            nearest = int(np.argmin(distances))
            if distances[nearest] < self.tolerance:
                return nearest
        self.points.append(np.asarray(point, dtype=float))
        return len(self.points) - 1

    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float).reshape(-1, 3)


def build_graph(name: str, segments: Iterable[Segment], u: float = 1.0) -> SkeletalGraph:
    """Weld raw segments (unit-cell fractions) into a skeletal graph scaled by u"""
    raw = np.asarray(list(segments), dtype=float).reshape(-1, 2, 3)
    lengths = np.linalg.norm(raw[:, 1] - raw[:, 0], axis=1)
    raw = raw[lengths > _TOL]

    pool = _VertexPool(_TOL)
    for p, q in raw:
        pool.index(p)
        pool.index(q)

    # crossings between segments become vertices too
    for a in range(len(raw)):
        p1, d1 = raw[a, 0], raw[a, 1] - raw[a, 0]
        for b in range(a + 1, len(raw)):
            p2, d2 = raw[b, 0], raw[b, 1] - raw[b, 0]
            params = _cross_params(p1, d1, p2, d2)
            if params is None:
                continue
            s, t = params
            if not (-_TOL <= s <= 1 + _TOL and -_TOL <= t <= 1 + _TOL):
                continue
            x1 = p1 + s * d1
            if np.linalg.norm(x1 - (p2 + t * d2)) < _TOL:
                pool.index(x1)

    vertices = pool.array()
    edges = set()
    for p, q in raw:
        d = q - p
        length2 = float(d @ d)
        t = (vertices - p) @ d / length2
        foot = p + np.outer(t, d)
        on_segment = (np.linalg.norm(vertices - foot, axis=1) < _TOL) & (t > -_TOL) & (t < 1 + _TOL)
        hits = np.nonzero(on_segment)[0]
        ordered = hits[np.argsort(t[hits], kind="stable")]
        for first, second in zip(ordered[:-1], ordered[1:]):
            if first != second:
                edges.add((int(min(first, second)), int(max(first, second))))

    edge_array = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    used = np.unique(edge_array)
    # drop isolated points (only possible from degenerate input)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    vertices = vertices[used] * u
    edge_array = remap[edge_array]
    return SkeletalGraph(
        name=name,
        vertices=vertices,
        edges=edge_array,
        node_vertices=tuple(range(len(vertices))),
        u=float(u),
    )


# --- segment tables (unit-cell fractions) ----------------------------------

def _cubic() -> List[Segment]:
    segments = []
    for a, b in product((0.0, 1.0), repeat=2):
        segments.append(((0.0, a, b), (1.0, a, b)))
        segments.append(((a, 0.0, b), (a, 1.0, b)))
        segments.append(((a, b, 0.0), (a, b, 1.0)))
    return segments


def _bcc() -> List[Segment]:
    return [
        ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
        ((1.0, 0.0, 0.0), (0.0, 1.0, 1.0)),
        ((0.0, 0.0, 1.0), (1.0, 1.0, 0.0)),
        ((1.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
    ]


def _s_fcc() -> List[Segment]:
    segments = []
    for a in (0.0, 1.0):
        # side faces x = a and y = a, diagonals z = y, z = 1 - y (resp. x)
        segments.append(((a, 0.0, 0.0), (a, 1.0, 1.0)))
        segments.append(((a, 0.0, 1.0), (a, 1.0, 0.0)))
        segments.append(((0.0, a, 0.0), (1.0, a, 1.0)))
        segments.append(((1.0, a, 0.0), (0.0, a, 1.0)))
    return segments


def _fcc() -> List[Segment]:
    segments = _s_fcc()
    for c in (0.0, 1.0):
        segments.append(((0.0, 0.0, c), (1.0, 1.0, c)))
        segments.append(((1.0, 0.0, c), (0.0, 1.0, c)))
    return segments


def _vertical() -> List[Segment]:
    return [((a, b, 0.0), (a, b, 1.0)) for a, b in product((0.0, 1.0), repeat=2)]


def _diamond() -> List[Segment]:
    # four z-slabs of tetrahedral bonds, bottom to top
    a, b, c = 0.25, 0.5, 0.75
    return [
        ((1.0, 0.0, 0.0), (c, a, a)),
        ((b, b, 0.0), (c, a, a)),
        ((b, b, 0.0), (a, c, a)),
        ((0.0, 1.0, 0.0), (a, c, a)),
        ((c, a, a), (b, 0.0, b)),
        ((c, a, a), (1.0, b, b)),
        ((a, c, a), (b, 1.0, b)),
        ((a, c, a), (0.0, b, b)),
        ((b, 0.0, b), (a, a, c)),
        ((0.0, b, b), (a, a, c)),
        ((1.0, b, b), (c, c, c)),
        ((b, 1.0, b), (c, c, c)),
        ((a, a, c), (0.0, 0.0, 1.0)),
        ((a, a, c), (b, b, 1.0)),
        ((c, c, c), (b, b, 1.0)),
        ((c, c, c), (1.0, 1.0, 1.0)),
    ]


def _place(axis: int, level: float, p: float, q: float) -> Point:
    """Point with coordinate `level` on `axis` and (p, q) on the other two axes in order"""
    coords = [p, q]
    coords.insert(axis, level)
    return (coords[0], coords[1], coords[2])


def _corner_cuts(axis: int, level: float, t: float) -> List[Segment]:
    """Four short diagonals cutting the corners of the square [0,1]^2 in a plane"""
    cuts = [
        ((0.0, t), (t, 0.0)),
        ((1.0 - t, 0.0), (1.0, t)),
        ((0.0, 1.0 - t), (t, 1.0)),
        ((1.0 - t, 1.0), (1.0, 1.0 - t)),
    ]
    return [(_place(axis, level, *a), _place(axis, level, *b)) for a, b in cuts]


def _face_square(axis: int, level: float, t: float) -> List[Segment]:
    lo, hi = t, 1.0 - t
    corners = [(lo, lo), (hi, lo), (hi, hi), (lo, hi)]
    return [
        (_place(axis, level, *corners[n]), _place(axis, level, *corners[(n + 1) % 4]))
        for n in range(4)
    ]


def _rhombicuboctahedron(t: float) -> List[Segment]:
    segments = []
    for axis in range(3):
        for level in (t, 1.0 - t):
            segments.extend(_corner_cuts(axis, level, t))
        for level in (0.0, 1.0):
            segments.extend(_face_square(axis, level, t))
    return segments


def _truncated_cube(t: float) -> List[Segment]:
    segments = []
    for axis in range(3):
        for level in (0.0, 1.0):
            segments.extend(_corner_cuts(axis, level, t))
        for a, b in product((0.0, 1.0), repeat=2):
            segments.append((_place(axis, t, a, b), _place(axis, 1.0 - t, a, b)))
    return segments


_SEGMENT_TABLES: Dict[str, Callable[[], List[Segment]]] = {
    "cubic": _cubic,
    "bcc": _bcc,
    "fcc": _fcc,
    "s_fcc": _s_fcc,
    "diamond": _diamond,
}

COMPOSITES: Dict[str, Tuple[str, ...]] = {
    "bccz": ("bcc", "vertical"),
    "fccz": ("fcc", "vertical"),
    "s_fccz": ("s_fcc", "vertical"),
    "fbcc": ("bcc", "fcc"),
    "s_fbcc": ("bcc", "s_fcc"),
    "s_fbccz": ("bcc", "s_fcc", "vertical"),
}


def _segments_for(name: str, trunc: Optional[float]) -> List[Segment]:
    if name == "vertical":
        return _vertical()
    if name == "rhombicuboctahedron":
        return _rhombicuboctahedron(float(trunc))
    if name == "truncated_cube":
        return _truncated_cube(float(trunc))
    if name in COMPOSITES:
        segments = []
        for part in COMPOSITES[name]:
            segments.extend(_segments_for(part, None))
        return segments
    return _SEGMENT_TABLES[name]()


@lru_cache(maxsize=512)
def _cached_graph(name: str, trunc: Optional[float], u: float) -> SkeletalGraph:
    graph = build_graph(name, _segments_for(name, trunc), u)
    logger.debug(f"🔧 Built {name} skeleton (trunc={trunc}): V={graph.vertex_count} E={graph.edge_count}")
    return graph


def beam_topology(name: str, trunc: Optional[float] = None, u: float = 1.0) -> SkeletalGraph:
    """Skeletal graph of a beam topology spanning [0, u]^3"""
    if name not in BEAM_TOPOLOGIES:
        if name in TPMS_TOPOLOGIES:
            raise SpecError(f"'{name}' is a TPMS topology, not a beam topology", "topology")
        topology_kind(name)
    if not u > 0:
        raise SpecError(f"unit cell size must be positive, got {u}", "u")
    if needs_trunc(name):
        if trunc is None:
            raise SpecError(f"'{name}' requires a trunc fraction in [0, 0.5]", "parameters.trunc")
        trunc = float(trunc)
        if not 0.0 <= trunc <= 0.5:
            raise SpecError(f"trunc must lie in [0, 0.5], got {trunc}", "parameters.trunc")
    elif trunc is not None:
        raise SpecError(f"'{name}' takes no trunc parameter", "parameters.trunc")
    return _cached_graph(name, trunc, float(u))


def tile_graph(graph_for_cell: Callable[[Tuple[int, int, int]], SkeletalGraph],
               nx: int, ny: int, nz: int, u: float) -> SkeletalGraph:
    """Merge per-cell graphs of an nx*ny*nz lattice, welding shared vertices"""
    points = []
    pairs = []
    offset = 0
    name = ""
    for i, j, k in product(range(1, nx + 1), range(1, ny + 1), range(1, nz + 1)):
        cell_graph = graph_for_cell((i, j, k)).translated(((i - 1) * u, (j - 1) * u, (k - 1) * u))
        name = cell_graph.name
        points.append(cell_graph.vertices)
        pairs.append(cell_graph.edges + offset)
        offset += cell_graph.vertex_count
    all_points = np.concatenate(points)
    keys = np.round(all_points / (u * 1e-6)).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    edges = inverse[np.concatenate(pairs)]
    edges = np.sort(edges, axis=1)
    edges = edges[edges[:, 0] != edges[:, 1]]
    edges = np.unique(edges, axis=0)
    vertices = all_points[first]
    return SkeletalGraph(
        name=f"{name}[{nx}x{ny}x{nz}]",
        vertices=vertices,
        edges=edges,
        node_vertices=tuple(range(len(vertices))),
        u=float(u),
    )


# --- implicit surfaces and solids -------------------------------------------

def _gyroid(x, y, z):
    return np.sin(x) * np.cos(y) + np.sin(y) * np.cos(z) + np.sin(z) * np.cos(x)


def _schwarz_p(x, y, z):
    return np.cos(x) + np.cos(y) + np.cos(z)


def _schwarz_d(x, y, z):
    return np.cos(x) * np.cos(y) * np.cos(z) - np.sin(x) * np.sin(y) * np.sin(z)


_TPMS_FUNCTIONS = {"gyroid": _gyroid, "schwarz_p": _schwarz_p, "schwarz_d": _schwarz_d}


@dataclass(frozen=True)
class ImplicitSurface:
    """Periodic surface f(X) = 0, one period per unit cell of size u"""

    name: str
    u: float
    function: Callable = field(repr=False)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        scale = 2.0 * math.pi / self.u
        return self.function(points[..., 0] * scale, points[..., 1] * scale, points[..., 2] * scale)

    __call__ = evaluate

    def gradient(self, points: np.ndarray, step: Optional[float] = None) -> np.ndarray:
        """Central-difference gradient, step defaults to u * 1e-4"""
        points = np.asarray(points, dtype=float)
        h = self.u * 1e-4 if step is None else step
        grad = np.empty(points.shape, dtype=float)
        for axis in range(3):
            delta = np.zeros(3)
            delta[axis] = h
            grad[..., axis] = (self.evaluate(points + delta) - self.evaluate(points - delta)) / (2.0 * h)
        return grad


def tpms_topology(name: str, u: float) -> ImplicitSurface:
    if name not in TPMS_TOPOLOGIES:
        if name in BEAM_TOPOLOGIES:
            raise SpecError(f"'{name}' is a beam topology, not a TPMS topology", "topology")
        topology_kind(name)
    if not u > 0:
        raise SpecError(f"unit cell size must be positive, got {u}", "u")
    return ImplicitSurface(name=name, u=float(u), function=_TPMS_FUNCTIONS[name])


@dataclass(frozen=True)
class ImplicitSolid:
    """Scalar field with F >= 0 inside; bounded solids carry an axis-aligned box"""

    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lower: Optional[Tuple[float, float, float]] = None
    upper: Optional[Tuple[float, float, float]] = None
    name: str = "solid"

    @property
    def bounded(self) -> bool:
        return self.lower is not None and self.upper is not None

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.evaluator(np.asarray(points, dtype=float))

    __call__ = evaluate


def torus_primitive(R: float, r: float) -> ImplicitSolid:
    if not (R > r > 0):
        raise SpecError(f"torus needs R > r > 0, got R={R}, r={r}")

    def evaluate(points: np.ndarray) -> np.ndarray:
        ring = np.hypot(points[..., 0], points[..., 1]) - R
        return r * r - ring * ring - points[..., 2] ** 2

    reach = R + r
    return ImplicitSolid(evaluate, (-reach, -reach, -r), (reach, reach, r), name="torus")


def sphere_primitive(radius: float, centre: Sequence[float] = (0.0, 0.0, 0.0)) -> ImplicitSolid:
    if not radius > 0:
        raise SpecError(f"sphere radius must be positive, got {radius}")
    c = np.asarray(centre, dtype=float)

    def evaluate(points: np.ndarray) -> np.ndarray:
        return radius - np.linalg.norm(points - c, axis=-1)

    return ImplicitSolid(evaluate, tuple(c - radius), tuple(c + radius), name="sphere")


# --- catalog metadata -------------------------------------------------------

# trunc used when reporting counts of the truncated topologies
CATALOG_TRUNC = 0.25


def catalog_entry(name: str) -> Dict[str, object]:
    kind = topology_kind(name)
    entry: Dict[str, object] = {"name": name, "kind": kind, "needs_trunc": needs_trunc(name)}
    if kind == "beam":
        graph = beam_topology(name, CATALOG_TRUNC if needs_trunc(name) else None)
        entry.update(
            {
                "vertices": graph.vertex_count,
                "edges": graph.edge_count,
                "betti_number": graph.betti_number,
                "composed_of": list(COMPOSITES.get(name, ())),
            }
        )
        if needs_trunc(name):
            entry["counts_at_trunc"] = CATALOG_TRUNC
    return entry


def catalog() -> List[Dict[str, object]]:
    return [catalog_entry(name) for name in BEAM_TOPOLOGIES + TPMS_TOPOLOGIES]
