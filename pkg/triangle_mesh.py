"""
Indexed triangle meshes: welding, topology diagnostics and ray probes.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from errors import MeshingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64, counter-clockwise seen from outside

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def vertex_count(self) -> int:
        return int(len(self.vertices))

    @property
    def triangle_count(self) -> int:
        return int(len(self.triangles))

    @property
    def is_empty(self) -> bool:
        return self.triangle_count == 0

    def corners(self) -> np.ndarray:
        """(T, 3, 3) triangle corner coordinates"""
        return self.vertices[self.triangles]

    def face_normals(self) -> np.ndarray:
        """Unit normals from winding; zero for degenerate faces"""
        c = self.corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)

    def signed_volume(self) -> float:
        c = self.corners()
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)]
        return used.min(axis=0), used.max(axis=0)

    def flipped(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.triangles[:, ::-1].copy())

    def __repr__(self) -> str:
        return f"<TriangleMesh V={self.vertex_count} T={self.triangle_count}>"


def weld_vertices(mesh: TriangleMesh, epsilon: float) -> TriangleMesh:
    """Merge vertices closer than epsilon, drop collapsed faces and unused vertices"""
    if mesh.is_empty:
        return mesh
    keys = np.round(mesh.vertices / epsilon).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    triangles = inverse[mesh.triangles]
    keep = (
        (triangles[:, 0] != triangles[:, 1])
        & (triangles[:, 1] != triangles[:, 2])
        & (triangles[:, 2] != triangles[:, 0])
    )
    triangles = triangles[keep]
    vertices = mesh.vertices[first]

    used = np.unique(triangles)
    remap = np.full(len(vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    dropped = int((~keep).sum())
    if dropped:
        logger.debug(f"🧹 Weld dropped {dropped} collapsed triangles")
    return TriangleMesh(vertices[used], remap[triangles])


@dataclass
class MeshReport:
    vertices: int
    edges: int
    triangles: int
    euler_characteristic: int
    genus: Optional[int]
    component_genus: List[Optional[int]]
    components: int
    watertight: bool
    boundary_edges: int
    non_manifold_edges: int
    volume: float
    bbox_min: List[float]
    bbox_max: List[float]

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def _edge_table(triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    edges.sort(axis=1)
    return np.unique(edges, axis=0, return_counts=True)


def mesh_diagnostics(mesh: TriangleMesh) -> MeshReport:
    """Counts, Euler characteristic, per-component genus, watertightness, volume, bbox"""
    if mesh.is_empty:
        raise MeshingError("cannot diagnose an empty mesh")
    triangles = mesh.triangles
    edges, counts = _edge_table(triangles)
    used = np.unique(triangles)

    n = mesh.vertex_count
    adjacency = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, labels = connected_components(adjacency, directed=False)
    # relabel components to 0..C-1 in order of first referenced vertex
    component_ids, labels_used = np.unique(labels[used], return_inverse=True)
    label_of = np.full(n, -1, dtype=np.int64)
    label_of[used] = labels_used.reshape(-1)
    component_count = len(component_ids)

    v_per = np.bincount(label_of[used], minlength=component_count)
    e_per = np.bincount(label_of[edges[:, 0]], minlength=component_count)
    f_per = np.bincount(label_of[triangles[:, 0]], minlength=component_count)
    bad_per = np.bincount(label_of[edges[counts != 2, 0]], minlength=component_count)

    component_genus: List[Optional[int]] = []
    for c in range(component_count):
        chi_c = int(v_per[c] - e_per[c] + f_per[c])
        closed = bad_per[c] == 0
        component_genus.append((2 - chi_c) // 2 if closed and chi_c % 2 == 0 else None)

    boundary = int((counts == 1).sum())
    non_manifold = int((counts > 2).sum())
    watertight = boundary == 0 and non_manifold == 0
    chi = int(len(used) - len(edges) + len(triangles))
    genus = sum(component_genus) if all(g is not None for g in component_genus) else None
    lo, hi = mesh.bounds()

    if not watertight:
        logger.warning(f"⚠️ Mesh is not watertight: {boundary} boundary, {non_manifold} non-manifold edges")

    return MeshReport(
        vertices=int(len(used)),
        edges=int(len(edges)),
        triangles=int(len(triangles)),
        euler_characteristic=chi,
        genus=genus,
        component_genus=component_genus,
        components=int(component_count),
        watertight=watertight,
        boundary_edges=boundary,
        non_manifold_edges=non_manifold,
        volume=mesh.signed_volume(),
        bbox_min=[float(v) for v in lo],
        bbox_max=[float(v) for v in hi],
    )


def ray_hits(mesh: TriangleMesh, origin, direction, epsilon: float = 1e-12) -> np.ndarray:
    """Sorted ray parameters t > 0 where origin + t*direction crosses a triangle"""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    c = mesh.corners()
    e1 = c[:, 1] - c[:, 0]
    e2 = c[:, 2] - c[:, 0]
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > epsilon
    inv = np.zeros_like(det)
    inv[ok] = 1.0 / det[ok]
    s = origin - c[:, 0]
    a = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    b = (q @ direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (a >= 0.0) & (b >= 0.0) & (a + b <= 1.0) & (t > epsilon)
    return np.sort(t[hit])


def shell_thickness(mesh: TriangleMesh, point, normal) -> float:
    """Distance between the nearest surface crossings on either side of an interior point"""
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    ahead = ray_hits(mesh, point, normal)
    behind = ray_hits(mesh, point, -normal)
    if len(ahead) == 0 or len(behind) == 0:
        raise MeshingError(f"probe at {tuple(point)} does not cross the surface on both sides")
    return float(ahead[0] + behind[0])
