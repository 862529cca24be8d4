"""
Spec documents, STL export and run reports.

A spec document is a JSON object::

    {
      "name": "bcc-parabola",
      "topology": "bcc",
      "u": 10,
      "N": [20, 6, 6],
      "parameters": {"beam_diameter": "-4*6*(x-0.5)^2 + 6 + 1", "node_scale": "1.1"},
      "resolution": 48
    }

Parameter keys may also sit at the top level. See lattice_spec_format.md.
"""

import json
import logging
import math
import re
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Any, Dict, Iterator, Mapping, Optional, Tuple, Union

import numpy as np

from conformal import CylindricalMap
from errors import ExportError, LatticeIOError, SpecError
from lattice_mesher import DEFAULT_BEAM_RESOLUTION, DEFAULT_TPMS_RESOLUTION, MIN_RESOLUTION
from parameter_field import (
    CONFORMAL_VARIABLES,
    LATTICE_VARIABLES,
    MODES,
    PARAMETER_KEYS,
    CellGrid,
    LatticeField,
    ParameterField,
    check_keys,
    compose,
)
from topology import topology_kind
from triangle_mesh import MeshReport, TriangleMesh

logger = logging.getLogger(__name__)

Sink = Union[str, Path, IO[bytes]]

FORMATS = ("binary", "ascii")
STL_HEADER_TAG = b"lattice generator binary STL"
STL_RECORD = np.dtype([("normal", "<f4", (3,)), ("vertices", "<f4", (3, 3)), ("attribute", "<u2")])

_DOCUMENT_FIELDS = frozenset(
    {"name", "topology", "kind", "u", "N", "profile", "parameters", "mode", "resolution", "transform", "format"}
)


@dataclass(frozen=True)
class LatticeSpec:
    topology: str
    kind: str
    u: float
    counts: Tuple[int, int, int]
    parameters: Dict[str, str] = field(default_factory=dict)
    name: str = "lattice"
    profile: Optional[str] = None
    mode: str = "per_cell"
    resolution: int = DEFAULT_BEAM_RESOLUTION
    transform: Optional[CylindricalMap] = None
    format: str = "binary"

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.counts))

    def cell_grid(self) -> CellGrid:
        return CellGrid(*self.counts, u=self.u, mode=self.mode)

    def parameter_field(self) -> ParameterField:
        return ParameterField.from_sources(self.parameters)

    def compose(self) -> LatticeField:
        return compose(self.topology, self.parameter_field(), self.cell_grid(), self.profile, self.transform)

    def with_overrides(self, **overrides: Any) -> "LatticeSpec":
        """Copy with non-None overrides applied and re-validated"""
        changes = {key: value for key, value in overrides.items() if value is not None}
        if not changes:
            return self
        return spec_from_document(to_document(replace(self, **changes)))


# --- loading -------------------------------------------------------------------

def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SpecError(f"expected a finite number, got {value!r}", path)
    return float(value)


def _positive_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise SpecError(f"expected a positive integer, got {value!r}", path)
    return value


def _expression_text(value: Any, path: str) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, float) and math.isfinite(value):
        return repr(value)
    raise SpecError(f"expected an expression string or a number, got {value!r}", path)


def _transform(value: Any) -> Optional[CylindricalMap]:
    if value is None:
        return None
    if not isinstance(value, dict):
        raise SpecError("expected an object like {\"type\": \"cylindrical\", \"inner_radius\": 50}", "transform")
    unknown = sorted(set(value) - {"type", "inner_radius"})
    if unknown:
        raise SpecError(f"unknown field '{unknown[0]}'", f"transform.{unknown[0]}")
    if value.get("type") != "cylindrical":
        raise SpecError(f"only cylindrical transforms are supported, got {value.get('type')!r}", "transform.type")
    if "inner_radius" not in value:
        raise SpecError("missing inner_radius", "transform.inner_radius")
    radius = _number(value["inner_radius"], "transform.inner_radius")
    return CylindricalMap(radius)


def spec_from_document(document: Any) -> LatticeSpec:
    """Validate a decoded spec document and apply defaults"""
    if not isinstance(document, dict):
        raise SpecError("spec document must be a JSON object")
    for key in document:
        if key not in _DOCUMENT_FIELDS and key not in PARAMETER_KEYS:
            raise SpecError("unknown field", key)

    topology = document.get("topology")
    if not isinstance(topology, str):
        raise SpecError("missing or non-text topology id", "topology")
    kind = topology_kind(topology)
    if "kind" in document and document["kind"] != kind:
        raise SpecError(f"topology '{topology}' is a {kind} topology, not {document['kind']!r}", "kind")

    if "u" not in document:
        raise SpecError("missing unit cell size", "u")
    u = _number(document["u"], "u")
    if u <= 0:
        raise SpecError(f"unit cell size must be positive, got {u}", "u")

    counts_doc = document.get("N")
    if not isinstance(counts_doc, list) or len(counts_doc) != 3:
        raise SpecError("expected [Nx, Ny, Nz]", "N")
    counts = tuple(_positive_int(c, f"N[{n}]") for n, c in enumerate(counts_doc))

    nested = document.get("parameters", {})
    if not isinstance(nested, dict):
        raise SpecError("expected an object of parameter expressions", "parameters")
    parameters: Dict[str, str] = {}
    for key, value in nested.items():
        parameters[key] = _expression_text(value, f"parameters.{key}")
    for key in PARAMETER_KEYS:
        if key in document:
            if key in parameters:
                raise SpecError("given both at top level and under parameters", key)
            parameters[key] = _expression_text(document[key], key)

    profile = document.get("profile")
    if profile is not None and not isinstance(profile, str):
        raise SpecError("expected a profile name", "profile")
    if kind == "beam" and profile is None:
        profile = "circle"

    transform = _transform(document.get("transform"))
    pf = ParameterField.from_sources(parameters)
    check_keys(topology, pf.keys(), profile)
    if transform is not None and kind != "beam":
        raise SpecError("cylindrical transforms apply to beam topologies only", "transform")
    pf.check_variables(LATTICE_VARIABLES | CONFORMAL_VARIABLES if transform else LATTICE_VARIABLES)

    mode = document.get("mode", "per_cell")
    if mode not in MODES:
        raise SpecError(f"mode must be one of {', '.join(MODES)}, got {mode!r}", "mode")

    default_resolution = DEFAULT_BEAM_RESOLUTION if kind == "beam" else DEFAULT_TPMS_RESOLUTION
    resolution = _positive_int(document.get("resolution", default_resolution), "resolution")
    if resolution < MIN_RESOLUTION:
        raise SpecError(f"resolution must be at least {MIN_RESOLUTION}, got {resolution}", "resolution")

    output_format = document.get("format", "binary")
    if output_format not in FORMATS:
        raise SpecError(f"format must be one of {', '.join(FORMATS)}, got {output_format!r}", "format")

    name = document.get("name", "lattice")
    if not isinstance(name, str) or not name.strip():
        raise SpecError("expected a non-empty name", "name")

    spec = LatticeSpec(
        topology=topology,
        kind=kind,
        u=u,
        counts=counts,
        parameters=parameters,
        name=name,
        profile=profile,
        mode=mode,
        resolution=resolution,
        transform=transform,
        format=output_format,
    )
    if transform is not None:
        transform.check_grid(spec.cell_grid())
    return spec


def load_spec(text: Union[str, bytes]) -> LatticeSpec:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from exc
    return spec_from_document(document)


def read_spec_file(path: Union[str, Path]) -> LatticeSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise LatticeIOError(f"cannot read spec {path}: {exc}") from exc
    return load_spec(text)


def to_document(spec: LatticeSpec) -> Dict[str, Any]:
    document: Dict[str, Any] = {
        "name": spec.name,
        "topology": spec.topology,
        "kind": spec.kind,
        "u": spec.u,
        "N": list(spec.counts),
        "parameters": dict(spec.parameters),
        "mode": spec.mode,
        "resolution": spec.resolution,
        "format": spec.format,
    }
    if spec.profile is not None:
        document["profile"] = spec.profile
    if spec.transform is not None:
        document["transform"] = spec.transform.to_dict()
    return document


def emit_spec(spec: LatticeSpec) -> str:
    return json.dumps(to_document(spec), indent=2)


# --- convenience constructors ------------------------------------------------------

def _build(topology: str, u: float, nx: int, ny: int, nz: int, parameters: Mapping[str, Any],
           inner_radius: Optional[float] = None, **options: Any) -> LatticeSpec:
    document: Dict[str, Any] = {
        "topology": topology,
        "u": u,
        "N": [nx, ny, nz],
        "parameters": {k: v for k, v in parameters.items() if v is not None},
    }
    document.update({k: v for k, v in options.items() if v is not None})
    if inner_radius is not None:
        document["transform"] = {"type": "cylindrical", "inner_radius": inner_radius}
    return spec_from_document(document)


def schwarz_lattice(u: float, nx: int, ny: int, nz: int, thickness: Union[str, float], **options: Any) -> LatticeSpec:
    """Schwarz P shell lattice with a thickness field"""
    return _build("schwarz_p", u, nx, ny, nz, {"thickness": thickness}, **options)


def gyroid_lattice(u: float, nx: int, ny: int, nz: int, thickness: Union[str, float], **options: Any) -> LatticeSpec:
    return _build("gyroid", u, nx, ny, nz, {"thickness": thickness}, **options)


def schwarz_d_lattice(u: float, nx: int, ny: int, nz: int, thickness: Union[str, float], **options: Any) -> LatticeSpec:
    return _build("schwarz_d", u, nx, ny, nz, {"thickness": thickness}, **options)


def beam_lattice(topology: str, u: float, nx: int, ny: int, nz: int, beam_diameter: Union[str, float],
                 node_scale: Union[str, float, None] = None, profile: Optional[str] = None,
                 fillet_ratio: Union[str, float, None] = None, trunc: Union[str, float, None] = None,
                 **options: Any) -> LatticeSpec:
    """Beam lattice of any catalog topology; `inner_radius=` makes it cylindrical"""
    parameters = {
        "beam_diameter": beam_diameter,
        "node_scale": node_scale,
        "fillet_ratio": fillet_ratio,
        "trunc": trunc,
    }
    return _build(topology, u, nx, ny, nz, parameters, profile=profile, **options)


# --- STL ---------------------------------------------------------------------------

@contextmanager
def _binary_sink(sink: Sink) -> Iterator[IO[bytes]]:
    if isinstance(sink, (str, Path)):
        path = Path(sink)
        try:
            if path.parent and not path.parent.exists():
                path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "wb") as handle:
                yield handle
        except OSError as exc:
            raise ExportError(f"cannot write {path}: {exc}") from exc
    else:
        try:
            yield sink
        except OSError as exc:
            raise ExportError(f"cannot write to sink: {exc}") from exc


def _require_triangles(mesh: TriangleMesh) -> None:
    if mesh.is_empty:
        raise ExportError("refusing to export an empty mesh")


def stl_binary_bytes(mesh: TriangleMesh) -> bytes:
    _require_triangles(mesh)
    records = np.zeros(mesh.triangle_count, dtype=STL_RECORD)
    records["normal"] = mesh.face_normals()
    records["vertices"] = mesh.corners()
    header = STL_HEADER_TAG.ljust(80, b"\x00")
    return header + np.uint32(mesh.triangle_count).astype("<u4").tobytes() + records.tobytes()


def write_stl_binary(mesh: TriangleMesh, sink: Sink) -> int:
    """80-byte header, little-endian uint32 count, 50 bytes per triangle; returns bytes written"""
    payload = stl_binary_bytes(mesh)
    with _binary_sink(sink) as handle:
        handle.write(payload)
    return len(payload)


def stl_ascii_text(mesh: TriangleMesh, name: str = "lattice") -> str:
    _require_triangles(mesh)
    solid = re.sub(r"\s+", "_", name.strip()) or "lattice"
    lines = [f"solid {solid}"]
    for normal, corners in zip(mesh.face_normals(), mesh.corners()):
        lines.append("  facet normal {:.9g} {:.9g} {:.9g}".format(*normal))
        lines.append("    outer loop")
        for vertex in corners:
            lines.append("      vertex {:.9g} {:.9g} {:.9g}".format(*vertex))
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {solid}")
    return "\n".join(lines) + "\n"


def write_stl_ascii(mesh: TriangleMesh, sink: Sink, name: str = "lattice") -> int:
    payload = stl_ascii_text(mesh, name).encode("ascii")
    with _binary_sink(sink) as handle:
        handle.write(payload)
    return len(payload)


def write_stl(mesh: TriangleMesh, sink: Sink, output_format: str = "binary", name: str = "lattice") -> int:
    if output_format == "ascii":
        return write_stl_ascii(mesh, sink, name)
    if output_format == "binary":
        return write_stl_binary(mesh, sink)
    raise ExportError(f"unknown STL format {output_format!r}")


_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?(?:inf|nan)"
_VERTEX_RE = re.compile(rf"vertex\s+({_FLOAT})\s+({_FLOAT})\s+({_FLOAT})")
_NORMAL_RE = re.compile(rf"facet\s+normal\s+({_FLOAT})\s+({_FLOAT})\s+({_FLOAT})")


def read_stl(source: Union[str, Path, bytes]) -> Tuple[np.ndarray, np.ndarray]:
    """Parse binary or ASCII STL into (normals (T, 3), corners (T, 3, 3))"""
    if isinstance(source, (str, Path)):
        try:
            data = Path(source).read_bytes()
        except OSError as exc:
            raise LatticeIOError(f"cannot read {source}: {exc}") from exc
    else:
        data = bytes(source)

    if len(data) >= 84:
        count = int(np.frombuffer(data, dtype="<u4", count=1, offset=80)[0])
        if len(data) == 84 + STL_RECORD.itemsize * count:
            records = np.frombuffer(data, dtype=STL_RECORD, count=count, offset=84)
            return records["normal"].astype(float), records["vertices"].astype(float)
    if data.lstrip().startswith(b"solid"):
        text = data.decode("ascii", errors="replace")
        vertices = np.array(_VERTEX_RE.findall(text), dtype=float).reshape(-1, 3, 3)
        normals = np.array(_NORMAL_RE.findall(text), dtype=float).reshape(-1, 3)
        if len(normals) != len(vertices):
            raise LatticeIOError("malformed ASCII STL: facet and vertex counts disagree")
        return normals, vertices
    raise LatticeIOError("not an STL file: size does not match a binary layout and no 'solid' header")


# --- reports ------------------------------------------------------------------------

def build_report(spec: LatticeSpec, diagnostics: MeshReport, timings: Mapping[str, float],
                 field_: Optional[LatticeField] = None, stl_path: Optional[str] = None,
                 threads: Optional[int] = None) -> Dict[str, Any]:
    report: Dict[str, Any] = {
        "name": spec.name,
        "topology": spec.topology,
        "kind": spec.kind,
        "cells": list(spec.counts),
        "cell_count": spec.cell_count,
        "u": spec.u,
        "mode": spec.mode,
        "resolution": spec.resolution,
        "format": spec.format,
        "parameters": dict(spec.parameters),
        "mesh": diagnostics.to_dict(),
        "genus": diagnostics.genus,
        "watertight": diagnostics.watertight,
        "timings": {phase: round(float(seconds), 6) for phase, seconds in timings.items()},
        "generated_at": datetime.now(timezone.utc).isoformat(),
    }
    if threads is not None:
        report["threads"] = threads
    if stl_path is not None:
        report["stl_path"] = str(stl_path)
    if field_ is not None:
        report["parameter_ranges"] = field_.parameter_summary()
        skeleton = field_.skeleton()
        if skeleton is not None:
            report["skeleton"] = {
                "vertices": skeleton.vertex_count,
                "edges": skeleton.edge_count,
                "betti_number": skeleton.betti_number,
            }
    return report


def write_report(report: Mapping[str, Any], sink: Union[str, Path, IO[str]]) -> None:
    text = json.dumps(report, indent=2, default=float) + "\n"
    if isinstance(sink, (str, Path)):
        path = Path(sink)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ExportError(f"cannot write report {path}: {exc}") from exc
    else:
        try:
            sink.write(text)
        except OSError as exc:
            raise ExportError(f"cannot write report: {exc}") from exc
