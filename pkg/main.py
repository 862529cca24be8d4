"""
Command-line driver for the lattice generator.

    python main.py generate --spec sample_specs/bcc_parabola.json --out output/bcc.stl
    python main.py validate --spec my_lattice.json
    python main.py info [--spec my_lattice.json]
    python main.py bench --sizes 1,2,3 --resolution 32
"""

import argparse
import json
import logging
import os
import sys
import time
import traceback
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from errors import LatticeError, SpecError
from lattice_io import (
    FORMATS,
    LatticeSpec,
    beam_lattice,
    build_report,
    emit_spec,
    gyroid_lattice,
    read_spec_file,
    schwarz_d_lattice,
    schwarz_lattice,
    write_report,
    write_stl,
)
from lattice_mesher import assemble_lattice
from parameter_field import MODES
from topology import BEAM_TOPOLOGIES, TPMS_TOPOLOGIES, catalog, needs_trunc
from triangle_mesh import MeshReport, TriangleMesh, mesh_diagnostics

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("generate", "validate", "info", "bench")
OUTPUT_DIR = os.environ.get('LATTICE_OUTPUT_DIR', 'output')
BENCH_CELL_CAP = 64
TPMS_BUILDERS = {"schwarz_p": schwarz_lattice, "gyroid": gyroid_lattice, "schwarz_d": schwarz_d_lattice}

# Global reference to generation status (set by app.py)
generation_status = None


def set_generation_status(status):
    """Set the global generation status reference"""
    global generation_status
    generation_status = status


def _update_status(**changes):
    if generation_status is not None:
        generation_status.update(changes)


def default_threads():
    value = os.environ.get('LATTICE_THREADS')
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning(f"⚠️ Ignoring non-integer LATTICE_THREADS={value!r}")
    return os.cpu_count() or 1


@dataclass
class RunConfig:
    subcommand: str
    spec_path: Optional[str] = None
    out_path: Optional[str] = None
    report_path: Optional[str] = None
    output_format: Optional[str] = None
    resolution: Optional[int] = None
    threads: int = field(default_factory=default_threads)
    mode: Optional[str] = None
    record: bool = False
    verbose: bool = False
    # bench only
    topology: str = "cubic"
    tpms: str = "schwarz_p"
    sizes: Tuple[int, ...] = (1, 2, 3, 4)
    allow_large: bool = False
    unit_size: float = 10.0
    rows_path: Optional[str] = None

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise SpecError(f"unknown subcommand {self.subcommand!r}", "subcommand")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise SpecError(f"threads must be a positive integer, got {self.threads!r}", "--threads")
        if self.resolution is not None and (not isinstance(self.resolution, int) or self.resolution < 8):
            raise SpecError(f"resolution must be an integer of at least 8, got {self.resolution!r}", "--resolution")
        if self.output_format is not None and self.output_format not in FORMATS:
            raise SpecError(f"format must be one of {', '.join(FORMATS)}", "--format")
        if self.mode is not None and self.mode not in MODES:
            raise SpecError(f"mode must be one of {', '.join(MODES)}", "--mode")
        if self.subcommand in ("generate", "validate") and not self.spec_path:
            raise SpecError(f"{self.subcommand} needs --spec", "--spec")
        if any(size < 1 for size in self.sizes):
            raise SpecError("bench sizes must be positive", "--sizes")

    @classmethod
    def from_args(cls, args):
        values = {key: value for key, value in vars(args).items() if value is not None}
        return cls(**values)


@dataclass
class GenerationResult:
    spec: LatticeSpec
    mesh: TriangleMesh
    diagnostics: MeshReport
    timings: Dict[str, float]
    report: Dict[str, Any]
    stl_path: Optional[str] = None
    report_path: Optional[str] = None


def load_run_spec(config):
    spec = read_spec_file(config.spec_path)
    return spec.with_overrides(resolution=config.resolution, format=config.output_format, mode=config.mode)


def default_out_path(spec):
    return str(Path(OUTPUT_DIR) / f"{spec.name}.stl")


def default_report_path(out_path):
    return str(Path(out_path).with_suffix(".report.json"))


def generate_lattice(spec, threads=1, timings=None):
    """Compose and mesh a spec; fills `timings` with compose/field_eval/polygonize/weld"""
    timings = {} if timings is None else timings
    _update_status(phase='compose', message=f'Composing {spec.topology} over {spec.cell_count} cells')
    started = time.perf_counter()
    field_ = spec.compose()
    timings['compose'] = time.perf_counter() - started

    _update_status(phase='mesh', message=f'Meshing at r={spec.resolution} on {threads} thread(s)')
    mesh = assemble_lattice(field_, spec.resolution, threads, timings)
    return field_, mesh


def run_generation(spec, out_path=None, report_path=None, threads=1):
    """Full pipeline: compose, mesh, diagnose, write STL and report"""
    out_path = out_path or default_out_path(spec)
    report_path = report_path or default_report_path(out_path)
    timings = {}
    field_, mesh = generate_lattice(spec, threads, timings)
    diagnostics = mesh_diagnostics(mesh)

    _update_status(phase='export', message=f'Writing {spec.format} STL to {out_path}')
    started = time.perf_counter()
    size = write_stl(mesh, out_path, spec.format, spec.name)
    timings['export'] = time.perf_counter() - started
    logger.info(f"💾 Wrote {out_path} ({size:,} bytes, {mesh.triangle_count:,} triangles)")

    report = build_report(spec, diagnostics, timings, field_, stl_path=out_path, threads=threads)
    write_report(report, report_path)
    _update_status(phase='done', message=f'Generated {spec.name}')
    return GenerationResult(spec, mesh, diagnostics, timings, report, out_path, report_path)


# --- run history --------------------------------------------------------------

def record_generation(spec, threads, result=None, error=None):
    """Persist a generation run; returns its id"""
    from app import app
    from models import db, GenerationRun

    with app.app_context():
        run = GenerationRun(
            spec_name=spec.name,
            topology=spec.topology,
            kind=spec.kind,
            cells_x=spec.counts[0],
            cells_y=spec.counts[1],
            cells_z=spec.counts[2],
            resolution=spec.resolution,
            mode=spec.mode,
            threads=threads,
            spec_json=emit_spec(spec),
            status='failed' if error else 'succeeded',
            error=error,
            finished_at=datetime.utcnow(),
        )
        if result is not None:
            apply_result(run, result)
        db.session.add(run)
        db.session.commit()
        return run.id


def apply_result(run, result):
    diagnostics = result.diagnostics
    run.vertex_count = diagnostics.vertices
    run.triangle_count = diagnostics.triangles
    run.euler_characteristic = diagnostics.euler_characteristic
    run.genus = diagnostics.genus
    run.watertight = diagnostics.watertight
    run.volume = diagnostics.volume
    run.timings_json = json.dumps(result.timings)
    run.stl_path = result.stl_path
    run.report_path = result.report_path


def record_bench(rows):
    from app import app
    from models import db, BenchResult

    with app.app_context():
        for row in rows:
            db.session.add(BenchResult(
                topology=row['topology'],
                kind=row['kind'],
                cells=row['cells'],
                resolution=row['resolution'],
                threads=row['threads'],
                total_seconds=row['total_seconds'],
                per_cell_seconds=row['per_cell_seconds'],
                timings_json=json.dumps(row['timings']),
                triangle_count=row['triangles'],
            ))
        db.session.commit()
    print(f"📝 Recorded {len(rows)} bench rows")


# --- subcommands ----------------------------------------------------------------

def generate(config):
    spec = load_run_spec(config)
    print(f"🚀 Generating {spec.name}: {spec.topology} {spec.counts[0]}x{spec.counts[1]}x{spec.counts[2]}, "
          f"r={spec.resolution}, {config.threads} thread(s)")
    try:
        result = run_generation(spec, config.out_path, config.report_path, config.threads)
    except LatticeError as exc:
        if config.record:
            record_generation(spec, config.threads, error=str(exc))
        raise

    d = result.diagnostics
    print(f"✅ {result.stl_path}: {d.triangles:,} triangles, genus {d.genus}, "
          f"{'watertight' if d.watertight else 'NOT watertight'}, volume {d.volume:.4g}")
    print(f"📋 Report: {result.report_path}")
    if config.record:
        run_id = record_generation(spec, config.threads, result)
        print(f"📝 Recorded run #{run_id}")
    return 0


def validate(config):
    spec = load_run_spec(config)
    field_ = spec.compose()
    summary = {
        'status': 'ok',
        'name': spec.name,
        'topology': spec.topology,
        'kind': spec.kind,
        'cells': list(spec.counts),
        'mode': spec.mode,
        'resolution': spec.resolution,
        'parameter_ranges': field_.parameter_summary(),
    }
    print(f"✅ {config.spec_path} is valid ({spec.topology}, {spec.cell_count} cells)")
    for key, span in summary['parameter_ranges'].items():
        print(f"   {key}: {span['min']:.6g} .. {span['max']:.6g}")
    if config.report_path:
        write_report(summary, config.report_path)
    return 0


def info(config):
    if not config.spec_path:
        print(f"{'topology':<22}{'kind':<6}{'V':>5}{'E':>5}{'b1':>5}  trunc")
        for entry in catalog():
            if entry['kind'] == 'beam':
                print(f"{entry['name']:<22}{'beam':<6}{entry['vertices']:>5}{entry['edges']:>5}"
                      f"{entry['betti_number']:>5}  {'yes' if entry['needs_trunc'] else '-'}")
            else:
                print(f"{entry['name']:<22}{'tpms':<6}{'-':>5}{'-':>5}{'-':>5}  -")
        return 0

    spec = load_run_spec(config)
    field_ = spec.compose()
    print(f"📦 {spec.name}: {spec.topology} ({spec.kind})")
    print(f"   cells: {spec.counts[0]} x {spec.counts[1]} x {spec.counts[2]} = {spec.cell_count}, u = {spec.u}")
    print(f"   mode: {spec.mode}, resolution: {spec.resolution}, format: {spec.format}")
    if spec.transform is not None:
        print(f"   cylindrical, inner radius {spec.transform.inner_radius}")
    for key, source in spec.parameters.items():
        print(f"   {key} = {source}")
    for key, span in field_.parameter_summary().items():
        print(f"   {key} range: {span['min']:.6g} .. {span['max']:.6g}")
    skeleton = field_.skeleton()
    if skeleton is not None:
        print(f"   skeleton: V={skeleton.vertex_count} E={skeleton.edge_count} "
              f"b1={skeleton.betti_number} (expected mesh genus)")
    return 0


def bench_specs(config, size):
    u = config.unit_size
    resolution = config.resolution or 32
    trunc = 0.25 if needs_trunc(config.topology) else None
    shell = TPMS_BUILDERS[config.tpms]
    return [
        beam_lattice(config.topology, u, size, size, size, u / 10, trunc=trunc,
                     resolution=resolution, name=f"bench-{config.topology}-{size}"),
        shell(u, size, size, size, u / 10, resolution=resolution, name=f"bench-{config.tpms}-{size}"),
    ]


def run_bench(config):
    if config.topology not in BEAM_TOPOLOGIES:
        raise SpecError(f"bench beam topology must be one of {', '.join(BEAM_TOPOLOGIES)}", "--topology")
    if config.tpms not in TPMS_TOPOLOGIES:
        raise SpecError(f"bench TPMS topology must be one of {', '.join(TPMS_TOPOLOGIES)}", "--tpms")
    oversized = [s for s in config.sizes if s ** 3 > BENCH_CELL_CAP]
    if oversized and not config.allow_large:
        raise SpecError(
            f"{oversized[0]}^3 cells exceeds the bench cap of {BENCH_CELL_CAP}; pass --allow-large to run it",
            "--sizes",
        )

    rows = []
    for size in config.sizes:
        for spec in bench_specs(config, size):
            timings = {}
            started = time.perf_counter()
            _, mesh = generate_lattice(spec, config.threads, timings)
            total = time.perf_counter() - started
            row = {
                'topology': spec.topology,
                'kind': spec.kind,
                'cells': spec.cell_count,
                'resolution': spec.resolution,
                'threads': config.threads,
                'total_seconds': total,
                'per_cell_seconds': total / spec.cell_count,
                'timings': timings,
                'triangles': mesh.triangle_count,
            }
            rows.append(row)
            print(json.dumps(row))
    return rows


def bench(config):
    rows = run_bench(config)
    print(f"\n{'topology':<14}{'cells':>6}{'total s':>10}{'s/cell':>10}{'sample':>9}{'mc':>8}{'weld':>8}")
    for row in rows:
        t = row['timings']
        print(f"{row['topology']:<14}{row['cells']:>6}{row['total_seconds']:>10.3f}{row['per_cell_seconds']:>10.3f}"
              f"{t.get('field_eval', 0):>9.3f}{t.get('polygonize', 0):>8.3f}{t.get('weld', 0):>8.3f}")
    for topology in sorted({row['topology'] for row in rows}):
        per_cell = [row['per_cell_seconds'] for row in rows if row['topology'] == topology]
        if len(per_cell) > 1:
            print(f"📈 {topology}: per-cell time spread {max(per_cell) / min(per_cell):.2f}x across sizes")
    if config.rows_path:
        Path(config.rows_path).parent.mkdir(parents=True, exist_ok=True)
        with open(config.rows_path, 'w') as f:
            for row in rows:
                f.write(json.dumps(row) + '\n')
    if config.record:
        record_bench(rows)
    return 0


COMMANDS = {'generate': generate, 'validate': validate, 'info': info, 'bench': bench}


def _sizes(text):
    try:
        return tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(description='Generate heterogeneous F-rep lattice structures as STL meshes')
    sub = parser.add_subparsers(dest='subcommand', required=True)

    def common(p, spec_required):
        p.add_argument('--spec', dest='spec_path', required=spec_required, help='JSON lattice spec document')
        p.add_argument('--resolution', type=int, help='voxels per unit-cell edge (overrides the spec file)')
        p.add_argument('--mode', choices=MODES, help='per_cell or continuous parameter evaluation')
        p.add_argument('--threads', type=int, help='worker threads for field sampling')
        p.add_argument('--verbose', action='store_true', help='debug logging')

    p = sub.add_parser('generate', help='mesh a spec and write STL + report')
    common(p, True)
    p.add_argument('--out', dest='out_path', help=f'STL path (default {OUTPUT_DIR}/<name>.stl)')
    p.add_argument('--format', dest='output_format', choices=FORMATS, help='STL flavour (overrides the spec file)')
    p.add_argument('--report', dest='report_path', help='report path (default next to the STL)')
    p.add_argument('--record', action='store_true', help='store the run in the database')

    p = sub.add_parser('validate', help='check a spec and its parameter fields without meshing')
    common(p, True)
    p.add_argument('--report', dest='report_path', help='write the validation summary as JSON')

    p = sub.add_parser('info', help='show the topology catalog or summarize a spec')
    common(p, False)

    p = sub.add_parser('bench', help='time beam and TPMS lattices across cell counts')
    p.add_argument('--topology', help='beam topology (default cubic)')
    p.add_argument('--tpms', help='TPMS topology (default schwarz_p)')
    p.add_argument('--sizes', type=_sizes, help='cells per axis, comma separated (default 1,2,3,4)')
    p.add_argument('--unit-size', dest='unit_size', type=float, help='unit cell size u (default 10)')
    p.add_argument('--resolution', type=int, help='voxels per unit-cell edge (default 32)')
    p.add_argument('--threads', type=int, help='worker threads')
    p.add_argument('--allow-large', dest='allow_large', action='store_true', default=None,
                   help=f'allow more than {BENCH_CELL_CAP} cells')
    p.add_argument('--rows', dest='rows_path', help='also write JSON-lines rows to this file')
    p.add_argument('--record', action='store_true', default=None, help='store rows in the database')
    p.add_argument('--verbose', action='store_true', default=None, help='debug logging')
    return parser


def configure_logging(verbose=False):
    level = logging.DEBUG if verbose else os.environ.get('LATTICE_LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(bool(getattr(args, 'verbose', False)))
    try:
        config = RunConfig.from_args(args)
        return COMMANDS[config.subcommand](config)
    except LatticeError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"❌ Unexpected error: {e}")
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
