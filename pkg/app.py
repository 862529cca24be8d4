import os
import threading
import traceback
import logging
from datetime import datetime
from pathlib import Path

from flask import Flask, request, jsonify, send_file
from sqlalchemy import desc

from errors import LatticeError
from lattice_io import spec_from_document, emit_spec
from models import db, GenerationRun, BenchResult
from topology import catalog

logger = logging.getLogger(__name__)


def create_app():
    app = Flask(__name__)
    secret_key = os.environ.get("FLASK_SECRET_KEY")
    if not secret_key:
        import secrets
        secret_key = secrets.token_hex(32)
        print("WARNING: Using auto-generated secret key. Set FLASK_SECRET_KEY environment variable for production.")
    app.secret_key = secret_key
    database_url = os.environ.get("DATABASE_URL", "sqlite:///lattice_runs.db")
    app.config["SQLALCHEMY_DATABASE_URI"] = database_url
    if not database_url.startswith("sqlite"):
        app.config["SQLALCHEMY_ENGINE_OPTIONS"] = {
            "pool_recycle": 300,
            "pool_pre_ping": True,
        }
    db.init_app(app)
    with app.app_context():
        db.create_all()
    return app

app = create_app()

# Global variables to track generation state
generation_thread = None
generation_status = {
    'is_running': False,
    'message': '',
    'phase': None,
    'run_id': None,
    'spec_name': None,
    'start_time': None,
    'timings': {},
}

# Set generation status reference in main.py so the pipeline can report its phase
import main
main.set_generation_status(generation_status)


def _error_response(exc, status=400):
    body = {'status': 'error', 'error': type(exc).__name__, 'message': str(exc)}
    path = getattr(exc, 'path', None)
    if path:
        body['path'] = path
    offset = getattr(exc, 'offset', None)
    if offset is not None:
        body['offset'] = offset
    return jsonify(body), status


def _spec_document():
    """Request body is either a spec document or {"spec": document, "threads": n}"""
    payload = request.get_json(silent=True)
    if not isinstance(payload, dict):
        return None, None
    if isinstance(payload.get('spec'), dict):
        return payload['spec'], payload.get('threads')
    return payload, None


@app.route('/')
def index():
    return jsonify({
        'service': 'lattice-forge',
        'endpoints': [
            'GET /api/topologies',
            'POST /api/validate',
            'POST /api/generate',
            'GET /generate-status',
            'GET /api/runs',
            'GET /api/runs/<id>',
            'GET /api/runs/<id>/stl',
            'GET /api/bench',
        ],
    })


@app.route('/api/topologies')
def api_topologies():
    return jsonify(catalog())


@app.route('/api/validate', methods=['POST'])
def api_validate():
    """Check a spec document and evaluate its parameter fields without meshing"""
    document, _ = _spec_document()
    if document is None:
        return jsonify({'status': 'error', 'message': 'Request body must be a JSON spec object'}), 400
    try:
        spec = spec_from_document(document)
        field_ = spec.compose()
    except LatticeError as e:
        return _error_response(e)

    return jsonify({
        'status': 'ok',
        'name': spec.name,
        'topology': spec.topology,
        'kind': spec.kind,
        'cells': list(spec.counts),
        'mode': spec.mode,
        'resolution': spec.resolution,
        'parameter_ranges': field_.parameter_summary(),
    })


def execute_generation(run_id, spec, threads):
    """Run the pipeline for a stored run and write the outcome back to it"""
    out_path = str(Path(main.OUTPUT_DIR) / f"{spec.name}-{run_id}.stl")
    with app.app_context():
        run = db.session.get(GenerationRun, run_id)
        try:
            result = main.run_generation(spec, out_path, threads=threads)
            main.apply_result(run, result)
            generation_status['timings'] = {phase: round(seconds, 6) for phase, seconds in result.timings.items()}
            run.status = 'succeeded'
            generation_status['message'] = f'Generated {spec.name}: genus {result.diagnostics.genus}'
        except Exception as e:
            logger.error(f"❌ Generation run {run_id} failed: {e}")
            traceback.print_exc()
            run.status = 'failed'
            run.error = f"{type(e).__name__}: {e}"
            generation_status['message'] = f'Generation failed: {e}'
        finally:
            run.finished_at = datetime.utcnow()
            db.session.commit()
            generation_status['is_running'] = False
            generation_status['phase'] = None


@app.route('/api/generate', methods=['POST'])
def api_generate():
    """Start a background generation run"""
    global generation_thread, generation_status

    if generation_status['is_running']:
        return jsonify({
            'status': 'error',
            'message': 'A generation run is already in progress!'
        }), 400

    document, threads = _spec_document()
    if document is None:
        return jsonify({'status': 'error', 'message': 'Request body must be a JSON spec object'}), 400
    try:
        spec = spec_from_document(document)
        spec.compose()
    except LatticeError as e:
        return _error_response(e)
    if threads is None:
        threads = main.default_threads()
    if not isinstance(threads, int) or threads < 1:
        return jsonify({'status': 'error', 'message': 'threads must be a positive integer'}), 400

    try:
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
            status='running',
        )
        db.session.add(run)
        db.session.commit()
        run_id = run.id

        generation_status.update({
            'is_running': True,
            'message': 'Starting generation...',
            'phase': 'queued',
            'run_id': run_id,
            'spec_name': spec.name,
            'start_time': datetime.utcnow(),
            'timings': {},
        })

        generation_thread = threading.Thread(target=execute_generation, args=(run_id, spec, threads))
        generation_thread.daemon = True
        generation_thread.start()

        return jsonify({
            'status': 'success',
            'run_id': run_id,
            'message': f'Generating {spec.name} ({spec.cell_count} cells)...'
        }), 202

    except Exception as e:
        generation_status['is_running'] = False
        return jsonify({
            'status': 'error',
            'message': f'Error starting generation: {str(e)}'
        }), 500


@app.route('/generate-status')
def generate_status():
    """Get current generation status"""
    return jsonify({
        'is_running': generation_status['is_running'],
        'message': generation_status['message'],
        'phase': generation_status['phase'],
        'run_id': generation_status['run_id'],
        'spec_name': generation_status['spec_name'],
        'start_time': generation_status['start_time'].isoformat() if generation_status['start_time'] else None,
        'timings': generation_status['timings'],
    })


@app.route('/api/runs')
def api_runs():
    limit = request.args.get('limit', 100, type=int)
    status = request.args.get('status', '')
    query = GenerationRun.query
    if status:
        query = query.filter(GenerationRun.status == status)
    runs = query.order_by(desc(GenerationRun.started_at)).limit(limit).all()
    return jsonify([run.to_dict() for run in runs])


@app.route('/api/runs/<int:run_id>')
def api_run(run_id):
    run = db.get_or_404(GenerationRun, run_id)
    return jsonify(run.to_dict())


@app.route('/api/runs/<int:run_id>/stl')
def api_run_stl(run_id):
    run = db.get_or_404(GenerationRun, run_id)
    if not run.stl_path or not os.path.exists(run.stl_path):
        return jsonify({'status': 'error', 'message': f'Run {run_id} has no STL file'}), 404
    return send_file(os.path.abspath(run.stl_path), mimetype='model/stl', as_attachment=True,
                     download_name=os.path.basename(run.stl_path))


@app.route('/api/bench')
def api_bench():
    topology = request.args.get('topology', '')
    query = BenchResult.query
    if topology:
        query = query.filter(BenchResult.topology == topology)
    rows = query.order_by(desc(BenchResult.measured_at)).limit(200).all()
    return jsonify([row.to_dict() for row in rows])


if __name__ == '__main__':
    app.run(host='0.0.0.0', port=5000, debug=False)
