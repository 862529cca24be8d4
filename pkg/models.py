from flask_sqlalchemy import SQLAlchemy
from sqlalchemy.orm import DeclarativeBase
from datetime import datetime
import json


class Base(DeclarativeBase):
    pass

db = SQLAlchemy(model_class=Base)


class GenerationRun(db.Model):
    __tablename__ = 'generation_runs'

    id = db.Column(db.Integer, primary_key=True)
    spec_name = db.Column(db.String(255), nullable=False)
    topology = db.Column(db.String(64), nullable=False)
    kind = db.Column(db.String(16), nullable=False)
    cells_x = db.Column(db.Integer, nullable=False)
    cells_y = db.Column(db.Integer, nullable=False)
    cells_z = db.Column(db.Integer, nullable=False)
    resolution = db.Column(db.Integer, nullable=False)
    mode = db.Column(db.String(16), nullable=False, default='per_cell')
    threads = db.Column(db.Integer, nullable=True)
    spec_json = db.Column(db.Text, nullable=False)
    status = db.Column(db.String(32), nullable=False, default='running')  # running, succeeded, failed
    error = db.Column(db.Text, nullable=True)
    vertex_count = db.Column(db.Integer, nullable=True)
    triangle_count = db.Column(db.Integer, nullable=True)
    euler_characteristic = db.Column(db.Integer, nullable=True)
    genus = db.Column(db.Integer, nullable=True)
    watertight = db.Column(db.Boolean, nullable=True)
    volume = db.Column(db.Float, nullable=True)
    timings_json = db.Column(db.Text, nullable=True)
    stl_path = db.Column(db.String(500), nullable=True)
    report_path = db.Column(db.String(500), nullable=True)
    started_at = db.Column(db.DateTime, default=datetime.utcnow)
    finished_at = db.Column(db.DateTime, nullable=True)

    @property
    def timings(self):
        return json.loads(self.timings_json) if self.timings_json else {}

    def to_dict(self):
        return {
            'id': self.id,
            'spec_name': self.spec_name,
            'topology': self.topology,
            'kind': self.kind,
            'cells': [self.cells_x, self.cells_y, self.cells_z],
            'resolution': self.resolution,
            'mode': self.mode,
            'threads': self.threads,
            'status': self.status,
            'error': self.error,
            'vertex_count': self.vertex_count,
            'triangle_count': self.triangle_count,
            'euler_characteristic': self.euler_characteristic,
            'genus': self.genus,
            'watertight': self.watertight,
            'volume': self.volume,
            'timings': self.timings,
            'stl_path': self.stl_path,
            'report_path': self.report_path,
            'started_at': self.started_at.isoformat() if self.started_at else None,
            'finished_at': self.finished_at.isoformat() if self.finished_at else None,
        }

    def __repr__(self):
        return f'<GenerationRun {self.spec_name} ({self.topology}) {self.status}>'


class BenchResult(db.Model):
    __tablename__ = 'bench_results'

    id = db.Column(db.Integer, primary_key=True)
    topology = db.Column(db.String(64), nullable=False)
    kind = db.Column(db.String(16), nullable=False)
    cells = db.Column(db.Integer, nullable=False)
    resolution = db.Column(db.Integer, nullable=False)
    threads = db.Column(db.Integer, nullable=False)
    total_seconds = db.Column(db.Float, nullable=False)
    per_cell_seconds = db.Column(db.Float, nullable=False)
    timings_json = db.Column(db.Text, nullable=True)
    triangle_count = db.Column(db.Integer, nullable=True)
    measured_at = db.Column(db.DateTime, default=datetime.utcnow)

    def to_dict(self):
        return {
            'id': self.id,
            'topology': self.topology,
            'kind': self.kind,
            'cells': self.cells,
            'resolution': self.resolution,
            'threads': self.threads,
            'total_seconds': self.total_seconds,
            'per_cell_seconds': self.per_cell_seconds,
            'timings': json.loads(self.timings_json) if self.timings_json else {},
            'triangle_count': self.triangle_count,
            'measured_at': self.measured_at.isoformat() if self.measured_at else None,
        }

    def __repr__(self):
        return f'<BenchResult {self.topology} x{self.cells} r={self.resolution}>'
