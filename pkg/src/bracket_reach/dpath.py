"""Piecewise integral-curve paths: construction, export and re-validation.

A DPath is a chain of arcs, each an integral curve of one generator field.
Arcs carry a uniformly sampled polyline dense enough that a fourth order
finite difference of the samples reproduces the field to the residual
tolerance, so an emitted path can be re-validated from its CSV alone.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BracketReachError
from .fields import DistributionSpec
from .flows import DEFAULT_TOL, Const, FlowProgram, flow_trajectory

__all__ = [
    "Arc",
    "DPath",
    "ValidationReport",
    "realized_arcs",
    "merge_arcs",
    "build_dpath",
    "validate_dpath",
    "write_dpath",
    "load_dpath",
    "RESIDUAL_FACTOR",
]

RESIDUAL_FACTOR = 1e-8
_MAX_SAMPLE_STEP = 0.005
_MIN_SAMPLES = 9


@dataclass(frozen=True)
class Arc:
    k: int                  # 1-based generator index
    duration: float         # signed flow duration
    start: np.ndarray
    end: np.ndarray
    times: np.ndarray       # arc-local sample times, 0 .. duration
    points: np.ndarray      # samples, shape (len(times), dim)


@dataclass
class DPath:
    arcs: tuple[Arc, ...]
    start: np.ndarray
    endpoint: np.ndarray
    target: np.ndarray | None
    endpoint_error: float | None
    meta: dict = dc_field(default_factory=dict)

    @property
    def total_duration(self) -> float:
        return float(sum(abs(a.duration) for a in self.arcs))

    def projection(self, i: int, j: int) -> np.ndarray:
        """Concatenated polyline of coordinates (i, j) across all arcs."""
        if not self.arcs:
            return np.zeros((1, 2)) + self.start[[i, j]]
        chunks = [a.points[:, [i, j]] for a in self.arcs]
        return np.vstack(chunks)


def realized_arcs(program: FlowProgram, t: float | None = None) -> list[tuple[int, float]]:
    """Realise every schedule of a program into (generator, duration) pairs.

    Programs produced for steering carry constant schedules, so t may be
    omitted; otherwise the schedules are evaluated at t.
    """
    out = []
    for k, schedule in program.atoms:
        if t is None and not isinstance(schedule, Const):
            raise ValueError("program has non-constant schedules, pass t")
        out.append((k, schedule.duration(0.0 if t is None else t)))
    return out


def merge_arcs(pairs: Sequence[tuple[int, float]], tiny: float = 1e-15) -> list[tuple[int, float]]:
    """Cascade-merge adjacent arcs of the same generator, dropping zero ones.

    Merging is exact by the one-parameter group law of a single flow.  A
    steering parameter of zero collapses the whole program to the empty path.
    """
    stack: list[list] = []
    for k, tau in pairs:
        stack.append([k, tau])
        while True:
            if stack and abs(stack[-1][1]) <= tiny:
                stack.pop()
                continue
            if len(stack) >= 2 and stack[-1][0] == stack[-2][0]:
                tau2 = stack.pop()[1]
                stack[-1][1] += tau2
                continue
            break
    return [(k, tau) for k, tau in stack]


def build_dpath(program_or_pairs, spec: DistributionSpec, y0, target=None,
                tol: float = DEFAULT_TOL, merge: bool = True) -> DPath:
    """Integrate a realised program from y0 into a polyline path."""
    if isinstance(program_or_pairs, FlowProgram):
        pairs = realized_arcs(program_or_pairs)
    else:
        pairs = list(program_or_pairs)
    if merge:
        pairs = merge_arcs(pairs)
    arcs = []
    x = np.array(y0, dtype=float)
    for k, tau in pairs:
        n = int(max(_MIN_SAMPLES, np.ceil(abs(tau) / _MAX_SAMPLE_STEP) + 1))
        n = min(n, 4001)
        end, times, points = flow_trajectory(spec.generator(k), x, tau, n, tol, spec.box)
        arcs.append(Arc(k, tau, x, end, times, points))
        x = end
    error = None
    if target is not None:
        target = np.asarray(target, dtype=float)
        error = float(np.linalg.norm(x - target))
    return DPath(tuple(arcs), np.array(y0, dtype=float), x, target, error)


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class ValidationReport:
    chaining_exact: bool
    max_residual: float
    residual_tol: float
    residual_ok: bool
    endpoint_error: float | None
    endpoint_ok: bool

    @property
    def passed(self) -> bool:
        return self.chaining_exact and self.residual_ok and self.endpoint_ok


def _arc_residual(arc: Arc, spec: DistributionSpec) -> tuple[float, float]:
    """Max deviation of the polyline's FD velocity from the generator field.

    Returns (max residual, tolerance) where the tolerance scales with the
    largest field component seen along the arc.
    """
    field = spec.generator(arc.k)
    pts = arc.points
    n = pts.shape[0]
    if n < 5 or arc.duration == 0.0:
        return 0.0, RESIDUAL_FACTOR
    h = arc.times[1] - arc.times[0]
    vals = np.array([field.evaluate(p) for p in pts])
    scale = 1.0 + float(np.max(np.abs(vals)))
    interior = slice(2, n - 2)
    fd = (pts[:-4] - 8.0 * pts[1:-3] + 8.0 * pts[3:-1] - pts[4:]) / (12.0 * h)
    resid = float(np.max(np.abs(fd - vals[interior])))
    return resid, RESIDUAL_FACTOR * scale


def validate_dpath(dpath: DPath, spec: DistributionSpec,
                   endpoint_tol: float | None = None) -> ValidationReport:
    """Arc chaining, per-arc ODE residual and endpoint check."""
    chaining = True
    prev_end = dpath.start
    for arc in dpath.arcs:
        if not np.array_equal(arc.start, prev_end):
            chaining = False
        if not (np.array_equal(arc.points[0], arc.start)
                and np.array_equal(arc.points[-1], arc.end)):
            chaining = False
        prev_end = arc.end
    if dpath.arcs and not np.array_equal(dpath.endpoint, dpath.arcs[-1].end):
        chaining = False

    max_resid = 0.0
    tol_used = RESIDUAL_FACTOR
    ok = True
    for arc in dpath.arcs:
        resid, tol = _arc_residual(arc, spec)
        max_resid = max(max_resid, resid)
        tol_used = max(tol_used, tol)
        if resid >= tol:
            ok = False

    endpoint_error = dpath.endpoint_error
    if dpath.target is not None:
        endpoint_error = float(np.linalg.norm(dpath.endpoint - dpath.target))
    endpoint_ok = True
    if endpoint_tol is not None and endpoint_error is not None:
        endpoint_ok = endpoint_error < endpoint_tol
    return ValidationReport(chaining, max_resid, tol_used, ok, endpoint_error, endpoint_ok)


# ---------------------------------------------------------------------------
# CSV + manifest round trip

def write_dpath(dpath: DPath, csv_path, manifest_path, meta: dict | None = None) -> None:
    """Emit the polyline CSV and a JSON manifest describing the path."""
    csv_path = Path(csv_path)
    manifest_path = Path(manifest_path)
    dim = dpath.start.shape[0]
    header = ["arc_index", "k", "sigma_value", "s"] + [f"x{i + 1}" for i in range(dim)]
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for idx, arc in enumerate(dpath.arcs):
            for s, pt in zip(arc.times, arc.points):
                writer.writerow([idx, arc.k, repr(float(arc.duration)), repr(float(s))]
                                + [repr(float(v)) for v in pt])
    manifest = {
        "dim": dim,
        "start": [float(v) for v in dpath.start],
        "endpoint": [float(v) for v in dpath.endpoint],
        "target": None if dpath.target is None else [float(v) for v in dpath.target],
        "endpoint_error": dpath.endpoint_error,
        "arcs": [
            {
                "index": i,
                "k": a.k,
                "duration": float(a.duration),
                "samples": int(a.points.shape[0]),
                "start": [float(v) for v in a.start],
                "end": [float(v) for v in a.end],
            }
            for i, a in enumerate(dpath.arcs)
        ],
    }
    manifest.update(meta or {})
    manifest.update(dpath.meta)
    with manifest_path.open("w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_dpath(csv_path, manifest_path) -> tuple[DPath, dict]:
    """Rebuild a DPath from its CSV and manifest.  Returns (path, manifest)."""
    csv_path = Path(csv_path)
    manifest_path = Path(manifest_path)
    with manifest_path.open() as fh:
        manifest = json.load(fh)
    rows_by_arc: dict[int, list] = {}
    with csv_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 4
        for row in reader:
            rows_by_arc.setdefault(int(row[0]), []).append(row)
    arcs = []
    for idx in sorted(rows_by_arc):
        rows = rows_by_arc[idx]
        k = int(rows[0][1])
        duration = float(rows[0][2])
        times = np.array([float(r[3]) for r in rows])
        points = np.array([[float(v) for v in r[4:4 + dim]] for r in rows])
        arcs.append(Arc(k, duration, points[0], points[-1], times, points))
    if arcs:
        start = arcs[0].start
        endpoint = arcs[-1].end
    else:
        start = np.array(manifest["start"], dtype=float)
        endpoint = np.array(manifest["endpoint"], dtype=float)
    target = manifest.get("target")
    target = None if target is None else np.array(target, dtype=float)
    error = manifest.get("endpoint_error")
    path = DPath(tuple(arcs), start, endpoint, target, error, {})
    if not np.allclose(endpoint, np.array(manifest["endpoint"]), atol=0.0, rtol=0.0):
        raise BracketReachError("manifest endpoint disagrees with CSV polyline")
    return path, manifest
