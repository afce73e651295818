"""Bracket filtration ranks, stabilisation depth and frame selection.

The filtration at a point is the nested sequence of spans of all right-nested
iterated brackets of length up to l.  Right-nested words suffice: any
bracketing of length l lies in the span of right-nested values by the Jacobi
identity, and the test suite checks that property by brute force.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import FrameDeficient
from .fields import BracketWord, DistributionSpec, iterated_bracket

__all__ = [
    "right_nested_words",
    "filtration_ranks",
    "minimal_depth",
    "DepthResult",
    "select_frame",
    "FrameSelection",
    "FiltrationReport",
    "analyze_distribution",
    "grid_samples",
    "best_minor",
]

DEFAULT_RANK_TOL = 1e-8
DEFAULT_LMAX = 4


def right_nested_words(p: int, max_len: int, min_len: int = 1) -> list[BracketWord]:
    """All words over 1..p with lengths in [min_len, max_len], shortest first."""
    words = []
    for r in range(min_len, max_len + 1):
        for idx in itertools.product(range(1, p + 1), repeat=r):
            words.append(BracketWord(idx))
    return words


def _svd_rank(matrix: np.ndarray, rank_tol: float) -> tuple[int, np.ndarray]:
    if matrix.size == 0:
        return 0, np.zeros(0)
    sigma = np.linalg.svd(matrix, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0, sigma
    return int(np.sum(sigma > rank_tol * sigma[0])), sigma


def filtration_ranks(spec: DistributionSpec, x, lmax: int,
                     rank_tol: float = DEFAULT_RANK_TOL) -> tuple[int, ...]:
    """dim of the bracket span at x for each length bound l = 1..lmax."""
    if lmax < 1:
        raise ValueError("lmax must be >= 1")
    x = np.asarray(x, dtype=float)
    ranks = []
    columns: list[np.ndarray] = []
    for r in range(1, lmax + 1):
        for word in right_nested_words(spec.p, r, r):
            field = iterated_bracket(spec, word)
            if not field.is_zero:
                columns.append(field.evaluate(x))
        rank, _ = _svd_rank(np.array(columns).T if columns else np.zeros((spec.dim, 0)),
                            rank_tol)
        ranks.append(rank)
    return tuple(ranks)


@dataclass(frozen=True)
class DepthResult:
    """Outcome of the stabilisation search.

    ``depth`` is None when the ranks did not verifiably stabilise by lmax.
    ``rank`` is the common stabilised rank when ``uniform`` holds.
    """

    depth: int | None
    uniform: bool
    rank: int | None

    @property
    def stabilized(self) -> bool:
        return self.depth is not None


def _stable_from(ranks: tuple[int, ...], dim: int) -> int | None:
    """Smallest l with no further growth, demanding one confirming level
    (or full rank) so a growth that merely hits lmax is not mistaken for
    stabilisation."""
    lmax = len(ranks)
    final = ranks[-1]
    start = lmax
    while start > 1 and ranks[start - 2] == final:
        start -= 1
    if start == lmax and final != dim:
        return None
    return start


def _depth_from_vectors(vectors, dim: int) -> DepthResult:
    depth = 0
    for ranks in vectors:
        start = _stable_from(ranks, dim)
        if start is None:
            return DepthResult(None, False, None)
        depth = max(depth, start)
    at_depth = [ranks[depth - 1] for ranks in vectors]
    uniform = len(set(at_depth)) == 1
    return DepthResult(depth, uniform, at_depth[0] if uniform else None)


def minimal_depth(spec: DistributionSpec, samples, lmax: int = DEFAULT_LMAX,
                  rank_tol: float = DEFAULT_RANK_TOL) -> DepthResult:
    """Smallest depth at which the rank sequence stabilises on every sample."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample point")
    vectors = [filtration_ranks(spec, x, lmax, rank_tol) for x in samples]
    return _depth_from_vectors(vectors, spec.dim)


@dataclass(frozen=True)
class FrameSelection:
    words: tuple[BracketWord, ...]
    values: np.ndarray        # dim x rank matrix of frame values at the point
    rows: tuple[int, ...]     # pivot rows of the best square minor
    det: float                # determinant of that minor


def best_minor(matrix: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Greedy pivoted choice of m rows of an n x m matrix maximising |det|."""
    n, m = matrix.shape
    work = matrix.copy()
    rows: list[int] = []
    available = list(range(n))
    for col in range(m):
        best_row = max(available, key=lambda i: abs(work[i, col]))
        pivot = work[best_row, col]
        rows.append(best_row)
        available.remove(best_row)
        if pivot == 0.0:
            continue
        for i in available:
            factor = work[i, col] / pivot
            work[i, col:] -= factor * work[best_row, col:]
    det = float(np.linalg.det(matrix[np.sort(rows), :])) if m > 0 else 1.0
    return tuple(int(i) for i in np.sort(rows)), det


def select_frame(spec: DistributionSpec, x, depth: int, rank: int,
                 rank_tol: float = DEFAULT_RANK_TOL) -> FrameSelection:
    """Greedy sweep over right-nested words, shortest first, accepting a word
    whenever it raises the numeric rank of the accepted values at x."""
    x = np.asarray(x, dtype=float)
    accepted_words: list[BracketWord] = []
    accepted_values: list[np.ndarray] = []
    current_rank = 0
    for word in right_nested_words(spec.p, depth):
        field = iterated_bracket(spec, word)
        if field.is_zero:
            continue
        value = field.evaluate(x)
        cand = np.array(accepted_values + [value]).T
        new_rank, _ = _svd_rank(cand, rank_tol)
        if new_rank > current_rank:
            accepted_words.append(word)
            accepted_values.append(value)
            current_rank = new_rank
            if current_rank == rank:
                break
    if current_rank < rank:
        raise FrameDeficient(
            f"only {current_rank} independent bracket fields at {x.tolist()}, need {rank}")
    values = np.array(accepted_values).T
    rows, det = best_minor(values)
    return FrameSelection(tuple(accepted_words), values, rows, det)


# ---------------------------------------------------------------------------
# grid analysis

def grid_samples(box, per_axis: int | None = None) -> list[np.ndarray]:
    """Regular lattice over the box, endpoints included."""
    box = np.asarray(box, dtype=float)
    n = box.shape[0]
    if per_axis is None:
        per_axis = 5 if n <= 4 else 3
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    return [np.array(pt) for pt in itertools.product(*axes)]


@dataclass(frozen=True)
class FiltrationReport:
    samples: tuple[np.ndarray, ...]
    rank_vectors: tuple[tuple[int, ...], ...]
    lmax: int
    rank_tol: float
    depth: int | None
    uniform: bool
    rank: int | None
    bracket_generating: bool
    frame: tuple[BracketWord, ...] | None
    frame_point: np.ndarray | None
    frame_det: float | None
    frame_rows: tuple[int, ...] | None

    @property
    def stabilized(self) -> bool:
        return self.depth is not None


def analyze_distribution(spec: DistributionSpec, samples=None,
                         lmax: int = DEFAULT_LMAX,
                         rank_tol: float = DEFAULT_RANK_TOL,
                         per_axis: int | None = None,
                         frame_at=None) -> FiltrationReport:
    """Rank table over a sample grid, stabilisation verdicts and a frame.

    Uniformity is certified on the samples only; a counterexample sample is
    conclusive, agreement across samples is heuristic.
    """
    if samples is None:
        samples = grid_samples(spec.box, per_axis)
    samples = [np.asarray(s, dtype=float) for s in samples]
    vectors = tuple(filtration_ranks(spec, x, lmax, rank_tol) for x in samples)
    for ranks in vectors:
        if any(b < a for a, b in zip(ranks, ranks[1:])):
            raise AssertionError(f"rank vector {ranks} is not non-decreasing")

    depth_res = _depth_from_vectors(vectors, spec.dim)
    frame = frame_point = frame_det = frame_rows = None
    if depth_res.stabilized and depth_res.uniform:
        if frame_at is None:
            frame_at = spec.box.mean(axis=1)
        selection = select_frame(spec, frame_at, depth_res.depth, depth_res.rank, rank_tol)
        frame = selection.words
        frame_point = np.asarray(frame_at, dtype=float)
        frame_det = selection.det
        frame_rows = selection.rows
    bracket_generating = bool(depth_res.uniform and depth_res.rank == spec.dim)
    return FiltrationReport(
        samples=tuple(samples),
        rank_vectors=vectors,
        lmax=lmax,
        rank_tol=rank_tol,
        depth=depth_res.depth,
        uniform=depth_res.uniform,
        rank=depth_res.rank,
        bracket_generating=bracket_generating,
        frame=frame,
        frame_point=frame_point,
        frame_det=frame_det,
        frame_rows=frame_rows,
    )
