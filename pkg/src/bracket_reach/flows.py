"""Flow integration and flow programs.

``integrate_flow`` advances a point along one vector field with an embedded
Dormand-Prince 5(4) pair, dense output and box escape detection.  A
``FlowProgram`` is an ordered composition of generator flows whose durations
are symbolic schedules of one parameter t; atoms are stored innermost first,
so ``atoms[0]`` acts on the start point first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainEscape, ScheduleDomain, StepUnderflow
from .fields import DistributionSpec, SmoothField

__all__ = [
    "PlainT",
    "Const",
    "SignedRoot",
    "Schedule",
    "FlowProgram",
    "integrate_flow",
    "flow_trajectory",
    "apply_program",
    "invert_program",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-10

# Dormand-Prince 5(4) tableau, error weights and quartic interpolant.
_A = tuple(np.array(row) for row in (
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
))
_B = np.array((35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0,
               -2187.0 / 6784.0, 11.0 / 84.0))
_E = np.array((71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
               -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0))
_P = np.array([
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
])

_MIN_STEP = 1e-14


# ---------------------------------------------------------------------------
# schedules

@dataclass(frozen=True)
class PlainT:
    """sigma(t) = sign * t"""

    sign: int = 1

    def duration(self, t: float) -> float:
        return self.sign * t

    def negated(self) -> "PlainT":
        return PlainT(-self.sign)


@dataclass(frozen=True)
class Const:
    """sigma(t) = value, independent of t.

    ``delta`` records the shift that produced the constant, when any.
    """

    value: float
    delta: float | None = None

    def duration(self, t: float) -> float:
        return self.value

    def negated(self) -> "Const":
        return Const(-self.value, self.delta)


@dataclass(frozen=True)
class SignedRoot:
    """sigma(t) = sign * (t + offset)^(1/order), defined for t + offset >= 0."""

    sign: int
    order: int
    offset: float = 0.0
    delta: float | None = None

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("root order must be >= 1")

    def duration(self, t: float) -> float:
        base = t + self.offset
        if self.order == 1:
            return self.sign * base
        if base < 0.0:
            raise ScheduleDomain(
                f"schedule (t + {self.offset})^(1/{self.order}) undefined at t = {t}")
        return self.sign * base ** (1.0 / self.order)

    def negated(self) -> "SignedRoot":
        return SignedRoot(-self.sign, self.order, self.offset, self.delta)


Schedule = Union[PlainT, Const, SignedRoot]


@dataclass
class FlowProgram:
    """Ordered composition of generator flows.

    ``atoms[j] = (k, schedule)`` integrates generator k (1-based) for duration
    ``schedule.duration(t)``; atom 0 is applied first.  ``delta`` carries the
    shift parameter for shifted programs and ``param_domain`` the open
    parameter interval on which the program is certified.
    """

    atoms: tuple[tuple[int, Schedule], ...]
    spec: DistributionSpec
    delta: float | None = None
    param_domain: tuple[float, float] | None = None

    def __post_init__(self):
        self.atoms = tuple((int(k), s) for k, s in self.atoms)
        for k, _ in self.atoms:
            if not 1 <= k <= self.spec.p:
                raise IndexError(f"atom generator index {k} out of range 1..{self.spec.p}")

    @property
    def dim(self) -> int:
        return self.spec.dim

    def __len__(self) -> int:
        return len(self.atoms)


# ---------------------------------------------------------------------------
# the integrator core

def _escape_time(box, y0, h, q_mat, t0):
    """Bisect the dense interpolant for the box exit time within one step."""

    lo_face = box[:, 0]
    hi_face = box[:, 1]

    def margin(theta):
        p = np.array([theta, theta * theta, theta ** 3, theta ** 4])
        y = y0 + h * (q_mat @ p)
        return float(min(np.min(y - lo_face), np.min(hi_face - y)))

    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if margin(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return t0 + hi * h


def _integrate(ffn, x0, t_total, tol, box, record):
    """Advance x0 by t_total along ffn.  Returns (endpoint, segments).

    Segments are (t_start, h, y0, Q) tuples for the quartic dense output
    y(theta) = y0 + h * Q @ [theta, theta^2, theta^3, theta^4].
    """

    y = np.array(x0, dtype=float)
    n = y.shape[0]
    segments = [] if record else None
    if t_total == 0.0:
        return y, segments

    if box is not None:
        m = float(min(np.min(y - box[:, 0]), np.min(box[:, 1] - y)))
        if m < 0.0:
            raise DomainEscape("start point outside the domain box", 0.0, y)

    direction = 1.0 if t_total > 0.0 else -1.0
    t = 0.0
    k = np.empty((7, n))
    k[0] = ffn(y)
    scale0 = (1.0 + float(np.max(np.abs(y)))) / (1.0 + float(np.max(np.abs(k[0]))))
    h = direction * min(abs(t_total), max(1e-8, scale0))

    sliver = max(8.0 * abs(t_total) * np.finfo(float).eps, _MIN_STEP)
    while direction * (t_total - t) > 0.0:
        remaining = t_total - t
        if abs(remaining) <= sliver:
            break  # accumulated rounding remainder, the arc is done
        if abs(h) > abs(remaining):
            h = remaining
        if abs(h) < _MIN_STEP:
            raise StepUnderflow(f"step size {abs(h):.3e} underflowed at t = {t}")

        for i, row in enumerate(_A):
            k[i + 1] = ffn(y + h * (row @ k[:i + 1]))
        y_new = y + h * (_B @ k[:6])
        k[6] = ffn(y_new)
        err = h * (_E @ k)

        # local error per unit time <= tol, scaled by the state magnitude
        sc = tol * abs(h) * (1.0 + max(float(np.max(np.abs(y))), float(np.max(np.abs(y_new)))))
        err_max = float(np.max(np.abs(err)))
        if math.isnan(err_max) or math.isinf(err_max):
            norm = math.inf
        else:
            norm = err_max / sc if sc > 0.0 else math.inf

        if norm <= 1.0:
            q_mat = k.T @ _P
            if box is not None:
                m = float(min(np.min(y_new - box[:, 0]), np.min(box[:, 1] - y_new)))
                if m < 0.0:
                    t_exit = _escape_time(box, y, h, q_mat, t)
                    raise DomainEscape(
                        f"trajectory left the domain box at flow time {t_exit:.6g}",
                        t_exit, y_new)
            if record:
                segments.append((t, h, y.copy(), q_mat))
            t += h
            y = y_new
            k[0] = k[6]
            factor = 5.0 if norm == 0.0 else min(5.0, max(1.0, 0.9 * norm ** -0.2))
            h *= factor
        else:
            h *= max(0.2, 0.9 * norm ** -0.2)

    return y, segments


def integrate_flow(field: SmoothField, x0, t: float, tol: float = DEFAULT_TOL,
                   box=None) -> np.ndarray:
    """Flow of ``field`` applied to x0 for (possibly negative) duration t."""
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    endpoint, _ = _integrate(field._eval_fn_np, x0, float(t), tol, box, record=False)
    return endpoint


def flow_trajectory(field: SmoothField, x0, t: float, n_samples: int,
                    tol: float = DEFAULT_TOL, box=None):
    """Flow with a uniform polyline of n_samples points (endpoints included).

    Returns (endpoint, times, points) where times are arc-local in [0, t].
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    endpoint, segments = _integrate(field._eval_fn_np, x0, float(t), tol, box, record=True)
    times = np.linspace(0.0, float(t), n_samples)
    points = np.empty((n_samples, len(endpoint)))
    points[0] = np.asarray(x0, dtype=float)
    points[-1] = endpoint
    if not segments:
        for i in range(1, n_samples - 1):
            points[i] = points[0]
        return endpoint, times, points
    seg_idx = 0
    for i in range(1, n_samples - 1):
        s = times[i]
        while seg_idx + 1 < len(segments) and _past_segment(segments[seg_idx], s, t):
            seg_idx += 1
        t0, h, y0, q_mat = segments[seg_idx]
        theta = (s - t0) / h
        theta = min(max(theta, 0.0), 1.0)
        p = np.array([theta, theta * theta, theta ** 3, theta ** 4])
        points[i] = y0 + h * (q_mat @ p)
    return endpoint, times, points


def _past_segment(segment, s, t_total):
    t0, h, _, _ = segment
    if t_total >= 0.0:
        return s > t0 + h
    return s < t0 + h


# ---------------------------------------------------------------------------
# programs

def apply_program(program: FlowProgram, x0, t: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Run every atom of the program at parameter t, innermost first."""
    x = np.array(x0, dtype=float)
    box = program.spec.box
    for index, (k, schedule) in enumerate(program.atoms):
        sigma = schedule.duration(t)
        if sigma == 0.0:
            continue
        try:
            x = integrate_flow(program.spec.generator(k), x, sigma, tol, box)
        except DomainEscape as esc:
            esc.atom_index = index
            raise
    return x


def invert_program(program: FlowProgram) -> FlowProgram:
    """Reverse the atom order and negate every schedule."""
    atoms = tuple((k, s.negated()) for k, s in reversed(program.atoms))
    return FlowProgram(atoms, program.spec, program.delta, program.param_domain)
