"""Endpoint maps, certified reachable radii and constructive steering.

The endpoint map composes one shifted program per frame word; its local
surjectivity around a point is certified by measured inverse function theorem
conditions (Jacobian inverse norm and a sampled Lipschitz constant of the
Jacobian).  Steering inverts the map by damped Newton iteration and emits the
winning composition as an explicit piecewise integral-curve path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import expr as ex
from .commutator import flow_count, shifted_program
from .dpath import DPath, build_dpath
from .errors import (BudgetExceeded, DomainEscape, FrameDeficient,
                     HypercubeExhausted, NoConvergence, SingularJacobian,
                     Stalled)
from .fields import DistributionSpec, iterated_bracket
from .filtration import (DEFAULT_RANK_TOL, best_minor, grid_samples,
                         minimal_depth, select_frame)
from .flows import DEFAULT_TOL, Const, FlowProgram, apply_program

__all__ = [
    "Frame",
    "frame_at",
    "endpoint_map",
    "endpoint_program",
    "jacobian_endpoint",
    "EndpointJacobian",
    "estimate_bounds",
    "BoundsEstimate",
    "formula_radius",
    "FormulaRadius",
    "formula_exponent",
    "certified_radius",
    "RadiusCertificate",
    "steer",
    "connect",
    "ConnectParams",
    "operational_delta_max",
    "probe_targets",
]


class Frame:
    """An ordered list of bracket words spanning the stabilised distribution.

    Caches the bracket fields and the shifted programs per delta.
    """

    def __init__(self, spec: DistributionSpec, words):
        self.spec = spec
        self.words = tuple(spec.validate_word(w) for w in words)
        if not self.words:
            raise ValueError("frame needs at least one word")
        self._programs: dict[float, tuple[FlowProgram, ...]] = {}

    @property
    def size(self) -> int:
        return len(self.words)

    @cached_property
    def fields(self):
        return tuple(iterated_bracket(self.spec, w) for w in self.words)

    @cached_property
    def max_length(self) -> int:
        return max(len(w) for w in self.words)

    def values_at(self, y) -> np.ndarray:
        """dim x size matrix whose columns are the frame fields at y."""
        return np.array([f.evaluate(y) for f in self.fields]).T

    def programs(self, delta: float) -> tuple[FlowProgram, ...]:
        progs = self._programs.get(delta)
        if progs is None:
            progs = tuple(shifted_program(self.spec, w, delta) for w in self.words)
            self._programs[delta] = progs
        return progs

    def __repr__(self):
        return f"Frame({[w.indices for w in self.words]})"


def frame_at(spec: DistributionSpec, y, depth: int, rank: int,
             rank_tol: float = DEFAULT_RANK_TOL) -> Frame:
    """Select a frame by the greedy sweep at y and wrap it."""
    selection = select_frame(spec, y, depth, rank, rank_tol)
    return Frame(spec, selection.words)


# ---------------------------------------------------------------------------
# endpoint map

def endpoint_map(frame: Frame, delta: float, y, s, tol: float = DEFAULT_TOL,
                 enforce_domain: bool = True) -> np.ndarray:
    """Composition of the shifted programs, last frame word applied first."""
    s = np.asarray(s, dtype=float)
    if s.shape != (frame.size,):
        raise ValueError(f"parameter must have shape ({frame.size},)")
    if enforce_domain and np.any(np.abs(s) >= delta / 2.0):
        raise ValueError("parameters must lie strictly inside the delta/2 hypercube")
    progs = frame.programs(delta)
    x = np.asarray(y, dtype=float)
    for idx in range(frame.size - 1, -1, -1):
        try:
            x = apply_program(progs[idx], x, float(s[idx]), tol)
        except DomainEscape as esc:
            esc.args = (f"factor {idx + 1} (word {frame.words[idx].indices}): {esc.args[0]}",)
            raise
    return x


def endpoint_program(frame: Frame, delta: float, s) -> FlowProgram:
    """Flatten the full composition at fixed s into one constant program."""
    s = np.asarray(s, dtype=float)
    atoms = []
    progs = frame.programs(delta)
    for idx in range(frame.size - 1, -1, -1):
        for k, sched in progs[idx].atoms:
            atoms.append((k, Const(sched.duration(float(s[idx])), delta)))
    return FlowProgram(tuple(atoms), frame.spec, delta=delta)


@dataclass(frozen=True)
class EndpointJacobian:
    raw: np.ndarray            # dim x size, finite difference columns
    rows: tuple[int, ...]      # chart rows for the square restriction
    square: np.ndarray         # size x size restriction
    step: float


def _chart_rows(frame: Frame, y) -> tuple[int, ...]:
    if frame.size == frame.spec.dim:
        return tuple(range(frame.spec.dim))
    rows, _ = best_minor(frame.values_at(y))
    return rows


def jacobian_endpoint(frame: Frame, delta: float, y, s, h: float | None = None,
                      tol: float = DEFAULT_TOL, scheme: str = "central",
                      rows: tuple[int, ...] | None = None) -> EndpointJacobian:
    """Finite difference Jacobian of s -> endpoint_map(s).

    Central differences by default; the forward scheme halves the cost for
    Lipschitz sampling.  Steps shrink near the hypercube boundary so probes
    stay inside.
    """
    s = np.asarray(s, dtype=float)
    m = frame.size
    if h is None:
        h = delta / 100.0
    if rows is None:
        rows = _chart_rows(frame, y)
    cols = []
    center = None
    if scheme == "forward":
        center = endpoint_map(frame, delta, y, s, tol)
    for ell in range(m):
        room = delta / 2.0 - abs(s[ell])
        h_ell = min(h, 0.5 * room)
        if h_ell <= 0.0:
            raise ValueError("parameter too close to the hypercube boundary")
        e = np.zeros(m)
        e[ell] = h_ell
        if scheme == "central":
            plus = endpoint_map(frame, delta, y, s + e, tol)
            minus = endpoint_map(frame, delta, y, s - e, tol)
            cols.append((plus - minus) / (2.0 * h_ell))
        elif scheme == "forward":
            plus = endpoint_map(frame, delta, y, s + e, tol)
            cols.append((plus - center) / h_ell)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    raw = np.array(cols).T
    square = raw[list(rows), :]
    return EndpointJacobian(raw, tuple(rows), square, h)


# ---------------------------------------------------------------------------
# bounds over a region

@dataclass(frozen=True)
class BoundsEstimate:
    c0: float                 # lower bound on |det| of the frame minor
    c1: float                 # upper bound on the derivative budget
    sample_count: int
    derivative_order: int
    max_with_one: bool = True


def _multi_indices(dim: int, max_order: int):
    out = [(0,) * dim]
    for order in range(1, max_order + 1):
        for combo in itertools.combinations_with_replacement(range(dim), order):
            alpha = [0] * dim
            for j in combo:
                alpha[j] += 1
            out.append(tuple(alpha))
    return out


def _derivative_bundle(field, max_order: int):
    """One compiled function returning every partial up to max_order for
    every component, grouped per component."""
    key = ("deriv_bundle", max_order)
    cache = field.__dict__.setdefault("_bounds_cache", {})
    fn = cache.get(key)
    if fn is None:
        alphas = _multi_indices(field.dim, max_order)
        exprs = [field.partial(c, a) for c in range(field.dim) for a in alphas]
        fn = (ex.compile_vector(exprs, field.dim), len(alphas))
        cache[key] = fn
    return fn


def estimate_bounds(spec: DistributionSpec, frame: Frame, region=None,
                    depth: int | None = None, per_axis: int = 4,
                    rank_tol: float = DEFAULT_RANK_TOL) -> BoundsEstimate:
    """Sampled two-sided bounds feeding the radius formula.

    c0 is 0.9 times the smallest |det| of the best square frame minor over
    the sample grid; c1 is 1.1 times the largest, over samples, of the sum
    over generator components of max(1, sum of absolute partials up to order
    depth + 3), with exact derivatives from the component expressions.
    """
    if depth is None:
        depth = frame.max_length
    region = spec.box if region is None else np.asarray(region, dtype=float)
    samples = grid_samples(region, per_axis)
    order = depth + 3

    c0 = math.inf
    for x in samples:
        _, det = best_minor(frame.values_at(x))
        if abs(det) < rank_tol:
            raise FrameDeficient(
                f"frame minor determinant {det:.3e} below tolerance at {x.tolist()}")
        c0 = min(c0, abs(det))
    c0 *= 0.9

    c1 = 0.0
    for x in samples:
        total = 0.0
        for gen in spec.generators:
            fn, n_alphas = _derivative_bundle(gen, order)
            flat = fn(x)
            for c in range(gen.dim):
                chunk = flat[c * n_alphas:(c + 1) * n_alphas]
                total += max(1.0, sum(abs(v) for v in chunk))
        c1 = max(c1, total)
    c1 *= 1.1

    return BoundsEstimate(c0, c1, len(samples), order)


# ---------------------------------------------------------------------------
# radius certificates

def formula_exponent(depth: int, rank: int) -> int:
    """6 n_depth (depth + 3) rank (2 rank + 1) with n the commutator flow count."""
    return 6 * flow_count(depth) * (depth + 3) * rank * (2 * rank + 1)


@dataclass(frozen=True)
class FormulaRadius:
    delta_o: float
    r_o: float
    exponent: int
    c0: float
    c1: float
    depth: int
    rank: int
    k_const: float
    k_prime: float
    delta_max: float
    certified: bool = False   # shape-only unless the constants are justified


def _exp_clamped(log_value: float) -> float:
    if log_value > 700.0:
        return math.inf
    if log_value < -745.0:
        return 0.0
    return math.exp(log_value)


def formula_radius(c0: float, c1: float, depth: int, rank: int, delta_max: float,
                   k_const: float = 1.0, k_prime: float = 1.0) -> FormulaRadius:
    """Closed-form radius from the two bounds; constants are caller-supplied.

    With default constants the output is shape-only (useful for monotonicity
    and scaling studies), not a certificate.
    """
    if c0 <= 0.0:
        raise ValueError("c0 must be positive")
    if c1 < 1.0:
        raise ValueError("c1 must be >= 1")
    if not 0.0 < delta_max < 1.0:
        raise ValueError("delta_max must lie in (0, 1)")
    if k_const <= 0.0 or k_prime <= 0.0:
        raise ValueError("constants must be positive")
    exponent = formula_exponent(depth, rank)
    log_delta = math.log(k_const) + depth * math.log(c0) - depth * exponent * math.log(c1)
    delta_o = min(_exp_clamped(log_delta), delta_max)
    if delta_o == 0.0:
        r_o = 0.0  # the closed form underflowed; the shape is still reported
    else:
        log_r = (math.log(k_prime) + math.log(delta_o)
                 + math.log(min(c0, c0 * c0)) - exponent * math.log(c1))
        r_o = _exp_clamped(log_r)
    return FormulaRadius(delta_o, r_o, exponent, c0, c1, depth, rank,
                         k_const, k_prime, delta_max)


@dataclass(frozen=True)
class RadiusCertificate:
    center: np.ndarray
    delta: float
    method: str               # "direct-ift" or "formula"
    r_o: float
    inverse_norm: float | None = None
    lipschitz: float | None = None
    condition_domain: tuple[float, float] | None = None   # (2 r A, delta/2)
    condition_lipschitz: tuple[float, float] | None = None  # (L, 1/(2 r A^2))
    rounds: int | None = None
    pairs: int | None = None
    seed: int | None = None
    formula: FormulaRadius | None = None
    words: tuple | None = None

    @property
    def conditions_hold(self) -> bool:
        # the active branch satisfies its condition with equality, so allow
        # rounding-level slack in the comparison
        if self.method != "direct-ift":
            return False
        d_lhs, d_rhs = self.condition_domain
        l_lhs, l_rhs = self.condition_lipschitz
        return (d_lhs <= d_rhs * (1.0 + 1e-9)
                and l_lhs <= l_rhs * (1.0 + 1e-9))


def certified_radius(frame: Frame, delta: float, y, *,
                     budget_rounds: int = 8, initial_pairs: int = 4,
                     inflation: float = 1.25, lipschitz_floor: float = 1e-9,
                     tol: float = DEFAULT_TOL, lipschitz_tol: float = 1e-8,
                     seed: int = 0,
                     stabilize_rel: float = 0.10) -> RadiusCertificate:
    """Measured inverse-function-theorem radius for the endpoint map at y.

    The Jacobian inverse norm is taken at s = 0; the Jacobian Lipschitz
    constant is the inflated maximum difference quotient over random
    parameter pairs, with the pair count doubling until the estimate moves
    by at most 10 percent.  The sampled Jacobians use the looser
    ``lipschitz_tol`` (their role is statistical, the 1.25 inflation
    dominates the measurement noise); the s = 0 Jacobian uses ``tol``.
    """
    y = np.asarray(y, dtype=float)
    m = frame.size
    rows = _chart_rows(frame, y)
    j0 = jacobian_endpoint(frame, delta, y, np.zeros(m), tol=tol, rows=rows)
    sigma = np.linalg.svd(j0.square, compute_uv=False)
    if sigma[0] == 0.0 or sigma[-1] < 1e-12 * sigma[0]:
        raise SingularJacobian(
            f"endpoint Jacobian singular at s = 0 (singular values {sigma.tolist()})")
    inverse_norm = 1.0 / float(sigma[-1])

    rng = np.random.default_rng(seed)
    pair_tol = max(tol, lipschitz_tol)

    def new_pair():
        bound = 0.45 * delta
        s1 = rng.uniform(-bound, bound, m)
        s2 = rng.uniform(-bound, bound, m)
        while np.linalg.norm(s2 - s1) < 1e-3 * delta:
            s2 = rng.uniform(-bound, bound, m)
        j1 = jacobian_endpoint(frame, delta, y, s1, tol=pair_tol,
                               scheme="forward", rows=rows)
        j2 = jacobian_endpoint(frame, delta, y, s2, tol=pair_tol,
                               scheme="forward", rows=rows)
        ratio = (np.linalg.norm(j1.square - j2.square, 2)
                 / float(np.linalg.norm(s2 - s1)))
        return float(ratio)

    ratios = [new_pair() for _ in range(initial_pairs)]
    lipschitz = max(max(ratios) * inflation, lipschitz_floor)
    stable = False
    rounds = 0
    for rounds in range(1, budget_rounds + 1):
        for _ in range(len(ratios)):
            ratios.append(new_pair())
        new_lip = max(max(ratios) * inflation, lipschitz_floor)
        if abs(new_lip - lipschitz) <= stabilize_rel * new_lip:
            lipschitz = new_lip
            stable = True
            break
        lipschitz = new_lip
    if not stable:
        raise BudgetExceeded(
            f"Lipschitz estimate did not stabilise within {budget_rounds} doublings "
            f"(last value {lipschitz:.3e})")

    r_o = min(delta / (4.0 * inverse_norm),
              1.0 / (2.0 * lipschitz * inverse_norm * inverse_norm))
    cond_domain = (2.0 * r_o * inverse_norm, delta / 2.0)
    cond_lip = (lipschitz, 1.0 / (2.0 * r_o * inverse_norm * inverse_norm))
    return RadiusCertificate(
        center=y, delta=delta, method="direct-ift", r_o=r_o,
        inverse_norm=inverse_norm, lipschitz=lipschitz,
        condition_domain=cond_domain, condition_lipschitz=cond_lip,
        rounds=rounds, pairs=len(ratios), seed=seed,
        words=tuple(w.indices for w in frame.words))


def operational_delta_max(frame: Frame, y, tol: float = DEFAULT_TOL) -> float:
    """Largest tried delta whose full parameter hypercube evaluates in the box.

    Starts from half the boundary margin shrunk by a crude derivative budget
    and halves until all hypercube corners of the endpoint map stay inside.
    """
    y = np.asarray(y, dtype=float)
    spec = frame.spec
    margin = spec.boundary_margin(y)
    if margin <= 0.0:
        raise DomainEscape("center outside the domain box", 0.0, y)
    c1_quick = sum(max(1.0, float(np.max(np.abs(g.evaluate(y)))))
                   for g in spec.generators)
    delta = min(0.99, 0.5 * margin / (1.0 + c1_quick))
    m = frame.size
    corners = [np.array(c) for c in np.ndindex(*(2,) * m)]
    while delta > 1e-8:
        ok = True
        for corner in corners:
            s = (corner * 2.0 - 1.0) * (delta / 2.0)
            try:
                endpoint_map(frame, delta, y, s, tol, enforce_domain=False)
            except DomainEscape:
                ok = False
                break
        if ok:
            return delta
        delta *= 0.5
    raise Stalled(f"no viable delta found at {y.tolist()}")


def probe_targets(frame: Frame, y, radius: float, count: int, rng) -> list[np.ndarray]:
    """Targets at the given distance from y, uniform on the sphere of the
    frame span (the full sphere when the frame has full rank)."""
    y = np.asarray(y, dtype=float)
    values = frame.values_at(y)
    q, _ = np.linalg.qr(values)
    targets = []
    for _ in range(count):
        u = rng.standard_normal(frame.size)
        u /= np.linalg.norm(u)
        targets.append(y + radius * (q @ u))
    return targets


# ---------------------------------------------------------------------------
# steering

def steer(frame: Frame, delta: float, y, target, tol: float = 1e-8,
          max_iter: int = 50, integrate_tol: float = DEFAULT_TOL) -> DPath:
    """Damped Newton inversion of the endpoint map, emitted as a DPath.

    The parameter is clamped strictly inside the hypercube; the converged
    composition is flattened into generator arcs, re-integrated end to end
    and checked against the target.
    """
    y = np.asarray(y, dtype=float)
    target = np.asarray(target, dtype=float)
    m = frame.size
    rows = _chart_rows(frame, y)
    clamp = 0.4995 * delta
    # converge the iteration below the reporting tolerance so the flattened
    # re-integration stays within it
    inner_tol = 0.25 * tol

    s = np.zeros(m)
    current = endpoint_map(frame, delta, y, s, integrate_tol)
    best_res = float(np.linalg.norm(current - target))
    best_s = s.copy()
    pinned_streak = 0
    converged = best_res < inner_tol

    iterations = 0
    while not converged:
        iterations += 1
        if iterations > max_iter:
            raise NoConvergence(
                f"no convergence within {max_iter} iterations "
                f"(best residual {best_res:.3e})", best_res, best_s)
        residual = current - target
        res_norm = float(np.linalg.norm(residual))
        jac = jacobian_endpoint(frame, delta, y, s, tol=integrate_tol, rows=rows)
        sigma = np.linalg.svd(jac.square, compute_uv=False)
        if sigma[0] == 0.0 or sigma[-1] < 1e-12 * sigma[0]:
            raise SingularJacobian(
                f"steering Jacobian singular at s = {s.tolist()}")
        step = np.linalg.solve(jac.square, -residual[list(rows)])

        alpha = 1.0
        accepted = False
        while alpha >= 1e-12:
            s_new = np.clip(s + alpha * step, -clamp, clamp)
            trial = endpoint_map(frame, delta, y, s_new, integrate_tol)
            trial_norm = float(np.linalg.norm(trial - target))
            if trial_norm < res_norm * (1.0 - 1e-4 * alpha) or trial_norm < inner_tol:
                s, current = s_new, trial
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if res_norm < tol:
                break  # within the reported tolerance, flatten what we have
            raise NoConvergence(
                f"line search stalled at residual {res_norm:.3e}", best_res, best_s)
        new_norm = float(np.linalg.norm(current - target))
        if new_norm < best_res:
            best_res = new_norm
            best_s = s.copy()
        converged = new_norm < inner_tol
        if np.any(np.abs(s) >= clamp * (1.0 - 1e-12)):
            pinned_streak += 1
            if not converged and pinned_streak >= 3:
                raise HypercubeExhausted(
                    f"Newton iterate pinned to the hypercube boundary "
                    f"(residual {new_norm:.3e})", best_res, best_s)
        else:
            pinned_streak = 0

    program = endpoint_program(frame, delta, s)
    path = build_dpath(program, frame.spec, y, target=target, tol=integrate_tol)
    if path.endpoint_error >= tol:
        raise NoConvergence(
            f"flattened path endpoint error {path.endpoint_error:.3e} exceeds {tol:.1e}",
            path.endpoint_error, s)
    path.meta.update({
        "delta": delta,
        "parameter": [float(v) for v in s],
        "words": [list(w.indices) for w in frame.words],
    })
    return path


@dataclass
class ConnectParams:
    delta: float | None = None
    tol: float = 1e-6
    min_radius: float = 1e-5
    max_waypoints: int = 400
    radius_fraction: float = 0.9
    seed: int = 0
    newton_max_iter: int = 60
    integrate_tol: float = DEFAULT_TOL
    lmax: int = 4
    rank_tol: float = DEFAULT_RANK_TOL
    per_axis: int = 5


def connect(spec: DistributionSpec, x, x_prime, params: ConnectParams | None = None) -> DPath:
    """Greedy waypoint chaining between two points of a bracket-generating
    distribution: certify a radius at the current point, advance toward the
    target within it, steer, repeat."""
    params = params or ConnectParams()
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)

    depth_res = minimal_depth(spec, grid_samples(spec.box, params.per_axis),
                              params.lmax, params.rank_tol)
    if not (depth_res.stabilized and depth_res.uniform and depth_res.rank == spec.dim):
        raise Stalled("connect requires a distribution verified bracket "
                      "generating on the sample grid")

    arcs = []
    certificates = []
    waypoints = [x.copy()]
    y = x.copy()
    hop = 0
    while True:
        dist = float(np.linalg.norm(x_prime - y))
        if dist <= params.tol:
            break
        hop += 1
        if hop > params.max_waypoints:
            raise Stalled(f"exceeded {params.max_waypoints} waypoints "
                          f"(remaining distance {dist:.3e})")
        frame = frame_at(spec, y, depth_res.depth, depth_res.rank, params.rank_tol)
        if params.delta is not None:
            delta = params.delta
        else:
            delta = min(0.5, 0.8 * operational_delta_max(frame, y, params.integrate_tol))
        cert = certified_radius(frame, delta, y, tol=params.integrate_tol,
                                seed=params.seed + hop)
        certificates.append(cert)
        reach_dist = params.radius_fraction * cert.r_o
        if reach_dist < params.min_radius and dist > params.tol:
            raise Stalled(f"certified radius collapsed to {cert.r_o:.3e} at "
                          f"{y.tolist()}")
        step_dist = min(reach_dist, dist)
        waypoint = y + step_dist * (x_prime - y) / dist
        leg = steer(frame, delta, y, waypoint, tol=params.tol,
                    max_iter=params.newton_max_iter,
                    integrate_tol=params.integrate_tol)
        arcs.extend(leg.arcs)
        y = leg.endpoint
        waypoints.append(y.copy())

    error = float(np.linalg.norm(y - x_prime))
    path = DPath(tuple(arcs), x, y, x_prime, error)
    path.meta.update({
        "waypoints": [[float(v) for v in w] for w in waypoints],
        "hops": hop,
        "radii": [c.r_o for c in certificates],
    })
    return path
