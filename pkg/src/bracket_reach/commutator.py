"""Commutator flow programs and their Taylor-order verification.

For a bracket word w = (i1, ..., ir) the commutator program C_w(t) is the
recursive flow composition whose first r-1 time derivatives vanish at t = 0
and whose r-th derivative equals r! times the iterated bracket.  The root
rescaled program runs C_w at t^(1/r) so the bracket appears at first order,
and the shifted program composes the rescaled program at t + delta with its
own inverse frozen at delta, giving a family that is differentiable at t = 0
with velocity within O(delta^(1/r)) of the bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import BracketWord, DistributionSpec, iterated_bracket
from .flows import (DEFAULT_TOL, Const, FlowProgram, PlainT, SignedRoot,
                    apply_program)

__all__ = [
    "flow_count",
    "commutator_program",
    "rescaled_program",
    "shifted_program",
    "verify_taylor",
    "approx_velocity",
    "TaylorReport",
    "OrderResult",
]


def flow_count(r: int) -> int:
    """Number of flows composed in a commutator program for a word of length r."""
    if r < 1:
        raise ValueError("word length must be >= 1")
    return 2 ** r + 2 ** (r - 1) - 2


def commutator_program(spec: DistributionSpec, word) -> FlowProgram:
    """The recursive flow commutator for a bracket word.

    Length-1 words give the single flow of that generator.  For longer words
    the program conjugates the tail program by the head generator flow; every
    schedule is a signed copy of t and the atom count equals
    ``flow_count(len(word))``.
    """
    word = spec.validate_word(word)
    atoms = _commutator_atoms(word.indices)
    return FlowProgram(atoms, spec)


def _commutator_atoms(indices: tuple[int, ...]):
    if len(indices) == 1:
        return ((indices[0], PlainT(1)),)
    head = indices[0]
    tail = _commutator_atoms(indices[1:])
    inverse_tail = tuple((k, s.negated()) for k, s in reversed(tail))
    return inverse_tail + ((head, PlainT(1)),) + tail + ((head, PlainT(-1)),)


def rescaled_program(spec: DistributionSpec, word) -> FlowProgram:
    """Commutator program reparametrised to t^(1/r); defined for t >= 0.

    Length-1 words are returned unchanged (the root is the identity there).
    """
    word = spec.validate_word(word)
    base = commutator_program(spec, word)
    r = len(word)
    if r == 1:
        return base
    atoms = tuple((k, SignedRoot(s.sign, r, 0.0)) for k, s in base.atoms)
    return FlowProgram(atoms, spec)


def shifted_program(spec: DistributionSpec, word, delta: float) -> FlowProgram:
    """Rescaled program at t + delta composed with its inverse frozen at delta.

    The result has exactly twice the atoms of the commutator program: the
    forward copy runs schedules sign * (t + delta)^(1/r), the frozen inverse
    runs constants -sign * delta^(1/r).  The certified parameter domain is
    (-delta/2, delta/2); the program evaluates for any t >= -delta.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    word = spec.validate_word(word)
    base = commutator_program(spec, word)
    r = len(word)
    root = delta ** (1.0 / r)
    forward = tuple((k, SignedRoot(s.sign, r, delta, delta)) for k, s in base.atoms)
    frozen = tuple((k, Const(-s.sign * root, delta)) for k, s in reversed(base.atoms))
    return FlowProgram(forward + frozen, spec, delta=delta,
                       param_domain=(-delta / 2.0, delta / 2.0))


# ---------------------------------------------------------------------------
# finite-difference verification of the Taylor structure

@dataclass(frozen=True)
class OrderResult:
    order: int
    value: np.ndarray
    norm: float
    target: np.ndarray | None
    error: float
    tolerance: float
    passed: bool
    relative: bool


@dataclass(frozen=True)
class TaylorReport:
    word: BracketWord
    point: np.ndarray
    step: float
    orders: tuple[OrderResult, ...]
    passed: bool


_STENCILS: dict[int, np.ndarray] = {}


def _stencil(order: int) -> np.ndarray:
    """Central weights on nodes -2..2 for the given derivative order."""
    weights = _STENCILS.get(order)
    if weights is None:
        nodes = np.arange(-2.0, 3.0)
        a_mat = np.vander(nodes, 5, increasing=True).T
        rhs = np.zeros(5)
        rhs[order] = math.factorial(order)
        weights = np.linalg.solve(a_mat, rhs)
        _STENCILS[order] = weights
    return weights


def _fd_derivative(values, order: int, h: float) -> np.ndarray:
    """Derivative of order `order` at 0 from samples on j*h, j = -2..2."""
    w = _stencil(order)
    acc = w[0] * values[-2.0 * h]
    for j, wj in zip((-1.0, 0.0, 1.0, 2.0), w[1:]):
        if wj != 0.0:
            acc = acc + wj * values[j * h]
    return acc / h ** order


def default_step(r: int) -> float:
    """Default probing step, widened for longer words to beat solver noise."""
    return 0.05 * (1.0 + 0.5 * (r - 1))


def verify_taylor(spec: DistributionSpec, word, x0, h: float | None = None,
                  tol: float = DEFAULT_TOL, vanish_tol: float = 1e-3,
                  final_rel_tol: float = 0.01) -> TaylorReport:
    """Check the vanishing and leading t-derivatives of the commutator program.

    Orders 1..r-1 must vanish below ``vanish_tol`` times the target scale,
    order r must match r! times the iterated bracket within ``final_rel_tol``
    relative error.  Derivatives up to order 2 use a fourth order central
    stencil; orders 3 and 4 add one Richardson level over steps h and h/2.
    """
    word = spec.validate_word(word)
    r = len(word)
    if r > 4:
        raise ValueError("taylor verification supports words of length <= 4")
    x0 = np.asarray(x0, dtype=float)
    if h is None:
        h = default_step(r)

    program = commutator_program(spec, word)
    needed = {j * h for j in (-2.0, -1.0, 1.0, 2.0)}
    if r >= 3:
        needed.update(j * h / 2.0 for j in (-2.0, -1.0, 1.0, 2.0))
    values = {0.0: x0}
    for t in sorted(needed):
        values[t] = apply_program(program, x0, t, tol)

    target_field = iterated_bracket(spec, word)
    bracket_value = target_field.evaluate(x0)
    final_target = math.factorial(r) * bracket_value
    scale = 1.0 + float(np.max(np.abs(final_target)))

    orders = []
    all_passed = True
    for m in range(1, r + 1):
        if m <= 2:
            deriv = _fd_derivative(values, m, h)
        else:
            coarse = _fd_derivative(values, m, h)
            fine = _fd_derivative(values, m, h / 2.0)
            deriv = (4.0 * fine - coarse) / 3.0
        norm = float(np.max(np.abs(deriv)))
        if m < r:
            tolerance = vanish_tol * scale
            error = norm
            passed = error < tolerance
            orders.append(OrderResult(m, deriv, norm, None, error, tolerance, passed, False))
        else:
            target_norm = float(np.linalg.norm(final_target))
            diff_norm = float(np.linalg.norm(deriv - final_target))
            if target_norm > 1e-12:
                error = diff_norm / target_norm
                tolerance = final_rel_tol
                relative = True
            else:
                error = diff_norm
                tolerance = vanish_tol * scale
                relative = False
            passed = error < tolerance
            orders.append(OrderResult(m, deriv, norm, final_target, error,
                                      tolerance, passed, relative))
        all_passed = all_passed and passed

    return TaylorReport(word, x0, h, tuple(orders), all_passed)


def approx_velocity(program: FlowProgram, x0, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Fourth order central t-derivative of a shifted program at t = 0.

    The probing step is delta/8 so every node stays inside the certified
    parameter interval.
    """
    if program.delta is None:
        raise ValueError("approx_velocity needs a shifted program carrying delta")
    x0 = np.asarray(x0, dtype=float)
    h = program.delta / 8.0
    f = {j: apply_program(program, x0, j * h, tol) for j in (-2.0, -1.0, 1.0, 2.0)}
    return (f[-2.0] - 8.0 * f[-1.0] + 8.0 * f[1.0] - f[2.0]) / (12.0 * h)
