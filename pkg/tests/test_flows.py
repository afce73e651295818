"""Flow integration, schedules and program execution."""

import numpy as np
import pytest

from bracket_reach import (BracketWord, Const, DomainEscape, FlowProgram,
                           PlainT, ScheduleDomain, SignedRoot, SmoothField,
                           StepUnderflow, apply_program, integrate_flow,
                           flow_trajectory, invert_program)
from bracket_reach.commutator import commutator_program
from conftest import heis_flow2, heis_commutator12


def test_flow_matches_closed_form(heisenberg):
    x2 = heisenberg.generators[1]
    for x0, t in [((0.4, -0.3, 0.7), 0.9), ((0.0, 0.0, 0.0), -1.2), ((1.0, 1.0, 0.0), 0.3)]:
        out = integrate_flow(x2, np.array(x0), t, box=heisenberg.box)
        assert np.allclose(out, heis_flow2(x0, t), atol=1e-11)


def test_flow_from_origin(heisenberg):
    out = integrate_flow(heisenberg.generators[0], np.zeros(3), 0.3)
    assert np.allclose(out, [0.3, 0.0, 0.0], atol=1e-12)


def test_flow_zero_duration_is_identity(martinet):
    x0 = np.array([0.2, 0.4, -0.1])
    out = integrate_flow(martinet.generators[1], x0, 0.0)
    assert np.array_equal(out, x0)


def test_flow_group_law_and_reversibility(perturbed):
    field = perturbed.generators[1]
    tol = 1e-10
    rng = np.random.default_rng(4)
    for _ in range(5):
        x0 = rng.uniform(-0.8, 0.8, 3)
        s, t = rng.uniform(-0.5, 0.5, 2)
        one = integrate_flow(field, integrate_flow(field, x0, t, tol), s, tol)
        two = integrate_flow(field, x0, s + t, tol)
        assert np.max(np.abs(one - two)) < 10 * tol * 10
        back = integrate_flow(field, integrate_flow(field, x0, t, tol), -t, tol)
        assert np.max(np.abs(back - x0)) < 10 * tol * 10


def test_domain_escape_reports_exit_time(heisenberg):
    x1 = heisenberg.generators[0]
    x0 = np.array([1.5, 0.0, 0.0])
    with pytest.raises(DomainEscape) as err:
        integrate_flow(x1, x0, 1.0, box=heisenberg.box)
    assert err.value.exit_time == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(DomainEscape):
        integrate_flow(x1, np.array([5.0, 0.0, 0.0]), 0.1, box=heisenberg.box)


def test_step_underflow_on_blowup():
    field = SmoothField.from_strings(1, ["-1/x1"])
    with pytest.raises((StepUnderflow, ZeroDivisionError)):
        integrate_flow(field, np.array([0.5]), 0.2)


def test_trajectory_sampling(heisenberg):
    x2 = heisenberg.generators[1]
    x0 = np.array([0.5, 0.0, 0.0])
    end, times, pts = flow_trajectory(x2, x0, 0.8, 17)
    assert np.allclose(end, heis_flow2(x0, 0.8), atol=1e-11)
    assert len(times) == 17 and pts.shape == (17, 3)
    for s, p in zip(times, pts):
        assert np.allclose(p, heis_flow2(x0, s), atol=1e-9)


class TestSchedules:
    def test_plain(self):
        assert PlainT(1).duration(0.3) == 0.3
        assert PlainT(-1).duration(0.3) == -0.3
        assert PlainT(1).negated() == PlainT(-1)

    def test_const(self):
        sched = Const(0.7, delta=0.2)
        assert sched.duration(123.0) == 0.7
        assert sched.negated() == Const(-0.7, 0.2)

    def test_signed_root(self):
        sched = SignedRoot(-1, 2, 0.1)
        assert sched.duration(0.3) == pytest.approx(-np.sqrt(0.4))
        with pytest.raises(ScheduleDomain):
            sched.duration(-0.2)
        with pytest.raises(ValueError):
            SignedRoot(1, 0)


def test_empty_program_is_identity(heisenberg):
    prog = FlowProgram((), heisenberg)
    x0 = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(apply_program(prog, x0, 1.0), x0)


def test_single_atom_program_equals_flow(heisenberg):
    prog = FlowProgram(((2, PlainT(1)),), heisenberg)
    x0 = np.array([0.3, 0.0, -0.2])
    a = apply_program(prog, x0, 0.45)
    b = integrate_flow(heisenberg.generators[1], x0, 0.45, box=heisenberg.box)
    assert np.array_equal(a, b)


def test_commutator_composition_closed_form(heisenberg):
    prog = commutator_program(heisenberg, BracketWord((1, 2)))
    out = apply_program(prog, np.zeros(3), 0.2)
    assert np.allclose(out, heis_commutator12(np.zeros(3), 0.2), atol=1e-10)
    assert np.allclose(out, [0.0, 0.0, 0.04], atol=1e-10)


def test_program_index_validation(heisenberg):
    with pytest.raises(IndexError):
        FlowProgram(((3, PlainT(1)),), heisenberg)


def test_invert_single_atom(heisenberg):
    prog = FlowProgram(((1, PlainT(1)),), heisenberg)
    inv = invert_program(prog)
    assert inv.atoms == ((1, PlainT(-1)),)


def test_invert_round_trip(heisenberg):
    prog = commutator_program(heisenberg, BracketWord((1, 2)))
    inv = invert_program(prog)
    x0 = np.array([0.1, 0.2, 0.3])
    fwd = apply_program(prog, x0, 0.2)
    back = apply_program(inv, fwd, 0.2)
    assert np.max(np.abs(back - x0)) < 1e-9


def test_double_inversion_is_identity_structurally(martinet):
    prog = commutator_program(martinet, BracketWord((2, 1, 2)))
    assert invert_program(invert_program(prog)) == prog


def test_escape_carries_atom_index(heisenberg):
    prog = FlowProgram(((2, PlainT(1)), (1, PlainT(1))), heisenberg)
    with pytest.raises(DomainEscape) as err:
        apply_program(prog, np.array([1.9, 0.0, 0.0]), 1.0)
    assert err.value.atom_index == 1
