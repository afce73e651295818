"""Commutator programs, rescaling, shifted families and Taylor checks."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bracket_reach import (BracketWord, Const, PlainT, ScheduleDomain,
                           SignedRoot, apply_program, integrate_flow,
                           iterated_bracket)
from bracket_reach.commutator import (approx_velocity, commutator_program,
                                      flow_count, rescaled_program,
                                      shifted_program, verify_taylor)
from conftest import heis_commutator12, martinet_commutator12, random_cubic_spec


def test_flow_count_reference_values():
    assert [flow_count(r) for r in (1, 2, 3, 4)] == [1, 4, 10, 22]
    with pytest.raises(ValueError):
        flow_count(0)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 12))
def test_flow_count_recursion(r):
    assert flow_count(r) == 2 * flow_count(r - 1) + 2


def test_commutator_base_case(heisenberg):
    prog = commutator_program(heisenberg, BracketWord((2,)))
    assert prog.atoms == ((2, PlainT(1)),)


def test_commutator_structure_length2(heisenberg):
    prog = commutator_program(heisenberg, BracketWord((1, 2)))
    assert prog.atoms == ((2, PlainT(-1)), (1, PlainT(1)), (2, PlainT(1)), (1, PlainT(-1)))


def test_commutator_atom_counts_exhaustive():
    spec = random_cubic_spec(1, dim=3, p=4)
    for r in range(1, 6):
        for idx in itertools.product(range(1, 5), repeat=r):
            prog = commutator_program(spec, BracketWord(idx))
            assert len(prog.atoms) == flow_count(r)


def test_commutator_closed_forms(heisenberg, martinet):
    rng = np.random.default_rng(2)
    for _ in range(4):
        x0 = rng.uniform(-0.5, 0.5, 3)
        t = rng.uniform(-0.4, 0.4)
        h_prog = commutator_program(heisenberg, BracketWord((1, 2)))
        assert np.allclose(apply_program(h_prog, x0, t),
                           heis_commutator12(x0, t), atol=1e-10)
        m_prog = commutator_program(martinet, BracketWord((1, 2)))
        assert np.allclose(apply_program(m_prog, x0, t),
                           martinet_commutator12(x0, t), atol=1e-10)


class TestRescaled:
    def test_length1_unchanged(self, heisenberg):
        word = BracketWord((2,))
        assert rescaled_program(heisenberg, word) == commutator_program(heisenberg, word)

    def test_schedules_carry_the_root(self, heisenberg):
        prog = rescaled_program(heisenberg, BracketWord((1, 2)))
        assert all(isinstance(s, SignedRoot) and s.order == 2 for _, s in prog.atoms)

    def test_heisenberg_linear_shift(self, heisenberg):
        prog = rescaled_program(heisenberg, BracketWord((1, 2)))
        out = apply_program(prog, np.zeros(3), 0.04)
        assert np.allclose(out, [0.0, 0.0, 0.04], atol=1e-10)

    def test_zero_parameter_is_identity(self, martinet):
        prog = rescaled_program(martinet, BracketWord((1, 1, 2)))
        x0 = np.array([0.3, -0.2, 0.5])
        assert np.array_equal(apply_program(prog, x0, 0.0), x0)

    def test_negative_parameter_rejected(self, heisenberg):
        prog = rescaled_program(heisenberg, BracketWord((1, 2)))
        with pytest.raises(ScheduleDomain):
            apply_program(prog, np.zeros(3), -0.1)


class TestShifted:
    def test_atom_count_and_domain(self, martinet):
        for word in [(1,), (1, 2), (1, 1, 2)]:
            prog = shifted_program(martinet, BracketWord(word), 0.3)
            assert len(prog.atoms) == 2 * flow_count(len(word))
            assert prog.delta == 0.3
            assert prog.param_domain == (-0.15, 0.15)

    def test_forward_and_frozen_blocks(self, heisenberg):
        prog = shifted_program(heisenberg, BracketWord((1, 2)), 0.2)
        forward = prog.atoms[:4]
        frozen = prog.atoms[4:]
        assert all(isinstance(s, SignedRoot) and s.offset == 0.2 for _, s in forward)
        assert all(isinstance(s, Const) for _, s in frozen)
        root = 0.2 ** 0.5
        assert frozen[0][1].value == pytest.approx(root)   # undoes the last forward atom

    def test_heisenberg_exact_translation(self, heisenberg):
        for delta in (0.1, 0.4):
            prog = shifted_program(heisenberg, BracketWord((1, 2)), delta)
            x0 = np.array([0.2, -0.1, 0.3])
            s = 0.04
            out = apply_program(prog, x0, s)
            assert np.allclose(out, x0 + [0.0, 0.0, s], atol=1e-9)

    def test_identity_at_zero(self, martinet):
        for word in [(1, 2), (1, 1, 2)]:
            prog = shifted_program(martinet, BracketWord(word), 0.25)
            x0 = np.array([0.3, 0.1, -0.2])
            assert np.max(np.abs(apply_program(prog, x0, 0.0) - x0)) < 1e-8

    def test_length1_matches_plain_flow(self, martinet):
        prog = shifted_program(martinet, BracketWord((2,)), 0.3)
        x0 = np.array([0.4, 0.0, 0.1])
        t = 0.12
        direct = integrate_flow(martinet.generators[1], x0, t, box=martinet.box)
        assert np.max(np.abs(apply_program(prog, x0, t) - direct)) < 1e-9

    def test_delta_validation(self, heisenberg):
        with pytest.raises(ValueError):
            shifted_program(heisenberg, BracketWord((1, 2)), 0.0)


class TestVerifyTaylor:
    def test_heisenberg_word12(self, heisenberg):
        report = verify_taylor(heisenberg, BracketWord((1, 2)), np.zeros(3))
        assert report.passed
        first, second = report.orders
        assert first.norm < 1e-6
        assert np.allclose(second.value, [0.0, 0.0, 2.0], atol=1e-6)

    def test_single_index_gives_the_field(self, martinet):
        x0 = np.array([0.5, 0.2, 0.0])
        report = verify_taylor(martinet, BracketWord((2,)), x0)
        assert report.passed
        assert np.allclose(report.orders[0].value,
                           martinet.generators[1].evaluate(x0), atol=1e-8)

    def test_martinet_depth3(self, martinet):
        report = verify_taylor(martinet, BracketWord((1, 1, 2)), np.zeros(3))
        assert report.passed
        final = report.orders[-1]
        assert final.relative
        assert np.allclose(final.value, [0.0, 0.0, 12.0], rtol=0.01)

    def test_trivial_word_all_orders_vanish(self, heisenberg):
        report = verify_taylor(heisenberg, BracketWord((1, 1)), np.zeros(3))
        assert report.passed
        assert all(o.norm < 1e-8 for o in report.orders)

    def test_failure_verdicts_are_reported(self, perturbed):
        # an absurdly strict vanishing tolerance must flag the first order
        report = verify_taylor(perturbed, BracketWord((1, 2)),
                               np.array([0.5, 0.0, 0.0]), vanish_tol=1e-30)
        assert not report.passed
        assert not report.orders[0].passed
        assert report.orders[0].tolerance < report.orders[0].error


class TestApproxVelocity:
    def test_heisenberg_exact(self, heisenberg):
        x0 = np.array([0.3, -0.2, 0.1])
        for delta in (0.1, 0.3):
            prog = shifted_program(heisenberg, BracketWord((1, 2)), delta)
            v = approx_velocity(prog, x0)
            assert np.allclose(v, [0.0, 0.0, 1.0], atol=1e-8)

    def test_single_index(self, martinet):
        x0 = np.array([0.6, 0.0, 0.0])
        prog = shifted_program(martinet, BracketWord((2,)), 0.2)
        v = approx_velocity(prog, x0)
        assert np.allclose(v, martinet.generators[1].evaluate(x0), atol=1e-8)

    def test_martinet_sqrt_delta_decay(self, martinet):
        x0 = np.array([0.5, 0.0, 0.0])
        bracket = iterated_bracket(martinet, BracketWord((1, 2))).evaluate(x0)
        deltas = [0.2, 0.1, 0.05]
        devs = []
        for delta in deltas:
            prog = shifted_program(martinet, BracketWord((1, 2)), delta)
            devs.append(float(np.linalg.norm(approx_velocity(prog, x0) - bracket)))
        # the deviation is (3/2) sqrt(delta) in closed form
        for delta, dev in zip(deltas, devs):
            assert dev == pytest.approx(1.5 * np.sqrt(delta), rel=1e-3)
        for bigger, smaller in zip(devs, devs[1:]):
            assert smaller < bigger * 1.1

    def test_requires_shifted_program(self, heisenberg):
        prog = commutator_program(heisenberg, BracketWord((1, 2)))
        with pytest.raises(ValueError):
            approx_velocity(prog, np.zeros(3))


def test_taylor_on_random_cubic_spec():
    spec = random_cubic_spec(7)
    report = verify_taylor(spec, BracketWord((1, 2)), np.zeros(3))
    assert report.passed
