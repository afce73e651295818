"""Endpoint maps, radius certificates, steering and waypoint chaining."""

import numpy as np
import pytest

from bracket_reach import (BudgetExceeded, ConnectParams, Frame,
                           HypercubeExhausted, NoConvergence, SingularJacobian,
                           Stalled, certified_radius, connect, endpoint_map,
                           endpoint_program, estimate_bounds, formula_exponent,
                           formula_radius, frame_at, iterated_bracket,
                           jacobian_endpoint, operational_delta_max,
                           probe_targets, steer, validate_dpath)
from bracket_reach.fields import BracketWord


@pytest.fixture(scope="module")
def heis_frame(heisenberg):
    return Frame(heisenberg, [(1,), (2,), (1, 2)])


class TestEndpointMap:
    def test_identity_chart_several_deltas(self, heis_frame):
        # the depth-two factor is defined for s3 > -delta only; the single
        # flow factors evaluate for any parameter
        rng = np.random.default_rng(0)
        for delta in (0.1, 0.2, 0.5):
            for _ in range(3):
                s = rng.uniform(-0.24, 0.24, 3)
                s[2] = rng.uniform(-0.9 * min(delta, 0.25), 0.24)
                out = endpoint_map(heis_frame, delta, np.zeros(3), s,
                                   enforce_domain=False)
                assert np.max(np.abs(out - s)) < 1e-8

    def test_zero_parameter_returns_center(self, heis_frame):
        y = np.array([0.3, -0.1, 0.2])
        out = endpoint_map(heis_frame, 0.2, y, np.zeros(3))
        assert np.max(np.abs(out - y)) < 1e-9

    def test_off_center_composition(self, heis_frame):
        out = endpoint_map(heis_frame, 0.5, np.array([0.1, 0.0, 0.0]),
                           np.array([0.0, 0.2, 0.0]))
        assert np.allclose(out, [0.1, 0.2, 0.02], atol=1e-8)

    def test_domain_enforcement(self, heis_frame):
        with pytest.raises(ValueError):
            endpoint_map(heis_frame, 0.1, np.zeros(3), np.array([0.3, 0.0, 0.0]))

    def test_flattened_program_matches(self, heis_frame, heisenberg):
        from bracket_reach import apply_program
        s = np.array([0.02, -0.03, 0.01])
        composed = endpoint_map(heis_frame, 0.2, np.zeros(3), s)
        flat = endpoint_program(heis_frame, 0.2, s)
        replayed = apply_program(flat, np.zeros(3), 0.0)
        assert np.max(np.abs(composed - replayed)) < 1e-9


class TestJacobian:
    def test_identity_at_origin(self, heis_frame):
        jac = jacobian_endpoint(heis_frame, 0.2, np.zeros(3), np.zeros(3))
        assert np.allclose(jac.square, np.eye(3), atol=1e-7)
        assert np.linalg.det(jac.square) == pytest.approx(1.0, abs=1e-6)

    def test_columns_approach_frame_fields(self, martinet):
        frame = Frame(martinet, [(1,), (2,), (1, 2)])
        y = np.array([0.5, 0.0, 0.0])
        target = iterated_bracket(martinet, BracketWord((1, 2))).evaluate(y)
        deltas = [0.2, 0.1, 0.05, 0.025]
        devs = []
        for delta in deltas:
            jac = jacobian_endpoint(frame, delta, y, np.zeros(3))
            devs.append(float(np.linalg.norm(jac.raw[:, 2] - target)))
        slope = np.polyfit(np.log(deltas), np.log(devs), 1)[0]
        assert abs(slope - 0.5) < 0.3

    def test_leaf_rows_for_flat_distribution(self, involutive2):
        frame = Frame(involutive2, [(1,), (2,)])
        jac = jacobian_endpoint(frame, 0.2, np.zeros(3), np.zeros(2))
        assert jac.rows == (0, 1)
        assert jac.raw.shape == (3, 2)
        assert np.allclose(jac.square, np.eye(2), atol=1e-7)


class TestBounds:
    def test_heisenberg_reference_values(self, heisenberg, heis_frame):
        bounds = estimate_bounds(heisenberg, heis_frame, region=[(-1, 1)] * 3,
                                 depth=2, per_axis=3)
        assert bounds.c0 == pytest.approx(0.9)
        # five constant unit budgets plus the shear component 1 + |x1|
        assert bounds.c1 == pytest.approx(1.1 * (5.0 + 2.0))

    def test_involutive_floor(self, involutive2):
        frame = Frame(involutive2, [(1,), (2,)])
        bounds = estimate_bounds(involutive2, frame, region=[(-1, 1)] * 3,
                                 depth=1, per_axis=2)
        assert bounds.c1 == pytest.approx(1.1 * 6.0)  # every term sits at the floor

    def test_martinet_grid_minimum(self, martinet):
        frame = Frame(martinet, [(1,), (2,), (1, 1, 2)])
        bounds = estimate_bounds(martinet, frame, region=[(-1, 1)] * 3,
                                 depth=3, per_axis=3)
        assert bounds.c0 == pytest.approx(0.9 * 2.0)


class TestFormulaRadius:
    def test_exponent_reference_values(self):
        assert formula_exponent(2, 3) == 2520
        assert formula_exponent(1, 2) == 240

    def test_all_ones(self):
        fr = formula_radius(1.0, 1.0, 2, 3, 0.5)
        assert fr.delta_o == 0.5
        assert fr.r_o == 0.5
        assert fr.exponent == 2520

    def test_monotonicity_grid(self):
        c0s = np.linspace(0.5, 2.0, 5)
        c1s = np.linspace(1.0, 1.05, 5)
        for c1 in c1s:
            radii = [formula_radius(c0, c1, 1, 2, 0.5).r_o for c0 in c0s]
            assert all(a <= b for a, b in zip(radii, radii[1:]))
        for c0 in c0s:
            radii = [formula_radius(c0, c1, 1, 2, 0.5).r_o for c1 in c1s]
            assert all(a >= b for a, b in zip(radii, radii[1:]))

    def test_precondition_errors(self):
        with pytest.raises(ValueError):
            formula_radius(0.0, 1.0, 2, 3, 0.5)
        with pytest.raises(ValueError):
            formula_radius(1.0, 0.5, 2, 3, 0.5)
        with pytest.raises(ValueError):
            formula_radius(1.0, 1.0, 2, 3, 1.5)
        with pytest.raises(ValueError):
            formula_radius(1.0, 1.0, 2, 3, 0.5, k_const=-1.0)


class TestCertifiedRadius:
    def test_heisenberg_quarter_delta(self, heis_frame):
        cert = certified_radius(heis_frame, 0.2, np.zeros(3), seed=1)
        assert cert.r_o == pytest.approx(0.05, rel=1e-6)
        assert cert.inverse_norm == pytest.approx(1.0, rel=1e-6)
        assert cert.conditions_hold
        d_lhs, d_rhs = cert.condition_domain
        assert d_lhs <= d_rhs + 1e-15

    def test_degenerate_frame_raises(self, heisenberg):
        frame = Frame(heisenberg, [(1,), (2,), (2,)])
        with pytest.raises(SingularJacobian):
            certified_radius(frame, 0.2, np.zeros(3), seed=0)

    def test_martinet_off_axis(self, martinet):
        frame = frame_at(martinet, np.array([0.3, 0.0, 0.0]), 3, 3)
        cert = certified_radius(frame, 0.1, np.array([0.3, 0.0, 0.0]), seed=2)
        assert cert.r_o > 0.0
        assert cert.conditions_hold

    def test_deterministic_given_seed(self, heis_frame):
        a = certified_radius(heis_frame, 0.2, np.zeros(3), seed=9)
        b = certified_radius(heis_frame, 0.2, np.zeros(3), seed=9)
        assert a.r_o == b.r_o and a.lipschitz == b.lipschitz

    def test_budget_exceeded_without_rounds(self, heis_frame):
        with pytest.raises(BudgetExceeded):
            certified_radius(heis_frame, 0.2, np.zeros(3), seed=0,
                             budget_rounds=0)


class TestSteer:
    def test_heisenberg_small_target(self, heis_frame, heisenberg):
        target = np.array([0.01, -0.02, 0.005])
        path = steer(heis_frame, 0.2, np.zeros(3), target, tol=1e-8)
        assert path.endpoint_error < 1e-9
        report = validate_dpath(path, heisenberg, endpoint_tol=1e-8)
        assert report.passed

    def test_target_equals_start_gives_empty_path(self, heis_frame):
        y = np.array([0.05, 0.0, 0.0])
        path = steer(heis_frame, 0.2, y, y.copy(), tol=1e-8)
        assert len(path.arcs) == 0
        assert np.array_equal(path.endpoint, y)

    def test_unreachable_target_exhausts_hypercube(self, heis_frame):
        with pytest.raises((HypercubeExhausted, NoConvergence)):
            steer(heis_frame, 0.05, np.zeros(3), np.array([0.5, 0.0, 0.0]),
                  tol=1e-8, max_iter=25)

    def test_leaf_steering_flat_distribution(self, involutive2):
        frame = Frame(involutive2, [(1,), (2,)])
        target = np.array([0.08, -0.06, 0.0])
        path = steer(frame, 0.3, np.zeros(3), target, tol=1e-8)
        assert path.endpoint_error < 1e-8

    def test_off_leaf_target_fails(self, involutive2):
        frame = Frame(involutive2, [(1,), (2,)])
        with pytest.raises(NoConvergence):
            steer(frame, 0.3, np.zeros(3), np.array([0.05, 0.0, 0.1]),
                  tol=1e-8, max_iter=10)

    def test_martinet_probe(self, martinet):
        y = np.array([0.3, 0.0, 0.0])
        frame = frame_at(martinet, y, 3, 3)
        cert = certified_radius(frame, 0.1, y, seed=3)
        rng = np.random.default_rng(4)
        for target in probe_targets(frame, y, 0.9 * cert.r_o, 5, rng):
            path = steer(frame, 0.1, y, target, tol=1e-6)
            assert path.endpoint_error < 1e-6


class TestConnect:
    def test_heisenberg_vertical_displacement(self, heisenberg):
        path = connect(heisenberg, np.zeros(3), np.array([0.0, 0.0, 0.3]),
                       ConnectParams(tol=1e-6, seed=5))
        assert path.endpoint_error < 1e-6
        report = validate_dpath(path, heisenberg, endpoint_tol=1e-6)
        assert report.passed

    def test_identical_endpoints_empty_path(self, heisenberg):
        x = np.array([0.2, 0.1, 0.0])
        path = connect(heisenberg, x, x.copy(), ConnectParams(tol=1e-6))
        assert len(path.arcs) == 0

    def test_requires_bracket_generating(self, involutive2):
        with pytest.raises(Stalled):
            connect(involutive2, np.zeros(3), np.array([0.1, 0.0, 0.0]))


def test_operational_delta_max(heis_frame):
    delta = operational_delta_max(heis_frame, np.zeros(3))
    assert 0.0 < delta < 1.0
    # all corners of the certified hypercube must evaluate inside the box
    m = heis_frame.size
    for corner in np.ndindex(*(2,) * m):
        s = (np.array(corner) * 2.0 - 1.0) * (delta / 2.0)
        endpoint_map(heis_frame, delta, np.zeros(3), s, enforce_domain=False)


def test_probe_targets_on_leaf_span(involutive2):
    frame = Frame(involutive2, [(1,), (2,)])
    rng = np.random.default_rng(6)
    for t in probe_targets(frame, np.zeros(3), 0.1, 10, rng):
        assert abs(t[2]) < 1e-14
        assert np.linalg.norm(t) == pytest.approx(0.1)
