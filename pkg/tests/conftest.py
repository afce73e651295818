"""Shared fixtures: built-in scenario specs, closed-form flow oracles and
seeded random polynomial distributions."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from bracket_reach import DistributionSpec, SmoothField, load_scenario


@pytest.fixture(scope="session")
def heisenberg():
    return load_scenario("heisenberg").to_spec()


@pytest.fixture(scope="session")
def martinet():
    return load_scenario("martinet").to_spec()


@pytest.fixture(scope="session")
def engel():
    return load_scenario("engel").to_spec()


@pytest.fixture(scope="session")
def involutive2():
    return load_scenario("involutive2").to_spec()


@pytest.fixture(scope="session")
def perturbed():
    return load_scenario("contact-perturbed").to_spec()


# ---------------------------------------------------------------------------
# closed-form flow oracles (hand-integrated linear ODEs)

def heis_flow1(x, t):
    x = np.asarray(x, dtype=float)
    return x + np.array([t, 0.0, 0.0])


def heis_flow2(x, t):
    x = np.asarray(x, dtype=float)
    return np.array([x[0], x[1] + t, x[2] + t * x[0]])


def heis_commutator12(x, t):
    """Composition oracle: the (1,2) commutator program moves x by t^2 e3."""
    x = np.asarray(x, dtype=float)
    return x + np.array([0.0, 0.0, t * t])


def martinet_commutator12(x, t):
    """Same composition for the degree-two variant: shift (2 x1 t^2 + t^3) e3."""
    x = np.asarray(x, dtype=float)
    return x + np.array([0.0, 0.0, 2.0 * x[0] * t * t + t ** 3])


# ---------------------------------------------------------------------------
# independent numeric bracket oracle (finite differences, no shared code path
# with the symbolic Jacobians)

def numeric_bracket(x_field, y_field, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]

    def jac(field, pt):
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            cols.append((field.evaluate(pt + e) - field.evaluate(pt - e)) / (2 * h))
        return np.array(cols).T

    return jac(y_field, x) @ x_field.evaluate(x) - jac(x_field, x) @ y_field.evaluate(x)


# ---------------------------------------------------------------------------
# seeded random polynomial distributions

def _monomials(dim, max_degree):
    out = []
    for total in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            powers = [0] * dim
            for j in combo:
                powers[j] += 1
            out.append(tuple(powers))
    return out


def random_cubic_spec(seed: int, dim: int = 3, p: int = 2, scale: float = 0.4,
                      half_width: float = 2.0) -> DistributionSpec:
    """Distribution with p generators whose components are random polynomials
    of degree <= 3 with coefficients in (-scale, scale)."""
    rng = np.random.default_rng(seed)
    monos = _monomials(dim, 3)
    gens = []
    for _ in range(p):
        comps = []
        for _ in range(dim):
            coeffs = rng.uniform(-scale, scale, len(monos))
            terms = []
            for c, powers in zip(coeffs, monos):
                factors = [repr(float(c))]
                for j, e in enumerate(powers):
                    if e == 1:
                        factors.append(f"x{j + 1}")
                    elif e > 1:
                        factors.append(f"x{j + 1}^{e}")
                terms.append("*".join(factors))
            comps.append(" + ".join(terms))
        gens.append(SmoothField.from_strings(dim, comps))
    box = np.array([[-half_width, half_width]] * dim)
    return DistributionSpec(dim, gens, box)
