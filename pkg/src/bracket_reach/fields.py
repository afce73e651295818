"""Smooth vector fields on a coordinate box, with exact Jacobians and brackets.

A field is a tuple of closed-form component expressions, so partial
derivatives of any order are exact and Lie brackets are again closed-form
fields.  All objects are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import expr as ex

__all__ = [
    "SmoothField",
    "BracketWord",
    "DistributionSpec",
    "lie_bracket",
    "iterated_bracket",
]


class SmoothField:
    """A vector field X on R^N given by closed-form components.

    ``evaluate(x)`` returns X(x) as a length-N array, ``jacobian(x)`` the
    N x N matrix with entry (i, j) = d X^i / d x^j.
    """

    __slots__ = ("dim", "components", "__dict__")

    def __init__(self, dim: int, components: Sequence[ex.Expr]):
        components = tuple(components)
        if len(components) != dim:
            raise ValueError(f"expected {dim} components, got {len(components)}")
        self.dim = int(dim)
        self.components = components

    @classmethod
    def from_strings(cls, dim: int, components: Sequence[str],
                     params: dict[str, float] | None = None) -> "SmoothField":
        return cls(dim, [ex.parse(s, dim, params) for s in components])

    @classmethod
    def constant(cls, dim: int, direction: int) -> "SmoothField":
        comps = [ex.ONE if i == direction else ex.ZERO for i in range(dim)]
        return cls(dim, comps)

    @cached_property
    def _eval_fn(self):
        return ex.compile_vector(self.components, self.dim)

    @cached_property
    def _eval_fn_np(self):
        fn = self._eval_fn

        def ffn(x):
            return np.array(fn(x), dtype=float)

        return ffn

    @cached_property
    def _jac_fn(self):
        rows = [[ex.diff(c, j) for j in range(self.dim)] for c in self.components]
        return ex.compile_matrix(rows, self.dim)

    @cached_property
    def is_zero(self) -> bool:
        return all(c.op == "const" and c.data == 0.0 for c in self.components)

    def evaluate(self, x) -> np.ndarray:
        return np.array(self._eval_fn(x), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        return np.array(self._jac_fn(x), dtype=float)

    def partial(self, component: int, orders: Sequence[int]) -> ex.Expr:
        """Mixed partial of one component, ``orders[j]`` derivatives in x_{j+1}."""
        e = self.components[component]
        for j, k in enumerate(orders):
            for _ in range(k):
                e = ex.diff(e, j)
        return e

    def __eq__(self, other):
        return isinstance(other, SmoothField) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def __repr__(self):
        comps = ", ".join(ex.to_text(c) for c in self.components)
        return f"SmoothField({comps})"


class BracketWord:
    """An index tuple (i1, ..., ir) naming the right-nested bracket
    [X_i1, [X_i2, ... [X_i(r-1), X_ir] ...]].  Indices are 1-based."""

    __slots__ = ("indices",)

    def __init__(self, indices: Iterable[int]):
        indices = tuple(int(i) for i in indices)
        if len(indices) < 1:
            raise ValueError("bracket word needs at least one index")
        if any(i < 1 for i in indices):
            raise ValueError("bracket word indices are 1-based positive integers")
        self.indices = indices

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, item):
        return self.indices[item]

    def __eq__(self, other):
        if isinstance(other, BracketWord):
            return self.indices == other.indices
        if isinstance(other, tuple):
            return self.indices == other
        return NotImplemented

    def __hash__(self):
        return hash(self.indices)

    def __repr__(self):
        return f"BracketWord{self.indices}"


class DistributionSpec:
    """Generators X_1..X_p on an axis-aligned closed box in R^N."""

    def __init__(self, dim: int, generators: Sequence[SmoothField], box):
        generators = tuple(generators)
        if not generators:
            raise ValueError("need at least one generator")
        for g in generators:
            if g.dim != dim:
                raise ValueError("all generators must share the ambient dimension")
        box = np.asarray(box, dtype=float)
        if box.shape != (dim, 2):
            raise ValueError(f"box must have shape ({dim}, 2)")
        if np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("box intervals must be nonempty")
        self.dim = int(dim)
        self.generators = generators
        self.box = box
        self._bracket_cache: dict[tuple[int, ...], SmoothField] = {}

    @property
    def p(self) -> int:
        return len(self.generators)

    def generator(self, index: int) -> SmoothField:
        """1-based generator access, matching bracket word indices."""
        if not 1 <= index <= self.p:
            raise IndexError(f"generator index {index} out of range 1..{self.p}")
        return self.generators[index - 1]

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.box[:, 0]) and np.all(x <= self.box[:, 1]))

    def boundary_margin(self, x) -> float:
        """Distance from x to the nearest box face (negative outside)."""
        x = np.asarray(x, dtype=float)
        return float(min(np.min(x - self.box[:, 0]), np.min(self.box[:, 1] - x)))

    def validate_word(self, word: BracketWord) -> BracketWord:
        if not isinstance(word, BracketWord):
            word = BracketWord(word)
        if any(i > self.p for i in word):
            raise IndexError(f"bracket word {word.indices} exceeds generator count {self.p}")
        return word


def lie_bracket(x_field: SmoothField, y_field: SmoothField) -> SmoothField:
    """[X, Y], the field with components sum_i (X^i dY^j/dx_i - Y^i dX^j/dx_i)."""
    if x_field.dim != y_field.dim:
        raise ValueError("bracket operands must share the ambient dimension")
    n = x_field.dim
    if x_field is y_field or x_field == y_field:
        return SmoothField(n, [ex.ZERO] * n)
    comps = []
    for j in range(n):
        acc = ex.ZERO
        yj = y_field.components[j]
        xj = x_field.components[j]
        for i in range(n):
            acc = ex.add(acc, ex.mul(x_field.components[i], ex.diff(yj, i)))
            acc = ex.sub(acc, ex.mul(y_field.components[i], ex.diff(xj, i)))
        comps.append(acc)
    return SmoothField(n, comps)


def iterated_bracket(spec: DistributionSpec, word: BracketWord) -> SmoothField:
    """Right-nested bracket X_(i1,...,ir); a single index returns X_i1."""
    word = spec.validate_word(word)
    cached = spec._bracket_cache.get(word.indices)
    if cached is not None:
        return cached
    if len(word) == 1:
        field = spec.generator(word[0])
    else:
        tail = iterated_bracket(spec, BracketWord(word.indices[1:]))
        field = lie_bracket(spec.generator(word[0]), tail)
    spec._bracket_cache[word.indices] = field
    return field
