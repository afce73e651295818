"""Closed-form scalar expressions: parsing, exact differentiation, fast evaluation.

Expressions are immutable, hash-consed DAG nodes over variables x1..xN, real
constants, arithmetic, a fixed set of elementary functions (sin, cos, exp,
sqrt, abs) and a smooth radial cutoff ``bump(r1, r2, u)`` that is identically
1 for u <= r1 and identically 0 for u >= r2.  Because nodes are interned,
structural equality is object identity and repeated differentiation stays
compact (shared subterms are differentiated once).

The cutoff is built from the primitive ``sexpinv(k, u)`` which evaluates
exp(-1/u) / u^k for u > 0 and 0 otherwise.  That family is closed under
differentiation, so every derivative of ``bump`` is again an exact closed
form with no special cases.
"""

from __future__ import annotations

import math
import re
import threading
from typing import Callable, Iterable, Sequence

__all__ = [
    "Expr",
    "ParseError",
    "const",
    "var",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "powe",
    "call",
    "sexpinv",
    "bump",
    "diff",
    "parse",
    "compile_scalar",
    "compile_vector",
    "compile_matrix",
    "ZERO",
    "ONE",
]

_FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs", "sign")


class ParseError(ValueError):
    """Raised on malformed expression or scenario text."""

    def __init__(self, message: str, line: int = 1, col: int = 1):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class Expr:
    """One interned expression node.

    ``op`` is the node kind, ``args`` the child nodes and ``data`` the
    payload (constant value, variable index, function name or sexpinv order).
    """

    __slots__ = ("op", "args", "data", "_hash", "__weakref__")

    def __init__(self, op: str, args: tuple["Expr", ...], data):
        self.op = op
        self.args = args
        self.data = data
        self._hash = hash((op, data) + tuple(id(a) for a in args))

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Expr({to_text(self)})"


_lock = threading.Lock()
_interned: dict = {}
_diff_cache: dict = {}


def _node(op: str, args: tuple[Expr, ...], data=None) -> Expr:
    key = (op, data, tuple(id(a) for a in args))
    with _lock:
        node = _interned.get(key)
        if node is None:
            node = Expr(op, args, data)
            _interned[key] = node
        return node


# ---------------------------------------------------------------------------
# smart constructors (light algebraic folding keeps bracket trees small)

def const(value: float) -> Expr:
    value = float(value)
    if value == 0.0:
        value = 0.0  # normalise -0.0
    return _node("const", (), value)


ZERO = const(0.0)
ONE = const(1.0)


def var(index: int) -> Expr:
    if index < 0:
        raise ValueError("variable index must be nonnegative")
    return _node("var", (), int(index))


def _is_const(e: Expr, value: float | None = None) -> bool:
    if e.op != "const":
        return False
    return value is None or e.data == value


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return const(a.data + b.data)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return _node("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a is b:
        return ZERO
    if _is_const(a) and _is_const(b):
        return const(a.data - b.data)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return _node("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return const(a.data * b.data)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return _node("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b):
        if b.data == 0.0:
            raise ZeroDivisionError("division by constant zero in expression")
        if _is_const(a):
            return const(a.data / b.data)
        if b.data == 1.0:
            return a
    if _is_const(a, 0.0):
        return ZERO
    return _node("div", (a, b))


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return const(-a.data)
    if a.op == "neg":
        return a.args[0]
    return _node("neg", (a,))


def powe(a: Expr, exponent: float) -> Expr:
    exponent = float(exponent)
    if exponent == 0.0:
        return ONE
    if exponent == 1.0:
        return a
    if _is_const(a):
        base = a.data
        if base >= 0.0 or exponent == int(exponent):
            return const(math.pow(base, exponent))
    return _node("pow", (a,), exponent)


def call(name: str, a: Expr) -> Expr:
    if name not in _FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if _is_const(a):
        v = a.data
        table = {
            "sin": math.sin,
            "cos": math.cos,
            "exp": math.exp,
            "sqrt": math.sqrt,
            "abs": abs,
            "sign": lambda t: (t > 0) - (t < 0),
        }
        return const(table[name](v))
    return _node("call", (a,), name)


def sexpinv(order: int, a: Expr) -> Expr:
    """exp(-1/a) / a^order for a > 0, exactly 0 for a <= 0."""
    return _node("sexpinv", (a,), int(order))


def bump(r1: float, r2: float, u: Expr) -> Expr:
    """Smooth cutoff of the scalar u: 1 on u <= r1, 0 on u >= r2."""
    if not r1 < r2:
        raise ValueError("bump needs r1 < r2")
    v = div(sub(u, const(r1)), const(r2 - r1))
    inner = sexpinv(0, sub(ONE, v))
    outer = sexpinv(0, v)
    return div(inner, add(inner, outer))


# ---------------------------------------------------------------------------
# differentiation

def diff(e: Expr, index: int) -> Expr:
    """Exact partial derivative of e with respect to variable ``index``."""
    key = (id(e), index)
    cached = _diff_cache.get(key)
    if cached is not None:
        return cached
    op = e.op
    if op == "const":
        out = ZERO
    elif op == "var":
        out = ONE if e.data == index else ZERO
    elif op == "add":
        out = add(diff(e.args[0], index), diff(e.args[1], index))
    elif op == "sub":
        out = sub(diff(e.args[0], index), diff(e.args[1], index))
    elif op == "mul":
        a, b = e.args
        out = add(mul(diff(a, index), b), mul(a, diff(b, index)))
    elif op == "div":
        a, b = e.args
        num = sub(mul(diff(a, index), b), mul(a, diff(b, index)))
        out = div(num, mul(b, b))
    elif op == "neg":
        out = neg(diff(e.args[0], index))
    elif op == "pow":
        a = e.args[0]
        out = mul(mul(const(e.data), powe(a, e.data - 1.0)), diff(a, index))
    elif op == "call":
        a = e.args[0]
        da = diff(a, index)
        name = e.data
        if name == "sin":
            out = mul(call("cos", a), da)
        elif name == "cos":
            out = neg(mul(call("sin", a), da))
        elif name == "exp":
            out = mul(call("exp", a), da)
        elif name == "sqrt":
            out = div(da, mul(const(2.0), call("sqrt", a)))
        elif name == "abs":
            out = mul(call("sign", a), da)
        elif name == "sign":
            out = ZERO
        else:  # pragma: no cover
            raise AssertionError(name)
    elif op == "sexpinv":
        a = e.args[0]
        k = e.data
        chain = sub(sexpinv(k + 2, a), mul(const(float(k)), sexpinv(k + 1, a)))
        out = mul(chain, diff(a, index))
    else:  # pragma: no cover
        raise AssertionError(op)
    with _lock:
        # safe to key by id: the intern table pins every node for the process
        _diff_cache[key] = out
    return out


# ---------------------------------------------------------------------------
# evaluation: compile a DAG to a plain python function

def _sexpinv_eval(x: float, k: int) -> float:
    if x <= 0.0:
        return 0.0
    t = -1.0 / x - k * math.log(x)
    return 0.0 if t < -745.0 else math.exp(t)


def _sign_eval(x: float) -> float:
    return float((x > 0.0) - (x < 0.0))


_EVAL_NS = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_sqrt": math.sqrt,
    "_abs": abs,
    "_sign": _sign_eval,
    "_sexpinv": _sexpinv_eval,
}


def _topo_order(roots: Iterable[Expr]) -> list[Expr]:
    order: list[Expr] = []
    seen: set[int] = set()
    stack: list[tuple[Expr, bool]] = [(r, False) for r in roots]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in node.args:
            stack.append((child, False))
    return order


def _emit(roots: Sequence[Expr]) -> tuple[str, dict]:
    """Generate source computing every root, one local per unique node."""
    names: dict[int, str] = {}
    lines: list[str] = []
    for i, node in enumerate(_topo_order(roots)):
        nm = f"_t{i}"
        op = node.op
        if op == "const":
            names[id(node)] = repr(node.data)
            continue
        if op == "var":
            names[id(node)] = f"_x{node.data}"
            continue
        a = [names[id(c)] for c in node.args]
        if op == "add":
            rhs = f"{a[0]} + {a[1]}"
        elif op == "sub":
            rhs = f"{a[0]} - {a[1]}"
        elif op == "mul":
            rhs = f"{a[0]} * {a[1]}"
        elif op == "div":
            rhs = f"{a[0]} / {a[1]}"
        elif op == "neg":
            rhs = f"-{a[0]}"
        elif op == "pow":
            rhs = f"{a[0]} ** {repr(node.data)}"
        elif op == "call":
            rhs = f"_{node.data}({a[0]})"
        elif op == "sexpinv":
            rhs = f"_sexpinv({a[0]}, {node.data})"
        else:  # pragma: no cover
            raise AssertionError(op)
        lines.append(f"    {nm} = {rhs}")
        names[id(node)] = nm
    return "\n".join(lines), names


def _compile(roots: Sequence[Expr], dim: int, builder: Callable[[dict], str], fname: str):
    body, names = _emit(roots)
    preamble = "\n".join(f"    _x{i} = float(x[{i}])" for i in range(dim))
    src = f"def {fname}(x):\n{preamble}\n{body}\n    return {builder(names)}\n"
    ns = dict(_EVAL_NS)
    exec(compile(src, f"<expr:{fname}>", "exec"), ns)
    fn = ns[fname]
    fn._roots = tuple(roots)  # keep the DAG alive, names index by id
    return fn


def compile_scalar(e: Expr, dim: int) -> Callable[[Sequence[float]], float]:
    return _compile([e], dim, lambda names: names[id(e)], "_scalar")


def compile_vector(exprs: Sequence[Expr], dim: int):
    """Compile to f(x) -> tuple of floats, one per expression."""
    exprs = list(exprs)
    return _compile(
        exprs, dim,
        lambda names: "(" + ", ".join(names[id(e)] for e in exprs) + ("," if len(exprs) == 1 else "") + ")",
        "_vector",
    )


def compile_matrix(rows: Sequence[Sequence[Expr]], dim: int):
    """Compile to f(x) -> tuple of row tuples."""
    rows = [list(r) for r in rows]
    flat = [e for r in rows for e in r]

    def build(names):
        row_srcs = []
        for r in rows:
            inner = ", ".join(names[id(e)] for e in r)
            if len(r) == 1:
                inner += ","
            row_srcs.append(f"({inner})")
        return "(" + ", ".join(row_srcs) + ("," if len(rows) == 1 else "") + ")"

    return _compile(flat, dim, build, "_matrix")


# ---------------------------------------------------------------------------
# parser: infix arithmetic over x1..xN plus named parameters

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)

_CONSTANTS = {"pi": math.pi, "e": math.e}


class _Tokens:
    def __init__(self, text: str, line: int):
        self.text = text
        self.line = line
        self.pos = 0
        self.items: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                rest = text[pos:].lstrip()
                if not rest:
                    break
                raise ParseError(f"unexpected character {rest[0]!r}", line, pos + 1)
            if m.group("num") is not None:
                self.items.append(("num", m.group("num"), m.start("num") + 1))
            elif m.group("name") is not None:
                self.items.append(("name", m.group("name"), m.start("name") + 1))
            else:
                self.items.append(("op", m.group("op"), m.start("op") + 1))
            pos = m.end()
        self.items.append(("end", "", len(text) + 1))

    def peek(self):
        return self.items[self.pos]

    def next(self):
        tok = self.items[self.pos]
        self.pos += 1
        return tok

    def expect(self, value: str):
        kind, text, col = self.next()
        if text != value:
            raise ParseError(f"expected {value!r}, found {text or 'end of input'!r}", self.line, col)


def parse(text: str, dim: int, params: dict[str, float] | None = None, line: int = 1) -> Expr:
    """Parse one infix expression over variables x1..x<dim>.

    ``params`` maps extra identifiers to constant values.  Raises ParseError
    with line and column on malformed input.
    """
    params = params or {}
    toks = _Tokens(text, line)

    def parse_expr() -> Expr:
        node = parse_term()
        while toks.peek()[1] in ("+", "-"):
            op = toks.next()[1]
            rhs = parse_term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def parse_term() -> Expr:
        node = parse_unary()
        while toks.peek()[1] in ("*", "/"):
            op = toks.next()[1]
            rhs = parse_unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def parse_unary() -> Expr:
        if toks.peek()[1] == "-":
            toks.next()
            return neg(parse_unary())
        if toks.peek()[1] == "+":
            toks.next()
            return parse_unary()
        return parse_power()

    def parse_power() -> Expr:
        base = parse_atom()
        if toks.peek()[1] in ("^", "**"):
            col = toks.peek()[2]
            toks.next()
            exponent = parse_unary()
            if exponent.op != "const":
                raise ParseError("exponent must be a constant", toks.line, col)
            return powe(base, exponent.data)
        return base

    def parse_atom() -> Expr:
        kind, text_, col = toks.next()
        if kind == "num":
            return const(float(text_))
        if text_ == "(":
            node = parse_expr()
            toks.expect(")")
            return node
        if kind == "name":
            if toks.peek()[1] == "(":
                return parse_call(text_, col)
            m = re.fullmatch(r"x(\d+)", text_)
            if m:
                idx = int(m.group(1))
                if not 1 <= idx <= dim:
                    raise ParseError(f"variable {text_} out of range for dimension {dim}", toks.line, col)
                return var(idx - 1)
            if text_ in params:
                return const(params[text_])
            if text_ in _CONSTANTS:
                return const(_CONSTANTS[text_])
            raise ParseError(f"unknown identifier {text_!r}", toks.line, col)
        raise ParseError(f"unexpected {text_ or 'end of input'!r}", toks.line, col)

    def parse_call(name: str, col: int) -> Expr:
        toks.expect("(")
        args = [parse_expr()]
        while toks.peek()[1] == ",":
            toks.next()
            args.append(parse_expr())
        toks.expect(")")
        if name == "bump":
            if len(args) != 3:
                raise ParseError("bump takes 3 arguments", toks.line, col)
            r1, r2 = args[0], args[1]
            if r1.op != "const" or r2.op != "const":
                raise ParseError("bump radii must be constants", toks.line, col)
            return bump(r1.data, r2.data, args[2])
        if name in _FUNCTIONS and name != "sign":
            if len(args) != 1:
                raise ParseError(f"{name} takes 1 argument", toks.line, col)
            return call(name, args[0])
        raise ParseError(f"unknown function {name!r}", toks.line, col)

    node = parse_expr()
    kind, text_, col = toks.peek()
    if kind != "end":
        raise ParseError(f"trailing input {text_!r}", toks.line, col)
    return node


# ---------------------------------------------------------------------------
# pretty printing (diagnostics only)

def to_text(e: Expr) -> str:
    op = e.op
    if op == "const":
        return repr(e.data)
    if op == "var":
        return f"x{e.data + 1}"
    if op == "add":
        return f"({to_text(e.args[0])} + {to_text(e.args[1])})"
    if op == "sub":
        return f"({to_text(e.args[0])} - {to_text(e.args[1])})"
    if op == "mul":
        return f"({to_text(e.args[0])} * {to_text(e.args[1])})"
    if op == "div":
        return f"({to_text(e.args[0])} / {to_text(e.args[1])})"
    if op == "neg":
        return f"(-{to_text(e.args[0])})"
    if op == "pow":
        return f"({to_text(e.args[0])} ^ {e.data})"
    if op == "call":
        return f"{e.data}({to_text(e.args[0])})"
    if op == "sexpinv":
        return f"sexpinv[{e.data}]({to_text(e.args[0])})"
    raise AssertionError(op)
