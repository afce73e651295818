"""Scenario definitions: built-in distributions and the scenario file format.

A scenario bundles a generator list (as expression strings), a domain box,
free parameters usable inside the expressions, and default tolerances.  Files
use either a line-oriented key = value format (components separated by
semicolons, see docs/scenario-format.md) or a JSON object with the same keys.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .errors import UnknownScenario
from .expr import ParseError
from .fields import DistributionSpec, SmoothField

__all__ = ["Scenario", "load_scenario", "builtin_names", "BUILTIN_SCENARIOS"]


@dataclass(frozen=True)
class Scenario:
    name: str
    dim: int
    generators: tuple[tuple[str, ...], ...]
    box: tuple[tuple[float, float], ...]
    params: dict = dc_field(default_factory=dict)
    tol: float = 1e-10
    rank_tol: float = 1e-8
    grid: int = 5
    lmax: int = 4
    seed: int = 0

    def to_spec(self) -> DistributionSpec:
        fields = [SmoothField.from_strings(self.dim, comps, self.params)
                  for comps in self.generators]
        return DistributionSpec(self.dim, fields, np.array(self.box))

    def with_params(self, overrides: dict | None) -> "Scenario":
        if not overrides:
            return self
        merged = dict(self.params)
        unknown = set(overrides) - set(merged)
        if unknown:
            raise UnknownScenario(
                f"scenario {self.name!r} has no parameters {sorted(unknown)}")
        merged.update(overrides)
        return replace(self, params=merged)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "generators": [list(g) for g in self.generators],
            "box": [list(b) for b in self.box],
            "params": dict(self.params),
            "tol": self.tol,
            "rank_tol": self.rank_tol,
            "grid": self.grid,
            "lmax": self.lmax,
            "seed": self.seed,
        }


_BOX3 = ((-2.0, 2.0),) * 3

BUILTIN_SCENARIOS: dict[str, Scenario] = {
    "heisenberg": Scenario(
        name="heisenberg", dim=3,
        generators=(("1", "0", "0"), ("0", "1", "x1")),
        box=_BOX3),
    "martinet": Scenario(
        name="martinet", dim=3,
        generators=(("1", "0", "0"), ("0", "1", "x1^2")),
        box=_BOX3),
    "engel": Scenario(
        name="engel", dim=4,
        generators=(("1", "0", "0", "0"), ("0", "1", "x1", "x3")),
        box=((-2.0, 2.0),) * 4),
    "involutive2": Scenario(
        name="involutive2", dim=3,
        generators=(("1", "0", "0"), ("0", "1", "0")),
        box=_BOX3),
    # the cutoff takes the squared radius (smooth at the origin); thresholds
    # 1 and 4 keep it identically 1 on the unit ball and 0 outside radius 2
    "contact-perturbed": Scenario(
        name="contact-perturbed", dim=3,
        generators=(
            ("1", "0", "0"),
            ("0", "1",
             "x1 + lam * x1^5 * (x1^2 + eps^2)^0.25"
             " * bump(1, 4, x1^2 + x2^2 + x3^2)"),
        ),
        box=((-3.0, 3.0),) * 3,
        params={"lam": 0.05, "eps": 1e-3}),
}


def builtin_names() -> list[str]:
    return sorted(BUILTIN_SCENARIOS)


def load_scenario(source: str | Path, params: dict | None = None) -> Scenario:
    """Resolve a built-in name or parse a scenario file.

    ``params`` overrides declared scenario parameters (unknown keys are
    rejected).
    """
    name = str(source)
    if name in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[name].with_params(params)
    path = Path(source)
    if not path.exists():
        raise UnknownScenario(
            f"{name!r} is not a built-in scenario ({', '.join(builtin_names())}) "
            f"and no such file exists")
    text = path.read_text()
    if text.lstrip().startswith("{"):
        scenario = _from_json(text, path.name)
    else:
        scenario = _from_keyvalue(text, path.name)
    scenario = scenario.with_params(params)
    _validate(scenario)
    return scenario


_KNOWN_KEYS = {"name", "dim", "box", "generator", "tol", "rank_tol", "grid",
               "lmax", "seed"}
_JSON_KEYS = {"name", "dim", "box", "generators", "params", "tol", "rank_tol",
              "grid", "lmax", "seed"}


def _from_json(text: str, fallback_name: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"invalid JSON: {err.msg}", err.lineno, err.colno) from None
    if not isinstance(data, dict):
        raise ParseError("scenario JSON must be an object")
    unknown = set(data) - _JSON_KEYS
    if unknown:
        raise ParseError(f"unknown scenario keys {sorted(unknown)}")
    for key in ("dim", "generators", "box"):
        if key not in data:
            raise ParseError(f"missing scenario key {key!r}")
    return Scenario(
        name=data.get("name", fallback_name),
        dim=int(data["dim"]),
        generators=tuple(tuple(str(c) for c in g) for g in data["generators"]),
        box=tuple((float(lo), float(hi)) for lo, hi in data["box"]),
        params={str(k): float(v) for k, v in data.get("params", {}).items()},
        tol=float(data.get("tol", 1e-10)),
        rank_tol=float(data.get("rank_tol", 1e-8)),
        grid=int(data.get("grid", 5)),
        lmax=int(data.get("lmax", 4)),
        seed=int(data.get("seed", 0)),
    )


_INTERVAL_RE = re.compile(r"^\s*(-?[\d.eE+-]+)\s*\.\.\s*(-?[\d.eE+-]+)\s*$")


def _from_keyvalue(text: str, fallback_name: str) -> Scenario:
    fields: dict = {"name": fallback_name, "params": {}}
    generators: list[tuple[str, ...]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", lineno, 1)
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("param "):
            pname = key[len("param "):].strip()
            if not pname.isidentifier():
                raise ParseError(f"bad parameter name {pname!r}", lineno, 1)
            try:
                fields["params"][pname] = float(value)
            except ValueError:
                raise ParseError(f"parameter {pname} needs a numeric value", lineno, 1)
            continue
        if key not in _KNOWN_KEYS:
            raise ParseError(f"unknown key {key!r}", lineno, 1)
        if key == "generator":
            generators.append(tuple(c.strip() for c in value.split(";")))
        elif key == "box":
            intervals = []
            for part in value.split(";"):
                m = _INTERVAL_RE.match(part)
                if not m:
                    raise ParseError(
                        f"box interval {part.strip()!r} must look like lo..hi", lineno, 1)
                intervals.append((float(m.group(1)), float(m.group(2))))
            fields["box"] = tuple(intervals)
        elif key == "name":
            fields["name"] = value
        elif key in ("dim", "grid", "lmax", "seed"):
            try:
                fields[key] = int(value)
            except ValueError:
                raise ParseError(f"{key} needs an integer value", lineno, 1)
        else:  # tol, rank_tol
            try:
                fields[key] = float(value)
            except ValueError:
                raise ParseError(f"{key} needs a numeric value", lineno, 1)
    if "dim" not in fields:
        raise ParseError("missing dim")
    if "box" not in fields:
        raise ParseError("missing box")
    if not generators:
        raise ParseError("need at least one generator line")
    fields["generators"] = tuple(generators)
    return Scenario(**fields)


def _validate(scenario: Scenario) -> None:
    if len(scenario.box) != scenario.dim:
        raise ParseError(
            f"box has {len(scenario.box)} intervals, dim is {scenario.dim}")
    for comps in scenario.generators:
        if len(comps) != scenario.dim:
            raise ParseError(
                f"generator has {len(comps)} components, dim is {scenario.dim}")
    # parse every expression now so errors carry position information
    scenario.to_spec()
