"""Command line interface: analyze, verify, radius, steer and connect.

Exit codes: 0 on success, 1 when a verification or steering run fails its
tolerance, 2 on usage errors (including malformed scenarios).  All numeric
output is printed with 12 significant digits; ``--json`` switches to a
machine-readable report that is byte-identical for identical inputs and
seed.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import reach
from .commutator import verify_taylor
from .dpath import validate_dpath, write_dpath
from .errors import BracketReachError, UnknownScenario
from .expr import ParseError
from .fields import BracketWord
from .filtration import analyze_distribution, grid_samples, minimal_depth
from .plots import render_dpath
from .scenarios import load_scenario

SEED_ENV = "BRACKET_REACH_SEED"


def _sig(x) -> str:
    return f"{float(x):.12g}"


def _fmt_point(pt) -> str:
    return "(" + ", ".join(_sig(v) for v in pt) + ")"


def _parse_point(text: str, dim: int, name: str) -> np.ndarray:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise click.UsageError(f"{name} must be comma-separated numbers, got {text!r}")
    if len(values) != dim:
        raise click.UsageError(f"{name} needs {dim} coordinates, got {len(values)}")
    return np.array(values)


def _parse_params(pairs) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--param expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise click.UsageError(f"parameter {key!r} needs a numeric value")
    return out


def _resolve_seed(seed: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise click.UsageError(f"{SEED_ENV} must be an integer, got {env!r}")
    return seed


def _load(scenario_source, params):
    try:
        return load_scenario(scenario_source, _parse_params(params))
    except (UnknownScenario, ParseError) as err:
        raise click.UsageError(str(err))


def _emit_json(payload: dict) -> None:
    click.echo(json.dumps(payload, sort_keys=True, indent=2))


class _Failure(click.ClickException):
    exit_code = 1


def _run_guard(fn):
    try:
        return fn()
    except BracketReachError as err:
        raise _Failure(str(err))


@click.group()
@click.version_option(package_name="bracket-reach")
def main():
    """Bracket filtration analysis and constructive reachability tools."""


_scenario_argument = click.argument("scenario")
_param_option = click.option("--param", "params", multiple=True,
                             help="Override a scenario parameter, key=value.")
_json_option = click.option("--json", "as_json", is_flag=True,
                            help="Emit a machine-readable JSON report.")
_seed_option = click.option("--seed", default=0, show_default=True,
                            help=f"RNG seed ({SEED_ENV} overrides).")


@main.command()
@_scenario_argument
@_param_option
@_json_option
@click.option("--grid", default=None, type=int, help="Lattice points per axis.")
@click.option("--lmax", default=None, type=int, help="Deepest bracket length to rank.")
@click.option("--rank-tol", default=None, type=float, help="Relative singular value cutoff.")
def analyze(scenario, params, as_json, grid, lmax, rank_tol):
    """Rank table, stabilisation depth and frame for a scenario."""
    scn = _load(scenario, params)
    spec = scn.to_spec()
    report = _run_guard(lambda: analyze_distribution(
        spec,
        lmax=lmax or scn.lmax,
        rank_tol=rank_tol or scn.rank_tol,
        per_axis=grid or scn.grid,
    ))
    if as_json:
        _emit_json({
            "scenario": scn.describe(),
            "samples": [
                {"point": [float(v) for v in pt], "ranks": list(rv)}
                for pt, rv in zip(report.samples, report.rank_vectors)
            ],
            "lmax": report.lmax,
            "rank_tol": report.rank_tol,
            "depth": report.depth,
            "stabilized": report.stabilized,
            "uniform": report.uniform,
            "rank": report.rank,
            "bracket_generating": report.bracket_generating,
            "frame": None if report.frame is None else [list(w.indices) for w in report.frame],
            "frame_det": report.frame_det,
        })
        return
    click.echo(f"scenario {scn.name}: dim {scn.dim}, {len(spec.generators)} generators, "
               f"{len(report.samples)} samples, lmax {report.lmax}")
    click.echo(f"{'sample':>8}  {'point':<32} ranks")
    for i, (pt, rv) in enumerate(zip(report.samples, report.rank_vectors)):
        click.echo(f"{i:>8}  {_fmt_point(pt):<32} {tuple(rv)}")
    if report.stabilized:
        click.echo(f"depth: {report.depth}")
    else:
        click.echo(f"depth: not stabilised by lmax {report.lmax}")
    click.echo(f"uniform: {report.uniform}")
    click.echo(f"rank: {report.rank}")
    click.echo(f"bracket generating: {report.bracket_generating}")
    if report.frame is not None:
        words = ", ".join(str(w.indices) for w in report.frame)
        click.echo(f"frame at {_fmt_point(report.frame_point)}: {words}")
        click.echo(f"frame minor determinant: {_sig(report.frame_det)}")


@main.command()
@_scenario_argument
@_param_option
@_json_option
@click.option("--word", required=True, help="Bracket word, e.g. 1,1,2.")
@click.option("--at", "at_point", default=None, help="Base point (default box centre).")
@click.option("--step", default=None, type=float, help="Finite difference step.")
@click.option("--tol", default=1e-10, show_default=True, help="Integrator tolerance.")
def verify(scenario, params, as_json, word, at_point, step, tol):
    """Finite-difference check of the commutator program Taylor structure."""
    scn = _load(scenario, params)
    spec = scn.to_spec()
    try:
        indices = [int(v) for v in word.split(",")]
        bracket_word = BracketWord(indices)
    except ValueError:
        raise click.UsageError(f"--word must be comma-separated indices, got {word!r}")
    x0 = (spec.box.mean(axis=1) if at_point is None
          else _parse_point(at_point, scn.dim, "--at"))
    report = _run_guard(lambda: verify_taylor(spec, bracket_word, x0, h=step, tol=tol))
    if as_json:
        _emit_json({
            "scenario": scn.describe(),
            "word": list(bracket_word.indices),
            "at": [float(v) for v in x0],
            "step": report.step,
            "orders": [
                {
                    "order": o.order,
                    "value_norm": o.norm,
                    "target": None if o.target is None else [float(v) for v in o.target],
                    "error": o.error,
                    "tolerance": o.tolerance,
                    "relative": o.relative,
                    "passed": o.passed,
                }
                for o in report.orders
            ],
            "passed": report.passed,
        })
    else:
        click.echo(f"word {bracket_word.indices} at {_fmt_point(x0)}, "
                   f"step {_sig(report.step)}")
        click.echo(f"{'order':>5}  {'|derivative|':>18}  {'target':>28}  "
                   f"{'error':>22}  verdict")
        for o in report.orders:
            target = "0 (vanishing)" if o.target is None else _fmt_point(o.target)
            kind = "rel" if o.relative else "abs"
            click.echo(f"{o.order:>5}  {_sig(o.norm):>18}  {target:>28}  "
                       f"{_sig(o.error):>18} {kind}  {'PASS' if o.passed else 'FAIL'}")
        click.echo(f"overall: {'PASS' if report.passed else 'FAIL'}")
    if not report.passed:
        sys.exit(1)


@main.command()
@_scenario_argument
@_param_option
@_json_option
@_seed_option
@click.option("--center", default=None, help="Ball centre (default box centre).")
@click.option("--delta", default=None, type=float, help="Shift parameter.")
@click.option("--method", type=click.Choice(["ift", "formula"]), default="ift",
              show_default=True)
@click.option("--k-const", default=1.0, show_default=True,
              help="Formula constant K (formula method).")
@click.option("--k-prime", default=1.0, show_default=True,
              help="Formula constant K' (formula method).")
@click.option("--region-scale", default=0.5, show_default=True,
              help="Bounds region size relative to the box (formula method).")
def radius(scenario, params, as_json, seed, center, delta, method,
           k_const, k_prime, region_scale):
    """Certified reachable-ball radius around a centre point."""
    scn = _load(scenario, params)
    spec = scn.to_spec()
    seed = _resolve_seed(seed)
    y = (spec.box.mean(axis=1) if center is None
         else _parse_point(center, scn.dim, "--center"))

    def run():
        depth_res = minimal_depth(spec, grid_samples(spec.box, scn.grid),
                                  scn.lmax, scn.rank_tol)
        if not (depth_res.stabilized and depth_res.uniform):
            raise BracketReachError("scenario is not verified uniform on the grid")
        frame = reach.frame_at(spec, y, depth_res.depth, depth_res.rank, scn.rank_tol)
        delta_used = delta
        if delta_used is None:
            delta_used = min(0.5, 0.8 * reach.operational_delta_max(frame, y, scn.tol))
        if method == "ift":
            cert = reach.certified_radius(frame, delta_used, y, tol=scn.tol, seed=seed)
            return depth_res, frame, delta_used, cert, None
        centre_box = np.column_stack([
            y - region_scale * (y - spec.box[:, 0]),
            y + region_scale * (spec.box[:, 1] - y),
        ])
        bounds = reach.estimate_bounds(spec, frame, centre_box, depth_res.depth)
        formula = reach.formula_radius(bounds.c0, bounds.c1, depth_res.depth,
                                       depth_res.rank, min(0.99, delta_used),
                                       k_const, k_prime)
        return depth_res, frame, delta_used, None, (bounds, formula)

    depth_res, frame, delta_used, cert, formula_pair = _run_guard(run)
    if method == "ift":
        payload = {
            "scenario": scn.describe(),
            "method": "direct-ift",
            "center": [float(v) for v in y],
            "delta": delta_used,
            "r_o": cert.r_o,
            "inverse_norm": cert.inverse_norm,
            "lipschitz": cert.lipschitz,
            "condition_domain": list(cert.condition_domain),
            "condition_lipschitz": list(cert.condition_lipschitz),
            "rounds": cert.rounds,
            "pairs": cert.pairs,
            "seed": seed,
            "frame": [list(w) for w in cert.words],
        }
        if as_json:
            _emit_json(payload)
            return
        click.echo(f"method: direct-ift at {_fmt_point(y)}, delta {_sig(delta_used)}")
        click.echo(f"frame: {', '.join(str(tuple(w)) for w in cert.words)}")
        click.echo(f"certified radius r_o: {_sig(cert.r_o)}")
        click.echo(f"inverse Jacobian norm: {_sig(cert.inverse_norm)}")
        click.echo(f"Jacobian Lipschitz bound: {_sig(cert.lipschitz)} "
                   f"({cert.pairs} pairs, {cert.rounds} rounds)")
        d_lhs, d_rhs = cert.condition_domain
        l_lhs, l_rhs = cert.condition_lipschitz
        click.echo(f"domain condition: {_sig(d_lhs)} <= {_sig(d_rhs)}")
        click.echo(f"Lipschitz condition: {_sig(l_lhs)} <= {_sig(l_rhs)}")
    else:
        bounds, formula = formula_pair
        payload = {
            "scenario": scn.describe(),
            "method": "formula",
            "center": [float(v) for v in y],
            "c0": bounds.c0,
            "c1": bounds.c1,
            "depth": formula.depth,
            "rank": formula.rank,
            "exponent": formula.exponent,
            "delta_o": formula.delta_o,
            "r_o": formula.r_o,
            "k_const": formula.k_const,
            "k_prime": formula.k_prime,
            "delta_max": formula.delta_max,
            "certified": False,
        }
        if as_json:
            _emit_json(payload)
            return
        click.echo("method: formula (shape only, constants are caller-supplied "
                   "and not certified)")
        click.echo(f"bounds over region: c0 {_sig(bounds.c0)}, c1 {_sig(bounds.c1)} "
                   f"({bounds.sample_count} samples, derivatives to order "
                   f"{bounds.derivative_order})")
        click.echo(f"exponent N(depth, rank): {formula.exponent}")
        click.echo(f"delta_o: {_sig(formula.delta_o)}")
        click.echo(f"r_o: {_sig(formula.r_o)}")


def _steer_common(scn, spec, y, target, delta, tol, seed):
    depth_res = minimal_depth(spec, grid_samples(spec.box, scn.grid),
                              scn.lmax, scn.rank_tol)
    if not (depth_res.stabilized and depth_res.uniform):
        raise BracketReachError("scenario is not verified uniform on the grid")
    frame = reach.frame_at(spec, y, depth_res.depth, depth_res.rank, scn.rank_tol)
    delta_used = delta
    if delta_used is None:
        delta_used = min(0.5, 0.8 * reach.operational_delta_max(frame, y, scn.tol))
    path = reach.steer(frame, delta_used, y, target, tol=tol, integrate_tol=scn.tol)
    return frame, delta_used, path


def _emit_path(scn, spec, path, out_prefix, no_plot, as_json, extra_meta):
    csv_path = f"{out_prefix}.csv"
    manifest_path = f"{out_prefix}.json"
    meta = {"scenario": scn.describe()}
    meta.update(extra_meta)
    write_dpath(path, csv_path, manifest_path, meta)
    produced = [csv_path, manifest_path]
    if not no_plot:
        png_path = f"{out_prefix}.png"
        render_dpath(path, png_path, title=f"{scn.name}")
        produced.append(png_path)
    validation = validate_dpath(path, spec)
    payload = {
        "files": produced,
        "arcs": len(path.arcs),
        "endpoint": [float(v) for v in path.endpoint],
        "endpoint_error": path.endpoint_error,
        "total_duration": path.total_duration,
        "validation": {
            "chaining_exact": validation.chaining_exact,
            "max_residual": validation.max_residual,
            "residual_ok": validation.residual_ok,
        },
    }
    payload.update(extra_meta)
    if as_json:
        payload["scenario"] = scn.describe()
        _emit_json(payload)
    else:
        click.echo(f"arcs: {len(path.arcs)}, total duration {_sig(path.total_duration)}")
        click.echo(f"endpoint: {_fmt_point(path.endpoint)}")
        if path.endpoint_error is not None:
            click.echo(f"endpoint error: {_sig(path.endpoint_error)}")
        click.echo(f"re-validation: chaining {'exact' if validation.chaining_exact else 'BROKEN'}, "
                   f"max ODE residual {_sig(validation.max_residual)}")
        click.echo("wrote " + ", ".join(produced))
    if not validation.passed:
        raise _Failure("emitted path failed re-validation")


@main.command()
@_scenario_argument
@_param_option
@_json_option
@_seed_option
@click.option("--from", "from_point", required=True, help="Start point a,b,c.")
@click.option("--to", "to_point", required=True, help="Target point a,b,c.")
@click.option("--delta", default=None, type=float, help="Shift parameter.")
@click.option("--tol", default=1e-6, show_default=True, help="Endpoint tolerance.")
@click.option("--out", "out_prefix", default=None, help="Output file prefix.")
@click.option("--no-plot", is_flag=True, help="Skip the PNG figure.")
def steer(scenario, params, as_json, seed, from_point, to_point, delta, tol,
          out_prefix, no_plot):
    """Steer between two nearby points with one endpoint-map inversion."""
    scn = _load(scenario, params)
    spec = scn.to_spec()
    _resolve_seed(seed)
    y = _parse_point(from_point, scn.dim, "--from")
    target = _parse_point(to_point, scn.dim, "--to")
    frame, delta_used, path = _run_guard(
        lambda: _steer_common(scn, spec, y, target, delta, tol, seed))
    prefix = out_prefix or f"steer_{scn.name}"
    _emit_path(scn, spec, path, prefix, no_plot, as_json, {
        "command": "steer",
        "delta": delta_used,
        "from": [float(v) for v in y],
        "to": [float(v) for v in target],
        "frame": [list(w.indices) for w in frame.words],
    })


@main.command()
@_scenario_argument
@_param_option
@_json_option
@_seed_option
@click.option("--from", "from_point", required=True, help="Start point a,b,c.")
@click.option("--to", "to_point", required=True, help="Target point a,b,c.")
@click.option("--delta", default=None, type=float, help="Fixed shift parameter.")
@click.option("--tol", default=1e-6, show_default=True, help="Endpoint tolerance.")
@click.option("--min-radius", default=1e-5, show_default=True,
              help="Abort when the certified radius collapses below this.")
@click.option("--out", "out_prefix", default=None, help="Output file prefix.")
@click.option("--no-plot", is_flag=True, help="Skip the PNG figure.")
def connect(scenario, params, as_json, seed, from_point, to_point, delta, tol,
            min_radius, out_prefix, no_plot):
    """Chain certified steering steps between two points."""
    scn = _load(scenario, params)
    spec = scn.to_spec()
    seed = _resolve_seed(seed)
    x = _parse_point(from_point, scn.dim, "--from")
    x_prime = _parse_point(to_point, scn.dim, "--to")
    cp = reach.ConnectParams(delta=delta, tol=tol, min_radius=min_radius,
                             seed=seed, integrate_tol=scn.tol, lmax=scn.lmax,
                             rank_tol=scn.rank_tol, per_axis=scn.grid)
    path = _run_guard(lambda: reach.connect(spec, x, x_prime, cp))
    prefix = out_prefix or f"connect_{scn.name}"
    _emit_path(scn, spec, path, prefix, no_plot, as_json, {
        "command": "connect",
        "from": [float(v) for v in x],
        "to": [float(v) for v in x_prime],
        "hops": path.meta.get("hops"),
        "radii": path.meta.get("radii"),
    })


if __name__ == "__main__":
    main()
