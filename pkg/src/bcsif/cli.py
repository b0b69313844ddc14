"""Command-line front end: gap, phase, potential, covariance and verify."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from bcsif import verify as verify_mod
from bcsif.covariance import CovarianceEvaluator, matsubara_frequencies
from bcsif.gap import a_of_gamma, solve_gap
from bcsif.model import DomainError, ModelParams, NumericalError, ValidationError, coupling_window
from bcsif.potential import (
    eval_F_L,
    eval_f_L,
    grad_hess_F_L,
    maximize_F_L,
    maximize_f_L,
)

EXIT_OK, EXIT_VERIFY, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return _jsonable(float(x.real)) if x.imag == 0 else [_jsonable(float(x.real)), _jsonable(float(x.imag))]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def read_config(path: str) -> dict:
    """Flat key=value file; '#' starts a comment; dashes in keys map to underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def parse_grid(text: str) -> list:
    """'a:b:n' (inclusive linspace) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise ValidationError("empty grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"grid {text!r} must be start:stop:num")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValidationError("grid needs at least one point")
        return [float(v) for v in np.linspace(a, b, n)]
    return [float(v) for v in text.split(",")]


def emit(ctx, text: str):
    out = ctx.obj.get("out")
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


def _model_options(beta_required: bool, U_required: bool, L_default: int = 2):
    def deco(f):
        opts = [
            click.option("--d", type=int, default=1, show_default=True, help="Spatial dimension."),
            click.option("--L", "L", type=int, default=L_default, show_default=True, help="Linear lattice size."),
            click.option("--hop", type=int, default=0, show_default=True, help="Hopping sign selector (0 or 1)."),
            click.option("--mu", type=float, default=0.0, show_default=True, help="Chemical potential."),
            click.option("--beta", type=float, help="Inverse temperature.",
                         **({"required": True} if beta_required else {"default": 1.0, "show_default": True})),
            click.option("--theta", type=float, default=0.0 if beta_required else 1.0, show_default=True,
                         help="Imaginary-field magnitude in [0, 2pi/beta)."),
            click.option("--U", "U", type=float, help="Coupling constant (negative).",
                         **({"required": True} if U_required else {"default": -0.3, "show_default": True})),
            click.option("--gamma", type=float, default=0.0 if beta_required else 0.2, show_default=True,
                         help="Symmetry-breaking field in [0,1]."),
        ]
        for o in reversed(opts):
            f = o(f)
        return f
    return deco


def _params(kw, **override) -> ModelParams:
    keys = ("d", "L", "hop", "mu", "beta", "theta", "U", "gamma")
    vals = {k: kw[k] for k in keys if k in kw and kw[k] is not None}
    vals.update(override)
    return ModelParams(**vals)


def _quad(kw):
    return kw.get("quad_nodes") or None


_common = [
    click.option("--quad-nodes", type=int, default=None, help="Per-axis trapezoid nodes."),
    click.option("--tol", type=float, default=1e-10, show_default=True, help="Root tolerance."),
    click.option("--seed", type=int, default=0, show_default=True, help="Random seed."),
    click.option("--c1", type=float, default=1.0, show_default=True, help="Window lower constant."),
    click.option("--c2", type=float, default=1.0, show_default=True, help="Window upper constant."),
]


def _common_options(f):
    for o in reversed(_common):
        f = o(f)
    return f


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (ValidationError, DomainError) as exc:
            click.echo(f"validation error: {exc}", err=True)
            ctx.exit(EXIT_VALIDATION)
        except (NumericalError, FloatingPointError, ZeroDivisionError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            ctx.exit(EXIT_NUMERICAL)


@click.group(cls=_Group)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file (default stdout).")
@click.option("--format", "fmt_", type=click.Choice(["csv", "json"]), default=None, help="Output format.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="key=value config file (default: $BCSIF_CONFIG).")
@click.pass_context
def main(ctx, out, fmt_, config):
    """Reduced BCS model with an imaginary magnetic field."""
    ctx.ensure_object(dict)
    path = config or os.environ.get("BCSIF_CONFIG")
    cfg = read_config(path) if path else {}
    ctx.obj["out"] = out or cfg.pop("out", None)
    ctx.obj["format"] = fmt_ or cfg.pop("format", None)
    known = set()
    for cmd in main.commands.values():
        known |= {p.name for p in cmd.params}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    ctx.default_map = {name: dict(cfg) for name in main.commands}


@main.command("gap")
@_model_options(beta_required=True, U_required=True)
@_common_options
@click.pass_context
def cmd_gap(ctx, **kw):
    """Solve the gap equation and report all scalar observables (JSON)."""
    p = _params(kw)
    sol = solve_gap(p, kw["tol"], _quad(kw))
    win = coupling_window(p, kw["c1"], kw["c2"])
    rec = {"params": p.as_dict(), "delta": sol.delta, "residual": sol.residual, "solvable": sol.solvable,
           "ssb": sol.ssb, "odlro": sol.odlro, "free_energy": sol.free_energy,
           "window_lower": win["lower"], "window_upper": win["upper"],
           "window_upper_integral": win["upper_integral"], "quad_nodes": sol.quad_nodes,
           "iterations": sol.iterations}
    emit(ctx, json_text(rec))


def _phase_row(args):
    p, c1, c2, tol, nodes = args
    win = coupling_window(p, c1, c2)
    sol = solve_gap(p, tol, nodes)
    inside = bool(win["lower"] < p.absU < win["upper"])
    return [p.theta, p.U, p.Theta, win["lower"], win["upper"], inside, sol.delta, sol.ssb, sol.odlro,
            sol.free_energy]


PHASE_COLUMNS = ["theta", "U", "Theta", "window_lower", "window_upper", "in_window", "delta", "ssb", "odlro",
                 "free_energy"]


@main.command("phase")
@_model_options(beta_required=True, U_required=False)
@_common_options
@click.option("--theta-grid", required=True, help="theta values: start:stop:num or a,b,c.")
@click.option("--U-grid", "U_grid", required=True, help="U values (negative): start:stop:num or a,b,c.")
@click.option("--workers", type=int, default=1, show_default=True, help="Concurrent cell evaluations.")
@click.pass_context
def cmd_phase(ctx, theta_grid, U_grid, workers, **kw):
    """Phase diagram over a (theta, U) grid; rows in theta-major order."""
    thetas, Us = parse_grid(theta_grid), parse_grid(U_grid)
    cells = [(_params(kw, theta=t, U=u), kw["c1"], kw["c2"], kw["tol"], _quad(kw)) for t in thetas for u in Us]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        rows = list(ex.map(_phase_row, cells))
    if (ctx.obj.get("format") or "csv") == "json":
        emit(ctx, json_text([dict(zip(PHASE_COLUMNS, r)) for r in rows]))
    else:
        emit(ctx, csv_text(PHASE_COLUMNS, rows))


POTENTIAL_COLUMNS = ["L", "a_L", "a_gamma", "abs_err_a", "Delta_L", "Delta", "abs_err_delta", "F_L_max",
                     "f_L_max", "F_L_sym_diff", "hess_x2x2", "hess_identity_residual"]


@main.command("potential")
@_model_options(beta_required=True, U_required=True)
@_common_options
@click.option("--L-list", "L_list", default="8,16,32,64", show_default=True, help="Comma-separated sizes.")
@click.option("--curve-points", type=int, default=0, help="Emit F_L(x,0), f_L(x) curves on this many x.")
@click.option("--curve-max", type=float, default=2.0, show_default=True, help="Curve range [0, curve-max].")
@click.pass_context
def cmd_potential(ctx, L_list, curve_points, curve_max, **kw):
    """Finite-volume potential maximizers against their infinite-volume limits."""
    Ls = [int(v) for v in L_list.split(",")]
    if not Ls:
        raise ValidationError("L-list is empty")
    base = _params(kw)
    if curve_points > 0:
        xs = np.linspace(0, curve_max, curve_points)
        rows = [[L, x, eval_F_L(base.replace(L=L), (x, 0.0)), eval_f_L(base.replace(L=L), x)]
                for L in Ls for x in xs]
        emit(ctx, csv_text(["L", "x", "F_L", "f_L"], rows))
        return
    if not base.gamma > 0:
        raise ValidationError("potential needs gamma > 0")
    a = a_of_gamma(base, nodes=_quad(kw))
    D = solve_gap(base, kw["tol"], _quad(kw)).delta
    rows = []
    for L in Ls:
        p = base.replace(L=L)
        aL = maximize_F_L(p)
        dL = maximize_f_L(p)
        _, h = grad_hess_F_L(p, (aL, 0.0))
        sym = eval_F_L(p, (aL, 0.3)) - eval_F_L(p, (aL, -0.3))
        rows.append([L, aL, a, abs(aL - a), dL, D, abs(dL - D), eval_F_L(p, (aL, 0.0)), eval_f_L(p, dL), sym,
                     h[1, 1], h[1, 1] + 2 * p.gamma / (p.absU * aL)])
    if (ctx.obj.get("format") or "csv") == "json":
        emit(ctx, json_text([dict(zip(POTENTIAL_COLUMNS, r)) for r in rows]))
    else:
        emit(ctx, csv_text(POTENTIAL_COLUMNS, rows))


@main.command("covariance")
@_model_options(beta_required=True, U_required=False)
@_common_options
@click.option("--phi-re", type=float, default=0.0, show_default=True)
@click.option("--phi-im", type=float, default=0.0, show_default=True)
@click.option("--h", "h", type=float, default=None, help="Time-grid rate (default 4/beta).")
@click.pass_context
def cmd_covariance(ctx, phi_re, phi_im, h, **kw):
    """Dump C(phi)((band1, x, s), (band2, 0, t)) over bands, sites and the time grid."""
    p = _params(kw)
    h = h if h is not None else 4 / p.beta
    matsubara_frequencies(p.beta, h)
    times = np.arange(int(round(p.beta * h))) / h
    ev = CovarianceEvaluator(p, complex(phi_re, phi_im))
    origin = (0,) * p.d
    labels = [(b1, b2, x, s, t) for b1 in (1, 2) for b2 in (1, 2) for x in p.sites() for s in times for t in times]
    vals = ev([(b1, x, s) for b1, _, x, s, _ in labels], [(b2, origin, t) for _, b2, _, _, t in labels])
    vals = np.atleast_1d(vals)
    header = ["band1", "band2"] + [f"x{j + 1}" for j in range(p.d)] + ["s", "t", "re", "im"]
    rows = [[b1, b2, *x, s, t, v.real, v.imag] for (b1, b2, x, s, t), v in zip(labels, vals)]
    emit(ctx, csv_text(header, rows))


@main.command("verify")
@_model_options(beta_required=False, U_required=False)
@_common_options
@click.option("--suite", type=click.Choice(verify_mod.SUITES + ["all"]), default="all", show_default=True)
@click.option("--hs-nodes", type=int, default=24, show_default=True)
@click.option("--fuzz-trials", type=int, default=1000, show_default=True)
@click.option("--M-base", "M_base", type=float, default=2 * math.pi, show_default=True)
@click.pass_context
def cmd_verify(ctx, suite, hs_nodes, fuzz_trials, M_base, **kw):
    """Run verification suites; exit 1 if any check fails."""
    p = _params(kw)
    suites = verify_mod.SUITES if suite == "all" else [suite]
    records = []
    for s in suites:
        records += verify_mod.run_suite(s, p, seed=kw["seed"], hs_nodes=hs_nodes, fuzz_trials=fuzz_trials,
                                        M=M_base)
    emit(ctx, json_text(records))
    if not all(r["pass"] for r in records):
        ctx.exit(EXIT_VERIFY)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
