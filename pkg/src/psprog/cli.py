"""psprog command line.

Each subcommand validates its parameters first (exit 1 on a bad value,
naming the parameter), then runs the computation (exit 2 if it fails, for
example on an unresolved floor). Outputs contain no timestamps; those go to
the optional run manifest together with output checksums, so a rerun from
the manifest reproduces byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from . import __version__
from . import discrepancy as disc
from . import emit
from . import experiments as ex
from . import functions as fn
from . import polytope as poly
from . import progressions as pg
from .exactmath import START_BITS, UnresolvedFloorError, as_rational, format_rational

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE = 0, 1, 2
FORMATS = ("text", "json", "csv")
# flags that never enter the resolved config
_META = {"config", "manifest", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    subcommand: str
    params: dict

    def canonical(self) -> str:
        return json.dumps({"subcommand": self.subcommand, "params": self.params}, sort_keys=True)


@dataclass
class Output:
    payload: dict
    header: list
    rows: list
    text: str
    svg: Optional[str] = None


@dataclass
class RunManifest:
    config: RunConfig
    version: str
    started: str
    finished: str = ""
    input_hash: str = ""
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": {"subcommand": self.config.subcommand, "params": self.config.params},
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "input_hash": self.input_hash,
            "outputs": self.outputs,
        }


# ---------------------------------------------------------------------------
# value parsing


def _int(text, name: str) -> int:
    try:
        v = Fraction(str(text).replace("_", ""))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"--{name}: expected an integer, got {text!r}") from None
    if v.denominator != 1:
        raise UsageError(f"--{name}: expected an integer, got {text!r}")
    return int(v)


def int_list(text, name: str) -> list:
    """'1e4,1e5,1e6', 'a..b' (inclusive range) or 'a..b:m' (m log-spaced points)."""
    text = str(text).replace(" ", "")
    out = []
    for part in text.split(","):
        if not part:
            continue
        if ".." in part:
            lo, _, rest = part.partition("..")
            hi, _, m = rest.partition(":")
            a, b = _int(lo, name), _int(hi, name)
            if b < a:
                raise UsageError(f"--{name}: empty range {part!r}")
            if m:
                cnt = _int(m, name)
                if cnt < 2 or a < 1:
                    raise UsageError(f"--{name}: log-spaced range needs a >= 1 and at least 2 points")
                vals = np.logspace(math.log10(a), math.log10(b), cnt)
                out += sorted(set(int(round(v)) for v in vals))
            else:
                out += list(range(a, b + 1))
        else:
            out.append(_int(part, name))
    if not out:
        raise UsageError(f"--{name}: no values given")
    return out


def _rational(text, name: str) -> Fraction:
    try:
        return as_rational(str(text))
    except (ValueError, TypeError, ZeroDivisionError):
        raise UsageError(f"--{name}: expected a rational such as 3/2 or 1.5, got {text!r}") from None


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required for '{args.command}'")


def _function(args) -> fn.FunctionSpec:
    _need(args, "f")
    try:
        return fn.parse_function(args.f)
    except ValueError as e:
        raise UsageError(f"--f: {e}") from None


def _query(args, f: fn.FunctionSpec) -> pg.ProgressionQuery:
    _need(args, "k")
    k = _int(args.k, "k")
    d = f.d if args.d is None else _int(args.d, "d")
    r = _int(args.r, "r")
    try:
        return pg.ProgressionQuery(k, d, r, f)
    except ValueError as e:
        raise UsageError(f"--k/--d/--r: {e}") from None


def _positive(v: int, name: str) -> int:
    if v < 1:
        raise UsageError(f"--{name}: must be >= 1, got {v}")
    return v


def _alpha_12(args) -> Fraction:
    _need(args, "alpha")
    a = _rational(args.alpha, "alpha")
    if not 1 < a < 2:
        raise UsageError(f"--alpha: must lie strictly between 1 and 2, got {format_rational(a)}")
    return a


# ---------------------------------------------------------------------------
# subcommands: each returns a zero-argument computation producing an Output


def cmd_volume(args) -> Callable[[], Output]:
    _need(args, "k", "d")
    ks = int_list(args.k, "k")
    d = _int(args.d, "d")
    eps = _rational(args.eps, "eps")
    samples = _int(args.mc_samples, "mc-samples")
    seed = _int(args.seed, "seed")
    try:
        polys = [(k, poly.build_C(k, d, args.variant, eps)) for k in ks]
    except ValueError as e:
        raise UsageError(f"--k/--d/--variant/--eps: {e}") from None

    def run() -> Output:
        rows, items, text = [], [], []
        for k, p in polys:
            vr = poly.volume_exact(p)
            lb = poly.lower_bound(k, d)
            item = {"k": k, "d": d, "variant": args.variant, "eps": eps, "dim": p.dim, "volume": vr.volume,
                    "lower_bound": lb, "vertex_count": vr.vertex_count, "simplex_count": vr.simplex_count}
            row = [k, d, args.variant, eps, vr.volume, lb, vr.vertex_count]
            line = format_rational(vr.volume)
            if samples > 0:
                mc = poly.volume_montecarlo(p, samples, seed)
                item["montecarlo"] = {"estimate": mc.estimate, "stderr": mc.stderr, "samples": samples, "seed": seed}
                row += [mc.estimate, mc.stderr]
                line += f"  (Monte Carlo {mc.estimate:.6f} +/- {mc.stderr:.2g})"
            items.append(item)
            rows.append(row)
            text.append(line if len(polys) == 1 else f"k={k} d={d}: {line}")
        header = ["k", "d", "variant", "eps", "volume", "lower_bound", "vertices"]
        if samples > 0:
            header += ["mc_estimate", "mc_stderr"]
        return Output({"volumes": items}, header, rows, "\n".join(text) + "\n")

    return run


def cmd_detect(args) -> Callable[[], Output]:
    f = _function(args)
    q = _query(args, f)
    _need(args, "n")
    ns = int_list(args.n, "n")
    if min(ns) < f.n0:
        raise UsageError(f"--n: starts must be >= n0={f.n0} for {f.label}")
    bits = _int(args.bits, "bits")
    if args.variant not in ("uniform", "offset"):
        raise UsageError(f"--variant: expected uniform or offset, got {args.variant!r}")

    def run() -> Output:
        rows, items, text = [], [], []
        for n in ns:
            floors = pg.progression_floors(q, n)
            brute = pg.is_in_Pkd(floors, q.d).in_Pkd
            try:
                out = pg.criterion_classify(q, n, bits, args.variant)
                verdict, shift, eps = out.verdict, out.shift, out.eps_used
            except pg.BelowRegimeError:
                verdict, shift, eps = "BelowRegime", None, None
            agree = None if verdict in (pg.UNCERTAIN, "BelowRegime") else (verdict == pg.CERTAINLY_IN) == brute
            items.append({"n": n, "floors": floors, "brute_force": brute, "verdict": verdict,
                          "shift": list(shift) if shift else None, "eps": eps, "agree": agree})
            rows.append([n, brute, verdict, list(shift) if shift else None, eps, agree])
            text.append(f"n={n} floors={floors} in_P={brute} criterion={verdict}"
                        + (f" shift={tuple(shift)}" if shift else ""))
        payload = {"query": q.to_dict(), "variant": args.variant, "results": items}
        return Output(payload, ["n", "brute_force", "verdict", "shift", "eps", "agree"], rows, "\n".join(text) + "\n")

    return run


def cmd_density(args) -> Callable[[], Output]:
    f = _function(args)
    q = _query(args, f)
    _need(args, "n")
    grid = [_positive(v, "n") for v in int_list(args.n, "n")]

    def run() -> Output:
        rep = ex.density_fixed_r(q, grid, accelerate=args.accelerate)
        rows = [[row["N"], row["count"], row["target"], row["deviation"], row["bound_F"], row["density"]]
                for row in rep.rows()]
        payload = {"query": q.to_dict(), "start": rep.start, "target": rep.target, "rows": rep.rows()}
        text = [f"{q.f.label} k={q.k} d={q.d} r={q.r}, counting n in [{rep.start}, N]"]
        for row in rep.rows():
            tgt = "" if row["target"] is None else f"  target {format_rational(row['target'])}"
            text.append(f"N={row['N']}: count {row['count']}, density {float(row['density']):.6f}{tgt}")
        svg = None
        if args.svg:
            label = f"k={q.k}, r={q.r}"
            hl = [(float(rep.target), "1/(k-1)" if q.d == 1 else "volume")] if rep.target is not None else []
            svg = emit.svg_lines({label: ([math.log10(N) for N in rep.grid], [float(v) for v in rep.densities])},
                                 f"density of starts, {q.f.label}", "log10 N", "density", hl, markers=True)
        return Output(payload, ["N", "count", "target", "deviation", "bound_F", "density"], rows,
                      "\n".join(text) + "\n", svg)

    return run


def cmd_short(args) -> Callable[[], Output]:
    f = _function(args)
    q = _query(args, f)
    _need(args, "n", "l")
    N = _positive(_int(args.n, "n"), "n")
    L = _positive(_int(args.l, "l"), "l")
    if f.kind != "pow" or q.d != 1 or not 1 < f.alpha < 2:
        raise UsageError("--f: short-interval bounds need pow:α with 1 < α < 2 and d = 1")

    def run() -> Output:
        rep = ex.density_short_interval(q, N, L)
        payload = {"query": q.to_dict(), "N": N, "L": L, "count": rep.count, "density": rep.density,
                   "target": rep.target, "bounds": rep.bounds, "case": rep.best_case, "bound": rep.best_value}
        rows = [[N, L, rep.count, rep.target, rep.best_case, rep.best_value, rep.density]]
        text = (f"n in [{N}, {N + L}): count {rep.count}, density {float(rep.density):.6f}, "
                f"target {format_rational(rep.target)}, deviation shape {rep.best_value:.4g} ({rep.best_case})\n")
        return Output(payload, ["N", "L", "count", "target", "case", "bound", "density"], rows, text)

    return run


def cmd_vary_r(args) -> Callable[[], Output]:
    a = _alpha_12(args)
    _need(args, "k", "n")
    k = _int(args.k, "k")
    d = _int(args.d, "d") if args.d is not None else 1
    if k < d + 2:
        raise UsageError(f"--k: must be >= d+2 (k={k}, d={d})")
    if not d < a < d + 1:
        raise UsageError(f"--alpha: must lie in (d, d+1) for d={d}")
    grid = [_positive(v, "n") for v in int_list(args.n, "n")]

    def run() -> Output:
        rep = ex.count_variable_r(a, k, d, grid)
        expo = 2 - a / (d + 1)
        rows, items = [], []
        for N, c, z in zip(rep.N_grid, rep.pair_counts, rep.normalized):
            item = {"N": N, "count": c, "normalized": z}
            row = [N, c, z]
            if args.check_unpruned:
                u = ex.pair_count(a, k, d, N, prune=False)
                item["unpruned"] = u
                row.append(u)
            items.append(item)
            rows.append(row)
        payload = {"alpha": a, "k": k, "d": d, "exponent": expo, "rows": items, "A_tilde": rep.A_tilde,
                   "B_tilde": rep.B_tilde, "C_kd": rep.C_kd, "N0": rep.N0, "K": rep.K,
                   "window": [0.5 * rep.A_tilde, 2 * rep.B_tilde]}
        text = [f"pairs (n, r) with r <= N/(k-1) and n <= N; normalized by N^{format_rational(expo)}"]
        text += [f"N={N}: {c} pairs, normalized {z:.5f}" for N, c, z in zip(rep.N_grid, rep.pair_counts, rep.normalized)]
        text.append(f"A~ = {rep.A_tilde:.5f}, B~ = {rep.B_tilde:.5f}")
        header = ["N", "count", "normalized"] + (["unpruned"] if args.check_unpruned else [])
        return Output(payload, header, rows, "\n".join(text) + "\n")

    return run


def cmd_gaps(args) -> Callable[[], Output]:
    a = _alpha_12(args)
    _need(args, "k")
    k = _int(args.k, "k")
    if k < 3:
        raise UsageError(f"--k: must be >= 3, got {k}")
    r = _positive(_int(args.r, "r"), "r")
    xs = [_positive(v, "x") for v in int_list(args.x, "x")]
    dense_m = _int(args.dense_m, "dense-m") if args.dense_m is not None else None
    if dense_m is not None and k != 3:
        raise UsageError("--dense-m: the dense-window fraction is defined for k = 3")

    def run() -> Output:
        rep = ex.gap_lengths(a, k, r, xs)
        rows = [[x, L, w, c, cap, z] for x, L, w, c, cap, z in
                zip(rep.x_grid, rep.L_values, rep.witnesses, rep.censored, rep.caps, rep.ratios)]
        payload = {"alpha": a, "k": k, "r": r, "exponent": 2 - a,
                   "rows": [dict(zip(["x", "L", "witness", "censored", "cap", "ratio"], row)) for row in rows],
                   "max_ratio": max(rep.ratios), "bound_constant": ex.gap_bound_constant(a, r),
                   "lower_constant": rep.appendix_lower}
        text = [f"L(x) for k={k}, r={r}; ratio = L/x^{format_rational(2 - a)}"]
        text += [f"x={x}: L={L}{' (censored)' if c else ''}, ratio {z:.4f}" for x, L, _, c, _, z in rows]
        if dense_m is not None:
            frac = ex.k3_dense_fraction(a, r, dense_m)
            payload["dense_fraction"] = {"M": dense_m, "fraction": frac}
            text.append(f"fraction of N <= {dense_m} with L <= N^(1-α/2) log N: {frac:.5f}")
        svg = None
        if args.svg:
            svg = emit.svg_lines({f"k={k}, r={r}": ([math.log10(x) for x in rep.x_grid], rep.ratios)},
                                 "gap lengths", "log10 x", "L / x^(2-α)",
                                 [(float(ex.gap_bound_constant(a, r)), "bound")], markers=True)
        return Output(payload, ["x", "L", "witness", "censored", "cap", "ratio"], rows, "\n".join(text) + "\n", svg)

    return run


def cmd_sweep(args) -> Callable[[], Output]:
    _need(args, "k", "n")
    k = _int(args.k, "k")
    if k < 3:
        raise UsageError(f"--k: must be >= 3, got {k}")
    r = _positive(_int(args.r, "r"), "r")
    N = _positive(_int(args.n, "n"), "n")
    try:
        grid = ex.parse_alpha_grid(args.alpha_grid)
    except (ValueError, ZeroDivisionError) as e:
        raise UsageError(f"--alpha-grid: {e}") from None
    if not grid or any(not 1 < g < 2 for g in grid):
        raise UsageError("--alpha-grid: values must lie strictly between 1 and 2")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError("--alpha-grid: values must be strictly increasing")
    threads = _positive(_int(args.threads, "threads"), "threads")

    def run() -> Output:
        rep = ex.alpha_sweep(k, r, N, grid, threads)
        rows = [[a, c, v] for a, c, v in zip(rep.alpha_grid, rep.counts, rep.density_values)]
        payload = {"k": k, "r": r, "N": N, "mean": rep.mean(), "target": Fraction(1, k - 1),
                   "rows": [{"alpha": a, "count": c, "density": v} for a, c, v in rows]}
        text = (f"{len(rows)} values of alpha, N={N}, k={k}, r={r}: mean density {rep.mean():.6f} "
                f"(1/(k-1) = {1 / (k - 1):.6f})\n")
        svg = emit.svg_lines({f"k={k}, r={r}": ([float(a) for a in rep.alpha_grid],
                                                [float(v) for v in rep.density_values])},
                             f"density of {k}-term progressions, N={N}", "alpha", "density",
                             [(1 / (k - 1), "1/(k-1)")])
        return Output(payload, ["alpha", "count", "density"], rows, text, svg)

    return run


def cmd_discrepancy(args) -> Callable[[], Output]:
    a = _alpha_12(args)
    _need(args, "n")
    r = _positive(_int(args.r, "r"), "r")
    N = _positive(_int(args.n, "n"), "n")
    L = _positive(_int(args.l, "l"), "l") if args.l is not None else N
    H = _positive(_int(args.h, "h"), "h")
    G = _positive(_int(args.grid, "grid"), "grid")
    mode = args.mode
    if mode == "auto":
        mode = "exact" if L <= disc.EXACT_CAP else "grid"
    if mode == "exact" and L > disc.EXACT_CAP:
        raise UsageError(f"--l: exact mode is capped at {disc.EXACT_CAP} points (got {L}); use --mode grid")

    def run() -> Output:
        rep = disc.discrepancy_report(a, r, N, L, H, mode, G)
        payload = rep.to_dict()
        payload["theory"]["cases"] = disc.theory_bound(a, r, N, L)["cases"]
        row = [N, L, r, rep.D.value, rep.D.mode, rep.D.error_radius, H, rep.etk_value,
               disc.C_ETK * rep.etk_value, rep.theory_case, rep.theory_value, rep.isotropic, a]
        text = (f"D = {rep.D.value:.6f} +/- {rep.D.error_radius:.2g} ({rep.D.mode}); "
                f"ETK(H={H}) = {rep.etk_value:.6f}, C*ETK = {disc.C_ETK * rep.etk_value:.6f}; "
                f"theory shape {rep.theory_value:.4g} ({rep.theory_case}); isotropic <= {rep.isotropic:.4f}\n")
        header = ["N", "L", "r", "D", "mode", "error_radius", "H", "etk", "C_etk_times_etk", "case", "theory",
                  "isotropic", "alpha"]
        return Output(payload, header, [row], text)

    return run


def cmd_xlogx_band(args) -> Callable[[], Output]:
    _need(args, "k", "n")
    k = _int(args.k, "k")
    if k < 3:
        raise UsageError(f"--k: must be >= 3, got {k}")
    r = _positive(_int(args.r, "r"), "r")
    grid = [_positive(v, "n") for v in int_list(args.n, "n")]

    def run() -> Output:
        rep = ex.xlogx_band(k, r, grid)
        inside = rep.inside()
        rows = [[N, c, ins, dd] for N, c, dd, ins in zip(rep.N_grid, rep.counts, rep.densities, inside)]
        payload = {"k": k, "r": r, "start": rep.start, "band": [rep.band_lower, rep.band_upper],
                   "rows": [{"N": N, "count": c, "density": dd, "inside": ins} for N, c, ins, dd in rows]}
        text = [f"band [{rep.band_lower.mid:.6f}, {rep.band_upper.mid:.6f}] for k={k}, r={r}"]
        text += [f"N={N}: density {float(dd):.6f}{' inside' if ins else ' outside'}" for N, _, ins, dd in rows]
        return Output(payload, ["N", "count", "inside", "density"], rows, "\n".join(text) + "\n")

    return run


COMMANDS = {
    "volume": cmd_volume,
    "detect": cmd_detect,
    "density": cmd_density,
    "short": cmd_short,
    "vary-r": cmd_vary_r,
    "gaps": cmd_gaps,
    "sweep": cmd_sweep,
    "discrepancy": cmd_discrepancy,
    "xlogx-band": cmd_xlogx_band,
}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("output and run control")
    g.add_argument("--format", choices=FORMATS, default="text")
    g.add_argument("--output", help="write the main output here instead of stdout")
    g.add_argument("--svg", help="also write an SVG plot (density, gaps, sweep)")
    g.add_argument("--manifest", help="write a run manifest (config, timestamps, checksums)")
    g.add_argument("--config", help="flat 'key = value' file; flags override it")
    g.add_argument("--threads", default=str(ex.default_threads()))
    g.add_argument("--seed", default="0")
    g.add_argument("--bits", default=str(START_BITS), help="starting precision in bits")

    p = _Parser(prog="psprog", description="Polynomial progressions in floor(f(n)) sequences")
    p.add_argument("--version", action="version", version=f"psprog {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    s = add("volume", "exact volume of the C polytope family (limiting density)")
    s.add_argument("--k", help="progression length, or a list such as 3..10")
    s.add_argument("--d", help="progression degree")
    s.add_argument("--variant", default="C", choices=[v for v in poly.LABELS if v != "Custom"])
    s.add_argument("--eps", default="0")
    s.add_argument("--mc-samples", default="0", help="also estimate the volume by Monte Carlo")

    s = add("detect", "classify starts n with the criterion and brute force")
    s.add_argument("--f", help="pow:3/2, xlog:2, x2log:1/2, x2loglog:1/2 or xlogx")
    s.add_argument("--k")
    s.add_argument("--d")
    s.add_argument("--r", default="1")
    s.add_argument("--n", help="a start, a list, or a range a..b")
    s.add_argument("--variant", default="uniform")

    s = add("density", "exact density of progression starts at fixed r")
    s.add_argument("--f")
    s.add_argument("--k")
    s.add_argument("--d")
    s.add_argument("--r", default="1")
    s.add_argument("--n", help="N or a list such as 1e4,1e5,1e6")
    s.add_argument("--accelerate", action="store_true", help="criterion first, brute force on Uncertain")

    s = add("short", "density of starts in a short interval [N, N+L)")
    s.add_argument("--f")
    s.add_argument("--k")
    s.add_argument("--d")
    s.add_argument("--r", default="1")
    s.add_argument("--n")
    s.add_argument("--l")

    s = add("vary-r", "count pairs (n, r) with variable common difference")
    s.add_argument("--alpha")
    s.add_argument("--k")
    s.add_argument("--d")
    s.add_argument("--n")
    s.add_argument("--check-unpruned", action="store_true")

    s = add("gaps", "gap lengths L(x) to the next progression start")
    s.add_argument("--alpha")
    s.add_argument("--k")
    s.add_argument("--r", default="1")
    s.add_argument("--x", default="1000..1000000:13")
    s.add_argument("--dense-m", help="k=3: fraction of N <= M with short gaps")

    s = add("sweep", "density over a grid of alpha")
    s.add_argument("--k")
    s.add_argument("--r", default="1")
    s.add_argument("--n")
    s.add_argument("--alpha-grid", default="1+i/1000,i=1..999")

    s = add("discrepancy", "discrepancy of ({n^α}, {r α n^(α-1)})")
    s.add_argument("--alpha")
    s.add_argument("--r", default="1")
    s.add_argument("--n")
    s.add_argument("--l", help="number of points (default N)")
    s.add_argument("--h", default="16", help="ETK frequency cutoff")
    s.add_argument("--mode", default="auto", choices=["auto", "exact", "grid"])
    s.add_argument("--grid", default=str(disc.DEFAULT_GRID))

    s = add("xlogx-band", "density for floor(n log n) against its band")
    s.add_argument("--k", default="3")
    s.add_argument("--r", default="1")
    s.add_argument("--n", default="1e4,1e5,1e6")

    s = sub.add_parser("replay", help="rerun a manifest and verify output checksums")
    s.add_argument("manifest_file")
    return p


def read_config(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"--config: line {lineno} of {path} is not 'key = value'")
            key, _, val = line.partition("=")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv: list) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in COMMANDS:
        cfg = read_config(known.config)
        sp = _subparser(parser, known.command)
        dests = {a.dest for a in sp._actions}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise UsageError(f"--config: unknown keys for '{known.command}': {', '.join(unknown)}")
        for a in sp._actions:
            if a.dest in cfg and isinstance(a, argparse._StoreTrueAction):
                cfg[a.dest] = cfg[a.dest].lower() in ("1", "true", "yes", "on")
        sp.set_defaults(**cfg)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a subcommand is required")
    return args


def resolved_config(args) -> RunConfig:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in _META}
    return RunConfig(args.command, params)


# ---------------------------------------------------------------------------
# emission


def render(out: Output, fmt: str) -> str:
    if fmt == "json":
        return emit.dumps_json(out.payload)
    if fmt == "csv":
        return emit.dumps_csv(out.header, out.rows)
    return out.text


def _write(path: str, data: str) -> str:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(data)
    return emit.sha256_bytes(data.encode("utf-8"))


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def execute(args) -> tuple:
    """Validate, compute and write outputs. Returns (exit code, {path: sha256})."""
    cfg = resolved_config(args)
    run = COMMANDS[args.command](args)
    try:
        out = run()
    except (UnresolvedFloorError, ArithmeticError, poly.UnboundedPolytopeError, RuntimeError, ValueError) as e:
        print(f"psprog {args.command}: computation failed: {e}", file=sys.stderr)
        return EXIT_COMPUTE, {}, cfg
    written = {}
    data = render(out, args.format)
    if args.output:
        written[args.output] = _write(args.output, data)
    else:
        sys.stdout.write(data)
    if args.svg:
        if out.svg is None:
            print(f"psprog {args.command}: no plot for this subcommand; --svg ignored", file=sys.stderr)
        else:
            written[args.svg] = _write(args.svg, out.svg)
    return EXIT_OK, written, cfg


def replay(path: str) -> int:
    try:
        with open(path, encoding="utf-8") as fh:
            man = json.load(fh)
        cfg = man["config"]
    except (OSError, ValueError, KeyError) as e:
        raise UsageError(f"manifest_file: cannot read {path}: {e}") from None
    ns = argparse.Namespace(command=cfg["subcommand"], **cfg["params"])
    code, written, _ = execute(ns)
    if code != EXIT_OK:
        return code
    bad = [p for p, h in man.get("outputs", {}).items() if written.get(p) != h]
    if bad:
        print(f"psprog replay: checksum mismatch for {', '.join(bad)}", file=sys.stderr)
        return EXIT_COMPUTE
    print(f"psprog replay: {len(written)} output(s) reproduced byte-identically", file=sys.stderr)
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        try:
            args = parse_args(argv)
        except SystemExit as e:
            return int(e.code or 0)
        if args.command == "replay":
            return replay(args.manifest_file)
        started = _now()
        code, written, cfg = execute(args)
        if code == EXIT_OK and args.manifest:
            man = RunManifest(cfg, __version__, started, _now(), emit.sha256_bytes(cfg.canonical().encode()), written)
            _write(args.manifest, json.dumps(man.to_dict(), indent=2, sort_keys=True) + "\n")
        return code
    except UsageError as e:
        print(f"psprog: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"psprog: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
