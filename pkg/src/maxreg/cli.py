"""Command-line driver: polygon reports, certifications, solves, probes, export.

Every subcommand builds a complete report in memory (a plain dict with a
canonical JSON rendering) and only then writes it, so an error never leaves
partial output behind.  Reports carry a provenance block with the package
version and a hash of the effective configuration; two runs with the same
configuration and seed produce byte-identical output.

Exit codes: 0 = success / check passed, 2 = a certification failed,
1 = usage or runtime error.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from fractions import Fraction

import numpy as np

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("maxreg")
except Exception:  # pragma: no cover - not installed
    VERSION = "0.0.0"

from .boundary import (
    bc_from_jsonable,
    builtin_boundary_conditions,
    complementing_check,
)
from .factorization import (
    MU_D,
    MU_MINUS,
    MU_PLUS,
    T1_ORDER,
    chg_matrix,
    d_symbol,
    dplus_coeffs,
    roots,
)
from .halfspace import (
    HalfGrid,
    apply_d_quartic,
    boundary_norm,
    dirichlet_failure_probe,
    exp_field,
    halfspace_norm,
    merge_terms,
    random_exp_field,
    solve_half_chg_system,
    solve_half_scalar,
    traces,
    write_half_field,
)
from .polygons import (
    chg_shape,
    elementary_decomposition,
    is_regular_in_time,
    normal_slopes,
    order_function_of,
    trace_order_function,
)
from .spectral import (
    Field,
    TorusGrid,
    apply_multiplier,
    norm_table,
    project_oscillatory,
    random_band_limited_field,
    solve_whole_system,
    write_field,
)
from .symbols import GridSpec, PolySymbol, ellipticity_certify, mixed_order_certify


class CliError(Exception):
    """User-facing error: message on stderr, exit code 1."""


# ---------------------------------------------------------------------------
# Configuration: defaults < flags < config file
# ---------------------------------------------------------------------------

_TORUS_KEYS = ("T", "K", "n", "N", "Lx")
_HALF_KEYS = ("T", "K", "n", "N", "Lx", "Ln", "Nn")
_GRIDSPEC_KEYS = ("tau_max", "n_tau", "xi_min", "xi_max", "n_xi", "n_dirs")


def parse_grid(text):
    """'K=32,Nn=256' -> {'K': 32, 'Nn': 256} (ints where possible)."""
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise CliError(f"bad grid entry {item!r}: expected key=value")
        key, _, val = item.partition("=")
        key = key.strip()
        try:
            num = float(val)
        except ValueError:
            raise CliError(f"bad grid value {val!r} for {key!r}")
        out[key] = int(num) if num == int(num) and key != "T" else num
    return out


def _load_config_file(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e}")
    except json.JSONDecodeError as e:
        raise CliError(f"config parse error at line {e.lineno}, "
                       f"column {e.colno}: {e.msg}")
    if not isinstance(obj, dict):
        raise CliError("config file must hold a JSON object")
    return obj


def build_settings(args):
    """Effective configuration: argparse values overridden by --config."""
    cfg = {"grid": parse_grid(getattr(args, "grid", None)),
           "lambda": getattr(args, "lam", 1.0),
           "seed": getattr(args, "seed", 0),
           "format": getattr(args, "format", "json-like"),
           "out": getattr(args, "out", None)}
    for key in ("target", "what", "domain", "bc", "probe", "ensemble",
                "resolutions", "report", "mu"):
        if hasattr(args, key):
            cfg[key] = getattr(args, key)
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        for key, val in file_cfg.items():
            cfg[key] = val
    if cfg["format"] not in ("json-like", "csv"):
        raise CliError(f"unknown format {cfg['format']!r}")
    return cfg


def _grid_kwargs(cfg, allowed):
    grid = cfg.get("grid") or {}
    bad = set(grid) - set(allowed)
    if bad:
        raise CliError(f"unknown grid key(s): {', '.join(sorted(bad))}")
    return dict(grid)


def _grid_spec(cfg):
    kwargs = {k: v for k, v in (cfg.get("grid") or {}).items()
              if k in _GRIDSPEC_KEYS}
    return GridSpec(lam=float(cfg["lambda"]), seed=int(cfg["seed"]), **kwargs)


# ---------------------------------------------------------------------------
# Report assembly and rendering
# ---------------------------------------------------------------------------


def _plain(x):
    """Recursively convert report values to JSON-compatible types."""
    if x is None or isinstance(x, (bool, int, str)):
        return x
    if isinstance(x, float):
        return x
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, np.generic):
        return _plain(x.item())
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if hasattr(x, "to_jsonable"):
        return _plain(x.to_jsonable())
    return str(x)


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def build_report(command, cfg, data, summary):
    cfg = _plain({k: v for k, v in cfg.items() if k != "out"})
    digest = hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()
    return {"command": command,
            "config": cfg,
            "provenance": {"tool": "maxreg", "version": VERSION,
                           "config_sha256": digest},
            "data": _plain(data),
            "summary": list(summary)}


def _csv_cell(v):
    if isinstance(v, dict) and set(v) == {"re", "im"}:
        return repr(complex(v["re"], v["im"]))
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return "" if v is None else v


def render_report(report, fmt):
    if fmt == "json-like":
        return _canonical_json(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["# maxreg report", report["command"], VERSION])
    w.writerow(["# config_sha256", report["provenance"]["config_sha256"]])
    scalars = []

    def walk(prefix, val):
        if isinstance(val, list) and val and all(isinstance(r, dict) for r in val):
            keys = sorted({k for r in val for k in r})
            w.writerow([f"# table {prefix}"])
            w.writerow(keys)
            for r in val:
                w.writerow([_csv_cell(r.get(k)) for k in keys])
        elif isinstance(val, dict):
            if set(val) == {"re", "im"}:
                scalars.append((prefix, _csv_cell(val)))
            else:
                for k in sorted(val):
                    walk(f"{prefix}.{k}" if prefix else k, val[k])
        else:
            scalars.append((prefix, _csv_cell(val)))

    walk("", report["data"])
    if scalars:
        w.writerow(["# values"])
        w.writerow(["key", "value"])
        for key, val in scalars:
            w.writerow([key, val])
    for line in report["summary"]:
        w.writerow(["# summary", line])
    return buf.getvalue()


def emit(report, cfg):
    text = render_report(report, cfg["format"])
    if cfg.get("out"):
        path = cfg["out"]
        if os.path.isdir(path):
            ext = "csv" if cfg["format"] == "csv" else "json"
            path = os.path.join(path, f"report.{ext}")
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Symbol / boundary-condition inputs
# ---------------------------------------------------------------------------


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise CliError(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: parse error at line {e.lineno}, "
                       f"column {e.colno}: {e.msg}")


def load_poly_symbol(target):
    if target == "chg-D":
        return d_symbol()
    if not os.path.exists(target):
        raise CliError(f"unknown symbol {target!r}: not a builtin name "
                       f"(chg-D) and no such file")
    try:
        sym = PolySymbol.from_jsonable(_load_json(target))
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(f"{target}: bad symbol file: {e}")
    if not sym.monomials:
        raise CliError(f"{target}: symbol has no monomials")
    return sym


def load_boundary_pair(target):
    builtins = builtin_boundary_conditions()
    if target in builtins:
        return builtins[target]()
    if not os.path.exists(target):
        raise CliError(f"unknown boundary condition {target!r}: not one of "
                       f"{', '.join(sorted(builtins))} and no such file")
    try:
        bc, _, _ = bc_from_jsonable(_load_json(target))
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(f"{target}: bad boundary-condition file: {e}")
    return bc


# ---------------------------------------------------------------------------
# Subcommands.  Each returns (data, summary, passed); passed None means
# the command is informational (exit 0 unless an error occurred).
# ---------------------------------------------------------------------------


def _of_jsonable(mu):
    return {"pieces": mu.to_jsonable()["pieces"], "ord": str(mu.ord)}


def cmd_polygon(cfg):
    sym = load_poly_symbol(cfg["target"])
    poly = sym.newton_polygon()
    mu = order_function_of(poly)
    data = {
        "exponents": sorted([str(p.r), str(p.s)] for p in sym.exponent_set()),
        "vertices": poly.to_jsonable()["vertices"],
        "gamma_slopes": [None if s is None else str(s)
                         for s in normal_slopes(poly)],
        "order_function": _of_jsonable(mu),
        "regular_in_time": is_regular_in_time(mu),
        "elementary_decomposition": [[str(y), str(e)]
                                     for y, e in elementary_decomposition(mu)],
    }
    shape = chg_shape(mu)
    if shape is not None and mu.ord == int(mu.ord) and mu.ord > 0:
        rows = []
        for j in range(int(mu.ord)):
            tj = trace_order_function(mu, j)
            rows.append({"j": j, "pieces": tj.to_jsonable()["pieces"],
                         "ord": str(tj.ord)})
        data["trace_order_functions"] = rows
    verts = ", ".join(f"({r}, {s})" for r, s in data["vertices"])
    summary = [f"vertices: {verts}", f"ord = {mu.ord}",
               f"regular in time: {data['regular_in_time']}"]
    return data, summary, None


def cmd_check(cfg):
    what = cfg["what"]
    grid = _grid_spec(cfg)
    if what == "ellipticity":
        sym = load_poly_symbol(cfg["target"])
        mu = order_function_of(sym.newton_polygon())
        floor = 0.0
        if cfg["target"] == "chg-D":
            floor = min(1.0, float(cfg["lambda"])) / (2.0 * np.sqrt(3.0))
            floor *= 1.0 - 1e-9
        rep = ellipticity_certify(sym, mu, lam=float(cfg["lambda"]),
                                  grid=grid, floor=floor)
        data = {"report": rep.to_jsonable(), "mu": _of_jsonable(mu)}
        summary = [f"ellipticity: {'pass' if rep.passed else 'FAIL'} "
                   f"(C = {rep.c_lower:.6g}, floor = {floor:.6g})"]
        return data, summary, rep.passed
    if what == "mixed-order":
        if cfg["target"] != "chg-L":
            raise CliError("mixed-order check supports the builtin "
                           "system chg-L")
        out = mixed_order_certify(chg_matrix(), grid=grid)
        data = {"passed": out["passed"],
                "delta": out["delta"].to_jsonable(),
                "det": out["det"].to_jsonable(),
                "entries": {k: v.to_jsonable() for k, v in
                            out["entries"].items()},
                "decay_witness": out["decay_witness"],
                "worst_slope": out["worst_slope"]}
        summary = [f"mixed-order: {'pass' if out['passed'] else 'FAIL'}"]
        return data, summary, out["passed"]
    if what == "boundary":
        bc = load_boundary_pair(cfg["target"])
        out = complementing_check(bc, grid=grid)
        passed = bool(out["passed"] and out["lopatinskii"]["pass"])
        data = {"complementing_passed": out["passed"],
                "lopatinskii": out["lopatinskii"],
                "delta": out["delta"].to_jsonable(),
                "det": out["det"].to_jsonable(),
                "decay_witness": out["decay_witness"],
                "worst_slope": out["worst_slope"]}
        ls = "pass" if out["lopatinskii"]["pass"] else "FAIL"
        comp = "pass" if out["passed"] else "FAIL"
        summary = [f"lopatinskii: {ls}", f"complementing: {comp}"]
        if not out["passed"] and out["decay_witness"] is not None:
            w = out["decay_witness"]
            summary.append(f"witness ray |xi'| = {w['ray_xi']:.6g}, "
                           f"slope = {w['slope']:.4g}")
        return data, summary, passed
    raise CliError(f"unknown check {what!r}")


def cmd_chg(cfg):
    poly = d_symbol().newton_polygon()
    mu = order_function_of(poly)
    trace_rows = [{"j": j,
                   "pieces": trace_order_function(mu, j).to_jsonable()["pieces"],
                   "ord": str(trace_order_function(mu, j).ord)}
                  for j in range(4)]
    # spot check the quartic factorization D = D+ D- on a small grid
    max_res = 0.0
    for tau in (-1e3, -1.0, 1.0, 31.7, 1e3):
        for xi in (0.0, 0.1, 1.0, 10.0):
            rq = roots(tau, xi)
            for xn in (0.0, 0.7, -1.3):
                d_val = (xn ** 4 + (1j * tau + 2 * xi * xi) * xn ** 2
                         + (1j * tau + 1j * tau * xi * xi + xi ** 4))
                prod = ((xn - rq.rho1_plus) * (xn - rq.rho2_plus)
                        * (xn - rq.rho1_minus) * (xn - rq.rho2_minus))
                scale = max(abs(d_val), 1.0)
                max_res = max(max_res, abs(d_val - prod) / scale)
    fc = dplus_coeffs(1.0, 1.0)
    ell = ellipticity_certify(d_symbol(), MU_D, lam=float(cfg["lambda"]),
                              grid=_grid_spec(cfg))
    data = {
        "polygon_vertices": poly.to_jsonable()["vertices"],
        "mu_D": _of_jsonable(mu),
        "mu_plus": _of_jsonable(MU_PLUS),
        "mu_minus": _of_jsonable(MU_MINUS),
        "t1_order": _of_jsonable(T1_ORDER),
        "elementary_decomposition": [[str(y), str(e)]
                                     for y, e in elementary_decomposition(mu)],
        "trace_order_functions": trace_rows,
        "factor_residual": max_res,
        "dplus_sample": {"tau": 1.0, "xi": 1.0,
                         "d0_plus": fc.d0_plus, "d1_plus": fc.d1_plus},
        "ellipticity_constant": ell.c_lower,
    }
    summary = [f"N(D) vertices: "
               + ", ".join(f"({r}, {s})" for r, s in data["polygon_vertices"]),
               f"factor residual <= {max_res:.3e}",
               f"C_lambda = {ell.c_lower:.6g} at lambda = {cfg['lambda']}"]
    return data, summary, None


def _solve_whole(cfg):
    kwargs = _grid_kwargs(cfg, _TORUS_KEYS)
    grid = TorusGrid(**kwargs)
    seed = int(cfg["seed"])
    L = chg_matrix(grid.n)
    u_star = tuple(project_oscillatory(
        random_band_limited_field(grid, seed=seed + i)) for i in range(2))
    f = []
    for i in range(2):
        a = apply_multiplier(u_star[0], L.entries[i][0])
        b = apply_multiplier(u_star[1], L.entries[i][1])
        f.append(Field(grid, a.data + b.data, oscillatory=True))
    res = solve_whole_system(L, f)
    err = max(np.abs(res.u[i].data - u_star[i].data).max()
              / max(np.abs(u_star[i].data).max(), 1e-300) for i in range(2))
    tables = {}
    for name, fld in (("u1", res.u[0]), ("u2", res.u[1]),
                      ("f1", f[0]), ("f2", f[1])):
        tables[f"norms_{name}"] = norm_table(fld, [("l2", 0), ("mu_D", MU_D)])
    data = {"grid": grid.to_jsonable(), "seed": seed,
            "relative_residual": res.diagnostics["relative_residual"],
            "recovery_error": err, **tables}
    summary = [f"whole-space manufactured solve on K={grid.K}, N={grid.N}",
               f"recovery error = {err:.3e}",
               f"relative residual = {data['relative_residual']:.3e}"]
    fields = [("u1", res.u[0], write_field), ("u2", res.u[1], write_field)]
    return data, summary, fields


def _neg_half(u):
    return exp_field(u.grid, {k: tuple((-c, r, m) for c, r, m in v)
                              for k, v in u.exp_terms.items()})


def _solve_half(cfg):
    kwargs = _grid_kwargs(cfg, _HALF_KEYS)
    grid = HalfGrid(**kwargs)
    seed = int(cfg["seed"])
    bc_name = cfg.get("bc") or "neumann_13"
    if cfg.get("probe"):
        resolutions = None
        if cfg.get("resolutions"):
            resolutions = _parse_resolutions(cfg["resolutions"])
        rows = dirichlet_failure_probe(resolutions)
        data = {"rows": rows}
        growth = rows[-1]["trace_norm_T2"] / rows[0]["trace_norm_T2"]
        summary = [f"borderline-datum growth table over "
                   f"K = {', '.join(str(r['K']) for r in rows)}",
                   f"trace-norm growth factor = {growth:.3f}"]
        return data, summary, []
    ensemble = int(cfg.get("ensemble") or 0)
    if ensemble:
        zero_g = np.zeros(grid.col_shape, complex)
        ratios = []
        for s in range(ensemble):
            f1 = random_exp_field(grid, seed=seed + 2 * s)
            f2 = random_exp_field(grid, seed=seed + 2 * s + 1)
            res = solve_half_chg_system(f1, f2, zero_g, zero_g)
            ratios.append(res.diagnostics["ratio"])
        data = {"grid": grid.to_jsonable(), "seed": seed,
                "samples": ensemble,
                "ratios": ratios,
                "median_ratio": float(np.median(ratios)),
                "max_ratio": float(max(ratios))}
        summary = [f"system ensemble, {ensemble} samples: median "
                   f"max-regularity ratio = {data['median_ratio']:.4g}"]
        return data, summary, []
    bc = load_boundary_pair(bc_name)
    u_star = random_exp_field(grid, seed=seed)
    f = apply_d_quartic(u_star)
    tr = traces(u_star, 4)
    g = [np.zeros(grid.col_shape, complex) for _ in range(2)]
    for idx, tau, xi in grid.columns():
        for i in range(2):
            g[i][idx] = sum(complex(c(tau, xi)) * tr[(j,) + idx]
                            for j, c in enumerate(bc[i].coeffs))
    res = solve_half_scalar(f, tuple(g), bc)
    diff = exp_field(grid, {
        k: merge_terms(tuple(res.u.exp_terms.get(k, ()))
                       + tuple(_neg_half(u_star).exp_terms.get(k, ())))
        for k in set(res.u.exp_terms) | set(u_star.exp_terms)})
    denom = max(halfspace_norm(u_star, MU_D), 1e-300)
    err = halfspace_norm(diff, MU_D) / denom
    data = {"grid": grid.to_jsonable(), "seed": seed, "bc": bc_name,
            "recovery_error": err,
            "norm_u_mu_D": halfspace_norm(res.u, MU_D),
            "norm_f_l2": halfspace_norm(f, 0),
            "boundary_norms": [boundary_norm(g[i], bc[i].chi, grid)
                               for i in range(2)],
            "max_cond": res.diagnostics["max_cond"],
            "max_scaled_cond": res.diagnostics["max_scaled_cond"]}
    summary = [f"half-space manufactured solve, bc = {bc_name}",
               f"recovery error = {err:.3e}",
               f"max boundary-system cond = {data['max_cond']:.4g}"]
    fields = [("u", res.u, write_half_field)]
    return data, summary, fields


def cmd_solve(cfg):
    if cfg["domain"] == "whole":
        data, summary, fields = _solve_whole(cfg)
    elif cfg["domain"] == "half":
        data, summary, fields = _solve_half(cfg)
    else:
        raise CliError(f"unknown domain {cfg['domain']!r}")
    if cfg.get("out") and fields:
        base = cfg["out"]
        for name, fld, writer in fields:
            writer(f"{base}.{name}.field", fld)
        data["field_files"] = [f"{base}.{name}.field" for name, _, _ in fields]
    return data, summary, None


def _parse_resolutions(text):
    out = []
    for item in text.split(","):
        k, sep, nn = item.partition(":")
        if not sep:
            raise CliError(f"bad resolution {item!r}: expected K:Nn")
        out.append((int(k), int(nn)))
    return out


def cmd_probe(cfg):
    resolutions = None
    if cfg.get("resolutions"):
        resolutions = _parse_resolutions(cfg["resolutions"])
    rows = dirichlet_failure_probe(resolutions)
    growth = rows[-1]["trace_norm_T2"] / rows[0]["trace_norm_T2"]
    neumann = [r["neumann_ratio"] for r in rows]
    data = {"rows": rows,
            "trace_norm_growth": growth,
            "neumann_ratio_variation": max(neumann) / min(neumann),
            "cond_contrast_growth": rows[-1]["cond_contrast"]
            / rows[0]["cond_contrast"]}
    summary = [
        "borderline Dirichlet datum vs resolution",
        f"solvability trace norm grows x{growth:.3f} "
        f"over K = {rows[0]['K']}..{rows[-1]['K']}",
        f"neumann max-regularity ratio variation = "
        f"{data['neumann_ratio_variation']:.4f}",
        f"dirichlet/neumann conditioning contrast grows "
        f"x{data['cond_contrast_growth']:.3f}",
    ]
    return data, summary, None


_EXPORT_HEADERS = {
    "polygon_vertices.csv": ["r", "s"],
    "trace_polygons.csv": ["trace", "r", "s"],
    "growth.csv": ["K", "Nn", "trace_norm_T2", "dirichlet_ratio",
                   "neumann_ratio", "cond_contrast"],
}


def cmd_export(cfg):
    report = _load_json(cfg["report"])
    if not isinstance(report, dict):
        raise CliError("report file must hold a JSON object")
    data = report.get("data", {})
    out_dir = cfg.get("out") or "export"
    files = {}

    def table(name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
        files[name] = buf.getvalue()

    if "vertices" in data:
        table("polygon_vertices.csv", _EXPORT_HEADERS["polygon_vertices.csv"],
              [[r, s] for r, s in data["vertices"]])
    if "polygon_vertices" in data:
        table("polygon_vertices.csv", _EXPORT_HEADERS["polygon_vertices.csv"],
              [[r, s] for r, s in data["polygon_vertices"]])
    if "trace_order_functions" in data:
        rows = []
        for entry in data["trace_order_functions"]:
            for ge, b, m in entry["pieces"]:
                rows.append([entry["j"], b, m])
        table("trace_polygons.csv", _EXPORT_HEADERS["trace_polygons.csv"], rows)
    if "rows" in data:
        keys = sorted({k for r in data["rows"] for k in r})
        table("growth.csv", keys,
              [[r.get(k, "") for k in keys] for r in data["rows"]])
    for key, val in sorted(data.items()):
        if key == "rows" or key == "trace_order_functions":
            continue
        if (isinstance(val, list) and val
                and all(isinstance(r, dict) for r in val)):
            keys = sorted({k for r in val for k in r})
            table(f"{key}.csv", keys,
                  [[_csv_cell(r.get(k)) for k in keys] for r in val])
    if not files:
        # header-only bundle for an empty report
        for name, header in _EXPORT_HEADERS.items():
            table(name, header, [])
    os.makedirs(out_dir, exist_ok=True)
    for name, text in sorted(files.items()):
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text)
    data_out = {"directory": out_dir, "files": sorted(files)}
    summary = [f"wrote {len(files)} CSV file(s) to {out_dir}"]
    return data_out, summary, None


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", default=None,
                        help="grid overrides, e.g. K=32,Nn=256")
    common.add_argument("--lambda", dest="lam", type=float, default=1.0,
                        help="low-frequency cutoff for certifications")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None,
                        help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json-like", "csv"),
                        default="json-like")
    common.add_argument("--config", default=None,
                        help="JSON file whose entries override flags")

    p = argparse.ArgumentParser(
        prog="maxreg",
        description="Newton-polygon calculus and time-periodic solvers "
                    "for the Cahn-Hilliard-Gurtin system")
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("polygon", parents=[common],
                        help="Newton polygon and order-function report")
    sp.add_argument("target", help="builtin name (chg-D) or symbol JSON file")

    sc = sub.add_parser("check", parents=[common],
                        help="run a certification (exit 2 on failure)")
    sc.add_argument("what", choices=("ellipticity", "mixed-order", "boundary"))
    sc.add_argument("target",
                    help="chg-D | chg-L | dirichlet | neumann_13 | file")

    sub.add_parser("chg", parents=[common],
                   help="report the standard CHG objects")

    ss = sub.add_parser("solve", parents=[common],
                        help="manufactured solve with norm tables")
    ss.add_argument("domain", choices=("whole", "half"))
    ss.add_argument("--bc", default=None,
                    help="boundary condition for half solves "
                         "(dirichlet | neumann_13 | file)")
    ss.add_argument("--probe", action="store_true",
                    help="emit the borderline-datum growth table instead")
    ss.add_argument("--ensemble", type=int, default=0,
                    help="number of random system samples")

    spr = sub.add_parser("probe", parents=[common],
                         help="borderline Dirichlet datum growth table")
    spr.add_argument("--resolutions", default=None,
                     help="comma list of K:Nn pairs, e.g. 16:256,32:256")

    se = sub.add_parser("export", parents=[common],
                        help="expand a JSON report into a CSV bundle")
    se.add_argument("report", help="report file produced by this tool")
    return p


_COMMANDS = {
    "polygon": cmd_polygon,
    "check": cmd_check,
    "chg": cmd_chg,
    "solve": cmd_solve,
    "probe": cmd_probe,
    "export": cmd_export,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_settings(args)
        data, summary, passed = _COMMANDS[args.cmd](cfg)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, ZeroDivisionError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    report = build_report(args.cmd, cfg, data, summary)
    emit(report, cfg)
    return 0 if passed is None or passed else 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
