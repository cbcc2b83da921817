"""Command-line driver: identity-verification suites, multiplier spectra,
deficit flows, and moving-spheres diagnostics with machine-readable output.

Reports are JSON (schema field = 1) and per-row tables are CSV; rerunning
with the same config and seed reproduces the report byte for byte, so no
wall-clock fields go into the files.  Flags take precedence over a JSON
config file, which takes precedence over defaults.  The only environment
variable read is LOGSPHERE_WORKERS (worker count for the double sums).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import conformal as cf
from . import dynamics as dy
from . import energy as en
from . import harmonics as hm
from . import sphere as sp

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    n: int = 2
    band_limit: int = 16
    grid_degree: int | None = None
    tol: float = 1.0
    seed: int = 0
    out: str | None = None
    workers: int = 1
    fault: dict | None = None


def _load_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            data.update(json.load(fh))
    for key in ("n", "band_limit", "grid_degree", "tol", "seed", "out"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    workers = os.environ.get("LOGSPHERE_WORKERS")
    if workers:
        data["workers"] = max(1, int(workers))
    allowed = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(data) - allowed
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**data)
    if cfg.n not in (1, 2):
        raise SystemExit("the verification pipeline supports n in {1, 2}")
    if cfg.band_limit < 4:
        raise SystemExit("band limit must be >= 4")
    return cfg


def _np_default(obj):
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _report_config(cfg: RunConfig) -> dict:
    # the output path is not semantic; dropping it keeps reports byte-identical
    data = asdict(cfg)
    data.pop("out", None)
    return data


def _write_json(report: dict, path: str | None):
    text = json.dumps(report, indent=2, sort_keys=True, default=_np_default) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(rows: list[tuple], path: str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)


# ---------------------------------------------------------------------------
# verify subcommand

def _random_maps(n: int, rng: np.random.Generator, count: int):
    maps = []
    for _ in range(count):
        xi0 = sp.sphere_point(rng.standard_normal(n + 1))
        if 1.0 + xi0[-1] < 0.2:  # keep the base point away from the south pole
            xi0 = -xi0
        maps.append(cf.LiftedInversion(float(rng.uniform(0.3, 2.0)), xi0))
        e = rng.standard_normal(n)
        maps.append(cf.LiftedReflection(float(rng.uniform(-1.0, 1.0)), e))
        zdir = rng.standard_normal(n + 1)
        zdir *= rng.uniform(0.1, 0.6) / np.linalg.norm(zdir)
        maps.append(cf.Moebius(zdir))
    return maps


def _suite_conformal_distance(cfg: RunConfig, rng) -> dict:
    n = cfg.n
    tol = 1e-9 * cfg.tol
    worst = 0.0
    for phi in _random_maps(n, rng, 5):
        pts = sp.sphere_point(rng.standard_normal((200, n + 1)))
        a, b = pts[:100], pts[100:]
        ja, jb = cf.jacobian(phi, a), cf.jacobian(phi, b)
        lhs = ja ** (1.0 / n) * np.sum((a - b) ** 2, axis=1) * jb ** (1.0 / n)
        rhs = np.sum(
            (np.atleast_2d(cf.apply_map(phi, a)) - np.atleast_2d(cf.apply_map(phi, b))) ** 2,
            axis=1,
        )
        worst = max(worst, float(np.abs(lhs / rhs - 1.0).max()))
    return {"name": "conformal_distance", "metric": worst, "tolerance": tol,
            "passed": worst <= tol}


def _suite_kernel_sign(cfg: RunConfig, rng) -> dict:
    n = cfg.n
    violations, pairs = 0, 0
    worst = math.inf
    for k in range(20):
        xi0 = sp.sphere_point(rng.standard_normal(n + 1))
        if 1.0 + xi0[-1] < 0.2:
            xi0 = -xi0
        for phi in (
            cf.LiftedInversion(float(rng.uniform(0.3, 2.0)), xi0),
            cf.LiftedReflection(float(rng.uniform(-1.0, 1.0)), rng.standard_normal(n)),
        ):
            region = cf.region_of(phi)
            a = cf.sample_region(region, 2500, rng)
            b = cf.sample_region(region, 2500, rng)
            ok = np.sum((a - b) ** 2, axis=1) > 1e-12
            vals = cf.kernel_l(phi, a[ok], b[ok])
            pairs += int(ok.sum())
            violations += int(np.sum(vals <= 0.0))
            worst = min(worst, float(vals.min()))
    return {"name": "kernel_sign", "metric": violations, "tolerance": 0,
            "passed": violations == 0,
            "details": {"pairs": pairs, "min_kernel": worst}}


def _suite_conf_transf_E(cfg: RunConfig, rng) -> dict:
    n = cfg.n
    L_in = max(4, cfg.band_limit // 2)
    L_work = max(32, 2 * cfg.band_limit)
    grid = sp.build_grid(n, L_work)
    worst_ratio = 0.0
    for _ in range(3):
        u = hm.random_coeffs(n, L_in, rng)
        v = hm.random_coeffs(n, L_in, rng)
        zdir = rng.standard_normal(n + 1)
        zdir *= rng.uniform(0.1, 0.5) / np.linalg.norm(zdir)
        phi = cf.Moebius(zdir)
        res = en.verify_conf_E(u, v, phi, L_work, grid)
        allowed = 1e-3 * (1.0 + abs(en.energy_spectral(u, v))) * cfg.tol
        worst_ratio = max(worst_ratio, res / allowed)
    return {"name": "conf_transf_E", "metric": worst_ratio, "tolerance": 1.0,
            "passed": worst_ratio <= 1.0}


def _suite_conf_transf_H(cfg: RunConfig, rng) -> dict:
    n = cfg.n
    L_in = max(4, cfg.band_limit // 2)
    L_work = max(32, 2 * cfg.band_limit)
    grid = sp.build_grid(n, L_work)
    worst_ratio = 0.0
    for _ in range(3):
        u = hm.random_coeffs(n, L_in, rng)
        zdir = rng.standard_normal(n + 1)
        zdir *= rng.uniform(0.1, 0.4) / np.linalg.norm(zdir)
        phi = cf.Moebius(zdir)
        res = en.verify_conf_H(u, phi, L_work, grid)
        hu = hm.synthesize(hm.apply_H(u), grid).values
        allowed = 1e-3 * max(1.0, float(np.abs(hu).max())) * cfg.tol
        worst_ratio = max(worst_ratio, res / allowed)
    return {"name": "conf_transf_H", "metric": worst_ratio, "tolerance": 1.0,
            "passed": worst_ratio <= 1.0}


def _suite_energyharmonics(cfg: RunConfig, rng) -> dict:
    n = cfg.n
    L = 8
    degree = cfg.grid_degree if cfg.grid_degree else (48 if n == 2 else 64)
    grid = sp.build_grid(n, degree)
    table = hm.h_multiplier_table(n, L)
    fault = cfg.fault or {}
    if fault.get("suite") == "energyharmonics":
        table = hm.MultiplierTable(n, table.values * float(fault.get("scale", 1.05)))
    worst = 0.0
    for _ in range(3):
        c = hm.random_coeffs(n, L, rng)
        f = hm.synthesize(c, grid)
        direct = 2.0 * en.energy_direct_extrapolated(f, f, workers=cfg.workers)
        spectral = 2.0 * en.energy_spectral(c, c, table=table)
        worst = max(worst, abs(direct - spectral) / abs(spectral))
    tol = 2e-2 * cfg.tol
    return {"name": "energyharmonics", "metric": worst, "tolerance": tol,
            "passed": worst <= tol}


def _suite_gibbs(cfg: RunConfig, rng) -> dict:
    n = cfg.n
    grid = sp.build_grid(n, 16)
    worst_gap = math.inf
    worst_eq = 0.0
    for _ in range(300):
        fv = np.abs(hm.synthesize(hm.random_coeffs(n, 6, rng), grid).values) + 0.05
        fv /= np.sum(grid.weights * fv)
        f = sp.GridFunction(grid, fv)
        gv = hm.synthesize(hm.random_coeffs(n, 6, rng), grid).values
        worst_gap = min(worst_gap, en.gibbs_gap(f, sp.GridFunction(grid, gv)))
        eq = en.gibbs_gap(f, sp.GridFunction(grid, np.log(fv) + float(rng.normal())))
        worst_eq = max(worst_eq, abs(eq))
    passed = worst_gap >= -1e-10 * cfg.tol and worst_eq <= 1e-9 * cfg.tol
    return {"name": "gibbs", "metric": worst_gap, "tolerance": -1e-10,
            "passed": passed, "details": {"max_equality_gap": worst_eq}}


def _family_coeffs(n: int, L: int, zeta: np.ndarray, c: float = 1.0) -> hm.HarmonicCoeffs:
    grid = sp.build_grid(n, L)
    return hm.analyze(grid.sample(cf.extremizer(cf.ExtremizerParams(zeta, c))), L)


def _suite_deficit(cfg: RunConfig, rng) -> dict:
    n, L = cfg.n, max(8, cfg.band_limit // 2)
    grid = en.default_entropy_grid(n, L)
    worst_rel = math.inf
    for _ in range(20):
        c = hm.random_coeffs(n, L, rng)
        rep = en.beckner_deficit(c, grid)
        worst_rel = min(worst_rel, rep.deficit / rep.energy_term)
    worst_family = 0.0
    for _ in range(5):
        zdir = rng.standard_normal(n + 1)
        zdir *= rng.uniform(0.1, 0.5) / np.linalg.norm(zdir)
        crep = en.beckner_deficit(_family_coeffs(n, L, zdir), grid)
        worst_family = max(worst_family, abs(crep.deficit) / crep.energy_term)
    passed = worst_rel >= -1e-6 * cfg.tol and worst_family <= 1e-3 * cfg.tol
    return {"name": "deficit_nonneg", "metric": worst_family, "tolerance": 1e-3,
            "passed": passed, "details": {"min_random_relative_deficit": worst_rel}}


def _suite_el_residual(cfg: RunConfig, rng) -> dict:
    n, L = cfg.n, cfg.band_limit
    L_test = min(8, L // 2)
    worst = 0.0
    for mag in (0.0, 0.2, 0.4):
        zdir = rng.standard_normal(n + 1)
        zdir *= mag / np.linalg.norm(zdir)
        res = en.el_residual(_family_coeffs(n, L, zdir), L_test)
        worst = max(worst, res.max_abs)
    tol = 1e-3 * cfg.tol
    return {"name": "el_residual_family", "metric": worst, "tolerance": tol,
            "passed": worst <= tol}


_SUITES = (
    _suite_conformal_distance,
    _suite_kernel_sign,
    _suite_conf_transf_E,
    _suite_conf_transf_H,
    _suite_energyharmonics,
    _suite_gibbs,
    _suite_deficit,
    _suite_el_residual,
)


def cmd_verify(cfg: RunConfig) -> int:
    results = []
    for k, suite in enumerate(_SUITES):
        rng = np.random.default_rng(cfg.seed + 1000 * k)
        res = suite(cfg, rng)
        results.append(res)
        print(f"{'PASS' if res['passed'] else 'FAIL'}  {res['name']:<22} "
              f"metric={res['metric']:.3e}")
    all_pass = all(r["passed"] for r in results)
    report = {
        "schema": SCHEMA_VERSION,
        "command": "verify",
        "config": _report_config(cfg),
        "suites": results,
        "all_pass": all_pass,
    }
    _write_json(report, cfg.out)
    if not all_pass:
        first = next(r["name"] for r in results if not r["passed"])
        print(f"FAIL: suite '{first}'", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# spectrum subcommand

def cmd_spectrum(cfg: RunConfig, lmax: int) -> int:
    n = cfg.n
    s_values = [0.25 * n / 2, 0.5 * n / 2, 0.75 * n / 2]
    header = ["l", "h"] + [f"p2s@s={s:g}" for s in s_values]
    rows: list[tuple] = [tuple(header)]
    degrees = list(range(lmax + 1)) + [10_000]
    for l in degrees:
        row = [l, hm.multiplier_H(n, l)] + [hm.multiplier_P2s(n, l, s) for s in s_values]
        rows.append(tuple(row))
    if cfg.out:
        _write_csv(rows, cfg.out)
    else:
        for row in rows:
            print(",".join(str(x) for x in row))
    ratio = hm.multiplier_H(n, 10_000) / (math.log(10_000.0) * hm.log_operator_scale(n))
    print(f"# sanity: h_l/ln(l) at l=10^4 is {ratio:.4f} x (2 pi^(n/2)/Gamma(n/2))")
    return 0


# ---------------------------------------------------------------------------
# minimize subcommand

def _parse_vector_spec(payload: str, n: int) -> np.ndarray:
    """Either '<mag>e<axis>' (axis is 1-based in R^{n+1}) or a comma list."""
    if "," in payload:
        vec = np.array([float(x) for x in payload.split(",")], dtype=float)
        if vec.size != n + 1:
            raise SystemExit(f"zeta needs {n + 1} components, got {vec.size}")
        return vec
    if "e" in payload:
        mag_s, axis_s = payload.split("e", 1)
        vec = np.zeros(n + 1)
        axis = int(axis_s)
        if not 1 <= axis <= n + 1:
            raise SystemExit(f"axis must be in 1..{n + 1}, got {axis}")
        vec[axis - 1] = float(mag_s)
        return vec
    vec = np.zeros(n + 1)
    vec[-1] = float(payload)
    return vec


def _parse_init(spec: str, cfg: RunConfig) -> hm.HarmonicCoeffs:
    kind, _, payload = spec.partition(":")
    n, L = cfg.n, cfg.band_limit
    if kind == "constant":
        value = float(payload) if payload else 1.0
        c = hm.HarmonicCoeffs.zeros(n, L)
        c.coeffs[0] = value * math.sqrt(sp.sphere_area(n))
        return c
    if kind == "random":
        seed = cfg.seed
        amp = 0.2
        for part in filter(None, payload.split(",")):
            key, _, val = part.partition("=")
            if key == "seed":
                seed = int(val)
            elif key == "amp":
                amp = float(val)
            else:
                raise SystemExit(f"unknown random-init option {key!r}")
        return dy.random_positive_init(n, L, np.random.default_rng(seed), amp)
    if kind == "extremizer":
        zeta, c_amp = np.zeros(n + 1), 1.0
        for part in filter(None, payload.split(";")):
            key, _, val = part.partition("=")
            if key == "zeta":
                zeta = _parse_vector_spec(val, n)
            elif key == "c":
                c_amp = float(val)
            else:
                raise SystemExit(f"unknown extremizer option {key!r}")
        return _family_coeffs(n, L, zeta, c_amp)
    if kind == "coeffs":
        with open(payload, "r", encoding="utf-8") as fh:
            return hm.HarmonicCoeffs.from_json_dict(json.load(fh))
    raise SystemExit(f"unknown init spec {spec!r}")


def cmd_minimize(cfg: RunConfig, init_spec: str, max_iter: int, step: float) -> int:
    init = _parse_init(init_spec, cfg)
    flow_cfg = dy.FlowConfig(step_size=step, max_iter=max_iter, band_limit=cfg.band_limit)
    result = dy.minimize_deficit(init, flow_cfg)
    fit = dy.fit_extremizer(result.coeffs)
    print(f"flow: {result.iterations} iterations, final deficit {result.final_deficit:.3e} "
          f"({result.message})")
    print(f"fit: residual {fit.residual:.3e}, |zeta| {np.linalg.norm(fit.params.zeta):.4f}, "
          f"c {fit.params.c:.6f}, in_family {fit.in_family}")
    report = {
        "schema": SCHEMA_VERSION,
        "command": "minimize",
        "config": _report_config(cfg),
        "init": init_spec,
        "flow": result.to_json_dict(),
        "fit": fit.to_json_dict(),
        "final_coeffs": result.coeffs.to_json_dict(),
    }
    _write_json(report, cfg.out)
    return 0


# ---------------------------------------------------------------------------
# movespheres subcommand

def _parse_point(text: str, n: int) -> np.ndarray:
    if text == "north":
        return sp.north_pole(n)
    vec = np.array([float(x) for x in text.split(",")], dtype=float)
    if vec.size != n + 1:
        raise SystemExit(f"point needs {n + 1} components, got {vec.size}")
    return sp.sphere_point(vec)


def cmd_movespheres(cfg: RunConfig, u_spec: str, xi0: str | None, e: str | None,
                    values: str, csv_path: str | None, tol: float) -> int:
    n = cfg.n
    coeffs = _parse_init(u_spec, cfg)
    if u_spec.startswith("constant:"):
        value = float(u_spec.split(":", 1)[1] or 1.0)
        u = lambda pts: np.full(np.atleast_2d(pts).shape[0], value)
    elif u_spec.startswith("extremizer:"):
        fitted = dy.fit_extremizer(coeffs)
        u = cf.extremizer(fitted.params)
    else:
        u = hm.as_evaluable(coeffs)
    rng = np.random.default_rng(cfg.seed)
    if (xi0 is None) == (e is None):
        raise SystemExit("pass exactly one of --xi0 or --e")
    if values == "auto":
        if xi0 is not None:
            report = dy.critical_lambda(u, _parse_point(xi0, n), tol=tol, rng=rng)
        else:
            report = dy.critical_alpha(u, np.array([float(x) for x in e.split(",")]),
                                       tol=tol, rng=rng)
    else:
        vals = [float(x) for x in values.split(",")]
        if xi0 is not None:
            report = dy.moving_sphere_profile(u, vals, xi0=_parse_point(xi0, n), rng=rng)
        else:
            report = dy.moving_sphere_profile(
                u, vals, e=np.array([float(x) for x in e.split(",")]), rng=rng)
    if report.critical is not None:
        bound = " (lower bound)" if report.critical_is_bound else ""
        print(f"critical {report.parameter_name} = {report.critical:.6f}{bound}, "
              f"sup|w| there = {report.sup_w_at_critical:.3e}")
    out = {
        "schema": SCHEMA_VERSION,
        "command": "movespheres",
        "config": _report_config(cfg),
        "u": u_spec,
        "report": report.to_json_dict(),
    }
    _write_json(out, cfg.out)
    if csv_path:
        _write_csv(report.csv_rows(), csv_path)
    return 0


# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int, default=None, help="sphere dimension (1 or 2)")
    p.add_argument("--band-limit", dest="band_limit", type=int, default=None)
    p.add_argument("--grid-degree", dest="grid_degree", type=int, default=None)
    p.add_argument("--tol", type=float, default=None,
                   help="global tolerance multiplier (default 1.0)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=str, default=None, help="report JSON path")
    p.add_argument("--config", type=str, default=None, help="JSON config file")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="logsphere",
        description="Verification suites and diagnostics for the logarithmic "
                    "energy on the n-sphere.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run every identity suite")
    _add_common(p_verify)

    p_spec = sub.add_parser("spectrum", help="emit multiplier table as CSV")
    _add_common(p_spec)
    p_spec.add_argument("--lmax", type=int, default=64)

    p_min = sub.add_parser("minimize", help="deficit-minimizing flow")
    _add_common(p_min)
    p_min.add_argument("--init", type=str, default="random:seed=0")
    p_min.add_argument("--max-iter", dest="max_iter", type=int, default=2000)
    p_min.add_argument("--step", type=float, default=0.05)

    p_ms = sub.add_parser("movespheres", help="moving-spheres diagnostic")
    _add_common(p_ms)
    p_ms.add_argument("--u", type=str, default="constant:1")
    p_ms.add_argument("--xi0", type=str, default=None)
    p_ms.add_argument("--e", type=str, default=None)
    p_ms.add_argument("--values", type=str, default="auto",
                      help="comma list of scales, or 'auto' for critical search")
    p_ms.add_argument("--csv", type=str, default=None, help="profile CSV path")
    p_ms.add_argument("--scan-tol", dest="scan_tol", type=float, default=1e-9)

    args = parser.parse_args(argv)
    cfg = _load_config(args)
    if args.command == "verify":
        return cmd_verify(cfg)
    if args.command == "spectrum":
        return cmd_spectrum(cfg, args.lmax)
    if args.command == "minimize":
        return cmd_minimize(cfg, args.init, args.max_iter, args.step)
    if args.command == "movespheres":
        return cmd_movespheres(cfg, args.u, args.xi0, args.e, args.values,
                               args.csv, args.scan_tol)
    raise SystemExit(f"unknown command {args.command!r}")


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
