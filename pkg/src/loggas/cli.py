"""Command-line front end.

Subcommands: eqm, gamma, sample, crowd, tube, construct, ldp, oracle.
Configuration comes from a TOML file with flat sections per module; CLI flags
override file values.  Every run writes its outputs plus a manifest.json
(resolved config, versions, seed, wall time) into the output directory, and
rerunning the same manifest reproduces bit-identical CSV outputs.

Exit codes: 0 success, 1 validation/config error, 2 solver or sampler error.
Errors are printed as single-line JSON on stderr.
"""

import argparse
import json
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import __version__
from .energy import rate_i_beta
from .errors import LogGasError
from .geometry import minkowski_content, region_from_config
from .measures import Grid, Potential, measure_of_region, measure_to_csv
from .construction import SquareDensity, cell_mass, construct_points, verify_separation
from .equilibrium import (
    gamma_profile,
    obstacle_identity_check,
    solve_equilibrium,
    verify_euler_lagrange,
)
from .harness import (
    LdpExperiment,
    partition_asymptote_report,
    report_to_csv,
    report_to_json,
    run_ldp_experiment,
)
from .oracles import run_all as run_oracles, two_point_crowding_probs
from .sampler import crowding_distribution, mh_sample, samples_to_csv, tridiagonal_stream

_ALLOWED_KEYS = {
    None: {"field", "beta", "seed", "threads", "out"},
    "potential": {"kind", "coefficients"},
    "grid": {"domain", "resolution"},
    "region": {"shape", "intervals", "center", "radius", "vertices", "dimension"},
    "solver": {"max_iter", "gap_tol", "stall_gap", "backend"},
    "sampler": {"kind", "n", "sweeps", "burn_in", "step_scale", "chains", "thinning", "adapt"},
    "gamma": {"xs", "mode"},
    "tube": {"radii", "resolution", "delta0", "eps"},
    "construct": {"density", "n", "corner", "side", "C", "tilt"},
    "ldp": {"ns", "target", "xs"},
    "energy": {"c_beta"},
}


def _fail(code, message):
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return 1 if code in LogGasError.VALIDATION_CODES or code == "config" else 2


def load_config(path):
    p = Path(path)
    if not p.exists():
        raise LogGasError("config", f"config file {path} not found")
    if p.suffix == ".json":
        cfg = json.loads(p.read_text()).get("config", {})
    else:
        with open(p, "rb") as fh:
            cfg = tomllib.load(fh)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    for key, val in cfg.items():
        if isinstance(val, dict):
            allowed = _ALLOWED_KEYS.get(key)
            if allowed is None:
                raise LogGasError("config", f"unknown config section [{key}]")
            unknown = set(val) - allowed
            if unknown:
                raise LogGasError(
                    "config", f"unknown keys in [{key}]: {sorted(unknown)}"
                )
        elif key not in _ALLOWED_KEYS[None]:
            raise LogGasError("config", f"unknown top-level key {key!r}")


def _grid_from_config(cfg):
    g = cfg.get("grid")
    if g is None:
        raise LogGasError("config", "missing [grid] section")
    dom = g["domain"]
    if isinstance(dom[0], (list, tuple)):
        lo = [d[0] for d in dom]
        hi = [d[1] for d in dom]
    else:
        lo, hi = [dom[0]], [dom[1]]
    return Grid(lo, hi, g["resolution"])


def _potential_from_config(cfg):
    p = cfg.get("potential")
    if p is None:
        raise LogGasError("config", "missing [potential] section")
    return Potential(p["kind"], p["coefficients"])


def _parse_xs(spec):
    if isinstance(spec, str):
        try:
            start, stop, count = spec.split(":")
            return list(np.linspace(float(start), float(stop), int(count)))
        except ValueError:
            raise LogGasError("config", f"bad xs spec {spec!r}, want start:stop:count")
    return [float(x) for x in spec]


def _write_manifest(outdir, command, cfg, seed, t0, outputs):
    manifest = {
        "command": command,
        "config": cfg,
        "seed": seed,
        "versions": {
            "loggas": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "wall_time_s": time.time() - t0,
        "outputs": outputs,
    }
    with open(Path(outdir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=float)


def cmd_eqm(cfg, outdir):
    grid = _grid_from_config(cfg)
    V = _potential_from_config(cfg)
    beta = float(cfg.get("beta", 2.0))
    s = cfg.get("solver", {})
    sol = solve_equilibrium(
        V,
        beta,
        grid,
        max_iter=int(s.get("max_iter", 50_000)),
        gap_tol=float(s.get("gap_tol", 1e-8)),
        backend=s.get("backend", "auto"),
    )
    measure_to_csv(sol.measure, Path(outdir) / "measure.csv")
    el = verify_euler_lagrange(sol, V, beta, tol=1e-3)
    report = {
        "c_beta": sol.c_beta,
        "el_constant": sol.el_constant,
        "el_residual": sol.el_residual,
        "iterations": sol.iterations,
        "gap": sol.gap,
        "el_check": {
            "constant": el.constant,
            "on_support_deviation": el.on_support_deviation,
            "off_support_violation": el.off_support_violation,
            "passed": el.passed,
        },
        "partition_asymptote": json.loads(partition_asymptote_report(sol).to_json()),
    }
    if grid.dimension == 2 and V.kind != "tabulated":
        ob = obstacle_identity_check(sol, V, beta, tol=0.05)
        report["obstacle_check"] = {
            "max_relative_error": ob.max_relative_error,
            "density_bound": ob.density_bound,
            "passed": ob.passed,
        }
    with open(Path(outdir) / "equilibrium.json", "w") as fh:
        json.dump(report, fh, indent=2)
    rep = rate_i_beta(sol.measure, V, beta, c_beta=sol.c_beta)
    with open(Path(outdir) / "energy.json", "w") as fh:
        fh.write(rep.to_json())
    return ["measure.csv", "equilibrium.json", "energy.json"]


def cmd_gamma(cfg, outdir, xs_override=None):
    grid = _grid_from_config(cfg)
    V = _potential_from_config(cfg)
    beta = float(cfg.get("beta", 2.0))
    region = region_from_config(cfg.get("region", {}), grid.dimension)
    gcfg = cfg.get("gamma", {})
    xs = _parse_xs(xs_override if xs_override is not None else gcfg.get("xs", "0:1:11"))
    profile = gamma_profile(
        V,
        beta,
        grid,
        region,
        sorted(xs),
        mode=gcfg.get("mode", "serial-warm"),
        threads=int(cfg.get("threads", 1)),
    )
    profile.to_csv(Path(outdir) / "gamma.csv")
    return ["gamma.csv"]


def cmd_sample(cfg, outdir, threads):
    s = cfg.get("sampler", {})
    field_tag = cfg.get("field", "real")
    beta = float(cfg.get("beta", 2.0))
    kind = s.get("kind", "mh")
    n = int(s.get("n", 8))
    sweeps = int(s.get("sweeps", 1000))
    burn = int(s.get("burn_in", 100))
    chains = int(s.get("chains", 1))
    seed = int(cfg.get("seed", 0))
    if kind == "tridiagonal":
        stream = tridiagonal_stream(n, beta, sweeps - burn, seed, chains)
    else:
        V = _potential_from_config(cfg)
        stream = mh_sample(
            field_tag,
            n,
            beta,
            V,
            sweeps,
            burn,
            step_scale=float(s.get("step_scale", 1.0)),
            seed=seed,
            chains=chains,
            threads=threads,
            adapt=bool(s.get("adapt", False)),
        )
    samples_to_csv(stream, Path(outdir) / "samples.csv")
    return ["samples.csv"]


def cmd_crowd(cfg, outdir, threads):
    s = cfg.get("sampler", {})
    field_tag = cfg.get("field", "real")
    beta = float(cfg.get("beta", 2.0))
    n = int(s.get("n", 8))
    sweeps = int(s.get("sweeps", 1000))
    burn = int(s.get("burn_in", 100))
    chains = int(s.get("chains", 1))
    seed = int(cfg.get("seed", 0))
    region = region_from_config(cfg.get("region", {}), 1 if field_tag == "real" else 2)
    if s.get("kind", "mh") == "tridiagonal":
        stream = tridiagonal_stream(n, beta, sweeps - burn, seed, chains)
    else:
        V = _potential_from_config(cfg)
        stream = mh_sample(
            field_tag, n, beta, V, sweeps, burn,
            step_scale=float(s.get("step_scale", 1.0)),
            seed=seed, chains=chains, threads=threads,
        )
    stats = crowding_distribution(stream, region, thinning=int(s.get("thinning", 1)))
    stats.to_csv(Path(outdir) / "crowding.csv")
    return ["crowding.csv"]


def cmd_tube(cfg, outdir):
    region = region_from_config(cfg.get("region", {}), 2)
    t = cfg.get("tube", {})
    radii = [float(r) for r in t.get("radii", [0.1, 0.05, 0.025])]
    report = minkowski_content(
        region, radii, resolution=int(t.get("resolution", 1024))
    )
    report.to_csv(Path(outdir) / "tube.csv")
    with open(Path(outdir) / "tube.json", "w") as fh:
        json.dump(
            {
                "h1_estimate": report.h1_estimate,
                "c_constant": report.c_constant,
                "h1_boundary": region.h1_boundary,
            },
            fh,
            indent=2,
        )
    return ["tube.csv", "tube.json"]


def cmd_construct(cfg, outdir):
    c = cfg.get("construct", {})
    corner = c.get("corner", [0.0, 0.0])
    side = float(c.get("side", 1.0))
    name = c.get("density", "uniform")
    if name == "uniform":
        nu = SquareDensity(corner, side, lambda X, Y: np.ones_like(X), C=1.0)
    elif name == "tilted-x":
        tilt = float(c.get("tilt", 1.0))
        x0 = corner[0]
        norm = side**2 * (1.0 + tilt * (x0 + side / 2.0))

        def dens(X, Y):
            return (1.0 + tilt * X) / norm

        cbound = max((1.0 + tilt * (x0 + side)) / norm, norm / (1.0 + tilt * x0))
        nu = SquareDensity(corner, side, dens, C=cbound + 1e-9)
    else:
        raise LogGasError("config", f"unknown construct density {name!r}")
    n = int(c.get("n", 16))
    pts = construct_points(nu, n)
    pts.to_csv(Path(outdir) / "points.csv")
    pts.cells_to_json(Path(outdir) / "cells.json")
    ok, dmin = verify_separation(pts, nu.C, n)
    masses = [cell_mass(nu, cell) for cell in pts.cells]
    with open(Path(outdir) / "construct.json", "w") as fh:
        json.dump(
            {
                "n": n,
                "case": pts.case_tag,
                "separation_ok": bool(ok),
                "min_distance": dmin,
                "max_cell_mass_error": float(
                    max(abs(m - 1.0 / n) for m in masses)
                ),
            },
            fh,
            indent=2,
        )
    return ["points.csv", "cells.json", "construct.json"]


def cmd_ldp(cfg, outdir, threads):
    grid = _grid_from_config(cfg)
    V = _potential_from_config(cfg)
    beta = float(cfg.get("beta", 2.0))
    field_tag = cfg.get("field", "real")
    region = region_from_config(cfg.get("region", {}), grid.dimension)
    l = cfg.get("ldp", {})
    s = cfg.get("sampler", {})
    xs = _parse_xs(l.get("xs", "0:1:11"))
    profile = gamma_profile(V, beta, grid, region, sorted(xs))
    target = [[float(a), float(b)] for a, b in l.get("target", [[0.8, 1.0]])]
    oracle = None
    if field_tag == "real" and 2 in l.get("ns", []):
        if V.kind == "quadratic":
            ivals = getattr(region, "intervals", None)
            if ivals is not None:
                oracle = two_point_crowding_probs(
                    list(ivals), beta=beta, v_coeff=V.coefficients[0]
                )
    cfg_exp = LdpExperiment(
        field_tag=field_tag,
        potential=V,
        beta=beta,
        region=region,
        target=target,
        ns=[int(n) for n in l.get("ns", [4, 8, 16])],
        sampler=s.get("kind", "mh"),
        sweeps=int(s.get("sweeps", 20_000)),
        burn_in=int(s.get("burn_in", 1_000)),
        step_scale=float(s.get("step_scale", 1.0)),
        chains=int(s.get("chains", 1)),
        thinning=int(s.get("thinning", 1)),
        seed=int(cfg.get("seed", 0)),
        threads=threads,
        gamma_profile=profile,
        oracle_probs=oracle,
    )
    report = run_ldp_experiment(cfg_exp)
    report_to_json(report, Path(outdir) / "ldp.json")
    report_to_csv(report, Path(outdir) / "ldp.csv")
    profile.to_csv(Path(outdir) / "gamma.csv")
    return ["ldp.json", "ldp.csv", "gamma.csv"]


def cmd_oracle(cfg, outdir):
    run_oracles(Path(outdir) / "oracle_cache.json")
    return ["oracle_cache.json"]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="loggas",
        description="equilibrium measures and crowding statistics of log-gases",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("eqm", "solve the unconstrained equilibrium and verify it"),
        ("gamma", "sweep the crowding-constrained minimum over mass levels"),
        ("sample", "draw ensemble samples (Metropolis or tridiagonal)"),
        ("crowd", "histogram of region occupation counts"),
        ("tube", "tube areas and boundary-length estimates"),
        ("construct", "deterministic equal-mass point configurations"),
        ("ldp", "decay-exponent experiment against the rate function"),
        ("oracle", "run the brute-force oracles and cache their outputs"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML config (or manifest.json)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--beta", type=float, default=None)
        if name == "gamma":
            p.add_argument("--xs", default=None, help="start:stop:count")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.time()
    try:
        cfg = load_config(args.config) if args.config else {}
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.beta is not None:
            cfg["beta"] = args.beta
        outdir = Path(args.out if args.out != "." else cfg.get("out", "."))
        outdir.mkdir(parents=True, exist_ok=True)
        threads = int(args.threads or cfg.get("threads", 1))
        cfg["threads"] = threads
        if args.command == "eqm":
            outputs = cmd_eqm(cfg, outdir)
        elif args.command == "gamma":
            outputs = cmd_gamma(cfg, outdir, xs_override=args.xs)
        elif args.command == "sample":
            outputs = cmd_sample(cfg, outdir, threads)
        elif args.command == "crowd":
            outputs = cmd_crowd(cfg, outdir, threads)
        elif args.command == "tube":
            outputs = cmd_tube(cfg, outdir)
        elif args.command == "construct":
            outputs = cmd_construct(cfg, outdir)
        elif args.command == "ldp":
            outputs = cmd_ldp(cfg, outdir, threads)
        elif args.command == "oracle":
            outputs = cmd_oracle(cfg, outdir)
        else:  # pragma: no cover - argparse enforces the choices
            return _fail("config", f"unknown command {args.command}")
        _write_manifest(outdir, args.command, cfg, cfg.get("seed", 0), t0, outputs)
        return 0
    except LogGasError as err:
        sys.stderr.write(
            json.dumps({"error": err.code, "message": err.message}) + "\n"
        )
        return 1 if err.is_validation else 2


if __name__ == "__main__":
    sys.exit(main())
