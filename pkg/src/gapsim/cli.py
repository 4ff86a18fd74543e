"""Command-line driver: ``gapsim <experiment> [options]``.

Every experiment writes its CSV/JSON outputs plus ``manifest_<experiment>.json``
into ``--out``. For a fixed seed the CSVs are byte-identical across repeated
runs and across worker counts.
"""

from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
import time
from pathlib import Path

from . import coefficients as co
from . import gaussian as gs
from . import kernels as kn
from . import pointprocess as pp
from . import scaling as sc
from .io import write_csv, write_json
from .rng import SEED_ENV, default_seed
from .stats import Z95
from .zeros import HorizonExhaustedError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_OUTDIR = 3
EXIT_EMBEDDING = 4
EXIT_DATA = 5

EXPERIMENTS = ("rice", "scaling", "poisson", "splitting", "clustering", "report")

EPILOG = f"""\
exit codes:
  {EXIT_OK}  success
  {EXIT_FAILURE}  unexpected failure
  {EXIT_CONFIG}  configuration error (bad flag, config file or kernel spec)
  {EXIT_OUTDIR}  output directory not writable
  {EXIT_EMBEDDING}  Gaussian sampling failure (circulant embedding or factorisation)
  {EXIT_DATA}  not enough data for a requested statistic

On failure a JSON record {{"error", "exit_code", "message"}} goes to stderr
and, when possible, to <out>/error.json.

Seed: --seed, else the config file, else ${SEED_ENV}, else 0.
Config file: flat key=value lines using the long flag names (dashes or
underscores); repeatable keys take comma-separated values. Flags override
the file. A previous manifest_*.json is also accepted as --config.
"""

DEFAULTS = {
    "kernel": "gaussian",
    "workers": 1,
    "grid_factor": 0.05,
    "out": "gapsim_out",
    "rice": {"n_paths": 200, "r_max": 500.0},
    "scaling": {"n_paths": 200_000, "n_samples": 1_000_000, "r_max": 30.0, "n_r": 201},
    "poisson": {"n_runs": 500, "R": [2000.0], "n_paths": 200_000, "n_samples": 1_000_000, "r_max": 30.0, "n_r": 201},
    "splitting": {"n_paths": 100_000, "r": [3.0], "s": [3.0, 6.0, 10.0], "k": 2},
    "clustering": {"n_paths": 100_000, "r": [2.0]},
    "report": {},
}

# option name -> (type, repeatable)
OPTIONS = {
    "kernel": (str, False),
    "seed": (int, False),
    "workers": (int, False),
    "n_paths": (int, False),
    "n_runs": (int, False),
    "n_samples": (int, False),
    "n_r": (int, False),
    "R": (float, True),
    "r_max": (float, False),
    "r": (float, True),
    "s": (float, True),
    "k": (int, False),
    "grid_factor": (float, False),
    "table": (str, False),
    "out": (str, False),
}


class ConfigError(ValueError):
    pass


class OutDirError(OSError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file (or a previous manifest JSON)")
    p.add_argument("--kernel", help='kernel spec, e.g. "gaussian" or "cauchy:alpha=0.5"')
    p.add_argument("--seed", type=int, help=f"64-bit master seed (fallback ${SEED_ENV})")
    p.add_argument("--workers", type=int, help="worker processes; never changes results")
    p.add_argument("--n-paths", dest="n_paths", type=int, help="stationary paths")
    p.add_argument("--n-runs", dest="n_runs", type=int, help="independent gap runs per R (poisson)")
    p.add_argument("--n-samples", dest="n_samples", type=int, help="Kac-Rice draws for lambda(r)")
    p.add_argument("--n-r", dest="n_r", type=int, help="points on the r grid of the scaling table")
    p.add_argument("--R", dest="R", type=float, action="append", help="window length (repeatable)")
    p.add_argument("--r-max", dest="r_max", type=float, help="largest r (scaling) or path length (rice)")
    p.add_argument("--r", dest="r", type=float, action="append", help="interval length (repeatable)")
    p.add_argument("--s", dest="s", type=float, action="append", help="separation (splitting, repeatable)")
    p.add_argument("--k", dest="k", type=int, help="number of intervals (splitting)")
    p.add_argument("--grid-factor", dest="grid_factor", type=float, help="grid step times Rice intensity")
    p.add_argument("--table", help="scaling.csv to reuse instead of estimating theta (poisson)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="gapsim",
        description="Zero-gap statistics of smooth stationary Gaussian processes.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="experiment", metavar="experiment")
    helps = {
        "rice": "zeros per unit length against the Rice intensity",
        "scaling": "G(r), lambda(r), theta(r) table and asymptotic fit",
        "poisson": "largest-gap runs, Gumbel/uniform KS tests and factorial moments",
        "splitting": "splitting ratios over a scan of separations",
        "clustering": "joint gap probabilities over the probe family",
        "report": "summarise the JSON outputs found in --out",
    }
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=helps[name], epilog=EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_common(p)
    return parser


def _read_config_file(path: str) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    if p.suffix == ".json":
        try:
            cfg = json.loads(text).get("config", {})
        except (json.JSONDecodeError, AttributeError) as e:
            raise ConfigError(f"{path}: not a manifest: {e}") from None
        return {k: v for k, v in cfg.items() if k in OPTIONS and v is not None}
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, val = (t.strip() for t in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        typ, rep = OPTIONS[key]
        try:
            out[key] = [typ(v) for v in val.split(",")] if rep else typ(val)
        except ValueError:
            raise ConfigError(f"{path}:{n}: bad value {val!r} for {key}") from None
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over defaults, and validate."""
    exp = args.experiment
    file_cfg = _read_config_file(args.config) if args.config else {}
    cfg = {}
    for key in OPTIONS:
        val = getattr(args, key, None)
        if val is None:
            val = file_cfg.get(key)
        if val is None:
            val = DEFAULTS[exp].get(key, DEFAULTS.get(key))
        cfg[key] = val
    if cfg["seed"] is None:
        try:
            cfg["seed"] = default_seed()
        except ValueError:
            raise ConfigError(f"${SEED_ENV} is not an integer") from None
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be a 64-bit nonnegative integer")
    for key, val in cfg.items():
        vals = val if isinstance(val, list) else [val]
        if OPTIONS[key][0] in (int, float) and any(v is not None and not v > 0 for v in vals):
            if key != "seed":
                raise ConfigError(f"{key} must be positive, got {val}")
    try:
        kernel = kn.parse_kernel(cfg["kernel"])
    except kn.KernelSpecError as e:
        raise ConfigError(f"invalid kernel spec {cfg['kernel']!r}: {e}") from None
    cfg["kernel"] = kernel.spec()
    cfg["experiment"] = exp
    return cfg


def _prepare_out(out: str) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".gapsim_write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise OutDirError(f"output directory {out} is not writable: {e}") from None
    return path


def _git_describe() -> str:
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10,
        )
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _n_tasks(total: int, chunk: int) -> int:
    return max(1, math.ceil(total / chunk))


def _est(e) -> dict:
    return {"value": e.value, "lo": e.lo, "hi": e.hi, "n": e.n, "method": e.method}


def _zeta_closed(kernel):
    try:
        return kn.zeta_predicted(kernel)
    except kn.UnsupportedError:
        return None


def _scaling_table(kernel, cfg, out: Path, seeds: dict):
    g = sc.estimate_G_curve(kernel, cfg["r_max"], cfg["n_paths"], cfg["seed"],
                            n_r=cfg["n_r"], grid_factor=cfg["grid_factor"], workers=cfg["workers"])
    lam = sc.estimate_lambda_curve(kernel, cfg["r_max"], cfg["n_samples"], cfg["seed"],
                                   n_r=cfg["n_r"], grid_factor=cfg["grid_factor"], workers=cfg["workers"])
    seeds["G"] = {"stream": sc.STREAM_G, "n_tasks": _n_tasks(cfg["n_paths"], 20_000)}
    seeds["lambda"] = {"stream": sc.STREAM_LAMBDA, "n_tasks": _n_tasks(cfg["n_samples"], 50_000)}
    table = sc.build_table(g, lam)
    sc.write_scaling_csv(table, out / "scaling.csv")
    return table


def run_rice(kernel, cfg, out, seeds):
    est, counts = sc.estimate_zero_intensity(kernel, cfg["r_max"], cfg["n_paths"], cfg["seed"],
                                             grid_factor=cfg["grid_factor"], workers=cfg["workers"])
    seeds["rice"] = {"stream": sc.STREAM_RICE, "n_tasks": _n_tasks(cfg["n_paths"], 64)}
    write_csv(out / "rice.csv", ["kernel", "path_id", "length", "n_zeros"],
              ((cfg["kernel"], i, cfg["r_max"], int(c)) for i, c in enumerate(counts)))
    rice = kn.rice_intensity(kernel)
    summary = {"kernel": cfg["kernel"], "intensity": _est(est), "rice_intensity": rice,
               "rel_error": est.value / rice - 1.0, "path_units": cfg["n_paths"] * cfg["r_max"]}
    write_json(out / "rice_summary.json", summary)
    return summary


def run_scaling(kernel, cfg, out, seeds):
    table = _scaling_table(kernel, cfg, out, seeds)
    summary = {"kernel": cfg["kernel"], "r_range": table.r_range, "theta_range": table.theta_range,
               "flags": table.flags, "zeta_predicted": _zeta_closed(kernel)}
    try:
        zeta, diag = sc.fit_theta_asymptotics(table, kernel)
        summary.update(zeta_hat=zeta, fit=diag)
    except sc.InsufficientDataError as e:
        summary.update(zeta_hat=None, fit={"error": str(e)})
    write_json(out / "scaling_fit.json", summary)
    return summary


def run_poisson(kernel, cfg, out, seeds):
    if cfg["table"]:
        try:
            table = sc.read_scaling_csv(cfg["table"])
        except (OSError, KeyError, ValueError) as e:
            raise ConfigError(f"cannot load scaling table {cfg['table']}: {e}") from None
    else:
        table = _scaling_table(kernel, cfg, out, seeds)
    rows, summaries, by_R = [], [], {}
    run_id = 0
    for j, R in enumerate(cfg["R"]):
        runs = pp.simulate_runs(kernel, R, cfg["n_runs"], cfg["seed"] + j, table=table,
                                grid_factor=cfg["grid_factor"], workers=cfg["workers"])
        seeds[f"runs_R={R:g}"] = {"seed": cfg["seed"] + j, "stream": pp.STREAM_RUNS,
                                  "n_tasks": (cfg["n_runs"] + 1) // 2}
        ext = [r.extreme() for r in runs]
        by_R[R] = ext
        for e in ext:
            rows.append((run_id, R, e.L, e.Z, e.n_zeros, e.seed))
            run_id += 1
        s = {"kernel": cfg["kernel"], "R": R, "n_runs": len(ext)}
        try:
            t = pp.gumbel_uniform_tests(ext, table)
            s.update(ks_gumbel=t["ks_gumbel"], ks_uniform=t["ks_uniform"],
                     p_values={"gumbel": t["p_gumbel"], "uniform": t["p_uniform"]},
                     corr_u_x=t["corr_u_x"], n_sentinel=t["n_sentinel"], n_excluded=t["n_excluded"])
        except (sc.InsufficientDataError, sc.RangeError) as e:
            s.update(ks_gumbel=None, ks_uniform=None, p_values=None, ks_error=str(e))
        m_hat = {}
        try:
            atoms = [pp.build_psi(r.zeroset, R, table) for r in runs]
            for k in (1, 2):
                for a in (0.0, 1.0):
                    est, target = pp.factorial_moment_test(atoms, k, (0.0, 1.0), (a, math.inf))
                    m_hat[f"k={k},a={a:g}"] = {**_est(est), "target": target}
        except (sc.InsufficientDataError, sc.RangeError, HorizonExhaustedError) as e:
            m_hat = {"error": str(e)}
        s["m_hat"] = m_hat
        summaries.append(s)
    write_csv(out / "runs.csv", ["run_id", "R", "L_R", "Z_R", "n_zeros", "seed"], rows)
    result = {"kernel": cfg["kernel"], "by_R": summaries}
    if len(by_R) >= 2 and all(len(v) >= 100 for v in by_R.values()):
        zeta_hat = None
        if _zeta_closed(kernel) is None:
            zeta_hat = sc.fit_theta_asymptotics(table, kernel)[0]
        result["scaling_law"] = pp.scaling_law_check(by_R, kernel, zeta_hat)
    write_json(out / "poisson_summary.json", result)
    return result


def run_splitting(kernel, cfg, out, seeds):
    scans = []
    for j, r in enumerate(cfg["r"]):
        scan = co.splitting_decay_scan(kernel, r, cfg["s"], cfg["k"], cfg["n_paths"], cfg["seed"] + j,
                                       grid_factor=cfg["grid_factor"], workers=cfg["workers"])
        seeds[f"splitting_r={r:g}"] = {"seed": cfg["seed"] + j, "stream": co.STREAM_SPLIT,
                                       "n_tasks": _n_tasks(cfg["n_paths"], co.CHUNK), "sub": "index of s"}
        scans.append(scan)
    write_csv(out / "splitting.csv", ["kernel", "k", "r", "s", "ratio", "ratio_lo", "ratio_hi", "Kbar_s"],
              [(cfg["kernel"], scan["k"], scan["r"], row["s"], row["ratio"].value, row["ratio"].lo,
                row["ratio"].hi, row["Kbar_s"]) for scan in scans for row in scan["rows"]])
    summary = {"kernel": cfg["kernel"], "scans": [
        {k: v for k, v in scan.items() if k != "rows"} | {"deviation": [_est(r["deviation"]) for r in scan["rows"]]}
        for scan in scans]}
    write_json(out / "splitting_summary.json", summary)
    return summary


def run_clustering(kernel, cfg, out, seeds):
    results = []
    for j, r in enumerate(cfg["r"]):
        results.append(co.clustering_estimate(kernel, r, cfg["n_paths"], cfg["seed"] + j,
                                              grid_factor=cfg["grid_factor"], workers=cfg["workers"]))
        seeds[f"clustering_r={r:g}"] = {"seed": cfg["seed"] + j, "stream": co.STREAM_CLUSTER,
                                        "n_tasks": _n_tasks(cfg["n_paths"], co.CHUNK)}
    co.write_clustering_csv(out / "clustering.csv", results)
    summary = {"kernel": cfg["kernel"], "results": [
        {"r": res["r"], "phi": _est(res["phi"]), "phi_probe": res["phi_probe"], "G_r": _est(res["G_r"]),
         "G_2r": _est(res["G_2r"]), "kappa": dict(zip(("value", "lo", "hi"), res["kappa"])),
         "phi_is_lower_bound": True}
        for res in results]}
    write_json(out / "clustering_summary.json", summary)
    return summary


def run_report(kernel, cfg, out, seeds):
    found = {}
    for p in sorted(out.glob("*_summary.json")) + sorted(out.glob("scaling_fit.json")):
        found[p.name] = json.loads(p.read_text())
    if not found:
        raise sc.InsufficientDataError(f"no summaries found in {out}")
    lines = []
    for name, s in found.items():
        lines.append(f"== {name}")
        lines.append(json.dumps(s, sort_keys=True, indent=1))
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return {"files": sorted(found)}


RUNNERS = {
    "rice": run_rice,
    "scaling": run_scaling,
    "poisson": run_poisson,
    "splitting": run_splitting,
    "clustering": run_clustering,
    "report": run_report,
}


def _rewrite_run(argv: list[str]) -> list[str]:
    """Accept ``run --experiment NAME ...`` as a synonym for ``NAME ...``."""
    if not argv or argv[0] != "run":
        return argv
    rest = argv[1:]
    for i, a in enumerate(rest):
        if a == "--experiment" and i + 1 < len(rest):
            return [rest[i + 1]] + rest[:i] + rest[i + 2 :]
        if a.startswith("--experiment="):
            return [a.split("=", 1)[1]] + rest[:i] + rest[i + 1 :]
    raise ConfigError("run needs --experiment")


def _fail(code: int, kind: str, msg: str, out_dir=None) -> int:
    rec = {"error": kind, "exit_code": code, "message": msg}
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    if out_dir is not None and code != EXIT_OUTDIR:
        try:
            write_json(Path(out_dir) / "error.json", rec)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out_dir = None
    try:
        args = build_parser().parse_args(_rewrite_run(argv))
        if args.experiment is None:
            raise ConfigError(f"choose an experiment: {', '.join(EXPERIMENTS)}")
        cfg = resolve_config(args)
        out = _prepare_out(cfg["out"])
        out_dir = out
        kernel = kn.parse_kernel(cfg["kernel"])
        seeds = {"master": cfg["seed"],
                 "scheme": "Philox(SeedSequence(entropy=seed, spawn_key=(task, stream, ...)))"}
        t0 = time.perf_counter()
        RUNNERS[cfg["experiment"]](kernel, cfg, out, seeds)
        wall = time.perf_counter() - t0
        write_json(out / f"manifest_{cfg['experiment']}.json",
                   {"config": cfg, "git_describe": _git_describe(), "wall_time_s": wall, "task_seeds": seeds,
                    "ci_level": 0.95, "z": Z95})
        return EXIT_OK
    except ConfigError as e:
        return _fail(EXIT_CONFIG, "config", str(e), out_dir)
    except OutDirError as e:
        return _fail(EXIT_OUTDIR, "out_dir", str(e))
    except (gs.EmbeddingError, gs.SPDError, gs.ConditioningError) as e:
        return _fail(EXIT_EMBEDDING, "embedding", str(e), out_dir)
    except (sc.InsufficientDataError, sc.RangeError, co.UndefinedRatioError) as e:
        return _fail(EXIT_DATA, "data", str(e), out_dir)
    except kn.UnsupportedError as e:
        return _fail(EXIT_CONFIG, "config", str(e), out_dir)


if __name__ == "__main__":
    sys.exit(main())
