"""Command-line front end.

Usage::

    kgadiabatic <subcommand> [--config PATH] [--seed U64] [--out DIR] [--threads K]

Subcommands: ``build-invariant``, ``estimate``, ``autocorr``, ``decay``,
``oracle`` and ``verify``.  The configuration is a JSON file; keys that are
not given fall back to the shipped default (``kgadiabatic/data/default_config.json``).
Command-line flags win over the environment variables ``KGADIABATIC_OUT`` and
``KGADIABATIC_THREADS``, which in turn win over the file.  Nothing else is
read from the environment.

Exit status: 0 success, 2 configuration error, 3 numerical guard tripped
(divergence cap, energy drift, grid convergence, too few batches, failed
oracle cross-check), 4 acceptance failure (``verify`` only).
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import datetime as _dt
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import acceptance as acc
from . import decay as dec
from . import dynamics as dyn
from . import estimators as est
from .gibbs import (
    GridConvergenceError,
    MarginalQuery,
    SamplerConfig,
    TransferKernel,
    marginal_bound_check,
    mcmc_samples,
    partition_ratio_scan,
    quadrature_expectation,
    transfer_moments,
    z_single_site,
)
from .model import ModelParams
from .normal_form import MAX_ORDER, MAX_SITES, DivergenceGuard, build_invariant, build_state, xdot_crosscheck
from .poly import CompiledPolynomial, KernelTermsError, to_json_obj

SCHEMA_VERSION = "kgadiabatic/1"
CONFIG_SCHEMA = "kgadiabatic-config/1"
SUBCOMMANDS = ("build-invariant", "estimate", "autocorr", "decay", "oracle", "verify")

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_ACCEPTANCE = 0, 2, 3, 4
GUARD_ERRORS = (DivergenceGuard, dyn.EnergyDriftError, GridConvergenceError,
                est.TooFewBatches, KernelTermsError, ArithmeticError)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class OracleMismatch(RuntimeError):
    pass


# -- configuration -------------------------------------------------------------

def default_config() -> dict:
    text = resources.files("kgadiabatic").joinpath("data/default_config.json").read_text()
    return json.loads(text)


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(base[k], dict) and not isinstance(v, dict):
            raise ConfigError(f"{where}: expected an object")
        out[k] = _merge(base[k], v, where + ".") if isinstance(base[k], dict) else v
    return out


def _number(cfg, path, *, integer=False, lo=None, lo_open=False, hi=None, allow_none=False):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if node is None and allow_none:
        return None
    ok_type = isinstance(node, int) if integer else isinstance(node, (int, float))
    if isinstance(node, bool) or not ok_type or not math.isfinite(node):
        kind = "an integer" if integer else "a finite number"
        raise ConfigError(f"{path}: must be {kind}, got {node!r}")
    if lo is not None and (node <= lo if lo_open else node < lo):
        raise ConfigError(f"{path}: must be {'>' if lo_open else '>='} {lo}, got {node!r}")
    if hi is not None and node > hi:
        raise ConfigError(f"{path}: must be <= {hi}, got {node!r}")
    return node


def validate_config(cfg: dict) -> dict:
    """Check every field before any computation; returns the config unchanged."""
    if cfg.get("schema") != CONFIG_SCHEMA:
        raise ConfigError(f"schema: expected {CONFIG_SCHEMA!r}, got {cfg.get('schema')!r}")
    _number(cfg, "seed", integer=True, lo=0, hi=2 ** 64 - 1)
    if not isinstance(cfg["out"], str) or not cfg["out"]:
        raise ConfigError("out: must be a non-empty string")
    _number(cfg, "threads", integer=True, lo=1, allow_none=True)
    _number(cfg, "params.N", integer=True, lo=2, hi=MAX_SITES)
    _number(cfg, "params.eps", lo=0)
    _number(cfg, "params.beta", lo=0, lo_open=True)
    _number(cfg, "n", integer=True, lo=1, hi=MAX_ORDER)
    nr = cfg["n_range"]
    if (not isinstance(nr, list) or len(nr) != 2 or not all(isinstance(v, int) for v in nr)
            or not 1 <= nr[0] <= nr[1] <= MAX_ORDER):
        raise ConfigError(f"n_range: must be [lo, hi] with 1 <= lo <= hi <= {MAX_ORDER}, got {nr!r}")
    _number(cfg, "term_cap", integer=True, lo=1)
    for k in ("n_chains", "kept", "thin"):
        _number(cfg, f"sampler.{k}", integer=True, lo=1)
    _number(cfg, "sampler.burn_in", integer=True, lo=0)
    _number(cfg, "sampler.proposal_sigma", lo=0, lo_open=True, allow_none=True)
    if cfg["sampler"]["n_chains"] * cfg["sampler"]["kept"] < est.MIN_BATCHES:
        raise ConfigError(f"sampler: n_chains * kept must be >= {est.MIN_BATCHES}")
    omega = math.sqrt(1 + 2 * cfg["params"]["eps"])
    _number(cfg, "integrator.dt", lo=0, lo_open=True, hi=0.1 / omega, allow_none=True)
    _number(cfg, "integrator.t_max", lo=0, lo_open=True, allow_none=True)
    _number(cfg, "integrator.ensemble", integer=True, lo=est.MIN_BATCHES)
    _number(cfg, "integrator.n_times", integer=True, lo=2)
    if cfg["integrator"]["scheme"] not in ("verlet", "verlet4"):
        raise ConfigError("integrator.scheme: must be 'verlet' or 'verlet4'")
    ns = cfg["estimate"]["scaling_Ns"]
    if not isinstance(ns, list) or not all(isinstance(v, int) and 2 <= v <= MAX_SITES for v in ns):
        raise ConfigError("estimate.scaling_Ns: must be a list of integers in [2, 256]")
    n_ac = cfg["autocorr"]["n"]
    if n_ac != "auto" and not (isinstance(n_ac, int) and 1 <= n_ac <= MAX_ORDER):
        raise ConfigError(f"autocorr.n: must be 'auto' or an integer in [1, {MAX_ORDER}]")
    _number(cfg, "autocorr.level", lo=0, lo_open=True, hi=0.999999)
    _number(cfg, "decay.N", integer=True, lo=2, hi=12)
    _number(cfg, "decay.beta", lo=0, lo_open=True)
    _number(cfg, "decay.eps", lo=0)
    _number(cfg, "decay.M", integer=True, lo=200)
    if cfg["decay"]["observable"] not in ("q2", "q4"):
        raise ConfigError("decay.observable: must be 'q2' or 'q4'")
    grid = cfg["decay"]["eps_grid"]
    if not isinstance(grid, list) or not all(isinstance(v, (int, float)) and v >= 0 for v in grid):
        raise ConfigError("decay.eps_grid: must be a list of non-negative numbers")
    if not isinstance(cfg["decay"]["mcmc"], bool):
        raise ConfigError("decay.mcmc: must be true or false")
    _number(cfg, "oracle.beta", lo=0, lo_open=True)
    _number(cfg, "oracle.eps", lo=0)
    if cfg["verify"]["scale"] not in acc.PROFILES:
        raise ConfigError(f"verify.scale: must be one of {sorted(acc.PROFILES)}")
    crit = cfg["verify"]["criteria"]
    if not isinstance(crit, list) or not crit or not all(c in acc.CHECKS for c in crit):
        raise ConfigError(f"verify.criteria: must be a non-empty list drawn from {sorted(acc.CHECKS)}")
    return cfg


def load_config(path: str | None, args=None, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    cfg = default_config()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(user, dict):
            raise ConfigError("config: top level must be a JSON object")
        cfg = _merge(cfg, user)
    if environ.get("KGADIABATIC_OUT"):
        cfg["out"] = environ["KGADIABATIC_OUT"]
    if environ.get("KGADIABATIC_THREADS"):
        try:
            cfg["threads"] = int(environ["KGADIABATIC_THREADS"])
        except ValueError:
            raise ConfigError("KGADIABATIC_THREADS: must be an integer") from None
    if args is not None:
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        if args.threads is not None:
            cfg["threads"] = args.threads
    return validate_config(cfg)


def model_params(cfg: dict, section: str = "params") -> ModelParams:
    s = cfg[section]
    return ModelParams(s["N"], float(s["eps"]), float(s["beta"]))


def sampler_config(cfg: dict, seed: int) -> SamplerConfig:
    s = cfg["sampler"]
    return SamplerConfig(sweeps=s["burn_in"] + s["kept"] * s["thin"], burn_in=s["burn_in"],
                         proposal_sigma=s["proposal_sigma"], n_chains=s["n_chains"],
                         thin=s["thin"], seed=seed)


# -- artifacts -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_json(path: Path, obj: dict):
    body = {"schema_version": SCHEMA_VERSION}
    body.update(acc._plain(obj))
    path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")


def write_csv(path: Path, meta: dict, header, rows):
    """CSV with ``# key: value`` metadata rows above the column header."""
    lines = [f"# schema_version: {SCHEMA_VERSION}"]
    lines += [f"# {k}: {json.dumps(acc._plain(v), sort_keys=True)}" for k, v in meta.items()]
    lines.append(",".join(header))
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


class RunManifest:
    """Config echo, version, seeds, wall-clock and per-task status of one run."""

    def __init__(self, command: str, cfg: dict | None):
        self.command = command
        self.config = cfg
        self.seeds: dict = {}
        self.tasks: list = []
        self.started = _dt.datetime.now(_dt.timezone.utc)
        self._t0 = time.perf_counter()
        self.exit_code = None

    def seed(self, name: str, tag: int) -> int:
        s = acc.derive_seed(self.config["seed"], tag)
        self.seeds[name] = s
        return s

    @contextlib.contextmanager
    def task(self, name: str):
        rec = {"task": name, "status": "running"}
        self.tasks.append(rec)
        t0 = time.perf_counter()
        try:
            yield rec
        except Exception as exc:
            rec["status"] = "error"
            rec["message"] = f"{type(exc).__name__}: {exc}"
            raise
        finally:
            rec["seconds"] = round(time.perf_counter() - t0, 3)
        if rec["status"] == "running":
            rec["status"] = "ok"

    def write(self, out: Path | None):
        body = {
            "command": self.command,
            "version": __version__,
            "config": self.config,
            "seeds": self.seeds,
            "started": self.started.isoformat(),
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "wall_clock_seconds": round(time.perf_counter() - self._t0, 3),
            "tasks": self.tasks,
            "exit_code": self.exit_code,
        }
        if out is None:
            print(json.dumps(acc._plain(body), indent=1), file=sys.stderr)
            return
        write_json(out / "manifest.json", body)


# -- subcommands -------------------------------------------------------------------

def cmd_build_invariant(cfg, out: Path, man: RunManifest) -> int:
    params = model_params(cfg)
    n = cfg["n"]
    with man.task("normal-form"):
        state = build_state(params, n, term_cap=cfg["term_cap"])
        inv = build_invariant(params, n, state=state)
    with man.task("cross-check"):
        cross = xdot_crosscheck(inv)
        residuals = [state.ladder_residual(s) for s in range(1, n + 1)]
    write_json(out / "invariant.json", {
        "params": params.as_dict(), "n": n,
        "Xn": to_json_obj(inv.Xn), "Xn_dot": to_json_obj(inv.Xn_dot),
        "theta1": to_json_obj(inv.theta1),
    })
    write_json(out / "structure.json", {
        "report": inv.report, "xdot_crosscheck": cross, "ladder_residuals": residuals,
    })
    return EXIT_OK


def cmd_estimate(cfg, out: Path, man: RunManifest) -> int:
    params = model_params(cfg)
    seed = man.seed("sampler", 1)
    lo, hi = cfg["n_range"]
    with man.task("sample"):
        samples = mcmc_samples(params, sampler_config(cfg, seed))
    with man.task("invariants"):
        state = build_state(params, max(hi, cfg["n"]), term_cap=cfg["term_cap"])
        inv = build_invariant(params, cfg["n"], state=state)
    with man.task("moments"):
        obs = est.standard_observables(params, inv)
        res = est.estimate_moments(obs, samples, pairs=[("F", "H"), ("Xn", "H"), ("H", "H")])
        moments = [dict(observable=k, estimate=v.value, std_error=v.std_error, tau_int=v.tau_int,
                        n_samples=v.n_samples, seed=v.seed) for k, v in res.items()]
    with man.task("stability"):
        stab = est.stability_ratio(inv, samples)
    with man.task("n-scan"):
        scan = est.n_scan(params, range(lo, hi + 1), samples)
    meta = {"params": params.as_dict(), "seed": seed, "samples": len(samples)}
    write_json(out / "moments.json", {"params": params.as_dict(), "moments": moments})
    write_json(out / "stability.json", {"params": params.as_dict(), "seed": seed,
                                        "acceptance": samples.acceptance, **stab.as_row()})
    cols = list(scan["rows"][0].as_row())
    write_csv(out / "n_scan.csv", {**meta, "n_bar": scan["n_bar"]}, cols,
              [[r.as_row()[c] for c in cols] for r in scan["rows"]])
    if cfg["estimate"]["scaling_Ns"]:
        rows = []
        with man.task("scaling"):
            for N in cfg["estimate"]["scaling_Ns"]:
                pN = params.with_(N=N)
                sN = mcmc_samples(pN, sampler_config(cfg, man.seed(f"sampler_N{N}", 1000 + N)))
                rows.append(est.stability_ratio(build_invariant(pN, cfg["n"]), sN).as_row())
        write_csv(out / "scaling.csv", {"params": params.as_dict(), "n": cfg["n"],
                                        "seeds": {k: v for k, v in man.seeds.items() if "_N" in k}},
                  cols, [[r[c] for c in cols] for r in rows])
    return EXIT_OK


def cmd_autocorr(cfg, out: Path, man: RunManifest) -> int:
    params = model_params(cfg)
    lo, hi = cfg["n_range"]
    with man.task("sample"):
        build = mcmc_samples(params, sampler_config(cfg, man.seed("sampler", 1)))
    with man.task("x-bar"):
        if cfg["autocorr"]["n"] == "auto":
            n = est.n_scan(params, range(lo, hi + 1), build)["n_bar"]
        else:
            n = cfg["autocorr"]["n"]
        inv = build_invariant(params, n, term_cap=cfg["term_cap"])
        xbar = est.build_xbar(inv, build)
        eta = est.stability_ratio(inv, build, xpoly=xbar.poly).ratio
    ic = cfg["integrator"]
    t_max = ic["t_max"] if ic["t_max"] is not None else 1.2 / eta.value
    with man.task("ensemble"):
        q0, p0 = acc.equilibrium_ensemble(params, ic["ensemble"], man.seed("ensemble", 2))
    with man.task("integrate"):
        traj = dyn.integrate(q0, p0, params, dyn.IntegratorConfig(
            dt=ic["dt"], t_max=t_max, ensemble=ic["ensemble"], n_times=ic["n_times"],
            scheme=ic["scheme"]))
    with man.task("bounds"):
        curve = dyn.autocorrelation(CompiledPolynomial(xbar.poly), traj, eta=eta.value)
        bound = dyn.verify_autocorr_bound(curve, eta)
        disp = dyn.displacement_check(curve, eta)
        level = cfg["autocorr"]["level"]
        relax = dyn.relaxation_bound(eta, level)
        crossing = dyn.first_crossing(curve, level)
    meta = {"params": params.as_dict(), "n": n, "eta": eta.value, "eta_se": eta.std_error,
            "seeds": man.seeds, "ensemble": ic["ensemble"]}
    write_csv(out / "corr_curve.csv", meta, ["t", "C", "SE", "bound"], curve.rows())
    write_json(out / "autocorr_report.json", {
        "params": params.as_dict(), "n": n, "eta": eta, "energy_drift": traj.energy_drift,
        "bound": bound, "displacement": disp, "level": level, "relaxation_bound": relax,
        "first_crossing": crossing,
        "crossing_consistent": crossing is None or crossing >= relax.value - 3 * relax.std_error,
    })
    return EXIT_OK


def cmd_decay(cfg, out: Path, man: RunManifest) -> int:
    d = cfg["decay"]
    params = ModelParams(d["N"], float(d["eps"]), float(d["beta"]))
    results = []
    with man.task("transfer"):
        results.append(dec.spatial_correlation_transfer(params, d["observable"], M=d["M"]))
    if d["mcmc"]:
        with man.task("mcmc"):
            s = mcmc_samples(params, sampler_config(cfg, man.seed("sampler", 3)))
            results.append(dec.spatial_correlation(s, d["observable"], max_distance=d["N"] // 2))
    with man.task("eps-scan"):
        scan = dec.decay_vs_eps(params, d["eps_grid"], d["observable"], M=d["M"])
    meta = {"params": params.as_dict(), "observable": d["observable"], "seeds": man.seeds}
    write_csv(out / "decay.csv", meta, ["distance", "cov", "SE", "source"],
              [row for r in results for row in r.rows()])
    write_json(out / "decay_fit.json", {"params": params.as_dict(),
                                        "fits": [r.summary() for r in results]})
    cols = ["eps", "rate", "rate_se", "ci_lo", "ci_hi", "inconclusive", "zeros"]
    write_csv(out / "decay_vs_eps.csv", {"params": params.as_dict(), "observable": d["observable"]},
              cols, [[r[c] for c in cols] for r in scan])
    return EXIT_OK


def cmd_oracle(cfg, out: Path, man: RunManifest) -> int:
    beta, eps = float(cfg["oracle"]["beta"]), float(cfg["oracle"]["eps"])
    checks = {}
    with man.task("factorization"):
        p0 = ModelParams(6, 0.0, beta)
        k0 = TransferKernel(p0)
        gap = abs(k0.log_Z() - 6 * math.log(z_single_site(p0)))
        checks["eps0_factorization"] = {"abs_log_gap": gap, "ok": gap < 1e-8}
    with man.task("quadrature"):
        p3 = ModelParams(3, eps, beta)
        k3 = TransferKernel(p3)
        rows = []
        for f in ({1: 1, 2: 1}, {1: 2, 2: 2}, {1: 1, 3: 1}, {2: 4}, {1: 3, 2: 1}, {1: 2, 2: 2, 3: 2}):
            a, b = k3.expectation(f), quadrature_expectation(p3, f)
            rows.append({"moment": {str(s): k for s, k in f.items()}, "transfer": a,
                         "quadrature": b, "abs_diff": abs(a - b)})
        worst = max(r["abs_diff"] for r in rows)
        checks["transfer_vs_quadrature"] = {"rows": rows, "max_abs_diff": worst, "ok": worst < 1e-8}
    with man.task("refinement"):
        r = transfer_moments(TransferKernel(ModelParams(6, eps, beta)), check=True, tol=1e-8)
        checks["grid_refinement"] = {"delta": r["refinement_delta"], "ok": r["refinement_delta"] < 1e-8}
    with man.task("marginal"):
        m = marginal_bound_check(MarginalQuery((2,)), ModelParams(8, eps, beta))
        checks["marginal_uniformity"] = {"sup_variation": m["sup_variation"],
                                         "inf_variation": m["inf_variation"], "ok": m["passed"]}
    with man.task("partition-ratio"):
        pr = partition_ratio_scan(ModelParams(8, eps, beta))
        checks["periodic_partition_ratio"] = {"rows": pr["rows"], "K0_fit": pr["K0_fit"],
                                              "variation": pr["variation"],
                                              "ok": pr["variation"] < 0.2}
    ok = all(c["ok"] for c in checks.values())
    write_json(out / "oracle.json", {"beta": beta, "eps": eps, "checks": checks, "ok": ok})
    if not ok:
        bad = [k for k, c in checks.items() if not c["ok"]]
        raise OracleMismatch(f"oracle cross-checks failed: {', '.join(bad)}")
    return EXIT_OK


def cmd_verify(cfg, out: Path, man: RunManifest) -> int:
    v = cfg["verify"]
    results = []
    for k in sorted(v["criteria"]):
        with man.task(f"criterion-{k}") as rec:
            chk = acc.CHECKS[k](seed=cfg["seed"], scale=v["scale"])
            rec["status"] = "passed" if chk.passed else "failed"
            rec["title"] = chk.title
        print(chk.line(), file=sys.stderr, flush=True)
        results.append(chk)
    write_json(out / "verify_results.json", {"scale": v["scale"], "seed": cfg["seed"],
                                             "criteria": [c.body() for c in results]})
    write_csv(out / "verify.csv", {"scale": v["scale"], "seed": cfg["seed"]},
              ["criterion", "title", "passed"], [[c.number, c.title, c.passed] for c in results])
    return EXIT_OK if all(c.passed for c in results) else EXIT_ACCEPTANCE


COMMANDS = {
    "build-invariant": cmd_build_invariant,
    "estimate": cmd_estimate,
    "autocorr": cmd_autocorr,
    "decay": cmd_decay,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
}


# -- entry point -------------------------------------------------------------------

def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=_seed, metavar="U64", help="master seed (overrides config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    common.add_argument("--threads", type=_positive, metavar="K", help="BLAS thread count")
    parser = argparse.ArgumentParser(prog="kgadiabatic", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "build-invariant": "construct X_n and dX_n/dt, write JSON and a structural report",
        "estimate": "Gibbs moments, stability ratio and n-scan",
        "autocorr": "autocorrelation of X_bar and the time-domain bounds",
        "decay": "spatial correlation decay (transfer oracle, optionally MCMC)",
        "oracle": "quadrature and transfer-kernel cross-checks",
        "verify": "acceptance suite at the configured scale",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    man = RunManifest(args.command, None)
    out = None
    fallback = args.out or os.environ.get("KGADIABATIC_OUT")
    try:
        cfg = load_config(args.config, args)
        man.config = cfg
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(limits=cfg["threads"]):
            man.exit_code = COMMANDS[args.command](cfg, out, man)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        man.exit_code = EXIT_CONFIG
    except GUARD_ERRORS + (OracleMismatch,) as exc:
        print(f"numerical guard: {type(exc).__name__}: {exc}", file=sys.stderr)
        man.exit_code = EXIT_GUARD
    except (ValueError, TypeError) as exc:
        # invalid values that slip past validation surface from the constructors
        print(f"config error: {exc}", file=sys.stderr)
        man.exit_code = EXIT_CONFIG
    finally:
        if man.exit_code is None:
            man.exit_code = 1
        if out is None and fallback:
            with contextlib.suppress(OSError):
                Path(fallback).mkdir(parents=True, exist_ok=True)
                out = Path(fallback)
        man.write(out)
    return man.exit_code


if __name__ == "__main__":
    sys.exit(main())
