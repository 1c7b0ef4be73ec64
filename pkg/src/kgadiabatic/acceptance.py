"""Acceptance checks for the whole pipeline.

Each ``check_*`` function runs one end-to-end criterion and returns a
:class:`Check`.  The ``scale`` argument selects a profile: ``"full"`` is the
gate used by the test suite, ``"reduced"`` keeps every tolerance but uses
smaller sample counts and ensembles so that the ``verify`` subcommand
finishes in a few minutes.  Results carry no wall-clock data, so two runs
with the same seed serialize to identical bytes.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import decay as dec
from . import dynamics as dyn
from . import estimators as est
from .gibbs import (
    MarginalQuery,
    SamplerConfig,
    TransferKernel,
    marginal_bound_check,
    mcmc_samples,
)
from .model import ModelParams
from .normal_form import build_invariant, build_state
from .poly import (
    REAL,
    CompiledPolynomial,
    Polynomial,
    project_kernel,
    to_complex,
    to_real,
)

PROFILES = {
    "full": {
        "moment_sweeps": 100_000, "moment_chains": 4, "moment_N": 3,
        "scaling_Ns": (32, 64, 128), "scaling_chains": 100, "scaling_kept": 500,
        "ratio_N": 32, "ratio_chains": 100, "ratio_kept": 500,
        "xbar_N": 32, "xbar_build": (200, 1000), "xbar_fresh": (100, 500),
        "ensemble": 1000,
        "decay_N": 12,
        "random_monomials": 200,
    },
    "reduced": {
        "moment_sweeps": 20_000, "moment_chains": 2, "moment_N": 3,
        "scaling_Ns": (16, 32, 64), "scaling_chains": 50, "scaling_kept": 200,
        "ratio_N": 16, "ratio_chains": 50, "ratio_kept": 200,
        "xbar_N": 16, "xbar_build": (100, 500), "xbar_fresh": (50, 200),
        "ensemble": 200,
        "decay_N": 12,
        "random_monomials": 50,
    },
}

TITLES = {
    1: "normal-form exactness",
    2: "structure of P_n and dX_n/dt",
    3: "kernel projector equals harmonic flow average",
    4: "sampler moments against transfer oracle",
    5: "sqrt(N) scaling of ||dX_n/dt|| and sigma_X",
    6: "ratio improvement from n=1 to n=2",
    7: "decorrelation of X_bar from H",
    8: "autocorrelation and displacement bounds",
    9: "spatial decay of correlations",
    10: "marginal ratio uniformity in N",
    11: "determinism",
}


@dataclass
class Check:
    number: int
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0  # kept out of the serialized body

    @property
    def title(self) -> str:
        return TITLES[self.number]

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d}: {self.title} ({self.seconds:.1f} s)"

    def body(self) -> dict:
        return {"criterion": self.number, "title": self.title, "passed": bool(self.passed),
                "details": _plain(self.details)}


def _plain(x):
    """Convert numpy scalars/arrays and tuples into JSON-friendly values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, est.MCEstimate):
        return _plain(x.as_dict())
    return x


def derive_seed(master: int, tag: int) -> int:
    """Independent 32-bit seed for sub-task ``tag`` of a run seeded with ``master``."""
    return int(np.random.SeedSequence([int(master), int(tag)]).generate_state(1)[0])


def _samples(params, chains, kept, seed, thin=4, burn_in=500):
    cfg = SamplerConfig(sweeps=burn_in + kept * thin, burn_in=burn_in, n_chains=chains,
                        thin=thin, seed=seed)
    return mcmc_samples(params, cfg)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        chk = fn(*args, **kwargs)
        chk.seconds = time.perf_counter() - t0
        return chk
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# -- 1-3: symbolic ---------------------------------------------------------------

@_timed
def check_exactness(seed: int = 0, scale: str = "full", eps: float = 0.05, N: int = 12) -> Check:
    params = ModelParams(N, eps, 1.0)
    state = build_state(params, 3)
    res = [state.ladder_residual(s) for s in (1, 2, 3)]
    inv = build_invariant(params, 1, state=state)
    th = inv.theta1
    w = params.omega
    pp = [abs(th.coeff({i: (1, 0), i + 1: (1, 0)})) for i in range(1, N)]
    p4 = [abs(th.coeff({i: (4, 0)})) for i in range(1, N + 1)]
    err_pp = max(abs(v - eps / (2 * w)) for v in pp)
    err_p4 = max(abs(v - 3 / (32 * w * w)) for v in p4)
    ok = max(res) < 1e-10 and err_pp < 1e-12 and err_p4 < 1e-12
    return Check(1, ok, {"ladder_residuals": res, "theta1_pp_error": err_pp,
                         "theta1_p4_error": err_p4, "expected_pp": eps / (2 * w),
                         "expected_p4": 3 / (32 * w * w)})


@_timed
def check_structure(seed: int = 0, scale: str = "full", eps: float = 0.05, N: int = 12) -> Check:
    params = ModelParams(N, eps, 1.0)
    state = build_state(params, 3)
    rows = {}
    ok = True
    for n in (1, 2, 3):
        rep = build_invariant(params, n, state=state).report
        ok &= rep["ok"]
        rows[f"n={n}"] = {
            "ok": rep["ok"],
            "P_n_min_margin": min(r["margin"] for r in rep["P_n"]),
            "Xn_dot_min_margin": min(r["margin"] for r in rep["Xn_dot"]),
            "P_n_degrees": [r["degree"] for r in rep["P_n"]],
            "Xn_dot_degrees": [r["degree"] for r in rep["Xn_dot"]],
        }
    return Check(2, ok, rows)


def flow_average(f: Polynomial, omega: float, q, p, nodes: int = 64) -> np.ndarray:
    """Average of ``f`` along the harmonic flow of ``H0`` over one period.

    The flow rotates each ``(q_i, p_i)`` pair by the angle ``omega t``; the
    trapezoid rule with ``nodes`` equispaced angles is exact for trigonometric
    polynomials of degree below ``nodes``.
    """
    cf = CompiledPolynomial(f)
    q = np.atleast_2d(q)
    p = np.atleast_2d(p)
    acc = np.zeros(q.shape[0])
    for k in range(nodes):
        th = 2 * math.pi * k / nodes
        c, s = math.cos(th), math.sin(th)
        acc += cf(q * c + p * s, p * c - q * s)
    return acc / nodes


def random_monomial(rng, n_sites: int = 3, max_exp: int = 3) -> Polynomial:
    while True:
        exps = {i: (int(rng.integers(0, max_exp + 1)), int(rng.integers(0, max_exp + 1)))
                for i in range(1, n_sites + 1)}
        exps = {i: ab for i, ab in exps.items() if ab != (0, 0)}
        if exps:
            return Polynomial.monomial(exps, 1.0, REAL)


@_timed
def check_projector(seed: int = 0, scale: str = "full", omega: float = math.sqrt(1.1)) -> Check:
    prof = PROFILES[scale]
    rng = np.random.default_rng(derive_seed(seed, 3))
    worst = 0.0
    for _ in range(prof["random_monomials"]):
        f = random_monomial(rng)
        avg = to_real(project_kernel(to_complex(f)))
        q = rng.normal(size=(5, 3))
        p = rng.normal(size=(5, 3))
        a = CompiledPolynomial(avg.real_part())(q, p)
        b = flow_average(f, omega, q, p)
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))))
    return Check(3, worst < 1e-9, {"monomials": prof["random_monomials"], "max_rel_error": worst})


# -- 4: sampler against oracle -------------------------------------------------------

def q_monomials(N: int, max_degree: int = 6):
    for exps in itertools.product(range(max_degree + 1), repeat=N):
        if 1 <= sum(exps) <= max_degree:
            yield {i + 1: k for i, k in enumerate(exps) if k}


@_timed
def check_moments(seed: int = 0, scale: str = "full") -> Check:
    prof = PROFILES[scale]
    N = prof["moment_N"]
    out = {}
    ok = True
    for tag, (beta, eps) in enumerate([(5.0, 0.1), (20.0, 0.02)]):
        params = ModelParams(N, eps, beta)
        kernel = TransferKernel(params)
        cfg = SamplerConfig(sweeps=prof["moment_sweeps"], burn_in=prof["moment_sweeps"] // 10,
                            n_chains=prof["moment_chains"], seed=derive_seed(seed, 40 + tag))
        s = mcmc_samples(params, cfg)
        q = s.flat_q
        zmax = 0.0
        worst = None
        count = 0
        for mono in q_monomials(N):
            x = np.ones(q.shape[0])
            for site, k in mono.items():
                x = x * q[:, site - 1] ** k
            m = est.batch_mean(x, est.MIN_BATCHES, s.seed)
            z = abs(m.z_score(kernel.expectation(mono)))
            count += 1
            if z > zmax:
                zmax, worst = z, mono
        ok &= zmax < 3
        out[f"beta={beta},eps={eps}"] = {"moments": count, "max_abs_z": zmax,
                                         "worst": {str(k): v for k, v in worst.items()},
                                         "acceptance": s.acceptance}
    return Check(4, ok, out)


# -- 5-8: statistics of the invariant ------------------------------------------------

@_timed
def check_scaling(seed: int = 0, scale: str = "full", eps: float = 0.02, beta: float = 100.0,
                  n: int = 2) -> Check:
    prof = PROFILES[scale]
    rows = []
    for N in prof["scaling_Ns"]:
        params = ModelParams(N, eps, beta)
        inv = build_invariant(params, n)
        s = _samples(params, prof["scaling_chains"], prof["scaling_kept"], derive_seed(seed, 50 + N))
        rows.append(est.stability_ratio(inv, s))
    ok = True
    worst = {}
    for attr in ("xdot_norm_sqrtN", "sigma_X_sqrtN"):
        zs = []
        for a, b in itertools.combinations(rows, 2):
            ea, eb = getattr(a, attr), getattr(b, attr)
            zs.append(abs(ea.value - eb.value) / math.hypot(ea.std_error, eb.std_error))
        worst[attr] = max(zs)
        ok &= max(zs) < 3
    table = [{"N": r.N, "xdot_norm_sqrtN": r.xdot_norm_sqrtN.value,
              "xdot_norm_sqrtN_se": r.xdot_norm_sqrtN.std_error,
              "sigma_X_sqrtN": r.sigma_X_sqrtN.value, "sigma_X_sqrtN_se": r.sigma_X_sqrtN.std_error}
             for r in rows]
    return Check(5, ok, {"rows": table, "max_joint_z": worst})


@_timed
def check_ratio_improvement(seed: int = 0, scale: str = "full", eps: float = 0.01,
                            beta: float = 200.0) -> Check:
    prof = PROFILES[scale]
    params = ModelParams(prof["ratio_N"], eps, beta)
    state = build_state(params, 2)
    inv1 = build_invariant(params, 1, state=state)
    inv2 = build_invariant(params, 2, state=state)
    s = _samples(params, prof["ratio_chains"], prof["ratio_kept"], derive_seed(seed, 6))
    r1 = est.stability_ratio(inv1, s)
    r2 = est.stability_ratio(inv2, s)
    diff = est.ratio_difference(r1, r2, s, inv1, inv2)
    z = diff.value / diff.std_error
    return Check(6, z > 3, {"ratio_n1": r1.ratio, "ratio_n2": r2.ratio,
                            "difference": diff, "z": z})


def _xbar_setup(seed, scale, eps=0.02, beta=100.0):
    prof = PROFILES[scale]
    params = ModelParams(prof["xbar_N"], eps, beta)
    build = _samples(params, *prof["xbar_build"], derive_seed(seed, 70))
    scan = est.n_scan(params, range(1, 4), build)
    inv = build_invariant(params, scan["n_bar"])
    xbar = est.build_xbar(inv, build)
    return params, build, scan, inv, xbar


@_timed
def check_decorrelation(seed: int = 0, scale: str = "full") -> Check:
    prof = PROFILES[scale]
    params, build, scan, inv, xbar = _xbar_setup(seed, scale)
    fresh = _samples(params, *prof["xbar_fresh"], derive_seed(seed, 71))
    res = est.decorrelation_check(xbar, inv, fresh)
    z_rho = abs(res["rho_xbar_H"].z_score(0.0))
    z_gap = abs(res["variance_gap"].z_score(0.0))
    return Check(7, z_rho < 3 and z_gap < 3, {
        "n_bar": scan["n_bar"], "coefficient": xbar.coefficient,
        "rho_Xn_H_build": xbar.rho_XH, "rho_xbar_H_fresh": res["rho_xbar_H"],
        "variance_gap": res["variance_gap"], "var_xbar": res["var_xbar"],
        "z_rho": z_rho, "z_gap": z_gap})


def equilibrium_ensemble(params: ModelParams, M: int, seed: int, sweeps: int = 1000):
    """``M`` independent Gibbs states, one per chain after ``sweeps`` sweeps."""
    cfg = SamplerConfig(sweeps=sweeps, burn_in=sweeps - 1, n_chains=M, seed=seed)
    s = mcmc_samples(params, cfg)
    return s.q[:, -1, :], s.p[:, -1, :]


@_timed
def check_autocorr(seed: int = 0, scale: str = "full") -> Check:
    prof = PROFILES[scale]
    params, build, scan, inv, xbar = _xbar_setup(seed, scale)
    eta = est.stability_ratio(inv, build, xpoly=xbar.poly).ratio
    q0, p0 = equilibrium_ensemble(params, prof["ensemble"], derive_seed(seed, 80))
    cfg = dyn.IntegratorConfig(t_max=1.2 / eta.value, n_times=30)
    traj = dyn.integrate(q0, p0, params, cfg)
    curve = dyn.autocorrelation(CompiledPolynomial(xbar.poly), traj, eta=eta.value)
    bound = dyn.verify_autocorr_bound(curve, eta, stop_level=0.5)
    disp = dyn.displacement_check(curve, eta, lam=2.0, stop_level=0.5)
    return Check(8, bound["passed"] and disp["passed"], {
        "n_bar": scan["n_bar"], "eta": eta, "energy_drift": traj.energy_drift,
        "bound": bound, "displacement_passed": disp["passed"],
        "displacement_points": len(disp["rows"]), "C_min": float(curve.C.min())})


# -- 9-10: transfer oracle -------------------------------------------------------------

@_timed
def check_decay(seed: int = 0, scale: str = "full", beta: float = 10.0, eps: float = 0.05) -> Check:
    N = PROFILES[scale]["decay_N"]
    r = dec.spatial_correlation_transfer(ModelParams(N, eps, beta), "q2")
    z = dec.spatial_correlation_transfer(ModelParams(N, 0.0, beta), "q2")
    zeros = bool(np.all(z.cov[z.distances >= 1] == 0.0))
    ok = (not r.inconclusive) and r.rate > 0 and r.rate_ci[0] > 0 and zeros
    return Check(9, ok, {"fit": r.summary(), "eps0_exact_zeros": zeros})


@_timed
def check_marginal(seed: int = 0, scale: str = "full", beta: float = 10.0, eps: float = 0.05) -> Check:
    rep = marginal_bound_check(MarginalQuery((2,)), ModelParams(8, eps, beta), Ns=range(4, 9))
    ok = rep["sup_variation"] < 0.2
    return Check(10, ok, {"rows": rep["rows"], "sup_variation": rep["sup_variation"],
                          "inf_variation": rep["inf_variation"]})


# -- 11: determinism -------------------------------------------------------------------

def _mini_pipeline(seed: int) -> str:
    params = ModelParams(8, 0.05, 20.0)
    s = _samples(params, 60, 100, derive_seed(seed, 110), thin=2, burn_in=100)
    inv = build_invariant(params, 2)
    r = est.stability_ratio(inv, s)
    q0, p0 = s.q[:, -1, :], s.p[:, -1, :]
    traj = dyn.integrate(q0, p0, params, dyn.IntegratorConfig(t_max=2.0, n_times=5))
    curve = dyn.autocorrelation(CompiledPolynomial(inv.Xn), traj)
    d = dec.spatial_correlation(s, "q2", max_distance=3)
    body = {"ratio": r.as_row(), "curve": curve.rows(), "decay": d.rows()}
    return json.dumps(_plain(body), sort_keys=True)


@_timed
def check_determinism(seed: int = 0, scale: str = "full") -> Check:
    a = _mini_pipeline(seed)
    b = _mini_pipeline(seed)
    return Check(11, a == b, {"bytes": len(a), "identical": a == b})


CHECKS = {
    1: check_exactness,
    2: check_structure,
    3: check_projector,
    4: check_moments,
    5: check_scaling,
    6: check_ratio_improvement,
    7: check_decorrelation,
    8: check_autocorr,
    9: check_decay,
    10: check_marginal,
    11: check_determinism,
}


def run_all(seed: int = 0, scale: str = "reduced", only=None, log=print) -> list:
    """Run the selected criteria in order, logging one PASS/FAIL line each."""
    if scale not in PROFILES:
        raise ValueError(f"unknown scale {scale!r}")
    results = []
    for k in sorted(only or CHECKS):
        chk = CHECKS[k](seed=seed, scale=scale)
        if log is not None:
            log(chk.line())
        results.append(chk)
    return results
