"""Spatial correlation decay of local observables along the chain."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import estimators as est
from .gibbs import GibbsSamples, TransferKernel
from .model import ModelParams

REFERENCE_RATE = math.log(4.0 / 3.0) / 2.0
# exact covariances are differences of O(<f^2>) numbers; below this relative
# level they are round-off
EXACT_FLOOR = 1e-12

# local observables as functions of (q_i, p_i); only q-dependent ones have a
# transfer representation
OBSERVABLES = {
    "q2": (lambda q, p: q ** 2, lambda x: x ** 2),
    "q4": (lambda q, p: q ** 4, lambda x: x ** 4),
    "p2q2": (lambda q, p: p ** 2 * q ** 2, None),
}


@dataclass
class DecayResult:
    source: str
    observable: str
    distances: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    noise_floor: float
    rate: float = float("nan")
    rate_se: float = float("nan")
    rate_ci: tuple = (float("nan"), float("nan"))
    prefactor: float = float("nan")
    used: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    inconclusive: bool = True
    reference_rate: float = REFERENCE_RATE

    def rows(self):
        return [(int(d), float(c), float(s), self.source)
                for d, c, s in zip(self.distances, self.cov, self.se)]

    def summary(self) -> dict:
        return {
            "source": self.source, "observable": self.observable,
            "rate": self.rate, "rate_se": self.rate_se, "rate_ci95": list(self.rate_ci),
            "prefactor": self.prefactor, "noise_floor": self.noise_floor,
            "points_used": int(np.sum(self.used)), "inconclusive": self.inconclusive,
            "reference_rate": self.reference_rate,
        }


def pair_sites(N: int, d: int) -> tuple:
    """Two sites ``d`` apart, placed symmetrically about the chain centre."""
    left = (N + 1 - d) // 2
    left = max(1, left)
    return left, left + d


def fit_decay(distances, cov, se, min_distance: int = 1, noise_floor: float | None = None,
              rel_floor: float = 1e-11):
    """Weighted least squares of ``log|cov|`` against distance above the noise floor.

    With nonzero standard errors the floor is three times the error of the
    largest-distance point and the fit uses those errors as absolute weights.
    Exact (error-free) data use a relative floor ``rel_floor * |cov(min_distance)|``
    and residual-based parameter errors.
    """
    d = np.asarray(distances, dtype=float)
    c = np.abs(np.asarray(cov, dtype=float))
    s = np.asarray(se, dtype=float)
    exact = not np.any(s > 0)
    if noise_floor is None:
        if exact:
            ref = c[d >= min_distance]
            noise_floor = rel_floor * (ref.max() if len(ref) else 0.0)
        else:
            noise_floor = 3.0 * s[np.argmax(d)]
    used = (d >= min_distance) & (c > noise_floor) & (c > 0)
    out = {"noise_floor": float(noise_floor), "used": used}
    k = int(used.sum())
    if k < 2 or (exact and k < 3):
        out.update(inconclusive=True)
        return out
    x = d[used]
    y = np.log(c[used])
    A = np.column_stack([np.ones_like(x), -x])
    if exact:
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        dof = k - 2
        s2 = float(np.sum((y - A @ coef) ** 2)) / dof
        # exact data: floor the residual scale at double-precision noise in log space
        s2 = max(s2, (1e-12) ** 2)
        cov_m = s2 * np.linalg.inv(A.T @ A)
        tq = stats.t.ppf(0.975, dof)
    else:
        sy = s[used] / c[used]
        Wt = 1.0 / sy ** 2
        cov_m = np.linalg.inv(A.T @ (A * Wt[:, None]))
        coef = cov_m @ (A.T @ (Wt * y))
        tq = stats.norm.ppf(0.975)
    rate = float(coef[1])
    rse = float(math.sqrt(cov_m[1, 1]))
    out.update(rate=rate, rate_se=rse, rate_ci=(rate - tq * rse, rate + tq * rse),
               prefactor=float(math.exp(coef[0])), inconclusive=False)
    return out


def _finish(source, name, dist, cov, se, min_distance, noise_floor=None):
    fit = fit_decay(dist, cov, se, min_distance, noise_floor)
    res = DecayResult(source, name, np.asarray(dist), np.asarray(cov), np.asarray(se),
                      fit["noise_floor"], used=fit["used"], inconclusive=fit["inconclusive"])
    if not fit["inconclusive"]:
        res.rate, res.rate_se, res.rate_ci = fit["rate"], fit["rate_se"], fit["rate_ci"]
        res.prefactor = fit["prefactor"]
    return res


def spatial_correlation_transfer(params: ModelParams, observable: str = "q2", max_distance=None,
                                 M: int = 401, min_distance: int = 1) -> DecayResult:
    """Exact ``|cov(f_i, f_j)|`` against ``|i - j|`` from the transfer kernel."""
    if params.N > 12:
        raise ValueError("the transfer decay scan is meant for N <= 12")
    fx = OBSERVABLES[observable][1]
    if fx is None:
        raise ValueError(f"{observable} has no configurational transfer representation")
    kernel = TransferKernel(params, M=M)
    D = params.N - 1 if max_distance is None else max_distance
    dist = np.arange(0, D + 1)
    cov = []
    for d in dist:
        i, j = pair_sites(params.N, int(d))
        cov.append(kernel.pair_covariance(i, j, fx, fx))
    cov = np.asarray(cov)
    c = (params.N + 1) // 2
    scale = kernel.expectation({c: lambda x: fx(x) ** 2})
    floor = EXACT_FLOOR * scale
    if params.eps == 0:
        # product measure: distinct sites are independent
        cov[dist >= 1] = 0.0
    return _finish("transfer", observable, dist, cov, np.zeros_like(cov), min_distance, floor)


def bulk_pairs(N: int, d: int, margin: int = 2) -> list:
    """0-based site pairs at distance ``d`` keeping ``margin`` sites from both ends."""
    pairs = [(i, i + d) for i in range(margin, N - margin - d)]
    if not pairs:
        i, j = pair_sites(N, d)
        pairs = [(i - 1, j - 1)]
    return pairs


def spatial_correlation(samples: GibbsSamples, observable: str = "q2", max_distance=None,
                        n_batches: int = est.MIN_BATCHES, min_distance: int = 1,
                        bulk_average: bool = True) -> DecayResult:
    """``|cov(f_i, f_j)|`` against distance from Gibbs samples.

    With ``bulk_average`` each distance averages the covariance over all pairs
    kept two sites away from the chain ends; otherwise the single pair
    centred in the chain is used.  Errors are delete-one-batch jackknife.
    """
    f = OBSERVABLES[observable][0]
    N = samples.params.N
    vals = f(samples.flat_q, samples.flat_p)
    D = N - 1 if max_distance is None else max_distance
    dist = np.arange(0, D + 1)
    cov, se = [], []
    for d in dist:
        if bulk_average:
            pairs = bulk_pairs(N, int(d))
        else:
            i, j = pair_sites(N, int(d))
            pairs = [(i - 1, j - 1)]
        k = len(pairs)
        xi = vals[:, [i for i, _ in pairs]]
        xj = vals[:, [j for _, j in pairs]]
        cols = np.column_stack([(xi * xj).mean(axis=1), xi, xj])

        def fn(m, k=k):
            return m[0] - float(np.mean(m[1:1 + k] * m[1 + k:1 + 2 * k]))

        r = est.jackknife(fn, cols, n_batches, samples.seed)
        cov.append(r.value)
        se.append(r.std_error)
    return _finish("mcmc", observable, dist, np.asarray(cov), np.asarray(se), min_distance)


def decay_vs_eps(base: ModelParams, eps_grid, observable: str = "q2", M: int = 401) -> list:
    """Transfer-oracle decay rate for each coupling in ``eps_grid``."""
    rows = []
    for e in eps_grid:
        r = spatial_correlation_transfer(base.with_(eps=float(e)), observable, M=M)
        rows.append({"eps": float(e), "rate": r.rate, "rate_se": r.rate_se,
                     "ci_lo": r.rate_ci[0], "ci_hi": r.rate_ci[1],
                     "inconclusive": r.inconclusive,
                     "zeros": bool(np.all(r.cov[r.distances >= 1] == 0))})
    return rows
