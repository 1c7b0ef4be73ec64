"""Monte Carlo statistics of polynomial observables under the Gibbs measure."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .gibbs import GibbsSamples, TransferKernel
from .model import ModelParams, build_hamiltonian
from .normal_form import TruncatedInvariant, build_invariant, build_state
from .poly import REAL, CompiledPolynomial, Polynomial

MIN_BATCHES = 50


class TooFewBatches(ValueError):
    pass


@dataclass
class MCEstimate:
    value: float
    std_error: float
    n_samples: int
    tau_int: float = float("nan")
    seed: int | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    def z_score(self, target: float) -> float:
        return (self.value - target) / self.std_error if self.std_error > 0 else math.inf


# -- batch statistics -----------------------------------------------------------

def _batch_means(Y: np.ndarray, n_batches: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    S = Y.shape[0]
    if n_batches < MIN_BATCHES:
        raise TooFewBatches(f"need at least {MIN_BATCHES} batches, got {n_batches}")
    if S < n_batches:
        raise TooFewBatches(f"{S} samples cannot fill {n_batches} batches")
    size = S // n_batches
    Y = Y[: size * n_batches]
    return Y.reshape(n_batches, size, -1).mean(axis=1)


def batch_mean(x, n_batches: int = MIN_BATCHES, seed=None) -> MCEstimate:
    """Mean of a time-ordered series with a batch-means error bar."""
    x = np.asarray(x, dtype=float)
    bm = _batch_means(x, n_batches)[:, 0]
    se = bm.std(ddof=1) / math.sqrt(n_batches)
    var = x.var()
    tau = 0.5 * len(x) * se * se / var if var > 0 else float("nan")
    return MCEstimate(float(x.mean()), float(se), len(x), float(tau), seed)


def jackknife(fn, Y, n_batches: int = MIN_BATCHES, seed=None) -> MCEstimate:
    """Delete-one-batch jackknife of ``fn(column means of Y)``."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    bm = _batch_means(Y, n_batches)
    full = bm.mean(axis=0)
    loo = (n_batches * full[None, :] - bm) / (n_batches - 1)
    thetas = np.array([fn(r) for r in loo])
    theta = fn(full)
    se = math.sqrt((n_batches - 1) / n_batches * np.sum((thetas - thetas.mean()) ** 2))
    return MCEstimate(float(theta), float(se), Y.shape[0], float("nan"), seed)


def _moments_fn(kind):
    # column layout: [x, y, x*x, y*y, x*y]
    def var_x(m):
        return m[2] - m[0] ** 2

    def cov(m):
        return m[4] - m[0] * m[1]

    def rho(m):
        return (m[4] - m[0] * m[1]) / math.sqrt((m[2] - m[0] ** 2) * (m[3] - m[1] ** 2))

    return {"var": var_x, "cov": cov, "rho": rho}[kind]


def _pair_columns(x, y):
    return np.column_stack([x, y, x * x, y * y, x * y])


def variance(x, n_batches=MIN_BATCHES, seed=None) -> MCEstimate:
    return jackknife(_moments_fn("var"), _pair_columns(x, x), n_batches, seed)


def covariance(x, y, n_batches=MIN_BATCHES, seed=None) -> MCEstimate:
    return jackknife(_moments_fn("cov"), _pair_columns(x, y), n_batches, seed)


def correlation(x, y, n_batches=MIN_BATCHES, seed=None) -> MCEstimate:
    return jackknife(_moments_fn("rho"), _pair_columns(x, y), n_batches, seed)


def l2_norm(x, n_batches=MIN_BATCHES, seed=None) -> MCEstimate:
    return jackknife(lambda m: math.sqrt(m[0]), np.asarray(x) ** 2, n_batches, seed)


def std_dev(x, n_batches=MIN_BATCHES, seed=None) -> MCEstimate:
    x = np.asarray(x, dtype=float)
    return jackknife(lambda m: math.sqrt(m[1] - m[0] ** 2), np.column_stack([x, x * x]),
                     n_batches, seed)


# -- observables ----------------------------------------------------------------

class ObservableSet:
    """Named real-basis polynomials compiled for evaluation on sample arrays."""

    def __init__(self, polys: dict | None = None):
        self.polys: dict[str, Polynomial] = {}
        self._compiled: dict[str, CompiledPolynomial] = {}
        for name, f in (polys or {}).items():
            self.add(name, f)

    def add(self, name: str, f: Polynomial):
        if f.basis != REAL:
            raise ValueError("observables must be real-basis polynomials")
        self.polys[name] = f
        self._compiled[name] = CompiledPolynomial(f)

    def __contains__(self, name):
        return name in self.polys

    def __getitem__(self, name):
        return self.polys[name]

    def names(self):
        return list(self.polys)

    def evaluate(self, name: str, q, p) -> np.ndarray:
        return self._compiled[name](q, p)

    def evaluate_all(self, samples: GibbsSamples, names=None) -> dict:
        names = self.names() if names is None else names
        q, p = samples.flat_q, samples.flat_p
        return {n: self.evaluate(n, q, p) for n in names}


def standard_observables(params: ModelParams, inv: TruncatedInvariant | None = None) -> ObservableSet:
    """``H, H0, H1, F, G, R1`` and, given an invariant, ``X_n`` and ``dX_n/dt``."""
    H0, H1 = build_hamiltonian(params)
    w = params.omega
    F = Polynomial(REAL, {((i, 1, 0), (i + 1, 1, 0)): params.eps / (2 * w) for i in range(1, params.N)})
    G = Polynomial(REAL, {((i, 4, 0),): 3.0 / (32 * w * w) for i in range(1, params.N + 1)})
    obs = ObservableSet({"H": H0 + H1, "H0": H0, "H1": H1, "F": F, "G": G})
    if inv is not None:
        obs.add("R1", inv.theta1 - F - G)
        obs.add("Xn", inv.Xn)
        obs.add("Xn_dot", inv.Xn_dot)
    return obs


def estimate_moments(obs: ObservableSet, samples: GibbsSamples, names=None,
                     pairs=(), n_batches: int = MIN_BATCHES) -> dict:
    """Means and variances of each observable, plus ``rho`` for requested pairs."""
    vals = obs.evaluate_all(samples, names if names is not None else None)
    if pairs:
        for a, b in pairs:
            for n in (a, b):
                if n not in vals:
                    vals[n] = obs.evaluate(n, samples.flat_q, samples.flat_p)
    out = {}
    for name, x in vals.items():
        out[f"mean[{name}]"] = batch_mean(x, n_batches, samples.seed)
        out[f"var[{name}]"] = variance(x, n_batches, samples.seed)
    for a, b in pairs:
        out[f"rho[{a},{b}]"] = correlation(vals[a], vals[b], n_batches, samples.seed)
        out[f"cov[{a},{b}]"] = covariance(vals[a], vals[b], n_batches, samples.seed)
    return out


# -- decorrelated invariant -------------------------------------------------------

@dataclass
class XBar:
    poly: Polynomial
    coefficient: float  # X_bar = X_n - coefficient * H
    rho_XH: MCEstimate  # correlation of X_n with H on the build sample
    sigma_X: float
    sigma_H: float
    rho_build: MCEstimate  # rho(X_bar, H) on the build sample


def build_xbar(inv: TruncatedInvariant, samples: GibbsSamples,
               n_batches: int = MIN_BATCHES) -> XBar:
    """``X_bar = X_n - H rho(X_n,H) sigma_X / sigma_H`` with plug-in estimates."""
    H0, H1 = build_hamiltonian(inv.params)
    H = H0 + H1
    q, p = samples.flat_q, samples.flat_p
    x = CompiledPolynomial(inv.Xn)(q, p)
    h = CompiledPolynomial(H)(q, p)
    sh = h.std()
    if not sh > 0:
        raise ValueError("degenerate energy variance; cannot decorrelate")
    sx = x.std()
    rho = correlation(x, h, n_batches, samples.seed)
    c = float(np.mean((x - x.mean()) * (h - h.mean())) / (sh * sh))
    xbar = inv.Xn - H * c
    rho_b = correlation(x - c * h, h, n_batches, samples.seed)
    return XBar(xbar, c, rho, float(sx), float(sh), rho_b)


def decorrelation_check(xbar: XBar, inv: TruncatedInvariant, fresh: GibbsSamples,
                        n_batches: int = MIN_BATCHES) -> dict:
    """On independent samples: ``rho(X_bar, H)`` and the variance identity."""
    H0, H1 = build_hamiltonian(inv.params)
    q, p = fresh.flat_q, fresh.flat_p
    x = CompiledPolynomial(inv.Xn)(q, p)
    h = CompiledPolynomial(H0 + H1)(q, p)
    xb = x - xbar.coefficient * h
    rho = correlation(xb, h, n_batches, fresh.seed)

    # var(X_bar) - (1 - rho(X,H)^2) var(X); columns x, h, x^2, h^2, xh, xb, xb^2
    def identity_gap(m):
        vx = m[2] - m[0] ** 2
        vh = m[3] - m[1] ** 2
        cxh = m[4] - m[0] * m[1]
        vxb = m[6] - m[5] ** 2
        return vxb - (1 - cxh * cxh / (vx * vh)) * vx

    cols = np.column_stack([x, h, x * x, h * h, x * h, xb, xb * xb])
    gap = jackknife(identity_gap, cols, n_batches, fresh.seed)
    var_xb = variance(xb, n_batches, fresh.seed)
    return {"rho_xbar_H": rho, "variance_gap": gap, "var_xbar": var_xb}


# -- stability ratio -------------------------------------------------------------

@dataclass
class StabilityResult:
    n: int
    N: int
    ratio: MCEstimate  # ||dX_n/dt|| / sigma_{X_n}
    xdot_norm: MCEstimate
    sigma_X: MCEstimate
    xdot_norm_sqrtN: MCEstimate
    sigma_X_sqrtN: MCEstimate
    xdot_mean: MCEstimate

    def as_row(self) -> dict:
        return {
            "n": self.n, "N": self.N,
            "ratio": self.ratio.value, "ratio_se": self.ratio.std_error,
            "xdot_norm": self.xdot_norm.value, "xdot_norm_se": self.xdot_norm.std_error,
            "sigma_X": self.sigma_X.value, "sigma_X_se": self.sigma_X.std_error,
            "xdot_norm_sqrtN": self.xdot_norm_sqrtN.value,
            "xdot_norm_sqrtN_se": self.xdot_norm_sqrtN.std_error,
            "sigma_X_sqrtN": self.sigma_X_sqrtN.value,
            "sigma_X_sqrtN_se": self.sigma_X_sqrtN.std_error,
        }


def stability_ratio(inv: TruncatedInvariant, samples: GibbsSamples,
                    n_batches: int = MIN_BATCHES, xpoly: Polynomial | None = None) -> StabilityResult:
    """``||[X, H]|| / sigma_X`` for ``X = X_n`` (or ``xpoly``, e.g. ``X_bar``).

    ``[X_bar, H] = [X_n, H]`` because ``H`` is conserved, so the derivative is
    always ``dX_n/dt``.
    """
    q, p = samples.flat_q, samples.flat_p
    X = xpoly if xpoly is not None else inv.Xn
    x = CompiledPolynomial(X)(q, p)
    xd = CompiledPolynomial(inv.Xn_dot)(q, p)
    cols = np.column_stack([x, x * x, xd * xd])
    rN = math.sqrt(inv.params.N)
    seed = samples.seed
    ratio = jackknife(lambda m: math.sqrt(m[2] / (m[1] - m[0] ** 2)), cols, n_batches, seed)
    norm = jackknife(lambda m: math.sqrt(m[2]), cols, n_batches, seed)
    sig = jackknife(lambda m: math.sqrt(m[1] - m[0] ** 2), cols, n_batches, seed)
    norm_n = MCEstimate(norm.value / rN, norm.std_error / rN, norm.n_samples, seed=seed)
    sig_n = MCEstimate(sig.value / rN, sig.std_error / rN, sig.n_samples, seed=seed)
    return StabilityResult(inv.n, inv.params.N, ratio, norm, sig, norm_n, sig_n,
                           batch_mean(xd, n_batches, seed))


def n_scan(params: ModelParams, n_range, samples: GibbsSamples,
           n_batches: int = MIN_BATCHES) -> dict:
    """Ratio table over truncation orders and the order ``n_bar`` minimizing it."""
    n_range = list(n_range)
    state = build_state(params, max(n_range))
    rows = []
    for n in n_range:
        inv = build_invariant(params, n, state=state)
        rows.append(stability_ratio(inv, samples, n_batches))
    best = min(rows, key=lambda r: r.ratio.value)
    return {"rows": rows, "n_bar": best.n}


def ratio_difference(a: StabilityResult, b: StabilityResult, samples: GibbsSamples,
                     inv_a: TruncatedInvariant, inv_b: TruncatedInvariant,
                     n_batches: int = MIN_BATCHES) -> MCEstimate:
    """Jackknife of ``ratio_a - ratio_b`` on a shared sample set."""
    q, p = samples.flat_q, samples.flat_p
    cols = []
    for inv in (inv_a, inv_b):
        x = CompiledPolynomial(inv.Xn)(q, p)
        xd = CompiledPolynomial(inv.Xn_dot)(q, p)
        cols += [x, x * x, xd * xd]

    def fn(m):
        ra = math.sqrt(m[2] / (m[1] - m[0] ** 2))
        rb = math.sqrt(m[5] / (m[4] - m[3] ** 2))
        return ra - rb

    return jackknife(fn, np.column_stack(cols), n_batches, samples.seed)


def chebyshev_check(x: np.ndarray, lambdas=(2.0, 3.0)) -> list:
    """Empirical ``P(|X - <X>| >= lambda sigma)`` against ``1/lambda^2``."""
    x = np.asarray(x, dtype=float)
    dev = np.abs(x - x.mean()) / x.std()
    rows = []
    for lam in lambdas:
        frac = float(np.mean(dev >= lam))
        se = math.sqrt(max(frac * (1 - frac), 1.0 / len(x)) / len(x))
        rows.append({"lambda": lam, "frac": frac, "se": se, "bound": 1 / lam ** 2,
                     "ok": frac <= 1 / lam ** 2 + 3 * se})
    return rows


def local_pieces(f: Polynomial) -> dict:
    """Split a polynomial by anchor (leftmost occupied) site."""
    parts: dict = {}
    for key, c in f.terms.items():
        parts.setdefault(key[0][0] if key else 0, {})[key] = c
    return {i: Polynomial(f.basis, t) for i, t in sorted(parts.items())}


def far_pair_remainder(inv: TruncatedInvariant, samples: GibbsSamples, max_sep: int | None = None,
                       n_batches: int = MIN_BATCHES) -> MCEstimate:
    """Mean of ``sum_{|i-j| > max_sep} f_i f_j`` where ``dX_n/dt = sum_i f_i``.

    With ``max_sep = 2n+2`` every dropped pair has zero Gibbs mean because the
    pieces are odd in the momenta and supported on disjoint sites.
    """
    if max_sep is None:
        max_sep = 2 * inv.n + 2
    pieces = local_pieces(inv.Xn_dot)
    q, p = samples.flat_q, samples.flat_p
    vals = {i: CompiledPolynomial(f)(q, p) for i, f in pieces.items()}
    idx = sorted(vals)
    total = np.zeros(q.shape[0])
    for a in idx:
        for b in idx:
            if abs(a - b) > max_sep:
                total += vals[a] * vals[b]
    return batch_mean(total, n_batches, samples.seed)


# -- exact moments for small chains ------------------------------------------------

def gaussian_moment(k: int, var: float) -> float:
    if k % 2:
        return 0.0
    return math.prod(range(k - 1, 0, -2)) * var ** (k // 2)


def exact_expectation(f: Polynomial, kernel: TransferKernel) -> float:
    """``<f>`` for a real-basis polynomial: Gaussian momenta times transfer q-moments."""
    params = kernel.params
    pvar = 1.0 / (params.beta * params.omega)
    cache: dict = {}
    total = 0.0
    for key, c in f.terms.items():
        pf = 1.0
        qpart = []
        for s, a, b in key:
            pf *= gaussian_moment(a, pvar)
            if pf == 0.0:
                break
            if b:
                qpart.append((s, b))
        if pf == 0.0:
            continue
        qk = tuple(qpart)
        if qk not in cache:
            cache[qk] = kernel.expectation(dict(qk)) if qk else 1.0
        total += c.real * pf * cache[qk]
    return total


def exact_sigma(f: Polynomial, kernel: TransferKernel) -> float:
    m1 = exact_expectation(f, kernel)
    m2 = exact_expectation(f * f, kernel)
    return math.sqrt(m2 - m1 * m1)
