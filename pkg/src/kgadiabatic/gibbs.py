"""Gibbs measure of the chain: Metropolis sampling and transfer-kernel oracles.

The momenta are exactly Gaussian with variance ``1/(beta omega)`` and
independent of everything else, so only the configurational density
``exp(-beta U_N(q)) / Z_N`` is sampled by Markov chain Monte Carlo.  The
transfer kernel discretizes the same density on a uniform grid and gives
partition functions, marginals and moments of the finite chain to near
machine precision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams


# -- momenta -------------------------------------------------------------------

def sample_p(params: ModelParams, count: int, seed) -> np.ndarray:
    """``count`` i.i.d. momentum vectors, shape ``(count, N)``."""
    rng = np.random.default_rng(seed)
    sd = 1.0 / math.sqrt(params.beta * params.omega)
    return rng.normal(0.0, sd, size=(count, params.N))


# -- Metropolis ----------------------------------------------------------------

@dataclass
class SamplerConfig:
    sweeps: int = 20_000
    burn_in: int = 2_000
    proposal_sigma: float | None = None
    acceptance_window: tuple = (0.25, 0.55)
    seed: int = 0
    n_chains: int = 1
    thin: int = 1

    def __post_init__(self):
        if self.sweeps <= 0 or self.burn_in < 0:
            raise ValueError("sweeps must be positive and burn_in non-negative")
        if self.burn_in >= self.sweeps:
            raise ValueError("burn_in must be smaller than sweeps")
        if self.n_chains < 1 or self.thin < 1:
            raise ValueError("n_chains and thin must be >= 1")
        if self.proposal_sigma is not None and not self.proposal_sigma > 0:
            raise ValueError("proposal_sigma must be positive")
        lo, hi = self.acceptance_window
        if not 0 < lo < hi < 1:
            raise ValueError("acceptance_window must satisfy 0 < lo < hi < 1")


@dataclass
class ChainState:
    q: np.ndarray
    p: np.ndarray
    sweep: int
    seed: int


@dataclass
class GibbsSamples:
    """Samples of the Gibbs measure.

    ``q`` and ``p`` have shape ``(n_chains, n_kept, N)``; flattened views put
    every chain's time series contiguously, which is what batch means need.
    """

    params: ModelParams
    q: np.ndarray
    p: np.ndarray
    acceptance: float
    proposal_sigma: float
    seed: int
    report: dict = field(default_factory=dict)

    @property
    def flat_q(self) -> np.ndarray:
        return self.q.reshape(-1, self.q.shape[-1])

    @property
    def flat_p(self) -> np.ndarray:
        return self.p.reshape(-1, self.p.shape[-1])

    def __len__(self):
        return self.q.shape[0] * self.q.shape[1]


def _local_delta(x_old, x_new, nb_sum, w, c, beta):
    dq2 = x_new * x_new - x_old * x_old
    return beta * (0.5 * w * dq2 + 0.25 * (x_new ** 4 - x_old ** 4) / (w * w)
                   + c * (x_new - x_old) * nb_sum)


def _sweep(q, rng, sigma, params, masks):
    """One checkerboard sweep in place; returns accepted count."""
    w = params.omega
    c = params.eps / w
    accepted = 0
    for mask in masks:
        nb = np.zeros_like(q)
        nb[:, 1:] += q[:, :-1]
        nb[:, :-1] += q[:, 1:]
        x_old = q[:, mask]
        x_new = x_old + sigma * rng.standard_normal(x_old.shape)
        d = _local_delta(x_old, x_new, nb[:, mask], w, c, params.beta)
        u = rng.random(x_old.shape)
        acc = np.log(u) < -d
        q[:, mask] = np.where(acc, x_new, x_old)
        accepted += int(acc.sum())
    return accepted


def mcmc_samples(params: ModelParams, config: SamplerConfig) -> GibbsSamples:
    """Random-walk Metropolis on ``exp(-beta U_N)`` with checkerboard sweeps.

    Even and odd sites are conditionally independent given the other
    sublattice, so each half-sweep updates one sublattice of every chain at
    once.  The step size is tuned towards the middle of the acceptance window
    during burn-in only and frozen afterwards.
    """
    if params.boundary != "open":
        raise ValueError("the sampler targets the open chain")
    rng = np.random.default_rng(config.seed)
    N, C = params.N, config.n_chains
    sigma = config.proposal_sigma or 2.4 / math.sqrt(params.beta * params.omega)
    masks = [np.arange(N) % 2 == 0, np.arange(N) % 2 == 1]
    q = rng.normal(0.0, 1.0 / math.sqrt(params.beta * params.omega), size=(C, N))
    lo, hi = config.acceptance_window
    target = 0.5 * (lo + hi)
    window = 0
    window_acc = 0
    for sweep in range(config.burn_in):
        window_acc += _sweep(q, rng, sigma, params, masks)
        window += C * N
        if (sweep + 1) % 50 == 0:
            rate = window_acc / window
            sigma *= math.exp(rate - target)
            window = window_acc = 0
    n_keep = (config.sweeps - config.burn_in) // config.thin
    qs = np.empty((C, n_keep, N))
    acc_total = 0
    for k in range(n_keep):
        for _ in range(config.thin):
            acc_total += _sweep(q, rng, sigma, params, masks)
        qs[:, k, :] = q
    acceptance = acc_total / (C * N * n_keep * config.thin)
    report = {"acceptance": acceptance, "proposal_sigma": sigma, "in_window": lo <= acceptance <= hi}
    if not report["in_window"]:
        warnings.warn(f"acceptance {acceptance:.3f} outside window {config.acceptance_window}")
    p_seed = np.random.SeedSequence(config.seed).spawn(1)[0]
    ps = sample_p(params, C * n_keep, p_seed).reshape(C, n_keep, N)
    return GibbsSamples(params, qs, ps, acceptance, sigma, config.seed, report)


def mcmc_run(params: ModelParams, config: SamplerConfig):
    """Stream of ``ChainState`` for a single chain (``config.n_chains`` ignored)."""
    cfg = SamplerConfig(sweeps=config.sweeps, burn_in=config.burn_in,
                        proposal_sigma=config.proposal_sigma,
                        acceptance_window=config.acceptance_window,
                        seed=config.seed, n_chains=1, thin=config.thin)
    s = mcmc_samples(params, cfg)
    for k in range(s.q.shape[1]):
        yield ChainState(q=s.q[0, k].copy(), p=s.p[0, k].copy(),
                         sweep=cfg.burn_in + (k + 1) * cfg.thin, seed=cfg.seed)


def metropolis_matrix(energies, beta: float) -> np.ndarray:
    """Transition matrix of Metropolis with a uniform proposal over the other states."""
    e = np.asarray(energies, dtype=float)
    k = len(e)
    T = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                T[i, j] = min(1.0, math.exp(-beta * (e[j] - e[i]))) / (k - 1)
        T[i, i] = 1.0 - T[i].sum()
    return T


# -- transfer kernel -----------------------------------------------------------

class GridConvergenceError(RuntimeError):
    pass


def default_half_width(params: ModelParams) -> float:
    """Integration cutoff: 8 Gaussian widths (or 8), widened until the
    quartic density is negligible."""
    L = 8.0 * max(1.0, 1.0 / math.sqrt(params.beta * params.omega))
    w = params.omega
    # coupling can at most shift the effective quadratic stiffness to omega - 2 eps/omega
    stiff = max(w - 2 * params.eps / w, 1e-3)
    while params.beta * (0.5 * stiff * L * L + L ** 4 / (4 * w * w)) < 40.0:
        L *= 1.25
    return L


@dataclass
class TransferKernel:
    """Uniform-grid discretization of the chain's configurational density.

    The symmetric matrix ``A[j, k] = sqrt(W_j) exp(-beta eps x_j x_k / omega) sqrt(W_k)``
    with ``W_j = h exp(-beta V(x_j))`` and ``V(x) = omega x^2/2 + x^4/(4 omega^2)``
    gives ``Z_N = b^T A^(N-1) b`` (``b = sqrt(W)``) for the open chain and
    ``Q_N = tr A^N`` for the periodic one.
    """

    params: ModelParams
    M: int = 401
    L: float | None = None

    def __post_init__(self):
        if self.M < 200:
            raise ValueError("transfer grid needs at least 200 nodes")
        if self.L is None:
            self.L = default_half_width(self.params)
        self.x = np.linspace(-self.L, self.L, self.M)
        self.h = self.x[1] - self.x[0]
        w = self.params.omega
        self.V = 0.5 * w * self.x ** 2 + self.x ** 4 / (4 * w * w)
        self.weights = np.full(self.M, self.h)
        self.W = self.weights * np.exp(-self.params.beta * self.V)
        self.C = np.exp(-self.params.beta * self.params.eps / w * np.outer(self.x, self.x))
        self.sqW = np.sqrt(self.W)
        self.A = self.sqW[:, None] * self.C * self.sqW[None, :]

    @property
    def K(self) -> np.ndarray:
        """Kernel ``exp(-beta[V(x)/2 + V(y)/2 + eps x y / omega])`` on the grid."""
        e = np.exp(-0.5 * self.params.beta * self.V)
        return e[:, None] * self.C * e[None, :]

    def refined(self) -> "TransferKernel":
        return TransferKernel(self.params, M=2 * self.M - 1, L=self.L)

    # messages carry a log scale to avoid underflow on long chains
    def _propagate(self, vec, logscale, inserts=None):
        vec = self.A @ vec
        if inserts is not None:
            vec = vec * inserts
        s = np.abs(vec).max()
        if s == 0:
            return vec, logscale
        return vec / s, logscale + math.log(s)

    def log_Z(self, N: int | None = None) -> float:
        N = self.params.N if N is None else N
        v, ls = self.sqW.copy(), 0.0
        for _ in range(N - 1):
            v, ls = self._propagate(v, ls)
        return ls + math.log(float(self.sqW @ v))

    def log_Q(self, N: int | None = None) -> float:
        """Periodic partition function with the closing bond ``eps q_N q_1 / omega``."""
        N = self.params.N if N is None else N
        lam = np.linalg.eigvalsh(self.A)
        lmax = np.abs(lam).max()
        return N * math.log(lmax) + math.log(np.sum((lam / lmax) ** N))

    def expectation(self, factors: dict, N: int | None = None) -> float:
        """``<prod_site f_site(q_site)>`` on the open chain.

        ``factors`` maps 1-based site to either an integer power or a callable
        evaluated on grid nodes.
        """
        N = self.params.N if N is None else N
        ins = {}
        for site, f in factors.items():
            if not 1 <= site <= N:
                raise ValueError(f"site {site} outside 1..{N}")
            vals = self.x ** f if isinstance(f, (int, np.integer)) else np.asarray(f(self.x), float)
            ins[site] = vals
        num, den = self._sandwich(ins, N), self._sandwich({}, N)
        return num / den

    def _sandwich(self, ins, N):
        v = self.sqW * ins.get(1, 1.0)
        ls = 0.0
        s = np.abs(v).max()
        v, ls = v / s, math.log(s)
        for site in range(2, N + 1):
            v, ls = self._propagate(v, ls, ins.get(site))
        return math.exp(ls) * float(self.sqW @ v)

    def moments_table(self, max_power: int = 6, N: int | None = None):
        """All one-site ``<q_i^k>`` for ``k <= max_power``."""
        N = self.params.N if N is None else N
        return {(i, k): self.expectation({i: k}, N) for i in range(1, N + 1)
                for k in range(1, max_power + 1)}

    def pair_covariance(self, i: int, j: int, f=2, g=2, N: int | None = None) -> float:
        """``<f(q_i) g(q_j)> - <f(q_i)><g(q_j)>`` (integer powers or callables)."""
        if i == j:
            if isinstance(f, int) and isinstance(g, int):
                return self.expectation({i: f + g}, N) - self.expectation({i: f}, N) * self.expectation({i: g}, N)
            fx = f(self.x) if callable(f) else self.x ** f
            gx = g(self.x) if callable(g) else self.x ** g
            return (self.expectation({i: lambda _x: fx * gx}, N)
                    - self.expectation({i: lambda _x: fx}, N) * self.expectation({i: lambda _x: gx}, N))
        return (self.expectation({i: f, j: g}, N)
                - self.expectation({i: f}, N) * self.expectation({j: g}, N))

    # -- marginals ---------------------------------------------------------
    def marginal(self, sites, points, N: int | None = None) -> np.ndarray:
        """Joint marginal density ``F^(N)_s`` of ``q_sites`` at ``points``.

        ``points`` has shape ``(P, s)``; sites are 1-based and increasing.
        Off-grid evaluation uses the Nystrom extension of the kernel.
        """
        N = self.params.N if N is None else N
        sites = list(sites)
        if sorted(set(sites)) != sites:
            raise ValueError("sites must be strictly increasing")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        beta, w = self.params.beta, self.params.omega
        c = beta * self.params.eps / w

        def V(y):
            return 0.5 * w * y * y + y ** 4 / (4 * w * w)

        logZ = self.log_Z(N)
        out = np.empty(pts.shape[0])
        for n_pt, ys in enumerate(pts):
            pinned = dict(zip(sites, ys))
            # message over the grid for a free previous site, or a scalar value
            # y for a pinned previous site; weights carry the site's own factor
            vec = None
            prev_y = None
            log_acc = 0.0
            for site in range(1, N + 1):
                if site in pinned:
                    y = pinned[site]
                    if site == 1:
                        val = 1.0
                    elif prev_y is not None:
                        val = math.exp(-c * prev_y * y)
                    else:
                        val = float(vec @ np.exp(-c * self.x * y))
                    log_acc += math.log(val) - beta * V(y)
                    vec, prev_y = None, y
                else:
                    if site == 1:
                        msg = np.ones(self.M)
                    elif prev_y is not None:
                        msg = np.exp(-c * prev_y * self.x)
                    else:
                        msg = self.C @ vec
                    vec = msg * self.W
                    s = vec.max()
                    vec = vec / s
                    log_acc += math.log(s)
                    prev_y = None
            if vec is not None:
                log_acc += math.log(vec.sum())
            out[n_pt] = math.exp(log_acc - logZ)
        return out


def transfer_moments(kernel: TransferKernel, observables=None, check: bool = True,
                     tol: float = 1e-6) -> dict:
    """Exact moments of the open chain from the transfer kernel.

    ``observables`` is a list of ``{site: power}`` dicts; by default all
    one-site moments up to degree 6 and nearest-neighbour products.  With
    ``check`` the computation is repeated on a grid of half the spacing and a
    disagreement above ``tol`` raises ``GridConvergenceError``.
    """
    N = kernel.params.N
    if observables is None:
        observables = [{i: k} for i in range(1, N + 1) for k in range(1, 7)]
        observables += [{i: 1, i + 1: 1} for i in range(1, N)]
    out = {"log_Z": kernel.log_Z()}
    vals = [kernel.expectation(o) for o in observables]
    if check:
        fine = kernel.refined()
        dz = abs(fine.log_Z() - out["log_Z"])
        fvals = [fine.expectation(o) for o in observables]
        scale = max(1.0, max(abs(v) for v in vals))
        dv = max(abs(a - b) for a, b in zip(vals, fvals)) / scale
        out["refinement_delta"] = max(dz, dv)
        if out["refinement_delta"] > tol:
            raise GridConvergenceError(f"grid refinement changed results by {out['refinement_delta']:.2e}")
    out["moments"] = [(o, v) for o, v in zip(observables, vals)]
    return out


def z_single_site(params: ModelParams) -> float:
    """One-site configurational integral ``int exp(-beta V(x)) dx``."""
    from scipy.integrate import quad

    w, b = params.omega, params.beta
    L = default_half_width(params)
    val, _ = quad(lambda x: math.exp(-b * (0.5 * w * x * x + x ** 4 / (4 * w * w))), -L, L,
                  epsabs=0, epsrel=1e-13, limit=200)
    return val


def quadrature_expectation(params: ModelParams, factors: dict, nodes: int = 200) -> float:
    """``<prod q_site^power>`` by tensor-product Gauss-Legendre quadrature.

    Direct integration of ``exp(-beta U_N)`` over ``[-L, L]^N``, independent
    of the transfer grid; practical for ``N <= 3``.
    """
    N = params.N
    if N > 3:
        raise ValueError("tensor quadrature is meant for N <= 3")
    L = default_half_width(params)
    t, w = np.polynomial.legendre.leggauss(nodes)
    x, w = L * t, L * w
    grids = np.meshgrid(*([x] * N), indexing="ij", sparse=True)
    wts = np.ones([nodes] * N)
    for k in range(N):
        shape = [1] * N
        shape[k] = nodes
        wts = wts * w.reshape(shape)
    U = potential_grid(grids, params)
    dens = wts * np.exp(-params.beta * (U - U.min()))
    obs = np.ones_like(dens)
    for site, k in factors.items():
        obs = obs * grids[site - 1] ** k
    return float(np.sum(dens * obs) / np.sum(dens))


def potential_grid(grids, params: ModelParams):
    """Open-chain ``U_N`` on a broadcast grid of coordinates."""
    w = params.omega
    U = 0.0
    for g in grids:
        U = U + 0.5 * w * g * g + g ** 4 / (4 * w * w)
    for a, b in zip(grids, grids[1:]):
        U = U + params.eps / w * a * b
    return U


# -- marginal-probability functional forms ----------------------------------

def block_count(sites) -> int:
    """Number of maximal runs of consecutive indices."""
    s = sorted(sites)
    if not s:
        return 0
    return 1 + sum(1 for a, b in zip(s, s[1:]) if b != a + 1)


def boundary_sites(sites) -> list:
    """Sites lying at the edge of their block (isolated sites count once)."""
    s = sorted(sites)
    ss = set(s)
    return [i for i in s if (i - 1 not in ss) or (i + 1 not in ss)]


@dataclass
class MarginalQuery:
    sites: tuple
    points: np.ndarray | None = None

    @property
    def blocks(self) -> int:
        return block_count(self.sites)


def n_free(sites, ys, params: ModelParams) -> float:
    """Free-boundary comparison density ``n_{s,x}`` (unnormalized)."""
    b, w, e = params.beta, params.omega, params.eps
    val = sum(y * y / (2 * w) + y ** 4 / (4 * w * w) for y in ys)
    pos = dict(zip(sites, ys))
    for i, y in pos.items():
        if i + 1 in pos:
            val += e * (y - pos[i + 1]) ** 2 / (2 * w)
    return math.exp(-b * val)


def n_fixed(sites, ys, params: ModelParams) -> float:
    """Fixed-boundary comparison density ``n~_{s,x}`` (unnormalized)."""
    b, w, e = params.beta, params.omega, params.eps
    val = sum(0.5 * w * y * y + y ** 4 / (4 * w * w) for y in ys)
    pos = dict(zip(sites, ys))
    for i, y in pos.items():
        if i + 1 in pos:
            val += e * y * pos[i + 1] / w
    return math.exp(-b * val)


def marginal_ratios(query: MarginalQuery, params: ModelParams, M: int = 401) -> dict:
    """Normalized upper and lower ratios of the marginal density on a point grid.

    upper: ``sup F / (n (beta/2 pi omega)^(s/2))``
    lower: ``inf F / (n~ (beta/2 pi omega)^(s/2) exp(-8 eps x sqrt(beta/2omega) sum|q_m|))``
    """
    kernel = TransferKernel(params, M=M)
    sites = tuple(query.sites)
    s = len(sites)
    if query.points is None:
        sd = 1.0 / math.sqrt(params.beta * params.omega)
        g = np.linspace(-3 * sd, 3 * sd, 13 if s == 1 else 7)
        pts = np.array(np.meshgrid(*([g] * s), indexing="ij")).reshape(s, -1).T
    else:
        pts = np.atleast_2d(query.points)
    F = kernel.marginal(sites, pts)
    norm = (params.beta / (2 * math.pi * params.omega)) ** (s / 2)
    xblocks = block_count(sites)
    bsites = boundary_sites(sites)
    idx = [sites.index(m) for m in bsites]
    upper = []
    lower = []
    for f, ys in zip(F, pts):
        upper.append(f / (n_free(sites, ys, params) * norm))
        damp = math.exp(-8 * params.eps * xblocks * math.sqrt(params.beta / (2 * params.omega))
                        * sum(abs(ys[k]) for k in idx))
        lower.append(f / (n_fixed(sites, ys, params) * norm * damp))
    return {"sites": sites, "blocks": xblocks, "N": params.N,
            "sup_upper": float(np.max(upper)), "inf_lower": float(np.min(lower)),
            "upper": np.asarray(upper), "lower": np.asarray(lower), "points": pts}


def marginal_bound_check(query: MarginalQuery, params: ModelParams, Ns=range(4, 9),
                         tolerance: float = 0.2) -> dict:
    """N-uniformity of the marginal ratios across chain lengths."""
    if len(query.sites) > 3:
        raise ValueError("marginal checks support at most 3 sites")
    rows = []
    for N in Ns:
        if N > 8:
            raise ValueError("marginal checks run in the quadrature regime N <= 8")
        if max(query.sites) > N:
            raise ValueError(f"site {max(query.sites)} outside chain of length {N}")
        r = marginal_ratios(query, params.with_(N=N))
        rows.append({"N": N, "sup_upper": r["sup_upper"], "inf_lower": r["inf_lower"]})
    sup = np.array([r["sup_upper"] for r in rows])
    inf = np.array([r["inf_lower"] for r in rows])
    sup_var = float((sup.max() - sup.min()) / sup.min())
    inf_var = float((inf.max() - inf.min()) / inf.min())
    return {"sites": tuple(query.sites), "blocks": query.blocks, "rows": rows,
            "sup_variation": sup_var, "inf_variation": inf_var,
            "passed": bool(sup_var < tolerance and inf.min() > 0 and inf_var < tolerance)}


def partition_ratio_scan(params: ModelParams, Ns=range(8, 33), M: int = 401) -> dict:
    """``(Q_{N-1}/Q_N) sqrt(2 pi omega / beta)`` for the periodic chain."""
    kernel = TransferKernel(params.with_(boundary="periodic"), M=M)
    fac = math.sqrt(2 * math.pi * params.omega / params.beta)
    rows = []
    for N in Ns:
        r = math.exp(kernel.log_Q(N - 1) - kernel.log_Q(N)) * fac
        rows.append((N, r))
    vals = np.array([r for _, r in rows])
    return {"rows": rows, "K0_fit": float(vals.max()),
            "variation": float((vals.max() - vals.min()) / vals.min())}
