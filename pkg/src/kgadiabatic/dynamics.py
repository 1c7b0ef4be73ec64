"""Hamiltonian flow of the chain and equilibrium time autocorrelations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import estimators as est
from .model import ModelParams, energy, force

# Yoshida's fourth-order triple-jump coefficients for composing Verlet steps
_CBRT2 = 2.0 ** (1.0 / 3.0)
_Y4 = (1.0 / (2.0 - _CBRT2), -_CBRT2 / (2.0 - _CBRT2), 1.0 / (2.0 - _CBRT2))


class EnergyDriftError(RuntimeError):
    pass


@dataclass
class IntegratorConfig:
    dt: float | None = None  # default 0.01 / omega
    t_max: float = 10.0
    ensemble: int = 1000
    stride: int = 1
    seed: int = 0
    scheme: str = "verlet4"  # "verlet" or "verlet4" (triple-jump composition)
    times: tuple | None = None  # explicit record times; overrides the default grid
    n_times: int = 40
    drift_tol: float = 1e-4

    def resolved_dt(self, params: ModelParams) -> float:
        return 0.01 / params.omega if self.dt is None else self.dt

    def validate(self, params: ModelParams):
        dt = self.resolved_dt(params)
        if not 0 < dt <= 0.1 / params.omega + 1e-15:
            raise ValueError(f"dt={dt} must lie in (0, 0.1/omega]")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.scheme not in ("verlet", "verlet4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class Trajectory:
    times: np.ndarray  # (T,)
    q: np.ndarray  # (T, M, N)
    p: np.ndarray
    energy_drift: float


def record_grid(t_max: float, dt: float, n_times: int = 40) -> np.ndarray:
    """0 followed by a logarithmic grid up to ``t_max``, snapped to multiples of ``dt``."""
    t_min = max(dt, t_max * 1e-3)
    grid = np.geomspace(t_min, t_max, n_times)
    steps = np.unique(np.maximum(1, np.round(grid / dt)).astype(np.int64))
    return np.concatenate([[0.0], steps * dt])


def _verlet_step(q, p, h, params, quartic, f=None):
    """Kick-drift-kick step; ``f`` is the force at ``q`` if already known."""
    w = params.omega
    if f is None:
        f = force(q, params, quartic)
    p = p + 0.5 * h * f
    q = q + h * w * p
    f = force(q, params, quartic)
    p = p + 0.5 * h * f
    return q, p, f


def step(q, p, dt, params: ModelParams, scheme: str = "verlet4", quartic: bool = True, f=None):
    """One step of ``dq/dt = omega p, dp/dt = -dU/dq``.

    Returns ``(q, p, f)`` with ``f`` the force at the new positions, which can
    be passed back in to save one force evaluation per step.
    """
    if scheme == "verlet":
        return _verlet_step(q, p, dt, params, quartic, f)
    for c in _Y4:
        q, p, f = _verlet_step(q, p, c * dt, params, quartic, f)
    return q, p, f


def integrate(q0, p0, params: ModelParams, config: IntegratorConfig, quartic: bool = True) -> Trajectory:
    """Integrate an ensemble of states and record them on ``config.times``.

    ``quartic=False`` switches off the on-site quartic term; it exists only
    to test the integrator against the harmonic chain.
    """
    config.validate(params)
    dt = config.resolved_dt(params)
    q = np.atleast_2d(np.array(q0, dtype=float))
    p = np.atleast_2d(np.array(p0, dtype=float))
    times = (np.asarray(config.times, dtype=float) if config.times is not None
             else record_grid(config.t_max, dt, config.n_times))
    steps = np.round(times / dt).astype(np.int64)
    if np.any(np.abs(steps * dt - times) > 1e-9 * max(1.0, times.max())):
        raise ValueError("record times must be multiples of dt")
    order = np.argsort(steps)
    e0 = energy(q, p, params, quartic)
    Q = np.empty((len(times),) + q.shape)
    P = np.empty_like(Q)
    drift = 0.0
    cur = 0
    f = None
    for k in order:
        target = steps[k]
        while cur < target:
            q, p, f = step(q, p, dt, params, config.scheme, quartic, f)
            cur += 1
        Q[k], P[k] = q, p
        e = energy(q, p, params, quartic)
        drift = max(drift, float(np.max(np.abs(e - e0) / np.abs(e0))))
    if drift > config.drift_tol:
        raise EnergyDriftError(
            f"relative energy drift {drift:.2e} exceeds {config.drift_tol:.0e}; use a smaller dt"
        )
    return Trajectory(times=times, q=Q, p=P, energy_drift=drift)


def harmonic_map_solution(q0, p0, omega: float, dt: float, n_steps, scheme: str = "verlet4"):
    """Closed-form iterate of the integrator on ``H = omega (p^2 + q^2)/2``.

    The one-step map is a linear symplectic matrix ``A``; for ``|tr A| < 2``
    one has ``A^n = cos(n th) I + sin(n th)/sin(th) (A - cos(th) I)`` with
    ``cos th = tr A / 2``.
    """
    params = ModelParams(2, 0.0, 1.0)
    if abs(params.omega - omega) > 0:
        raise ValueError("closed form implemented for the decoupled unit-frequency chain")
    cols = []
    for e in (np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])):
        qq, pp, _ = step(e[:, :1].repeat(2, 1), e[:, 1:].repeat(2, 1), dt, params, scheme, quartic=False)
        cols.append([qq[0, 0], pp[0, 0]])
    A = np.array(cols).T
    th = math.acos(0.5 * np.trace(A))
    n = np.asarray(n_steps, dtype=float)
    c, s = np.cos(n * th), np.sin(n * th) / math.sin(th)
    x0 = np.array([q0, p0], dtype=float)
    Ax0 = A @ x0
    qn = c * x0[0] + s * (Ax0[0] - math.cos(th) * x0[0])
    pn = c * x0[1] + s * (Ax0[1] - math.cos(th) * x0[1])
    return qn, pn


def tangent_determinant(q, p, params: ModelParams, dt: float, scheme: str = "verlet4",
                        h: float = 1e-6) -> float:
    """Determinant of the one-step tangent map by central differences."""
    x0 = np.concatenate([q, p])
    n = len(q)
    J = np.empty((2 * n, 2 * n))
    for k in range(2 * n):
        d = np.zeros(2 * n)
        d[k] = h
        xp, xm = x0 + d, x0 - d
        qp_, pp_, _ = step(xp[None, :n], xp[None, n:], dt, params, scheme)
        qm_, pm_, _ = step(xm[None, :n], xm[None, n:], dt, params, scheme)
        J[:, k] = (np.concatenate([qp_[0], pp_[0]]) - np.concatenate([qm_[0], pm_[0]])) / (2 * h)
    return float(np.linalg.det(J))


# -- autocorrelation ----------------------------------------------------------------

@dataclass
class CorrCurve:
    times: np.ndarray
    C: np.ndarray
    se: np.ndarray
    eta: float | None = None
    values: np.ndarray | None = field(default=None, repr=False)  # (T, M) observable samples

    @property
    def reference(self) -> np.ndarray:
        if self.eta is None:
            return np.full_like(self.times, np.nan)
        return 1.0 - 0.5 * (self.eta * self.times) ** 2

    def rows(self):
        ref = self.reference
        return [(float(t), float(c), float(s), float(b))
                for t, c, s, b in zip(self.times, self.C, self.se, ref)]


def _corr_of_columns(x0, xt, n_batches):
    return est.correlation(xt, x0, n_batches)


def autocorrelation(evaluate, traj: Trajectory, n_batches: int = est.MIN_BATCHES,
                    eta: float | None = None) -> CorrCurve:
    """``C_X(t) = rho(X_t, X_0)`` over an equilibrium ensemble.

    ``evaluate(q, p)`` maps arrays of shape (M, N) to (M,).  The correlation
    coefficient is formed on the same ensemble at both times, so ``C(0) = 1``
    and ``|C| <= 1`` hold exactly; errors are delete-one-batch jackknife over
    trajectories.
    """
    vals = np.array([evaluate(traj.q[k], traj.p[k]) for k in range(len(traj.times))])
    x0 = vals[0]
    if not np.std(x0) > 0:
        raise ValueError("observable has zero variance on the ensemble")
    C = np.empty(len(traj.times))
    se = np.empty(len(traj.times))
    for k in range(len(traj.times)):
        if k == 0 or np.array_equal(vals[k], x0):
            C[k], se[k] = 1.0, 0.0
            continue
        r = _corr_of_columns(x0, vals[k], n_batches)
        C[k], se[k] = r.value, r.std_error
    return CorrCurve(traj.times, C, se, eta, vals)


def verify_autocorr_bound(curve: CorrCurve, eta: est.MCEstimate, stop_level: float | None = 0.5) -> dict:
    """Check ``C(t) >= 1 - eta^2 t^2 / 2`` within three combined standard errors.

    The check runs while the bound stays above ``stop_level`` (the whole grid
    when ``stop_level`` is None).
    """
    t = curve.times
    bound = 1.0 - 0.5 * (eta.value * t) ** 2
    se_bound = eta.value * t * t * eta.std_error
    comb = np.sqrt(curve.se ** 2 + se_bound ** 2)
    mask = np.ones_like(t, dtype=bool) if stop_level is None else bound >= stop_level
    slack = curve.C - (bound - 3 * comb)
    viol = np.where(mask & (slack < 0))[0]
    return {
        "checked_points": int(mask.sum()),
        "t_checked_max": float(t[mask].max()) if mask.any() else 0.0,
        "min_slack": float(slack[mask].min()) if mask.any() else float("nan"),
        "first_violation": float(t[viol[0]]) if len(viol) else None,
        "passed": len(viol) == 0,
    }


def displacement_check(curve: CorrCurve, eta: est.MCEstimate, lam: float = 2.0,
                       stop_level: float | None = 0.5) -> dict:
    """Empirical ``P(|X_t - X| >= lam sigma_X) <= (eta t)^2 / lam^2`` within 3 SE."""
    vals = curve.values
    x0 = vals[0]
    sig = x0.std()
    t = curve.times
    rows = []
    ok = True
    for k in range(len(t)):
        bound = (eta.value * t[k]) ** 2 / lam ** 2
        if stop_level is not None and 1.0 - 0.5 * (eta.value * t[k]) ** 2 < stop_level:
            break
        frac = float(np.mean(np.abs(vals[k] - x0) >= lam * sig))
        M = len(x0)
        se = math.sqrt(max(frac * (1 - frac), 1.0 / M) / M)
        se_b = 2 * bound * eta.std_error / eta.value if eta.value > 0 else 0.0
        good = frac <= bound + 3 * math.hypot(se, se_b)
        ok &= good
        rows.append({"t": float(t[k]), "frac": frac, "se": se, "bound": bound, "ok": good})
    return {"lambda": lam, "rows": rows, "passed": ok}


def relaxation_bound(eta: est.MCEstimate | float, a: float):
    """Lower bound ``sqrt(2(1-a)) / eta`` on the relaxation time at level ``a``."""
    if not 0 < a < 1:
        raise ValueError("level a must lie in (0, 1)")
    if isinstance(eta, est.MCEstimate):
        val = math.sqrt(2 * (1 - a)) / eta.value
        se = val * eta.std_error / eta.value
        return est.MCEstimate(val, se, eta.n_samples, seed=eta.seed)
    return math.sqrt(2 * (1 - a)) / eta


def first_crossing(curve: CorrCurve, level: float) -> float | None:
    """First grid time at which ``C`` drops below ``level`` (None if never)."""
    below = np.where(curve.C < level)[0]
    return float(curve.times[below[0]]) if len(below) else None


def early_decay_exponent(curve: CorrCurve, t_max: float) -> tuple:
    """Log-log slope of ``1 - C(t)`` for ``0 < t <= t_max`` with its standard error."""
    m = (curve.times > 0) & (curve.times <= t_max) & (curve.C < 1)
    x = np.log(curve.times[m])
    y = np.log(1.0 - curve.C[m])
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(len(x) - 2, 1)
    s2 = float(np.sum((y - A @ coef) ** 2)) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(math.sqrt(cov[0, 0]))
