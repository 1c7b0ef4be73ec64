"""Order-by-order construction of the formal integral ``T_chi H0``.

The generating sequence ``chi_1, chi_2, ...`` is found from

    Theta_s - L0 chi_s = Psi_s,
    chi_s = -L0^{-1} Pi_R Psi_s,   Theta_s = Pi_N Psi_s,

with ``Psi_1 = H1`` and, for ``s >= 2``,

    Psi_s = - sum_{l<s} (l/s) [chi_l, (T H0)_{s-l}] - sum_{l<s} (T Theta_l)_{s-l},

where ``(T f)_0 = f`` and ``(T f)_s = sum_{j=1..s} (j/s) [chi_j, (T f)_{s-j}]``.
All ladder work is done in the complex basis; ``P_j = (T H0)_j`` is cached
in the real basis as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import ModelParams, build_hamiltonian
from .poly import (
    COMPLEX,
    REAL,
    Polynomial,
    apply_homological,
    plus_norm,
    poisson_bracket,
    project_kernel,
    project_range,
    solve_homological,
    term_radius,
    to_complex,
    to_real,
)

MAX_ORDER = 4
MAX_SITES = 256
DEFAULT_TERM_CAP = 2_000_000


class DivergenceGuard(RuntimeError):
    """The construction produced more terms than the configured cap."""


def _real(f: Polynomial) -> Polynomial:
    # the ladder is real in (p, q); drop round-off imaginary parts
    r = to_real(f)
    scale = max(1.0, r.max_abs_coeff())
    if r.max_imag() > 1e-9 * scale:
        raise ArithmeticError(f"imaginary residue {r.max_imag():.3e} in real-basis image")
    return r.real_part()


class NormalFormState:
    """Ladders ``chi_s``, ``Theta_s``, ``Psi_s`` (complex basis) up to order ``s``."""

    def __init__(self, params: ModelParams, term_cap: int = DEFAULT_TERM_CAP):
        if params.boundary != "open":
            raise ValueError("the symbolic construction is defined on the open chain")
        if params.N > MAX_SITES:
            raise ValueError(f"symbolic work is capped at N <= {MAX_SITES}")
        self.params = params
        self.term_cap = term_cap
        self.H0, self.H1 = build_hamiltonian(params)
        self.H0c = to_complex(self.H0)
        self.H1c = to_complex(self.H1)
        self.chi: list[Polynomial] = [None]
        self.theta: list[Polynomial] = [self.H0c]
        self.psi: list[Polynomial] = [None]
        # memo of (T f)_s keyed by (name, s); names: "H0" or ("theta", l)
        self._T: dict = {("H0", 0): self.H0c}
        self._P_real: dict[int, Polynomial] = {0: self.H0}

    @property
    def order(self) -> int:
        return len(self.chi) - 1

    def _guard(self, f: Polynomial, what: str) -> Polynomial:
        if len(f) > self.term_cap:
            raise DivergenceGuard(
                f"{what} has {len(f)} terms (cap {self.term_cap}); "
                f"lower the order or N, or raise the cap"
            )
        return f

    def T(self, name, s: int) -> Polynomial:
        """``(T_chi f)_s`` for ``f = H0`` (name ``"H0"``) or ``f = Theta_l`` (name ``("theta", l)``)."""
        key = (name, s)
        if key in self._T:
            return self._T[key]
        if s == 0:
            base = self.theta[name[1]]
            self._T[key] = base
            return base
        if s > self.order:
            raise ValueError(f"(T f)_{s} needs chi_{s}; ladder only reaches {self.order}")
        acc = Polynomial.zero(COMPLEX)
        for j in range(1, s + 1):
            acc = acc + poisson_bracket(self.chi[j], self.T(name, s - j)) * (j / s)
        self._T[key] = self._guard(acc, f"(T f)_{s}")
        return self._T[key]

    def P(self, j: int) -> Polynomial:
        """``P_j = (T_chi H0)_j`` in the complex basis."""
        return self.T("H0", j)

    def P_real(self, j: int) -> Polynomial:
        if j not in self._P_real:
            self._P_real[j] = _real(self.P(j))
        return self._P_real[j]

    def advance(self) -> "NormalFormState":
        s = self.order + 1
        if s > MAX_ORDER:
            raise ValueError(f"orders above {MAX_ORDER} are not supported")
        if s == 1:
            psi = self.H1c
        else:
            psi = Polynomial.zero(COMPLEX)
            for l in range(1, s):
                psi = psi - poisson_bracket(self.chi[l], self.P(s - l)) * (l / s)
            for l in range(1, s):
                psi = psi - self.T(("theta", l), s - l)
        psi = self._guard(psi, f"Psi_{s}")
        w = self.params.omega
        chi = -solve_homological(project_range(psi), w)
        theta = project_kernel(psi)
        self.psi.append(psi)
        self.chi.append(chi)
        self.theta.append(theta)
        # caches (T H0)_s now that chi_s exists
        self.P(s)
        return self

    def ladder_residual(self, s: int) -> float:
        """Relative max-coefficient residual of ``Theta_s - L0 chi_s - Psi_s``."""
        w = self.params.omega
        lhs = self.theta[s] - apply_homological(self.chi[s], w)
        diff = lhs - self.psi[s]
        scale = max(self.psi[s].max_abs_coeff(), 1e-300)
        return diff.max_abs_coeff() / scale


def advance_order(state: NormalFormState) -> NormalFormState:
    return state.advance()


def build_state(params: ModelParams, order: int, term_cap: int = DEFAULT_TERM_CAP) -> NormalFormState:
    state = NormalFormState(params, term_cap=term_cap)
    while state.order < order:
        state.advance()
    return state


@dataclass
class TruncatedInvariant:
    n: int
    params: ModelParams
    Xn: Polynomial
    Xn_dot: Polynomial
    P: list  # P_0..P_n in the real basis
    theta1: Polynomial
    report: dict = field(default_factory=dict)
    state: NormalFormState | None = field(default=None, repr=False)

    @property
    def H(self) -> Polynomial:
        H0, H1 = build_hamiltonian(self.params)
        return H0 + H1


def build_invariant(params: ModelParams, n: int, state: NormalFormState | None = None,
                    term_cap: int = DEFAULT_TERM_CAP) -> TruncatedInvariant:
    """Assemble ``X_n = -Theta_1 + sum_{j=2..n} P_j`` and ``dX_n/dt = [P_n, H1]``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if state is None:
        state = build_state(params, n, term_cap=term_cap)
    elif state.order < n:
        while state.order < n:
            state.advance()
    theta1 = _real(state.theta[1])
    X = -theta1
    for j in range(2, n + 1):
        X = X + state.P_real(j)
    P = [state.P_real(j) for j in range(n + 1)]
    Xdot = poisson_bracket(P[n], state.H1)
    inv = TruncatedInvariant(n=n, params=params, Xn=X, Xn_dot=Xdot, P=P,
                             theta1=theta1, state=state)
    inv.report = verify_structure(inv)
    return inv


# -- structural claims -------------------------------------------------------

def bound_D(n: int) -> float:
    return 2.0 ** (12 * n) * math.factorial(n) ** 3


def bound_C(n: int) -> float:
    return 48.0 * 2.0 ** (12 * n) * math.factorial(n) * math.factorial(n + 1) ** 2


def split_by_degree(f: Polynomial) -> dict:
    """Map ``l -> part of degree 2l+2``; raises if an odd degree shows up."""
    parts: dict = {}
    for key, c in f.terms.items():
        d = sum(a + b for _, a, b in key)
        if d % 2:
            raise ArithmeticError(f"odd-degree term {key} where only even degrees are expected")
        parts.setdefault((d - 2) // 2, {})[key] = c
    return {l: Polynomial(f.basis, t) for l, t in sorted(parts.items())}


def _layer_report(f: Polynomial, order: int, eps: float, bound: float, want_parity: int):
    rows = []
    ok = True
    for l, part in split_by_degree(f).items():
        radius = max(term_radius(k) for k in part.terms)
        pdeg = {sum(a for _, a, _ in k) % 2 for k in part.terms}
        parity_ok = pdeg == {want_parity}
        radius_ok = 0 <= l <= order and radius <= order - l
        scale = math.comb(order, l) * eps ** (order - l) if 0 <= l <= order else 0.0
        norm = plus_norm(part)
        scaled = norm / scale if scale > 0 else math.inf
        bound_ok = scaled <= bound
        ok &= parity_ok and radius_ok and bound_ok
        rows.append({
            "l": l, "degree": 2 * l + 2, "terms": len(part), "radius": radius,
            "radius_max": order - l, "radius_ok": radius_ok,
            "parity_ok": parity_ok, "plus_norm": norm, "scaled_norm": scaled,
            "bound": bound, "margin": bound / scaled if scaled > 0 else math.inf,
            "bound_ok": bound_ok,
        })
    return rows, ok


def verify_structure(inv: TruncatedInvariant) -> dict:
    """Degree/radius/parity/norm report for ``P_n`` and ``dX_n/dt``.

    ``P_n`` is split as ``sum_l C(n,l) eps^(n-l) P_n^(l)`` with ``P_n^(l)`` of
    degree ``2l+2``; each layer must have radius ``<= n-l``, even p-parity and
    surrogate norm ``<= D_n``.  ``dX_n/dt`` is split the same way with ``n+1``
    in place of ``n`` and must be odd in p with norms ``<= C_n``.
    """
    n, eps = inv.n, inv.params.eps
    p_rows, p_ok = _layer_report(inv.P[n], n, eps, bound_D(n), 0)
    x_rows, x_ok = _layer_report(inv.Xn_dot, n + 1, eps, bound_C(n), 1)
    return {
        "n": n,
        "params": inv.params.as_dict(),
        "P_n": p_rows,
        "Xn_dot": x_rows,
        "P_terms": len(inv.P[n]),
        "Xn_terms": len(inv.Xn),
        "Xn_dot_terms": len(inv.Xn_dot),
        "ok": bool(p_ok and x_ok),
    }


def xdot_crosscheck(inv: TruncatedInvariant) -> float:
    """Relative difference between ``[X_n, H]`` and ``[P_n, H1]``."""
    H0, H1 = build_hamiltonian(inv.params)
    direct = poisson_bracket(inv.Xn, H0 + H1)
    diff = direct - inv.Xn_dot
    return diff.max_abs_coeff() / max(inv.Xn_dot.max_abs_coeff(), 1e-300)


def tbar(kappa: float, params: ModelParams) -> float:
    """Stability time ``exp[(kappa (eps + 1/beta))^(-1/4)]``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return math.exp((kappa * (params.eps + 1.0 / params.beta)) ** -0.25)
