"""Sparse polynomials on lattice phase space.

A monomial is keyed by a tuple of ``(site, a, b)`` triples with strictly
increasing 1-based sites and no ``(0, 0)`` exponent pairs.  In the real
basis ``a`` is the exponent of ``p_site`` and ``b`` the exponent of
``q_site``; in the complex basis ``a`` is the exponent of ``xi_site`` and
``b`` the exponent of ``eta_site``.

The complex variables are

    q = (xi + i eta) / sqrt(2),    p = (i xi + eta) / sqrt(2),

a canonical change of variables (xi is the coordinate, eta its momentum)
under which ``H0 = i omega sum xi eta`` and the homological operator
``L0 = [H0, .]`` acts diagonally, ``L0 xi^j eta^k = i omega (|k|-|j|) xi^j eta^k``.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

REAL = "pq"
COMPLEX = "xieta"
PRUNE_TOL = 1e-14

_SQRT2_INV = 1.0 / math.sqrt(2.0)


class BasisMismatch(ValueError):
    pass


class KernelTermsError(ValueError):
    """Raised when the homological equation is handed kernel terms."""


@dataclass(frozen=True)
class LocalityProfile:
    degrees: tuple[int, ...]
    radius: int
    parity_p: str  # "even", "odd", "mixed" or "empty"

    @property
    def degree(self) -> int:
        return max(self.degrees) if self.degrees else 0


def _check_key(key):
    last = 0
    for site, a, b in key:
        if site <= last:
            raise ValueError(f"sites must be strictly increasing and >= 1: {key}")
        if a < 0 or b < 0 or a + b == 0:
            raise ValueError(f"bad exponent pair at site {site}: {key}")
        last = site


def _merge(k1, k2):
    """Product of two monomial keys."""
    if not k1:
        return k2
    if not k2:
        return k1
    out = []
    i = j = 0
    n1, n2 = len(k1), len(k2)
    while i < n1 and j < n2:
        s1, s2 = k1[i][0], k2[j][0]
        if s1 < s2:
            out.append(k1[i])
            i += 1
        elif s2 < s1:
            out.append(k2[j])
            j += 1
        else:
            out.append((s1, k1[i][1] + k2[j][1], k1[i][2] + k2[j][2]))
            i += 1
            j += 1
    out.extend(k1[i:])
    out.extend(k2[j:])
    return tuple(out)


class Polynomial:
    """Immutable sparse polynomial with complex coefficients.

    Parameters
    ----------
    basis : {"pq", "xieta"}
    terms : mapping from monomial key to coefficient.  Coefficients with
        modulus below ``PRUNE_TOL`` are dropped.
    """

    __slots__ = ("basis", "terms", "_profile", "_hash")

    def __init__(self, basis: str, terms=None, *, check: bool = False, prune: float = PRUNE_TOL):
        if basis not in (REAL, COMPLEX):
            raise ValueError(f"unknown basis {basis!r}")
        self.basis = basis
        clean = {}
        if terms:
            for key, c in terms.items():
                c = complex(c)
                if abs(c) > prune:
                    if check:
                        _check_key(key)
                    clean[key] = c
        self.terms = clean
        self._profile = None
        self._hash = None

    # -- constructors -------------------------------------------------------
    @classmethod
    def zero(cls, basis=REAL):
        return cls(basis)

    @classmethod
    def constant(cls, c, basis=REAL):
        return cls(basis, {(): c})

    @classmethod
    def monomial(cls, exps: dict, coeff=1.0, basis=REAL):
        """Build ``coeff * prod_site x_site^a y_site^b`` from ``{site: (a, b)}``."""
        key = tuple(sorted((s, a, b) for s, (a, b) in exps.items() if a + b > 0))
        _check_key(key)
        return cls(basis, {key: coeff})

    # -- basic protocol ------------------------------------------------------
    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        return f"Polynomial({self.basis!r}, {len(self.terms)} terms)"

    def __str__(self):
        if not self.terms:
            return "0"
        names = ("p", "q") if self.basis == REAL else ("xi", "eta")
        parts = []
        for key in sorted(self.terms):
            c = self.terms[key]
            fac = []
            for s, a, b in key:
                if a:
                    fac.append(f"{names[0]}{s}" + (f"^{a}" if a > 1 else ""))
                if b:
                    fac.append(f"{names[1]}{s}" + (f"^{b}" if b > 1 else ""))
            parts.append(f"({c:.6g})" + ("*" + "*".join(fac) if fac else ""))
        return " + ".join(parts)

    def _same_basis(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        if other.basis != self.basis:
            raise BasisMismatch(f"{self.basis} vs {other.basis}")
        return True

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.basis == other.basis and self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.basis, frozenset(self.terms.items())))
        return self._hash

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = Polynomial.constant(other, self.basis)
        if self._same_basis(other) is NotImplemented:
            return NotImplemented
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return Polynomial(self.basis, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.basis, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            other = complex(other)
            return Polynomial(self.basis, {k: c * other for k, c in self.terms.items()})
        if self._same_basis(other) is NotImplemented:
            return NotImplemented
        out = defaultdict(complex)
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                out[_merge(k1, k2)] += c1 * c2
        return Polynomial(self.basis, out)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(1.0, self.basis)
        for _ in range(k):
            out = out * self
        return out

    # -- inspection ----------------------------------------------------------
    def coeff(self, exps: dict) -> complex:
        key = tuple(sorted((s, a, b) for s, (a, b) in exps.items() if a + b > 0))
        return self.terms.get(key, 0.0)

    def sites(self) -> set:
        return {s for key in self.terms for s, _, _ in key}

    def degrees(self) -> set:
        return {sum(a + b for _, a, b in key) for key in self.terms}

    def homogeneous_part(self, degree: int) -> "Polynomial":
        return Polynomial(
            self.basis,
            {k: c for k, c in self.terms.items() if sum(a + b for _, a, b in k) == degree},
        )

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def real_part(self) -> "Polynomial":
        return Polynomial(self.basis, {k: c.real for k, c in self.terms.items()})

    def max_imag(self) -> float:
        return max((abs(c.imag) for c in self.terms.values()), default=0.0)

    def shift(self, offset: int) -> "Polynomial":
        """Translate every site label by ``offset``."""
        return Polynomial(
            self.basis,
            {tuple((s + offset, a, b) for s, a, b in k): c for k, c in self.terms.items()},
        )

    def profile(self) -> LocalityProfile:
        if self._profile is None:
            self._profile = profile(self)
        return self._profile

    def allclose(self, other: "Polynomial", rtol=1e-10, atol=1e-12) -> bool:
        return max_coeff_diff(self, other) <= atol + rtol * max(
            self.max_abs_coeff(), other.max_abs_coeff()
        )


def max_coeff_diff(f: Polynomial, g: Polynomial) -> float:
    if f.basis != g.basis:
        raise BasisMismatch(f"{f.basis} vs {g.basis}")
    keys = set(f.terms) | set(g.terms)
    return max((abs(f.terms.get(k, 0.0) - g.terms.get(k, 0.0)) for k in keys), default=0.0)


# -- coordinates ------------------------------------------------------------

def q(site: int) -> Polynomial:
    return Polynomial.monomial({site: (0, 1)})


def p(site: int) -> Polynomial:
    return Polynomial.monomial({site: (1, 0)})


def xi(site: int) -> Polynomial:
    return Polynomial.monomial({site: (1, 0)}, basis=COMPLEX)


def eta(site: int) -> Polynomial:
    return Polynomial.monomial({site: (0, 1)}, basis=COMPLEX)


# -- Poisson bracket --------------------------------------------------------

def _site_index(g: Polynomial):
    idx = defaultdict(list)
    items = list(g.terms.items())
    for n, (key, _) in enumerate(items):
        for s, _, _ in key:
            idx[s].append(n)
    return items, idx


def poisson_bracket(f: Polynomial, g: Polynomial) -> Polynomial:
    """Exact Poisson bracket.

    Real basis: ``[f, g] = sum_l df/dq_l dg/dp_l - df/dp_l dg/dq_l``, so that
    ``[q, p] = 1`` and ``dX/dt = [X, H]``.  Complex basis: the same formula
    with ``(q, p) -> (xi, eta)``, which is its image under the canonical
    complexification.
    """
    if f.basis != g.basis:
        raise BasisMismatch(f"{f.basis} vs {g.basis}")
    # both derivative products land on the same monomial: exponents of f*g
    # lowered by one in a and one in b at the shared site
    sign = 1 if f.basis == COMPLEX else -1
    if len(f) > len(g):
        f, g = g, f
        sign = -sign
    g_items, g_idx = _site_index(g)
    g_dicts = [dict((s, (a, b)) for s, a, b in k) for k, _ in g_items]
    out = defaultdict(complex)
    for kf, cf in f.terms.items():
        if not kf:
            continue
        fd = {s: (a, b) for s, a, b in kf}
        partners = set()
        for s in fd:
            partners.update(g_idx.get(s, ()))
        for n in partners:
            kg, cg = g_items[n]
            gd = g_dicts[n]
            merged = None
            for s, (a1, b1) in fd.items():
                ab2 = gd.get(s)
                if ab2 is None:
                    continue
                a2, b2 = ab2
                w = a1 * b2 - b1 * a2
                if w == 0:
                    continue
                if merged is None:
                    merged = _merge(kf, kg)
                key = []
                for t in merged:
                    if t[0] == s:
                        a, b = t[1] - 1, t[2] - 1
                        if a + b > 0:
                            key.append((s, a, b))
                    else:
                        key.append(t)
                out[tuple(key)] += sign * w * cf * cg
    return Polynomial(f.basis, out)


# -- change of basis --------------------------------------------------------

@lru_cache(maxsize=None)
def _site_expansion(a: int, b: int, to_complex: bool):
    """Expand x^a y^b at one site into the other basis as {(a', b'): coeff}.

    to_complex: x=p, y=q  ->  p = (i xi + eta)/sqrt2, q = (xi + i eta)/sqrt2.
    to_real:    x=xi, y=eta -> xi = (q - i p)/sqrt2, eta = (p - i q)/sqrt2.
    Output exponents are (a', b') in the target basis' own (a, b) convention.
    """
    if to_complex:
        # p -> (i xi + eta)/s ; in target (a'=xi, b'=eta)
        x_lin = {(1, 0): 1j * _SQRT2_INV, (0, 1): _SQRT2_INV}
        y_lin = {(1, 0): _SQRT2_INV, (0, 1): 1j * _SQRT2_INV}
    else:
        # xi -> (q - i p)/s ; eta -> (p - i q)/s ; in target (a'=p, b'=q)
        x_lin = {(0, 1): _SQRT2_INV, (1, 0): -1j * _SQRT2_INV}
        y_lin = {(1, 0): _SQRT2_INV, (0, 1): -1j * _SQRT2_INV}
    res = {(0, 0): 1.0 + 0j}
    for lin, count in ((x_lin, a), (y_lin, b)):
        for _ in range(count):
            new = defaultdict(complex)
            for (u, v), c in res.items():
                for (du, dv), d in lin.items():
                    new[(u + du, v + dv)] += c * d
            res = {k: c for k, c in new.items() if abs(c) > 1e-300}
    return tuple(res.items())


def _change_basis(f: Polynomial, to_complex: bool) -> Polynomial:
    target = COMPLEX if to_complex else REAL
    out = defaultdict(complex)
    for key, c in f.terms.items():
        per_site = [
            [((s, u, v), d) for (u, v), d in _site_expansion(a, b, to_complex)]
            for s, a, b in key
        ]
        for combo in itertools.product(*per_site):
            coeff = c
            newkey = []
            for t, d in combo:
                coeff *= d
                newkey.append(t)
            out[tuple(newkey)] += coeff
    return Polynomial(target, out)


def to_complex(f: Polynomial) -> Polynomial:
    if f.basis != REAL:
        raise BasisMismatch("to_complex expects a real-basis polynomial")
    return _change_basis(f, True)


def to_real(f: Polynomial) -> Polynomial:
    if f.basis != COMPLEX:
        raise BasisMismatch("to_real expects a complex-basis polynomial")
    return _change_basis(f, False)


# -- harmonic projections ---------------------------------------------------

def _require_complex(f):
    if f.basis != COMPLEX:
        raise BasisMismatch("harmonic projections act on complex-basis polynomials")


def _resonance(key) -> int:
    """|k| - |j|: eta degree minus xi degree."""
    return sum(b - a for _, a, b in key)


def project_kernel(f: Polynomial) -> Polynomial:
    _require_complex(f)
    return Polynomial(COMPLEX, {k: c for k, c in f.terms.items() if _resonance(k) == 0})


def project_range(f: Polynomial) -> Polynomial:
    _require_complex(f)
    return Polynomial(COMPLEX, {k: c for k, c in f.terms.items() if _resonance(k) != 0})


def apply_homological(f: Polynomial, omega: float) -> Polynomial:
    """``L0 f = [H0, f]`` with ``H0 = omega * sum (p^2 + q^2)/2``."""
    _require_complex(f)
    return Polynomial(COMPLEX, {k: c * 1j * omega * _resonance(k) for k, c in f.terms.items()})


def solve_homological(f: Polynomial, omega: float) -> Polynomial:
    """Return ``g`` with ``L0 g = f`` for ``f`` in the range of ``L0``."""
    _require_complex(f)
    bad = [k for k in f.terms if _resonance(k) == 0]
    if bad:
        shown = ", ".join(str(k) for k in bad[:5])
        raise KernelTermsError(f"{len(bad)} kernel term(s) cannot be inverted: {shown}")
    return Polynomial(
        COMPLEX, {k: c / (1j * omega * _resonance(k)) for k, c in f.terms.items()}
    )


# -- norms and profiles -----------------------------------------------------

def anchor_loads(f: Polynomial) -> dict:
    """Sum of |coeff| per anchor site (leftmost occupied site of each monomial)."""
    loads = defaultdict(float)
    for key, c in f.terms.items():
        anchor = key[0][0] if key else 0
        loads[anchor] += abs(c)
    return dict(loads)


def plus_norm(f: Polynomial) -> float:
    """Canonical-decomposition surrogate of the locality norm.

    Every monomial is attributed to its leftmost occupied site and the norm is
    the largest per-site sum of coefficient moduli.  This dominates the norm
    defined as a minimum over all decompositions.
    """
    loads = anchor_loads(f)
    return max(loads.values(), default=0.0)


def term_radius(key) -> int:
    return key[-1][0] - key[0][0] if key else 0


def term_p_degree(key, basis=REAL) -> int:
    if basis != REAL:
        raise BasisMismatch("p-parity is defined in the real basis")
    return sum(a for _, a, _ in key)


def profile(f: Polynomial) -> LocalityProfile:
    degrees = tuple(sorted(f.degrees()))
    radius = max((term_radius(k) for k in f.terms), default=0)
    if f.basis == REAL and f.terms:
        par = {sum(a for _, a, _ in k) % 2 for k in f.terms}
        parity = "mixed" if len(par) == 2 else ("even" if 0 in par else "odd")
    elif f.terms:
        parity = "mixed"
    else:
        parity = "empty"
    return LocalityProfile(degrees=degrees, radius=radius, parity_p=parity)


# -- evaluation -------------------------------------------------------------

class CompiledPolynomial:
    """Real-basis polynomial grouped by translation shape for fast evaluation.

    Terms sharing the same relative pattern ``((offset, a, b), ...)`` are
    evaluated together over their anchor sites, one numpy gather per factor.
    """

    def __init__(self, f: Polynomial):
        if f.basis != REAL:
            raise BasisMismatch("only real-basis polynomials can be evaluated")
        if f.max_imag() > 1e-9 * max(1.0, f.max_abs_coeff()):
            raise ValueError("polynomial has non-negligible imaginary coefficients")
        groups = defaultdict(lambda: ([], []))
        self.constant = 0.0
        for key, c in f.terms.items():
            if not key:
                self.constant += c.real
                continue
            anchor = key[0][0]
            shape = tuple((s - anchor, a, b) for s, a, b in key)
            anchors, coeffs = groups[shape]
            anchors.append(anchor - 1)
            coeffs.append(c.real)
        self.shapes = [
            (shape, np.asarray(an, dtype=np.intp), np.asarray(co, dtype=float))
            for shape, (an, co) in sorted(groups.items())
        ]
        self.max_p = max((a for sh, _, _ in self.shapes for _, a, _ in sh), default=0)
        self.max_q = max((b for sh, _, _ in self.shapes for _, _, b in sh), default=0)
        self.n_terms = len(f)
        self.max_site = max((s for k in f.terms for s, _, _ in k), default=0)

    def __call__(self, q, p, chunk: int = 2048):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        p = np.atleast_2d(np.asarray(p, dtype=float))
        if q.shape != p.shape:
            raise ValueError("q and p must have the same shape")
        if q.shape[1] < self.max_site:
            raise ValueError(f"state has {q.shape[1]} sites, polynomial needs {self.max_site}")
        out = np.empty(q.shape[0])
        for start in range(0, q.shape[0], chunk):
            out[start:start + chunk] = self._eval_block(q[start:start + chunk], p[start:start + chunk])
        return out

    def _eval_block(self, q, p):
        qp = [np.ones_like(q)]
        for _ in range(self.max_q):
            qp.append(qp[-1] * q)
        pp = [np.ones_like(p)]
        for _ in range(self.max_p):
            pp.append(pp[-1] * p)
        total = np.full(q.shape[0], self.constant)
        for shape, anchors, coeffs in self.shapes:
            acc = None
            for off, a, b in shape:
                cols = anchors + off
                if a and b:
                    fac = pp[a][:, cols] * qp[b][:, cols]
                elif a:
                    fac = pp[a][:, cols]
                else:
                    fac = qp[b][:, cols]
                acc = fac if acc is None else acc * fac
            total += acc @ coeffs
        return total


def evaluate(f: Polynomial, q, p):
    """Evaluate a real-basis polynomial on states ``q, p`` of shape (..., N)."""
    q = np.asarray(q, dtype=float)
    squeeze = q.ndim == 1
    vals = CompiledPolynomial(f)(q, p)
    return vals[0] if squeeze else vals


# -- serialization ----------------------------------------------------------

def to_json_obj(f: Polynomial) -> dict:
    terms = []
    for key in sorted(f.terms):
        c = f.terms[key]
        terms.append({
            "sites": [s for s, _, _ in key],
            "a": [a for _, a, _ in key],
            "b": [b for _, _, b in key],
            "re": c.real,
            "im": c.imag,
        })
    return {"basis": f.basis, "terms": terms}


def from_json_obj(obj: dict) -> Polynomial:
    terms = {}
    for t in obj["terms"]:
        key = tuple(zip(t["sites"], t["a"], t["b"]))
        terms[key] = complex(t["re"], t["im"])
    return Polynomial(obj["basis"], terms, check=True, prune=0.0)


def dumps(polys) -> str:
    """Serialize one polynomial or a list of them as a JSON array."""
    if isinstance(polys, Polynomial):
        polys = [polys]
    return json.dumps([to_json_obj(f) for f in polys])


def loads(text: str) -> list:
    return [from_json_obj(o) for o in json.loads(text)]
