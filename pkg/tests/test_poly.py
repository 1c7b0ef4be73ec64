import itertools
import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from kgadiabatic.acceptance import flow_average
from kgadiabatic.model import ModelParams, build_hamiltonian
from kgadiabatic.poly import (
    COMPLEX,
    REAL,
    BasisMismatch,
    CompiledPolynomial,
    KernelTermsError,
    Polynomial,
    apply_homological,
    dumps,
    eta,
    evaluate,
    from_json_obj,
    loads,
    max_coeff_diff,
    p,
    plus_norm,
    poisson_bracket,
    profile,
    project_kernel,
    project_range,
    q,
    solve_homological,
    to_complex,
    to_json_obj,
    to_real,
    xi,
)

OMEGA = math.sqrt(1.1)


# -- helpers -------------------------------------------------------------------

def to_sympy(f, n_sites):
    """Dense sympy expression in q_i, p_i (real basis)."""
    qs = sp.symbols(f"q1:{n_sites + 1}")
    ps = sp.symbols(f"p1:{n_sites + 1}")
    expr = 0
    for key, c in f.terms.items():
        term = sp.nsimplify(c.real) + sp.I * sp.nsimplify(c.imag)
        for s, a, b in key:
            term *= ps[s - 1] ** a * qs[s - 1] ** b
        expr += term
    return expr, qs, ps


def sympy_bracket(f, g, n_sites):
    F, qs, ps = to_sympy(f, n_sites)
    G, _, _ = to_sympy(g, n_sites)
    return sp.expand(sum(sp.diff(F, qs[i]) * sp.diff(G, ps[i]) - sp.diff(F, ps[i]) * sp.diff(G, qs[i])
                         for i in range(n_sites)))


def close(f, g, tol=1e-10):
    scale = max(1.0, f.max_abs_coeff(), g.max_abs_coeff())
    return max_coeff_diff(f, g) <= tol * scale


def homogeneous(draw, degree, max_radius, n_terms, basis=REAL):
    """Random homogeneous polynomial of the given degree and radius bound."""
    terms = {}
    for _ in range(n_terms):
        anchor = draw(st.integers(1, 3))
        span = draw(st.integers(0, max_radius))
        sites = list(range(anchor, anchor + span + 1))
        # spread the degree over the chosen sites, every site gets at least one factor
        if len(sites) > degree:
            sites = sites[:degree]
        cuts = sorted(draw(st.lists(st.integers(0, degree - len(sites)), min_size=len(sites) - 1,
                                    max_size=len(sites) - 1)))
        extra = [b - a for a, b in zip([0] + cuts, cuts + [degree - len(sites)])]
        key = []
        for s, e in zip(sites, extra):
            d = 1 + e
            a = draw(st.integers(0, d))
            key.append((s, a, d - a))
        c = draw(st.floats(-2, 2, allow_nan=False).filter(lambda x: abs(x) > 1e-3))
        terms[tuple(key)] = terms.get(tuple(key), 0) + c
    return Polynomial(basis, terms)


@st.composite
def small_poly(draw, basis=REAL):
    n = draw(st.integers(1, 4))
    terms = {}
    for _ in range(n):
        key = []
        for s in range(1, 4):
            a, b = draw(st.integers(0, 2)), draw(st.integers(0, 2))
            if a + b:
                key.append((s, a, b))
        c = draw(st.floats(-3, 3, allow_nan=False, allow_infinity=False))
        if basis == COMPLEX:
            c = complex(c, draw(st.floats(-3, 3, allow_nan=False, allow_infinity=False)))
        terms[tuple(key)] = c
    return Polynomial(basis, terms)


@st.composite
def homogeneous_poly(draw, basis=REAL):
    s = draw(st.integers(1, 4))
    r = draw(st.integers(0, 2))
    f = homogeneous(draw, s, r, draw(st.integers(1, 4)), basis)
    return f, s, r


# -- bracket ---------------------------------------------------------------------

def test_canonical_pair():
    assert poisson_bracket(q(1), p(1)) == Polynomial.constant(1.0)
    assert poisson_bracket(p(1), q(1)) == Polynomial.constant(-1.0)
    assert poisson_bracket(xi(1), eta(1)) == Polynomial.constant(1.0, COMPLEX)


def test_disjoint_supports_commute():
    f = q(1) * p(2) + q(2) ** 3
    g = p(5) * p(6) + q(5) * q(6) ** 2
    assert len(poisson_bracket(f, g)) == 0


def test_bracket_with_H0_against_sympy():
    params = ModelParams(3, 0.1)
    H0, H1 = build_hamiltonian(params)
    w = params.omega
    for i in (1, 2, 3):
        got = poisson_bracket(H0, q(i))
        assert close(got, -w * p(i), 1e-14)
        F, qs, ps = to_sympy(got, 3)
        ref = sympy_bracket(H0, q(i), 3)
        assert sp.simplify(F - ref) == 0
    # a denser pair
    f = q(1) ** 2 * p(2) + 3 * p(1) * q(2) * q(3) ** 2 + H1
    g = H1 * p(2) + q(3) * p(3) ** 3
    got = poisson_bracket(f, g)
    ref = sympy_bracket(f, g, 3)
    mine, _, _ = to_sympy(got, 3)
    assert sp.simplify(sp.expand(mine - ref)) == 0


def test_bracket_rejects_mixed_bases():
    with pytest.raises(BasisMismatch):
        poisson_bracket(q(1), xi(1))


@given(small_poly(), small_poly())
def test_antisymmetry(f, g):
    assert close(poisson_bracket(f, g), -poisson_bracket(g, f))


@given(small_poly(), small_poly(), small_poly(), st.floats(-2, 2, allow_nan=False))
def test_bilinearity(f, g, h, a):
    lhs = poisson_bracket(f * a + g, h)
    rhs = poisson_bracket(f, h) * a + poisson_bracket(g, h)
    assert close(lhs, rhs)


@given(small_poly(), small_poly(), small_poly())
def test_jacobi(f, g, h):
    total = (poisson_bracket(f, poisson_bracket(g, h))
             + poisson_bracket(g, poisson_bracket(h, f))
             + poisson_bracket(h, poisson_bracket(f, g)))
    scale = max(1.0, f.max_abs_coeff() * g.max_abs_coeff() * h.max_abs_coeff())
    assert total.max_abs_coeff() <= 1e-10 * scale


@given(small_poly(), small_poly(), small_poly())
def test_leibniz(f, g, h):
    lhs = poisson_bracket(f * g, h)
    rhs = f * poisson_bracket(g, h) + g * poisson_bracket(f, h)
    assert close(lhs, rhs)


@given(small_poly(COMPLEX), small_poly(COMPLEX))
def test_complex_bracket_is_image_of_real_bracket(f, g):
    real = poisson_bracket(to_real(f), to_real(g))
    assert close(to_complex(real), poisson_bracket(f, g), 1e-9)


@given(homogeneous_poly(), homogeneous_poly())
def test_bracket_degree_and_radius(fa, gb):
    (f, s, r), (g, s2, r2) = fa, gb
    h = poisson_bracket(f, g)
    if len(h):
        assert h.degrees() <= {s + s2 - 2}
        assert profile(h).radius <= r + r2 + max(r, r2)


@given(homogeneous_poly(), homogeneous_poly())
def test_bracket_norm_inequality(fa, gb):
    (f, s, r), (g, s2, r2) = fa, gb
    lhs = plus_norm(poisson_bracket(f, g))
    rhs = (2 * r + 2 * r2 + 1) * s * s2 * plus_norm(f) * plus_norm(g)
    assert lhs <= rhs * (1 + 1e-12)


# -- change of basis ---------------------------------------------------------------

def test_q_in_complex_variables():
    got = to_complex(q(1))
    ref = (xi(1) + eta(1) * 1j) * (1 / math.sqrt(2))
    assert close(got, ref, 1e-15)
    ref_p = (xi(1) * 1j + eta(1)) * (1 / math.sqrt(2))
    assert close(to_complex(p(1)), ref_p, 1e-15)


def test_single_site_H0_is_diagonal():
    w = 1.3
    H0 = (p(1) ** 2 + q(1) ** 2) * (w / 2)
    got = to_complex(H0)
    assert close(got, xi(1) * eta(1) * (1j * w), 1e-14)


@given(small_poly())
def test_roundtrip_real(f):
    assert max_coeff_diff(to_real(to_complex(f)), f) <= 1e-12 * max(1.0, f.max_abs_coeff())


@given(small_poly(COMPLEX))
def test_roundtrip_complex(f):
    assert max_coeff_diff(to_complex(to_real(f)), f) <= 1e-12 * max(1.0, f.max_abs_coeff())


@given(homogeneous_poly())
def test_change_of_basis_keeps_degree_radius_and_norm_bound(fr):
    f, s, r = fr
    c = to_complex(f)
    assert c.degrees() <= {s}
    assert profile(c).radius <= r
    assert plus_norm(c) <= 2 ** (s / 2) * plus_norm(f) * (1 + 1e-12)


def test_change_of_basis_rejects_wrong_input():
    with pytest.raises(BasisMismatch):
        to_complex(xi(1))
    with pytest.raises(BasisMismatch):
        to_real(q(1))


# -- projections --------------------------------------------------------------------

def test_kernel_keeps_resonant_monomial():
    f = xi(1) * eta(1)
    assert project_kernel(f) == f
    assert len(project_range(f)) == 0


def test_homological_eigenvalue():
    w = 1.2
    got = apply_homological(xi(1) ** 2, w)
    assert_allclose(got.coeff({1: (2, 0)}), -2j * w, rtol=1e-15)
    got = apply_homological(xi(1) * eta(2) ** 3, w)
    assert_allclose(got.coeff({1: (1, 0), 2: (0, 3)}), 2j * w, rtol=1e-15)


def test_flow_average_of_nearest_neighbour_coupling():
    f = q(1) * q(2)
    avg = to_real(project_kernel(to_complex(f))).real_part()
    assert close(avg, (q(1) * q(2) + p(1) * p(2)) * 0.5, 1e-14)
    rng = np.random.default_rng(0)
    qq, pp = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))
    assert_allclose(evaluate(avg, qq, pp), flow_average(f, OMEGA, qq, pp, nodes=64), atol=1e-12)


@given(small_poly())
def test_kernel_projection_is_flow_average(f):
    avg = to_real(project_kernel(to_complex(f))).real_part()
    rng = np.random.default_rng(1)
    qq, pp = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    ref = flow_average(f, OMEGA, qq, pp, nodes=64)
    assert_allclose(evaluate(avg, qq, pp) if len(avg) else np.zeros(4), ref,
                    atol=1e-9 * max(1.0, np.abs(ref).max()))


@given(small_poly(COMPLEX))
def test_projector_identities(f):
    N, R = project_kernel(f), project_range(f)
    assert N + R == f
    assert project_kernel(N) == N
    assert len(project_kernel(R)) == 0
    g = solve_homological(R, OMEGA)
    assert close(apply_homological(g, OMEGA), R, 1e-12)
    nf = plus_norm(f)
    for h in (N, R, g):
        assert plus_norm(h) <= nf * (1 + 1e-12)


def test_solve_homological_names_kernel_terms():
    f = xi(1) * eta(1) + xi(2) ** 2
    with pytest.raises(KernelTermsError, match=r"\(1, 1, 1\)"):
        solve_homological(f, 1.0)


# -- norm and profile -----------------------------------------------------------------

def test_plus_norm_examples():
    assert plus_norm(p(1) * q(2) * 3) == pytest.approx(3.0)
    params = ModelParams(6, 0.07)
    H0, H1 = build_hamiltonian(params)
    assert plus_norm(H0) == pytest.approx(params.omega, rel=1e-14)


def test_plus_norm_of_H1_is_minimal_over_anchor_assignments():
    params = ModelParams(4, 0.1)
    _, H1 = build_hamiltonian(params)
    w = params.omega
    expected = params.eps / w + 1 / (4 * w * w)
    assert plus_norm(H1) == pytest.approx(expected, rel=1e-14)
    terms = list(H1.terms.items())
    choices = [[s for s, _, _ in key] for key, _ in terms]
    best = math.inf
    for assign in itertools.product(*choices):
        loads = {}
        for site, (_, c) in zip(assign, terms):
            loads[site] = loads.get(site, 0.0) + abs(c)
        best = min(best, max(loads.values()))
    assert best == pytest.approx(expected, rel=1e-14)


def test_profiles():
    pr = profile(p(1) * p(2))
    assert (pr.degree, pr.radius, pr.parity_p) == (2, 1, "even")
    pr = profile(q(1) ** 3 * p(2))
    assert (pr.degree, pr.radius, pr.parity_p) == (4, 1, "odd")
    _, H1 = build_hamiltonian(ModelParams(5, 0.05))
    pr = profile(H1)
    assert pr.degrees == (2, 4)
    assert pr.radius == 1 and pr.parity_p == "even"


def test_profile_cache_matches_recomputation():
    f = q(1) * p(3) + p(2) ** 2
    first = f.profile()
    assert first == profile(Polynomial(REAL, dict(f.terms)))
    assert f.profile() is first


def test_multi_index_invariants():
    with pytest.raises(ValueError):
        Polynomial(REAL, {((2, 1, 0), (1, 0, 1)): 1.0}, check=True)
    with pytest.raises(ValueError):
        Polynomial(REAL, {((1, 0, 0),): 1.0}, check=True)
    f = Polynomial(REAL, {((1, 1, 0),): 1e-16, ((2, 0, 1),): 1.0})
    assert len(f) == 1


# -- evaluation and serialization ---------------------------------------------------------

@given(small_poly())
def test_compiled_evaluation_matches_naive(f):
    rng = np.random.default_rng(2)
    qq, pp = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    naive = np.zeros(6)
    for key, c in f.terms.items():
        t = np.full(6, c.real)
        for s, a, b in key:
            t = t * pp[:, s - 1] ** a * qq[:, s - 1] ** b
        naive += t
    assert_allclose(CompiledPolynomial(f)(qq, pp), naive, rtol=1e-12, atol=1e-12)


@given(small_poly(COMPLEX))
def test_json_roundtrip_is_bit_stable(f):
    back = from_json_obj(json.loads(json.dumps(to_json_obj(f))))
    assert back.terms == f.terms
    assert loads(dumps([f, f]))[1].terms == f.terms


def test_json_layout():
    obj = to_json_obj(q(1) * p(3) * 2.5)
    assert obj == {"basis": "pq", "terms": [{"sites": [1, 3], "a": [0, 1], "b": [1, 0],
                                             "re": 2.5, "im": 0.0}]}
