import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kgadiabatic.model import ModelParams, build_hamiltonian, force
from kgadiabatic.normal_form import (
    MAX_ORDER,
    DivergenceGuard,
    NormalFormState,
    bound_C,
    bound_D,
    build_invariant,
    build_state,
    split_by_degree,
    tbar,
    verify_structure,
    xdot_crosscheck,
)
from kgadiabatic.poly import (
    CompiledPolynomial,
    Polynomial,
    max_coeff_diff,
    p,
    plus_norm,
    profile,
    q,
    to_complex,
)


@pytest.fixture(scope="module")
def inv3():
    return build_invariant(ModelParams(12, 0.05), 3)


def test_hamiltonian_terms():
    params = ModelParams(4, 0.1)
    w = params.omega
    H0, H1 = build_hamiltonian(params)
    assert_allclose(H0.coeff({2: (2, 0)}), w / 2)
    assert_allclose(H0.coeff({2: (0, 2)}), w / 2)
    assert_allclose(H1.coeff({1: (0, 1), 2: (0, 1)}), 0.1 / w)
    assert_allclose(H1.coeff({3: (0, 4)}), 1 / (4 * w * w))
    assert H1.coeff({4: (0, 1), 1: (0, 1)}) == 0  # open chain
    assert len(H1) == 3 + 4
    assert plus_norm(H0) == pytest.approx(w)


def test_first_order_ladder():
    params = ModelParams(6, 0.05)
    st = build_state(params, 1)
    assert st.psi[1] == to_complex(build_hamiltonian(params)[1])
    assert st.ladder_residual(1) < 1e-13


def test_theta1_is_the_flow_average_of_H1():
    params = ModelParams(6, 0.05)
    w = params.omega
    inv = build_invariant(params, 1)
    ref = Polynomial.zero()
    for i in range(1, 6):
        ref = ref + (q(i) * q(i + 1) + p(i) * p(i + 1)) * (params.eps / (2 * w))
    for i in range(1, 7):
        ref = ref + (q(i) ** 2 + p(i) ** 2) ** 2 * (3 / (32 * w * w))
    assert max_coeff_diff(inv.theta1, ref) < 1e-14
    # the first-order invariant is -Theta_1 and P_1 - H1 = -Theta_1
    assert max_coeff_diff(inv.Xn, -ref) < 1e-14
    H1 = build_hamiltonian(params)[1]
    assert max_coeff_diff(inv.P[1] - H1, -inv.theta1) < 1e-13


@pytest.mark.parametrize("n", [1, 2, 3])
def test_xdot_equals_bracket_with_H(n, inv3):
    inv = build_invariant(inv3.params, n, state=inv3.state)
    assert xdot_crosscheck(inv) < 1e-10


def test_xdot_is_the_time_derivative_along_the_flow(inv3):
    # central difference of X_n along the Hamiltonian vector field
    params = inv3.params
    X = CompiledPolynomial(inv3.Xn)
    Xd = CompiledPolynomial(inv3.Xn_dot)
    rng = np.random.default_rng(3)
    qq = rng.normal(scale=0.3, size=(5, params.N))
    pp = rng.normal(scale=0.3, size=(5, params.N))
    vq, vp = params.omega * pp, force(qq, params)
    h = 1e-5
    fd = (X(qq + h * vq, pp + h * vp) - X(qq - h * vq, pp - h * vp)) / (2 * h)
    assert_allclose(fd, Xd(qq, pp), rtol=1e-6, atol=1e-10)


def test_second_order_degrees():
    inv = build_invariant(ModelParams(8, 0.05), 2)
    assert inv.P[2].degrees() == {2, 4, 6}
    assert inv.Xn_dot.degrees() <= {2, 4, 6, 8}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_structure_report(n, inv3):
    inv = build_invariant(inv3.params, n, state=inv3.state)
    rep = verify_structure(inv)
    assert rep["ok"]
    for row in rep["P_n"] + rep["Xn_dot"]:
        assert row["parity_ok"] and row["radius_ok"] and row["bound_ok"]
        assert row["margin"] >= 1
        assert row["radius"] <= row["radius_max"]
    assert profile(inv.P[n]).parity_p == "even"
    assert profile(inv.Xn_dot).parity_p == "odd"


def test_ladder_residuals(inv3):
    for s in (1, 2, 3):
        assert inv3.state.ladder_residual(s) < 1e-12


def test_uncoupled_chain_decouples():
    params = ModelParams(6, 0.0)
    inv = build_invariant(params, 2)
    for poly in (inv.Xn, inv.Xn_dot, inv.P[2]):
        for key in poly.terms:
            assert len({s for s, _, _ in key}) == 1


def test_translation_covariance_in_bulk():
    n = 2
    N = 4 * n + 6
    inv = build_invariant(ModelParams(N, 0.05), n)
    margin = 2 * n + 1
    checked = 0
    for poly in (inv.P[n], inv.Xn_dot):
        for key, c in poly.terms.items():
            sites = [s for s, _, _ in key]
            if min(sites) < margin or max(sites) + 1 > N - margin + 1:
                continue
            shifted = tuple((s + 1, a, b) for s, a, b in key)
            assert poly.terms.get(shifted, 0.0) == pytest.approx(c, rel=1e-10, abs=1e-14)
            checked += 1
    assert checked > 50


def test_split_by_degree_rejects_odd_terms():
    with pytest.raises(ArithmeticError):
        split_by_degree(q(1) ** 3)
    parts = split_by_degree(q(1) ** 2 + q(2) ** 4)
    assert sorted(parts) == [0, 1]


def test_bounds():
    assert bound_D(1) == 2 ** 12
    assert bound_C(1) == 48 * 2 ** 12 * 4
    assert bound_D(2) / bound_D(1) == 2 ** 12 * 8


def test_tbar():
    params = ModelParams(4, 0.01, beta=100.0)
    assert tbar(1.0, params) == pytest.approx(math.exp(0.02 ** -0.25))
    assert tbar(1.0, params.with_(eps=0.02)) < tbar(1.0, params)
    with pytest.raises(ValueError):
        tbar(0.0, params)


def test_term_cap_raises_guard():
    with pytest.raises(DivergenceGuard, match="cap"):
        build_state(ModelParams(10, 0.05), 3, term_cap=50)


def test_invalid_requests():
    with pytest.raises(ValueError):
        build_invariant(ModelParams(4, 0.05), 0)
    st = build_state(ModelParams(4, 0.05), MAX_ORDER)
    with pytest.raises(ValueError):
        st.advance()
    with pytest.raises(ValueError):
        NormalFormState(ModelParams(4, 0.05, boundary="periodic"))
    with pytest.raises(ValueError):
        NormalFormState(ModelParams(300, 0.05))
