import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from visc_nonlocal import checkers as C, functions as fn, kernels as K
from visc_nonlocal.errors import InvalidParameters, JetRejected, MaxViolated, PhiCertificateFailed
from visc_nonlocal.functions import JetCertificate, SecondOrderJet, jet_at

BOX = K.box_kernel(1, 1.0)
X2 = fn.polynomial_1d([0, 0, 1])
BUMP = fn.gaussian_bump(1.0, 0.0, 1.0, 1)
ZERO_F = C.zero_operator(1)


def cert(p, X, delta, eps, x=0.0, value=0.0):
    return JetCertificate(SecondOrderJet([x], [p], [[X]], value), delta, eps)


# worked examples -----------------------------------------------------------------

def test_definition_A_examples():
    r = C.check_definition_A(ZERO_F, X2, cert(0, 2, 0.1, 0.5), BOX, "sub")
    assert r.residual == pytest.approx(-0.675, abs=1e-12) and r.verdict == "pass"
    assert r.residual == r.F_term - r.small_ball_term - r.tail_term
    sup = C.check_definition_A(ZERO_F, -X2, cert(0, -2, 0.1, 0.5), BOX, "super")
    assert sup.residual == pytest.approx(0.675, abs=1e-12) and sup.verdict == "pass"
    # u = 0, F = r: only the delta part of the small-ball bound survives, -+ delta tr M(eps)
    k = K.truncated_stable_kernel(1, 1.0)
    trM = C.trace_moment(k, 0.5)
    for mode, sign in (("sub", -1.0), ("super", 1.0)):
        z = C.check_definition_A(C.zeroth_order(1), fn.zero(1), cert(0, 0, 0.1, 0.5), k, mode)
        assert z.residual == pytest.approx(sign * 0.1 * trM, abs=1e-12) and z.verdict == "pass"


def test_definition_B_examples():
    r = C.check_definition_B(ZERO_F, X2, X2, [0.0], BOX)
    assert r.residual == pytest.approx(-2 / 3, abs=1e-12) and r.passed
    r = C.check_definition_B(C.pure_second(1), X2, X2, [0.0], BOX)
    assert r.residual == pytest.approx(-8 / 3, abs=1e-12) and r.passed
    for mode in ("sub", "super"):
        z = C.check_definition_B(C.zeroth_order(1), fn.zero(1), fn.zero(1), [0.0], BOX, mode)
        assert z.residual == 0.0 and z.passed


def test_Aprime_matches_A_for_quadratic():
    a = C.check_definition_A(ZERO_F, X2, cert(0, 2, 0.1, 0.5), BOX)
    ap = C.check_definition_Aprime(ZERO_F, X2, X2, [0.0], 0.5, 0.1, BOX)
    assert ap.residual == a.residual


def test_Aprime_bump_against_B():
    eps, delta = 0.25, 0.05
    ap = C.check_definition_Aprime(ZERO_F, BUMP, BUMP, [0.0], eps, delta, BOX)
    b = C.check_definition_B(ZERO_F, BUMP, BUMP, [0.0], BOX)
    assert ap.residual == pytest.approx(-(ap.small_ball_term + ap.tail_term), abs=0)
    trM = C.trace_moment(BOX, eps)
    omega = 12.0 * eps
    assert abs(ap.residual - b.residual) <= (delta + omega) * trM + ap.tol + b.tol


def test_Aprime_gap_shrinks_with_epsilon():
    b = C.check_definition_B(ZERO_F, BUMP, BUMP, [0.0], BOX)
    gaps = [abs(C.check_definition_Aprime(ZERO_F, BUMP, BUMP, [0.0], 2.0**-j, 0.25, BOX).residual
                - b.residual) for j in range(2, 8)]
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))


def test_Bprime_examples():
    b = C.check_definition_B(ZERO_F, BUMP, BUMP, [0.3], BOX)
    for j in range(1, 8):
        bp = C.check_definition_Bprime(ZERO_F, BUMP, BUMP, [0.3], 2.0**-j, BOX)
        assert abs(bp.residual - b.residual) <= bp.tol + b.tol
    # kernel support inside the eps-ball: empty tail
    bp = C.check_definition_Bprime(ZERO_F, BUMP, BUMP, [0.3], 1.5, BOX)
    assert bp.tail_term == 0.0
    assert bp.residual == pytest.approx(-bp.small_ball_term, abs=0)
    with pytest.raises(InvalidParameters):
        C.check_definition_Bprime(ZERO_F, BUMP, BUMP, [0.3], 0.0, BOX)


def test_C_examples():
    k = K.truncated_stable_kernel(1, 1.2)
    b = C.check_definition_B(ZERO_F, BUMP, BUMP, [0.4], k)
    c = C.check_definition_C(ZERO_F, BUMP, BUMP, [0.4], k)
    assert abs(b.residual - c.residual) <= b.tol + c.tol
    kinked = fn.cone(-1.0, 0.0, 1.0, 1)
    phi = fn.polynomial_1d([0, 0, 1])
    r = C.check_definition_C(ZERO_F, kinked, phi, [0.0], BOX)
    assert r.residual == pytest.approx(1.0, abs=1e-6) and r.verdict == "fail"


def test_not_integrable_verdict():
    kinked = fn.cone(-1.0, 0.0, 1.0, 1)
    r = C.check_definition_C(ZERO_F, kinked, X2, [0.0], K.truncated_stable_kernel(1, 1.5))
    assert r.verdict == "not_integrable" and r.integrable is False
    assert np.isnan(r.residual)


# errors and parameter discipline ------------------------------------------------------------

def test_jet_rejected_and_max_violated():
    with pytest.raises(JetRejected):
        C.check_definition_A(ZERO_F, fn.cone(1.0, 0.0, 1.0, 1), cert(0, 2, 0.1, 0.5), BOX)
    for check in (C.check_definition_B, C.check_definition_C):
        with pytest.raises(MaxViolated):
            check(ZERO_F, X2, fn.zero(1), [0.0], BOX)
        with pytest.raises(MaxViolated):
            check(ZERO_F, X2, fn.constant(1.0), [0.0], BOX)
    with pytest.raises(MaxViolated):
        C.check_definition_B(ZERO_F, fn.zero(1), X2, [0.0], BOX, "super")


def test_phi_certificate_failed():
    cubic = fn.polynomial_1d([0, 0, 1, 1])
    with pytest.raises(PhiCertificateFailed):
        C.check_definition_Aprime(ZERO_F, cubic, cubic, [0.0], 0.5, 0.01, BOX)
    rep = C.check_definition_Aprime(ZERO_F, cubic, cubic, [0.0], 0.5, 0.01, BOX,
                                    enforce_certificate=False)
    assert rep.notes and "certificate" in rep.notes[0]


def test_run_check_rejects_extraneous_parameters():
    with pytest.raises(InvalidParameters):
        C.run_check("B", ZERO_F, X2, BOX, phi=X2, x_hat=[0.0], epsilon=0.5)
    with pytest.raises(InvalidParameters):
        C.run_check("C", ZERO_F, X2, BOX, phi=X2, x_hat=[0.0], delta=0.1)
    with pytest.raises(InvalidParameters):
        C.run_check("Bprime", ZERO_F, X2, BOX, phi=X2, x_hat=[0.0])
    with pytest.raises(InvalidParameters):
        C.run_check("D", ZERO_F, X2, BOX, phi=X2, x_hat=[0.0])
    with pytest.raises(InvalidParameters):
        C.check_definition_B(ZERO_F, X2, X2, [0.0], BOX, "both")
    r = C.run_check("Bprime", ZERO_F, X2, BOX, phi=X2, x_hat=[0.0], epsilon=0.5)
    assert r.definition == "Bprime" and r.epsilon == 0.5 and r.delta is None


# certificates -----------------------------------------------------------------------------

def test_find_certificate_examples():
    c = C.find_certificate(X2, [0.0], [0.0], [[2.0]], "sub", 0.1)
    assert c.epsilon == 1.0
    c = C.find_certificate(fn.polynomial_1d([0, 0, 1, 1]), [0.0], [0.0], [[2.0]], "sub", 0.1)
    assert c.epsilon == 0.0625
    assert C.find_certificate(fn.cone(1.0, 0.0, 1.0, 1), [0.0], [0.0], [[5.0]], "sub", 0.3) is None


# properties ---------------------------------------------------------------------------

OPERATORS = [C.zero_operator(1), C.zeroth_order(1, 0.7), C.pure_second(1),
             C.linear_elliptic(1, [[0.5]], [0.3], 1.0, 0.2),
             C.custom_affine(1, 0.4, [1.0], -0.3, [0.2], [[-1.5]])]


@pytest.mark.parametrize("F", OPERATORS, ids=lambda F: F.family)
def test_mode_mirror(F):
    k = K.tempered_stable_kernel(1, 0.9, 1.0)
    x = [0.3]
    u = BUMP + fn.polynomial_1d([0.0, 0.1])
    mu = -u
    J = jet_at(u, x)
    sub = {
        "A": C.check_definition_A(F, u, JetCertificate(J, 0.1, 0.125), k, "sub"),
        "Aprime": C.check_definition_Aprime(F, u, u, x, 0.125, 0.1, k, "sub"),
        "B": C.check_definition_B(F, u, u, x, k, "sub"),
        "Bprime": C.check_definition_Bprime(F, u, u, x, 0.125, k, "sub"),
        "C": C.check_definition_C(F, u, u, x, k, "sub"),
    }
    Fm = F.mirrored()
    mJ = SecondOrderJet(J.base_point, -J.p, -J.X, -J.value)
    sup = {
        "A": C.check_definition_A(Fm, mu, JetCertificate(mJ, 0.1, 0.125), k, "super"),
        "Aprime": C.check_definition_Aprime(Fm, mu, mu, x, 0.125, 0.1, k, "super"),
        "B": C.check_definition_B(Fm, mu, mu, x, k, "super"),
        "Bprime": C.check_definition_Bprime(Fm, mu, mu, x, 0.125, k, "super"),
        "C": C.check_definition_C(Fm, mu, mu, x, k, "super"),
    }
    for d in C.DEFINITIONS:
        assert sup[d].residual == pytest.approx(-sub[d].residual, abs=1e-12)
        assert sup[d].verdict == sub[d].verdict


@settings(max_examples=15)
@given(st.floats(0.05, 2.0), st.floats(-0.8, 0.8), st.floats(0.3, 0.95))
def test_ordering_with_u_below_phi(c, x0, alpha):
    """u <= phi touching at x0: B and A' residuals never exceed the C residual (sub).

    The cone keeps ``u`` integrable against the kernel only for alpha < 1.
    """
    phi = BUMP
    u = phi + fn.cone(-1.0, x0, c, 1)
    k = K.truncated_stable_kernel(1, alpha)
    F = C.linear_elliptic(1, [[0.2]], [0.1], 0.5)
    b = C.check_definition_B(F, u, phi, [x0], k)
    cc = C.check_definition_C(F, u, phi, [x0], k)
    ap = C.check_definition_Aprime(F, u, phi, [x0], 2.0**-4, 0.5, k)
    bp = C.check_definition_Bprime(F, u, phi, [x0], 2.0**-4, k)
    assert b.residual <= cc.residual + b.tol + cc.tol
    assert ap.residual <= cc.residual + ap.tol + cc.tol
    assert bp.residual >= b.residual - bp.tol - b.tol


def test_reports_deterministic():
    k = K.gaussian_kernel(2, 0.5)
    bump2 = fn.gaussian_bump(1.0, [0.0, 0.0], 1.0, 2)
    runs = [C.check_definition_C(C.pure_second(2), bump2, bump2, [0.3, 0.1], k).to_dict()
            for _ in range(2)]
    assert runs[0] == runs[1]


def test_operator_invariants():
    for F in OPERATORS[:-1]:
        assert F.ellipticity_violations() == [] and F.continuity_violations() == []
    bad = C.custom_affine(1, CX=[[1.0]])
    assert not bad.degenerate_ellipticity_declared and bad.ellipticity_violations()
    jumpy = C.custom_operator(1, lambda x, r, p, X: float(np.floor(r * 1e6) % 2))
    assert jumpy.continuity_violations(n=256)
    with pytest.raises(InvalidParameters):
        C.linear_elliptic(1, [[-1.0]])
    F = C.operator_from_spec({"family": "linear_elliptic", "A": [[1.0, 0], [0, 2.0]], "c": 1.0}, 2)
    assert F([0, 0], 2.0, [0, 0], np.eye(2)) == pytest.approx(-3.0 + 2.0)
    with pytest.raises(KeyError):
        C.operator_from_spec({"family": "zeroth", "bogus": 1}, 1)
