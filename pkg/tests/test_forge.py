import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from visc_nonlocal import forge as F, functions as fn
from visc_nonlocal.errors import (ExtensionFailure, InvalidParameters, MaxViolated, NoValidScale,
                                  OutOfDomain)
from visc_nonlocal.functions import CandidateFunction
from visc_nonlocal.sampling import halton


# glue spline -------------------------------------------------------------------

def test_glue_constants_and_values():
    g = F.build_glue_1d(-1.0, 3.0)
    assert (g.alpha, g.a, g.b, g.c) == (2.0, math.e, -2.0, 1.0)
    assert F.eval_glue(g, 1.0) == pytest.approx((-1.0, -2.0, -2.0), abs=1e-12)
    assert F.eval_glue(g, 0.0) == (0.0, 0.0, -2.0)
    assert F.eval_glue(g, 2.5) == (-2.0, 0.0, 0.0)
    assert F.eval_glue(g, -1.0)[0] == F.eval_glue(g, 1.0)[0]
    for x in np.linspace(2.0, 3.0, 11):
        assert F.eval_glue(g, x) == (-2.0, 0.0, 0.0)


def test_glue_domain_and_parameters():
    g = F.build_glue_1d(-1.0, 3.0)
    with pytest.raises(OutOfDomain):
        F.eval_glue(g, 3.1)
    for lam, s in ((1.0, 1.0), (0.0, 1.0), (-1.0, 0.0)):
        with pytest.raises(InvalidParameters):
            F.build_glue_1d(lam, s)


@given(st.floats(-10, -0.01), st.floats(0.05, 10))
def test_glue_junction_matching(lam, s):
    g = F.build_glue_1d(lam, s)
    x = s / 3
    v, d1, d2 = (float(t) for t in g.evaluate(np.nextafter(x, np.inf)))
    assert v == pytest.approx(lam * s * s / 9, rel=1e-9)
    assert d1 == pytest.approx(2 * lam * s / 3, rel=1e-9)
    assert d2 == pytest.approx(2 * lam, rel=1e-7)
    inner = np.linspace(2 * s / 3 - 1e-3 * s, 2 * s / 3, 5)
    vals = np.array(g.evaluate(inner))
    assert np.allclose(vals[0], 2 * lam * s * s / 9, rtol=1e-12, atol=0)
    assert np.all(np.abs(vals[1:]) < 1e-100)


@pytest.mark.parametrize("h", [1e-3, 1e-4])
def test_glue_second_difference_across_junctions(h):
    g = F.build_glue_1d(-1.0, 3.0)
    for row in F.junction_diagnostics(g, h):
        assert row["worst_vs_exact"] <= 50 * h * h
        assert row["jump_fd"] <= 50 * h * h


@given(st.floats(-5, -0.1), st.floats(0.1, 5))
def test_glue_convex_on_outer_band(lam, s):
    g = F.build_glue_1d(lam, s)
    d2 = g.evaluate(np.linspace(2 * s / 3, s, 201))[2]
    assert np.min(d2) >= -1e-12


def test_smoothstep_derivatives():
    t = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    S, S1, S2 = F.smoothstep(t)
    assert np.allclose(S1, (F.smoothstep(t + h)[0] - F.smoothstep(t - h)[0]) / (2 * h), atol=1e-6)
    assert np.allclose(S2, (F.smoothstep(t + h)[1] - F.smoothstep(t - h)[1]) / (2 * h), atol=1e-5)
    assert F.smoothstep(np.array([-1.0, 0.0, 1.0, 2.0]))[0].tolist() == [0.0, 0.0, 1.0, 1.0]


# scale selection and psi^r -----------------------------------------------------------

def test_select_s_examples():
    poly = fn.polynomial_1d
    assert F.select_s(poly([0, 0, 1, 0, -1]), poly([0, 0, 1, 0, -1]), 0.0, 0.5) == 0.5
    assert F.select_s(poly([0, 0, 1, 1]), poly([0, 0, 1, 1]), 0.0, 1.0) == 0.25
    q = fn.quadratic([[1.0, 0.2], [0.2, -0.5]])
    for r in (1.0, 0.5, 0.125):
        assert F.select_s(q, q, [0.0, 0.0], r) == r


def test_select_s_failures():
    poly = fn.polynomial_1d([0, 0, 1, 1])
    with pytest.raises(NoValidScale):
        F.select_s(poly, poly, 0.0, 1.0, F.ScaleSearch(levels=2))
    with pytest.raises(MaxViolated):
        F.select_s(fn.zero(1), fn.polynomial_1d([0, 0, 1]), 0.0, 1.0)


def test_build_psi_r_saddle():
    q = fn.quadratic(np.diag([-1.0, 0.5]))
    b = F.build_psi_r(q, q, [0.0, 0.0], 1.0)
    # descending order: the quadratic coordinate first, the glued one second
    assert np.allclose(b.eigenvalues, [1.0, -0.5])
    assert b.glue_coordinates == [1]
    assert np.allclose(np.abs(b.T), [[0.0, 1.0], [1.0, 0.0]])
    v, g, H = b.jet(np.zeros(2))
    assert np.allclose(g, 0.0) and np.allclose(H, np.diag([-1.0, 2.0]))
    y = np.array([0.1, 0.05])
    x = b.base_point + b.T @ y
    h = 1e-4
    fd = np.array([[(b(x + h * (ei + ej)) - b(x + h * (ei - ej)) - b(x - h * (ei - ej))
                     + b(x - h * (ei + ej))) / (4 * h * h) for ej in np.eye(2)] for ei in np.eye(2)])
    assert np.allclose(fd, b.jet(x)[2], atol=1e-6)


def test_psd_hessian_has_no_glue():
    q = fn.quadratic(np.diag([1.0, 0.25]))
    b = F.build_psi_r(q, q, [0.3, -0.2], 0.5)
    assert b.glue_coordinates == []
    pts = b.region(1.0).sample(256)
    assert np.allclose(b(pts), b.quadratic_model(pts), atol=1e-13)


def _instance(seed):
    rng = np.random.default_rng(seed)
    dim = 1 + seed % 2
    A = rng.normal(size=(dim, dim))
    Q = 0.5 * (A + A.T)
    w = np.linalg.eigvalsh(Q)
    if w.min() > -0.2 or w.max() < 0.2:
        Q = Q + np.diag(np.where(np.arange(dim) == 0, -1.0, 1.0))
    if dim == 1:
        Q = np.array([[-1.0 if seed % 4 else 0.7]])
    center = rng.uniform(-0.5, 0.5, size=dim)
    phi = fn.quadratic(Q) + fn.gaussian_bump(0.3, center, 0.8, dim)
    x_hat = rng.uniform(-0.3, 0.3, size=dim)
    well = fn.quadratic(np.eye(dim), center=x_hat).scaled(-0.5)
    u = phi + well
    r = float(rng.choice([1.0, 0.5, 0.25]))
    return phi, u, x_hat, r


def check_parallelotope(phi, u, x_hat, r, n_samples=10_000):
    b = F.build_psi_r(phi, u, x_hat, r)
    J = fn.jet_at(phi, x_hat)
    inner = b.region(1.0 / 3.0).sample(n_samples, 1)
    scale = 1.0 + abs(J.value)
    exact = float(np.max(np.abs(b(inner) - b.quadratic_model(inner)))) <= 1e-12 * scale
    corner = b.region(2.0 / 3.0, 1.0).sample(n_samples, 2)
    min_eig = float(np.min(np.linalg.eigvalsh(b.jet(corner)[2])))
    cube = b.region(1.0).sample(n_samples, 3)
    v0, g0, _ = b.jet(x_hat)
    dx = cube - x_hat
    lhs = b(cube) - v0 - dx @ g0
    taylor = bool(np.all(lhs <= b.taylor_constant * np.sum(dx * dx, axis=1) + 1e-14))
    _, g, H = b.jet(x_hat)
    jets = np.allclose(g, J.p, atol=1e-14) and np.allclose(H, J.X + r * np.eye(x_hat.size), atol=1e-12)
    return exact, min_eig, taylor, jets, b


@pytest.mark.parametrize("seed", range(10))
def test_parallelotope_instances(seed):
    phi, u, x_hat, r = _instance(seed)
    exact, min_eig, taylor, jets, b = check_parallelotope(phi, u, x_hat, r, 2000)
    assert exact and taylor and jets
    assert min_eig >= -1e-10


@pytest.mark.parametrize("seed", range(4))
def test_parallelotopes_nest_and_shrink(seed):
    phi, u, x_hat, _ = _instance(seed)
    rs = [1.0, 0.5, 0.25, 0.125]
    bases = [F.build_psi_r(phi, u, x_hat, r) for r in rs]
    sizes = [b.s_r for b in bases]
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))
    assert sizes[-1] <= rs[-1]
    for small, big in zip(bases[1:], bases):
        pts = small.region(1.0).sample(512)
        assert np.all(big.region(1.0 + 1e-12).contains(pts))


def test_regions():
    ball = F.Region("ball", np.zeros(2), 1.0)
    assert ball.contains(np.array([[0.5, 0.5], [0.8, 0.8]])).tolist() == [True, False]
    ann = F.Region("cube_annulus", np.zeros(2), 0.5, 1.0)
    assert ann.contains(np.array([[0.7, 0.7], [0.7, 0.2], [0.2, 0.2]])).tolist() == [True, False, False]
    for kind, inner, outer in (("ball_annulus", 0.5, 1.0), ("cube", 1.0, None), ("cube_annulus", 0.5, 1.0)):
        reg = F.Region(kind, np.array([0.3, -0.1]), inner, outer)
        assert np.all(reg.contains(reg.sample(200)))


# exterior sequences -----------------------------------------------------------------

@pytest.fixture(scope="module")
def bump_sequence():
    u = fn.gaussian_bump(1.0, 0.0, 1.0, 1)
    base = F.build_psi_r(u, u, [0.0], 1.0)
    return u, base, F.extend_decreasing_sequence(base, u)


def test_sequence_equals_psi_inside(bump_sequence):
    u, base, seq = bump_sequence
    inside = base.region(1.0).sample(400)
    inner = base.region(1.0 / 3.0).sample(200)
    for n in (1, 5, 20):
        psi_n = seq.term(n)
        assert np.array_equal(psi_n(inside), base(inside))
        assert np.allclose(psi_n(inner), base.quadratic_model(inner), atol=1e-15)


def test_sequence_dominates_decreases_and_converges(bump_sequence):
    u, base, seq = bump_sequence
    x = np.linspace(-4, 4, 4001)[:, None]
    # the offset profile is flat at the boundary, so strictness is only visible in floating point
    # once the profile clears roundoff
    outside = np.abs(x[:, 0]) >= 1.2 * base.s_r
    prev = None
    for n in range(1, 21):
        v = seq.term(n)(x)
        gap = v - u(x)
        assert np.all(gap >= -1e-15)
        if prev is not None:
            assert np.all(v[outside] < prev[outside])
            assert np.all(v <= prev + 1e-15)
        prev = v
    far = np.abs(x[:, 0]) >= 2 * base.s_r
    assert np.allclose(gap[far], 1.0 / 20, atol=1e-15)
    # pointwise convergence outside P^r: at fixed exterior points ψ_n − u → 0
    probe = np.array([[0.55], [0.8], [1.5]])
    gaps = [float(np.max(seq.term(n)(probe) - u(probe))) for n in (10, 40, 160)]
    assert gaps[-1] < gaps[0] and gaps[-1] <= 1 / 160 + 1e-12


def test_global_max_preserved(bump_sequence):
    u, base, seq = bump_sequence
    x = np.linspace(-4, 4, 801)[:, None]
    for n in (1, 3, 12):
        psi = seq.term(n)
        d = u(x) - psi(x)
        assert np.all(d <= float(u(base.base_point) - psi(base.base_point)) + 1e-15)


def test_sequence_for_kinked_candidate():
    u = fn.cone(-1.0, 0.0, 1.0, 1)
    phi = fn.polynomial_1d([0, 0, 1])
    base = F.build_psi_r(phi, u, [0.0], 0.5)
    seq = F.extend_decreasing_sequence(base, u)
    x = np.linspace(-3, 3, 1201)[:, None]
    prev = None
    for n in (1, 2, 4, 8):
        v = seq.term(n)(x)
        assert np.all(v >= u(x) - 1e-15)
        if prev is not None:
            assert np.all(v <= prev + 1e-15)
        prev = v


def test_extension_failure_without_envelope():
    bare = CandidateFunction(1, lambda x: -np.abs(x[..., 0]), "piecewise_C2")
    phi = fn.polynomial_1d([0, 0, 1])
    base = F.build_psi_r(phi, bare, [0.0], 0.5)
    with pytest.raises(ExtensionFailure):
        F.extend_decreasing_sequence(base, bare)
    with pytest.raises(InvalidParameters):
        F.extend_decreasing_sequence(base, fn.cone(-1.0, 0.0, 1.0, 1)).term(0)


# radial-cap construction -----------------------------------------------------------------

def test_radial_cap_concave_quadratic():
    u = fn.polynomial_1d([0, 0, -1])
    seq = F.build_prop2_sequence(u, u, [0.0])
    assert all(m == pytest.approx(2.0) for m in seq.M)
    x = np.linspace(-3, 3, 3001)[:, None]
    prev = None
    for n in range(1, 21):
        psi = seq.term(n)
        cap = np.linspace(-0.5 / n, 0.5 / n, 11)[:, None]
        assert np.allclose(psi(cap), 4.0 * cap[:, 0] ** 2, atol=1e-15)
        assert np.allclose(psi.jet(np.zeros(1))[1], 0.0)
        assert np.allclose(psi.jet(np.zeros(1))[2], 4 * seq.M_n(n))
        v = psi(x)
        gap = v - u(x)
        assert np.all(gap >= -1e-15)
        far = np.abs(x[:, 0]) >= 2.0 / n
        assert np.all(gap[far] <= 1.0 / n + 1e-15)
        if prev is not None:
            assert np.all(v <= prev + 1e-15)
        prev = v
    v10 = seq.term(10)(np.array([[0.5], [1.0], [2.5]]))
    assert np.all(v10 - u(np.array([[0.5], [1.0], [2.5]])) <= 0.1)


def test_radial_cap_failures():
    u = fn.linear([1.0])
    with pytest.raises(ExtensionFailure):
        F.build_prop2_sequence(u, fn.cone(-1.0, 0.0, 1.0, 1) + u, [0.0])
    with pytest.raises(MaxViolated):
        F.build_prop2_sequence(fn.zero(1), fn.polynomial_1d([0, 0, 1]), [0.0])
