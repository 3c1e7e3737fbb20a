"""Compensated jump integrals split the way each definition displays them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._polar import (QuadratureConfig, angular_rule, integrate_graded, integrate_shells,
                     polar_integrand, probe_divergence)
from .functions import CandidateFunction, jet_at
from .kernels import LevyKernel, small_ball_quadratic_moment
from .sampling import shell_directions

TAYLOR_RADIUS = 1e-6


@dataclass(frozen=True)
class IntegralValue:
    value: float
    error_estimate: float
    tail_truncation_error_bound: float = 0.0
    diverged: bool = False
    integrable_indicator_free: bool | None = None

    @property
    def total_error(self) -> float:
        return self.error_estimate + self.tail_truncation_error_bound

    def __add__(self, other: "IntegralValue") -> "IntegralValue":
        free = None
        if self.integrable_indicator_free is not None or other.integrable_indicator_free is not None:
            free = (self.integrable_indicator_free is not False
                    and other.integrable_indicator_free is not False)
        return IntegralValue(self.value + other.value,
                             self.error_estimate + other.error_estimate,
                             self.tail_truncation_error_bound + other.tail_truncation_error_bound,
                             self.diverged or other.diverged, free)


ZERO = IntegralValue(0.0, 0.0)


def internal_epsilon(cfg: QuadratureConfig) -> float:
    """Split radius used by the full-integral routines."""
    return min(1.0, cfg.tail_truncation_radius) * 2.0**-6


def increment_integrand(u: CandidateFunction, x_hat, p, indicator: bool = True,
                        absolute: bool = False):
    """``z -> u(x+z) - u(x) - 1_{|z|<=1} <z, p>`` (or without the indicator)."""
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    u0 = float(u.evaluator(x_hat))

    def f(z):
        lin = z @ p
        if indicator:
            lin = np.where(np.sum(z * z, axis=-1) <= 1.0, lin, 0.0)
        h = u.evaluator(x_hat + z) - u0 - lin
        return np.abs(h) if absolute else h

    return f


def _rule(kernel, cfg):
    return angular_rule(kernel.dimension, cfg.angular_order)


def _shell_integral(f, kernel: LevyKernel, cfg: QuadratureConfig, start, sup_abs,
                    extra=()) -> IntegralValue:
    """``int f q`` over ``|z| >= start(theta)``, truncated at the tail radius."""
    dirs, w = _rule(kernel, cfg)
    start = np.broadcast_to(np.asarray(start, dtype=float), (dirs.shape[0],))
    G = polar_integrand(f, kernel.density, kernel.dimension)
    top = min(kernel.support_radius, cfg.tail_truncation_radius)
    lo = float(np.min(start))
    body = integrate_shells(G, dirs, w, start, math.inf, lo, top, cfg,
                            extra=(1.0,) + tuple(kernel.breakpoints) + tuple(extra))
    if body.diverged:
        return IntegralValue(math.nan, math.inf, 0.0, True)
    value, error, bound = float(body.value[0]), body.error, 0.0
    if kernel.support_radius > top:
        R = max(top, lo)
        if sup_abs is not None and kernel.tail_mass_beyond is not None:
            bound = 2.0 * sup_abs * float(kernel.tail_mass_beyond(R))
        else:
            rest, diverged = probe_divergence(G, dirs, w, R, cfg)
            if diverged:
                return IntegralValue(math.nan, math.inf, math.inf, True)
            value += rest
            bound = abs(rest)
    return IntegralValue(value, error, bound)


def tail_integral(u: CandidateFunction, x_hat, p, eps: float, kernel: LevyKernel,
                  cfg: QuadratureConfig | None = None) -> IntegralValue:
    """``int_{|z|>=eps} [u(x+z) - u(x) - 1_{|z|<=1}<z,p>] q(z) dz``.

    Infinite-support kernels are truncated at ``cfg.tail_truncation_radius``.
    For bounded ``u`` the discarded part is bounded by
    ``2 sup|u| int_{|z|>R} q``; otherwise it is estimated by a divergence
    probe and added to the value, and a failing probe sets ``diverged``.
    """
    cfg = cfg or QuadratureConfig()
    if not eps > 0:
        raise ValueError("eps must be positive")
    if kernel.is_zero or eps >= kernel.support_radius:
        return ZERO
    f = increment_integrand(u, x_hat, p)
    return _shell_integral(f, kernel, cfg, eps, u.sup_abs)


def small_ball_bound_term(X, delta: float, eps: float, kernel: LevyKernel, sign: str = "+",
                          cfg: QuadratureConfig | None = None) -> float:
    """``1/2 trace((X +- 2 delta I) M(eps))``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if kernel.is_zero:
        return 0.0
    M = small_ball_quadratic_moment(kernel, eps, cfg)
    s = {"+": 1.0, "-": -1.0, "sub": 1.0, "super": -1.0}[sign]
    A = X + s * 2.0 * delta * np.eye(X.shape[0])
    return 0.5 * float(np.trace(A @ M))


def _graded(f, kernel, cfg, outer, min_radius=0.0):
    dirs, w = _rule(kernel, cfg)
    G = polar_integrand(f, kernel.density, kernel.dimension)
    outer = np.minimum(np.broadcast_to(np.asarray(outer, dtype=float), (dirs.shape[0],)),
                       kernel.support_radius)
    return integrate_graded(G, dirs, w, outer, cfg, min_radius)


def roundoff_radius(h, u0: float, dim: int, outer: float, levels: int = 60) -> float:
    """Radius below which increments ``h`` are indistinguishable from round-off.

    Probes the shell directions at ``outer 2^-k`` and returns the largest
    radius inside which every probed ``|h|`` stays below ``1e3`` times the
    evaluation noise of ``u``.  Returns 0 when the increments stay resolved.
    """
    noise = 1e6 * 16 * np.finfo(float).eps * max(abs(u0), np.finfo(float).tiny)
    dirs = shell_directions(dim)
    radii = outer * 2.0 ** -np.arange(levels)
    z = radii[:, None, None] * dirs[None, :, :]
    mags = np.max(np.abs(h(z)), axis=1)
    lost = mags < noise
    if not lost[-1]:
        return 0.0
    k = levels - 1
    while k > 0 and lost[k - 1]:
        k -= 1
    return float(radii[k])


def taylor_radius(phi_value: float, hessian) -> float:
    """Radius where the round-off of the increment and the Taylor remainder balance.

    The increment of a C^2 function loses ``eps |phi| / (|H| r^2)`` relative
    digits to cancellation while the quadratic Taylor term is off by
    ``O(r^2)`` relatively, so the crossover sits near ``(eps |phi| / |H|)^(1/4)``.
    """
    noise = 16 * np.finfo(float).eps * max(abs(phi_value), 1e-300)
    scale = float(np.linalg.norm(hessian, 2))
    if scale == 0:
        return TAYLOR_RADIUS
    return float(np.clip(0.5 * (noise / scale) ** 0.25, TAYLOR_RADIUS, 1e-3))


def small_ball_remainder(phi: CandidateFunction, x_hat, eps: float, kernel: LevyKernel,
                         cfg: QuadratureConfig | None = None) -> IntegralValue:
    """``int_{|z|<eps} [phi(x+z) - phi(x) - <z, grad phi(x)>] q dz`` on a graded mesh.

    Close to the origin the increment is replaced by its quadratic Taylor
    term (see :func:`taylor_radius`) so that cancellation does not pollute
    the innermost annuli.  The switch radius is doubled once and the change
    is added to the error estimate.
    """
    cfg = cfg or QuadratureConfig()
    if kernel.is_zero:
        return ZERO
    J = jet_at(phi, x_hat)
    raw = increment_integrand(phi, J.base_point, J.p, indicator=False)
    H = J.X
    rt = taylor_radius(J.value, H)

    def run(radius):
        def f(z):
            r2 = np.sum(z * z, axis=-1)
            quad = 0.5 * np.einsum("...i,ij,...j->...", z, H, z)
            return np.where(r2 < radius * radius, quad, raw(z))
        return _graded(f, kernel, cfg, eps)

    res = run(rt)
    if res.diverged:
        return IntegralValue(math.nan, math.inf, 0.0, True)
    if rt >= eps:
        return IntegralValue(float(res.value[0]), res.error)
    check = run(2.0 * rt)
    spread = abs(float(check.value[0]) - float(res.value[0])) if not check.diverged else 0.0
    return IntegralValue(float(res.value[0]), res.error + spread)


def compensated_full_integral(phi: CandidateFunction, x_hat, kernel: LevyKernel,
                              cfg: QuadratureConfig | None = None) -> IntegralValue:
    """``int [phi(x+z) - phi(x) - 1_{|z|<=1}<z, grad phi(x)>] q dz`` over R^N.

    The ball ``|z| < eps_int`` is integrated on a graded mesh and the rest by
    :func:`tail_integral`.  With ``cfg.richardson`` the ball is replaced by
    the Taylor term ``1/2 trace(D^2 phi M(eps))`` and the split radius is
    extrapolated to zero over three halvings.
    """
    cfg = cfg or QuadratureConfig()
    if kernel.is_zero:
        return ZERO
    J = jet_at(phi, x_hat)
    eps = internal_epsilon(cfg)
    if not cfg.richardson:
        return (small_ball_remainder(phi, J.base_point, eps, kernel, cfg)
                + tail_integral(phi, J.base_point, J.p, eps, kernel, cfg))
    N, gamma = kernel.dimension, kernel.singularity_order
    p1 = N + (4.0 if kernel.radial_symmetry else 3.0) - gamma
    p2 = p1 + (2.0 if kernel.radial_symmetry else 1.0)
    parts = []
    for k in range(3):
        e = eps * 2.0**-k
        M = small_ball_quadratic_moment(kernel, e, cfg)
        parts.append((0.5 * float(np.trace(J.X @ M)), tail_integral(phi, J.base_point, J.p, e, kernel, cfg)))
    if any(t.diverged for _, t in parts):
        return IntegralValue(math.nan, math.inf, 0.0, True)
    S = [a + t.value for a, t in parts]
    r1 = [(2.0**p1 * S[k + 1] - S[k]) / (2.0**p1 - 1.0) for k in range(2)]
    r2 = (2.0**p2 * r1[1] - r1[0]) / (2.0**p2 - 1.0)
    err = abs(r2 - r1[1]) + max(t.error_estimate for _, t in parts)
    bound = max(t.tail_truncation_error_bound for _, t in parts)
    return IntegralValue(r2, err, bound)


def nonsmooth_full_integral(u: CandidateFunction, x_hat, grad_phi, kernel: LevyKernel,
                            cfg: QuadratureConfig | None = None) -> IntegralValue:
    """``int [u(x+z) - u(x) - 1_{|z|<=1}<z, grad_phi>] q dz`` without Taylor replacement.

    ``diverged`` is set when the displayed integrand is not absolutely
    integrable near the origin (graded mesh, Cauchy test on ``|h|``).
    ``integrable_indicator_free`` reports the same test for
    ``u(x+z) - u(x)`` without the gradient compensation.
    """
    cfg = cfg or QuadratureConfig()
    if kernel.is_zero:
        return IntegralValue(0.0, 0.0, 0.0, False, True)
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    eps = internal_epsilon(cfg)
    h = increment_integrand(u, x_hat, grad_phi)

    def both(z):
        v = h(z)
        return np.stack([v, np.abs(v)], axis=-1)

    free_abs = increment_integrand(u, x_hat, np.zeros_like(x_hat), indicator=False, absolute=True)
    u0 = float(u.evaluator(x_hat))
    N = kernel.dimension
    free = _graded(free_abs, kernel, cfg, 1.0, roundoff_radius(free_abs, u0, N, 1.0))
    near = _graded(both, kernel, cfg, eps, roundoff_radius(h, u0, N, eps))
    if near.diverged:
        return IntegralValue(math.nan, math.inf, 0.0, True, not free.diverged)
    far = tail_integral(u, x_hat, grad_phi, eps, kernel, cfg)
    out = IntegralValue(float(near.value[0]), near.error) + far
    return IntegralValue(out.value, out.error_estimate, out.tail_truncation_error_bound,
                         out.diverged, not free.diverged)


# parallelotope regions -------------------------------------------------------------

def exit_radius(T, s: float, dirs) -> np.ndarray:
    """Distance from the centre to the boundary of ``{T y : |y_i| <= s}`` along each direction."""
    y = np.asarray(dirs) @ np.asarray(T)
    return s / np.max(np.abs(y), axis=1)


def exterior_integral(u: CandidateFunction, x_hat, p, T, s: float, kernel: LevyKernel,
                      cfg: QuadratureConfig | None = None) -> IntegralValue:
    """``int_{z outside P} [u(x+z) - u(x) - 1_{|z|<=1}<z,p>] q dz`` with ``P = T [-s, s]^N``."""
    cfg = cfg or QuadratureConfig()
    if kernel.is_zero:
        return ZERO
    dirs, _ = _rule(kernel, cfg)
    start = exit_radius(T, s, dirs)
    if float(np.min(start)) >= kernel.support_radius:
        return ZERO
    return _shell_integral(increment_integrand(u, x_hat, p), kernel, cfg, start, u.sup_abs)


def interior_integral(u: CandidateFunction, x_hat, p, T, s: float, kernel: LevyKernel,
                      cfg: QuadratureConfig | None = None) -> IntegralValue:
    """The same increment integrated over the inside of ``P``."""
    cfg = cfg or QuadratureConfig()
    if kernel.is_zero:
        return ZERO
    dirs, _ = _rule(kernel, cfg)
    h = increment_integrand(u, x_hat, p)
    outer = exit_radius(T, s, dirs)
    u0 = float(u.evaluator(np.atleast_1d(np.asarray(x_hat, dtype=float))))
    res = _graded(h, kernel, cfg, outer, roundoff_radius(h, u0, kernel.dimension, float(np.min(outer))))
    if res.diverged:
        return IntegralValue(math.nan, math.inf, 0.0, True)
    return IntegralValue(float(res.value[0]), res.error)
