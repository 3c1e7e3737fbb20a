"""Polar-coordinate quadrature in R^N (N <= 3).

Every integral handled by the package has the form

    int  f(z) q(z) dz   over  {a(theta) <= |z| <= b(theta)}

and is evaluated as an angular rule (exact point pair in 1D, trapezoid on
the circle, Gauss x trapezoid on the sphere) times an adaptive radial
Gauss-Legendre rule.  Radial limits may depend on the direction, which is
how exteriors and interiors of parallelotopes are integrated.

Three radial drivers are provided:

* ``integrate_radial``  adaptive Gauss on one radial segment,
* ``integrate_graded``  geometric grading towards the origin with
  ratio extrapolation and a Cauchy divergence test,
* ``integrate_shells``  geometric subdivision of a bounded range with
  extra breakpoints (|z| = 1, kernel cutoffs, ...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import UnsupportedDimension

MAX_DIM = 3
# Aitken differences understate the true extrapolation error by a small factor
EXTRAPOLATION_SAFETY = 4.0


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings shared by all nonlocal quadratures.

    ``target_tolerance`` is an absolute tolerance for one integral;
    ``max_grading_levels`` caps both the number of dyadic annuli towards
    the origin and the number of divergence-probe shells at infinity.
    """

    target_tolerance: float = 1e-10
    max_grading_levels: int = 40
    tail_truncation_radius: float = 40.0
    richardson: bool = False
    gauss_order: int = 10
    angular_order: int = 32
    max_depth: int = 24
    panel_budget: int = 4000

    def __post_init__(self):
        if not self.target_tolerance > 0:
            raise ValueError("target_tolerance must be positive")
        if not self.tail_truncation_radius >= 1:
            raise ValueError("tail_truncation_radius must be >= 1")
        if self.max_grading_levels < 4:
            raise ValueError("max_grading_levels must be >= 4")

    @property
    def level_floor(self) -> float:
        return 1e-2 * self.target_tolerance

    @classmethod
    def from_mapping(cls, spec) -> "QuadratureConfig":
        spec = dict(spec or {})
        keymap = {"tol": "target_tolerance", "levels": "max_grading_levels",
                  "tail_radius": "tail_truncation_radius"}
        kwargs = {}
        for key, value in spec.items():
            name = keymap.get(key, key)
            if name not in cls.__dataclass_fields__:
                raise KeyError(f"unknown quadrature setting {key!r}")
            kwargs[name] = value
        return cls(**kwargs)


@dataclass
class RadialResult:
    value: np.ndarray
    error: float
    diverged: bool = False
    levels: int = 0


def sphere_area(dim: int) -> float:
    """Surface measure of S^{N-1}; equals 2 for N = 1 (two points)."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


@lru_cache(maxsize=None)
def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@lru_cache(maxsize=None)
def angular_rule(dim: int, order: int):
    """Directions (m, N) and weights (m,) integrating over S^{N-1}."""
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if dim == 2:
        t = 2.0 * math.pi * (np.arange(order) + 0.5) / order
        dirs = np.stack([np.cos(t), np.sin(t)], axis=1)
        return dirs, np.full(order, 2.0 * math.pi / order)
    if dim == 3:
        n_pol = max(4, order // 2)
        n_az = 2 * n_pol
        x, w = _gauss(n_pol)
        phi = 2.0 * math.pi * (np.arange(n_az) + 0.5) / n_az
        ct = np.repeat(x, n_az)
        st = np.sqrt(1.0 - ct**2)
        ph = np.tile(phi, n_pol)
        dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=1)
        weights = np.repeat(w, n_az) * (2.0 * math.pi / n_az)
        return dirs, weights
    raise UnsupportedDimension(f"deterministic quadrature supports N <= 3, got N={dim}")


def polar_integrand(f: Callable[[np.ndarray], np.ndarray], density, dim: int):
    """Wrap ``f(z)`` into the radial integrand ``f(r theta) q(r theta) r^{N-1}``.

    The returned callable maps ``(r (m,k), dirs (m,N))`` to ``(m,k,C)``.
    """

    def G(r, dirs):
        z = r[..., None] * dirs[:, None, :]
        vals = np.asarray(f(z), dtype=float)
        if vals.ndim == r.ndim:
            vals = vals[..., None]
        weight = density(z) * r ** (dim - 1)
        return vals * weight[..., None]

    return G


def _panel(G, dirs, wdir, a, b, t0, t1, order):
    x, w = _gauss(order)
    tau = t0 + (t1 - t0) * (x + 1.0) / 2.0
    span = b - a
    live = span > 0
    r = a[:, None] + span[:, None] * tau[None, :]
    r = np.where(live[:, None], r, 1.0)
    vals = G(r, dirs)
    jac = np.where(live, span, 0.0) * ((t1 - t0) / 2.0)
    per_dir = np.einsum("mkc,k->mc", vals, w) * jac[:, None]
    per_dir = np.where(live[:, None], per_dir, 0.0)
    return wdir @ per_dir


def integrate_radial(G, dirs, wdir, a, b, tol: float, cfg: QuadratureConfig) -> RadialResult:
    """Adaptive Gauss on ``a(theta) <= r <= b(theta)`` in the normalised variable."""
    m = dirs.shape[0]
    a = np.broadcast_to(np.asarray(a, dtype=float), (m,))
    b = np.broadcast_to(np.asarray(b, dtype=float), (m,))
    if not np.any(b > a):
        sample = G(np.ones((m, 1)), dirs)
        return RadialResult(np.zeros(sample.shape[-1]), 0.0)
    p = cfg.gauss_order
    accepted = []
    budget = cfg.panel_budget
    stack = [(0.0, 1.0, _panel(G, dirs, wdir, a, b, 0.0, 1.0, p), 0, math.inf)]
    while stack:
        t0, t1, coarse, depth, parent_err = stack.pop()
        tm = 0.5 * (t0 + t1)
        left = _panel(G, dirs, wdir, a, b, t0, tm, p)
        right = _panel(G, dirs, wdir, a, b, tm, t1, p)
        budget -= 2
        fine = left + right
        err = float(np.max(np.abs(fine - coarse)))
        scale = float(np.max(np.abs(fine)))
        # bisection that no longer shrinks the error means round-off dominates
        stalled = depth >= 4 and err > 0.5 * parent_err
        if (err <= max(tol * (t1 - t0), 1e-14 * scale) or depth >= cfg.max_depth
                or stalled or budget <= 0):
            accepted.append((t0, fine, err))
        else:
            stack.append((tm, t1, right, depth + 1, err))
            stack.append((t0, tm, left, depth + 1, err))
    accepted.sort(key=lambda item: item[0])
    parts = np.array([item[1] for item in accepted])
    value = np.array([math.fsum(parts[:, c]) for c in range(parts.shape[1])])
    error = math.fsum(item[2] for item in accepted)
    if not np.all(np.isfinite(value)):
        return RadialResult(value, math.inf, diverged=True)
    return RadialResult(value, error)


def _aitken(seq):
    """One Aitken delta-squared sweep over a list of vectors."""
    out = []
    for s0, s1, s2 in zip(seq, seq[1:], seq[2:]):
        d1, d2 = s1 - s0, s2 - s1
        den = d2 - d1
        with np.errstate(divide="ignore", invalid="ignore"):
            acc = np.where(np.abs(den) > 0, s2 - d2 * d2 / den, s2)
        out.append(np.where(np.isfinite(acc), acc, s2))
    return out


def _extrapolate(sums):
    """Twice-iterated Aitken estimate of the limit and its change from the previous one."""
    if len(sums) < 6:
        return sums[-1], math.inf
    once = _aitken(sums[-7:])
    twice = _aitken(once)
    best, prev = twice[-1], twice[-2]
    return best, float(np.max(np.abs(best - prev)))


def integrate_graded(G, dirs, wdir, outer, cfg: QuadratureConfig,
                     min_radius: float = 0.0) -> RadialResult:
    """Integrate over ``0 < r < outer(theta)`` on dyadic annuli.

    Annulus k is ``[outer 2^{-k-1}, outer 2^{-k}]``.  Grading stops when the
    last contribution is below the absolute floor, or when the iterated
    Aitken extrapolation of the partial sums has settled to the level
    tolerance while every component contracts geometrically.  Annuli inside
    ``min_radius`` are never evaluated (their integrand is round-off); the
    limit is then taken from the extrapolation.  Without geometric
    contraction within ``max_grading_levels`` annuli the integral is
    reported as divergent.
    """
    m = dirs.shape[0]
    outer = np.broadcast_to(np.asarray(outer, dtype=float), (m,))
    contribs, sums = [], []
    error = 0.0
    last_est, last_unc = None, math.inf
    contracting = False
    for k in range(cfg.max_grading_levels):
        hi = outer * 2.0**-k
        if k >= 6 and float(np.max(hi)) <= min_radius:
            break
        res = integrate_radial(G, dirs, wdir, 0.5 * hi, hi, cfg.level_floor, cfg)
        if res.diverged:
            return RadialResult(res.value, math.inf, diverged=True, levels=k + 1)
        contribs.append(res.value)
        error += res.error
        csum = np.array([math.fsum(col) for col in np.array(contribs).T])
        sums.append(csum)
        level_tol = max(1e-12 * float(np.max(np.abs(csum))), cfg.level_floor)
        c_k = res.value
        if k >= 2 and float(np.max(np.abs(c_k))) <= cfg.level_floor * 1e-2:
            return RadialResult(csum, error + float(np.max(np.abs(c_k))), levels=k + 1)
        if k < 3:
            continue
        tiny = np.abs(c_k) <= cfg.level_floor * 1e-2
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(np.abs(contribs[-2]) > 0, c_k / contribs[-2], 0.0)
        contracting = bool(np.all(tiny | ((ratio > 0) & (ratio < 0.95))))
        if not contracting:
            continue
        est, unc = _extrapolate(sums)
        if not math.isfinite(unc):
            rho = np.where(tiny, 0.0, ratio)
            est, unc = csum + c_k * rho / (1.0 - rho), float(np.max(np.abs(c_k))) / 0.05
        if unc < last_unc:
            last_est, last_unc = est, unc
        if unc <= level_tol:
            return RadialResult(est, error + EXTRAPOLATION_SAFETY * unc, levels=k + 1)
    if contracting and last_est is not None:
        return RadialResult(last_est, error + EXTRAPOLATION_SAFETY * last_unc, levels=len(contribs))
    csum = np.array([math.fsum(col) for col in np.array(contribs).T]) if contribs else None
    return RadialResult(csum, math.inf, diverged=True, levels=len(contribs))


def shell_breakpoints(lo: float, hi: float, extra: Sequence[float] = ()) -> list[float]:
    """Geometric breakpoints lo, 2lo, 4lo, ... < hi merged with ``extra``."""
    pts = [lo]
    x = lo
    while 2.0 * x < hi:
        x *= 2.0
        pts.append(x)
    pts.append(hi)
    for e in extra:
        if lo < e < hi:
            pts.append(float(e))
    return sorted(set(pts))


def integrate_shells(G, dirs, wdir, start, stop, lo: float, hi: float,
                     cfg: QuadratureConfig, extra: Sequence[float] = ()) -> RadialResult:
    """Integrate over ``max(lo, start) <= r <= min(hi, stop)``.

    ``start``/``stop`` are optional per-direction limits (arrays or scalars)
    that clip every geometric segment of ``[lo, hi]``.
    """
    m = dirs.shape[0]
    start = np.broadcast_to(np.asarray(start, dtype=float), (m,))
    stop = np.broadcast_to(np.asarray(stop, dtype=float), (m,))
    lo_eff = max(lo, float(np.min(start)))
    if lo_eff <= 0:
        raise ValueError("shell integration needs a positive inner radius")
    hi_eff = min(hi, float(np.max(stop)))
    if not hi_eff > lo_eff:
        sample = G(np.ones((m, 1)), dirs)
        return RadialResult(np.zeros(sample.shape[-1]), 0.0)
    pts = shell_breakpoints(lo_eff, hi_eff, extra)
    seg_tol = cfg.target_tolerance / max(len(pts) - 1, 1)
    values = []
    error = 0.0
    for p0, p1 in zip(pts[:-1], pts[1:]):
        a = np.clip(p0, start, stop)
        b = np.clip(p1, start, stop)
        res = integrate_radial(G, dirs, wdir, a, b, seg_tol, cfg)
        if res.diverged:
            return RadialResult(res.value, math.inf, diverged=True)
        values.append(res.value)
        error += res.error
    arr = np.array(values)
    value = np.array([math.fsum(arr[:, c]) for c in range(arr.shape[1])])
    return RadialResult(value, error)


def probe_divergence(G, dirs, wdir, radius: float, cfg: QuadratureConfig):
    """Sum dyadic shells beyond ``radius`` until they fall below tolerance.

    Returns ``(estimate, diverged)``; the estimate is the probed remainder.
    """
    total = []
    r0 = radius
    for _ in range(cfg.max_grading_levels):
        res = integrate_radial(G, dirs, wdir, r0, 2.0 * r0, cfg.level_floor, cfg)
        if res.diverged:
            return math.inf, True
        total.append(res.value)
        if float(np.max(np.abs(res.value))) <= cfg.level_floor:
            arr = np.array(total)
            return float(np.max(np.abs([math.fsum(arr[:, c]) for c in range(arr.shape[1])]))), False
        r0 *= 2.0
    return math.inf, True
