"""Levy densities q(z), admissibility checks and small-ball moments.

Kernels are immutable.  The scenario surface only knows the named
families below; arbitrary densities can still be built in Python by
instantiating :class:`LevyKernel` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import special

from ._polar import (MAX_DIM, QuadratureConfig, angular_rule, integrate_graded,
                     integrate_shells, polar_integrand, probe_divergence, sphere_area)
from .errors import DivergentMoment, InvalidParameters, UnsupportedDimension


@dataclass(frozen=True, eq=False)
class LevyKernel:
    """A Levy density on R^N minus the origin.

    Parameters
    ----------
    dimension : int
    density : callable
        Maps points of shape ``(..., N)`` to nonnegative values ``(...)``.
    singularity_order : float
        gamma with ``q(z) = O(|z|^{-gamma})`` at the origin.
    support_radius : float
        ``q = 0`` for ``|z| > support_radius``; ``inf`` allowed.
    radial_symmetry : bool
    closed_form_moment : callable, optional
        ``eps -> M(eps)``, the matrix ``int_{|z|<eps} z z^T q dz``.
    tail_mass_beyond : callable, optional
        ``R -> int_{|z|>R} q dz`` (or an upper bound), used for the
        truncation error of infinite-support kernels.
    """

    dimension: int
    density: Callable[[np.ndarray], np.ndarray]
    singularity_order: float = 0.0
    support_radius: float = math.inf
    radial_symmetry: bool = True
    closed_form_moment: Callable[[float], np.ndarray] | None = None
    tail_mass_beyond: Callable[[float], float] | None = None
    breakpoints: tuple = ()
    family: str = "custom"
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InvalidParameters("dimension must be a positive integer")
        if self.singularity_order < 0:
            raise InvalidParameters("singularity order must be >= 0")

    def __call__(self, z) -> np.ndarray:
        return self.density(np.asarray(z, dtype=float))

    @property
    def is_zero(self) -> bool:
        return self.family == "zero"

    def describe(self) -> dict:
        return {"family": self.family, "dim": self.dimension, **dict(self.params)}


@dataclass(frozen=True)
class MomentReport:
    near_second_moment: float
    tail_mass: float
    quadrature_error_estimate: float


def _norm(z):
    return np.sqrt(np.sum(z * z, axis=-1))


def _radial_moment_kernel(dim, radial_m):
    def moment(eps):
        return np.eye(dim) * (radial_m(eps) / dim)
    return moment


def _check_dim(dim):
    if dim > MAX_DIM:
        raise UnsupportedDimension(f"N={dim} > {MAX_DIM} is not supported")


def box_kernel(dim: int = 1, cutoff: float = 1.0, intensity: float = 1.0) -> LevyKernel:
    """Compound-Poisson box: ``q = intensity`` on ``|z| <= cutoff``."""
    if cutoff <= 0 or intensity < 0:
        raise InvalidParameters("box kernel needs cutoff > 0 and intensity >= 0")
    area = sphere_area(dim)

    def density(z):
        return np.where(_norm(z) <= cutoff, intensity, 0.0)

    def radial_m(eps):
        e = min(eps, cutoff)
        return intensity * area * e ** (dim + 2) / (dim + 2)

    def beyond(R):
        if R >= cutoff:
            return 0.0
        return intensity * area * (cutoff**dim - R**dim) / dim

    return LevyKernel(dim, density, 0.0, cutoff, True, _radial_moment_kernel(dim, radial_m),
                      beyond, (cutoff,), "box", {"cutoff": cutoff, "intensity": intensity})


def power_kernel(dim: int, gamma: float, cutoff: float = 1.0, intensity: float = 1.0,
                 family: str = "power", extra: Mapping | None = None) -> LevyKernel:
    """``q = intensity |z|^{-gamma}`` on ``0 < |z| <= cutoff``.

    No admissibility check is made here: ``gamma >= N + 2`` builds a kernel
    whose near-origin moment diverges, which is what
    :func:`verify_levy_integrability` is for.
    """
    if cutoff <= 0 or intensity < 0 or gamma < 0:
        raise InvalidParameters("power kernel needs cutoff > 0, intensity >= 0, gamma >= 0")
    area = sphere_area(dim)

    def density(z):
        r = _norm(z)
        with np.errstate(divide="ignore"):
            return np.where((r <= cutoff) & (r > 0), intensity * r ** (-gamma), 0.0)

    expo = dim + 2 - gamma
    moment = None
    if expo > 0:
        def radial_m(eps):
            return intensity * area * min(eps, cutoff) ** expo / expo
        moment = _radial_moment_kernel(dim, radial_m)

    def beyond(R):
        if R >= cutoff:
            return 0.0
        d = dim - gamma
        if d == 0:
            return intensity * area * math.log(cutoff / R)
        return intensity * area * (cutoff**d - R**d) / d

    params = {"gamma": gamma, "cutoff": cutoff, "intensity": intensity}
    params.update(extra or {})
    return LevyKernel(dim, density, gamma, cutoff, True, moment, beyond, (cutoff,),
                      family, params)


def truncated_stable_kernel(dim: int, alpha: float, cutoff: float = 1.0,
                            intensity: float = 1.0) -> LevyKernel:
    """``q = intensity |z|^{-N-alpha}`` on ``0 < |z| <= cutoff``, alpha in (0, 2)."""
    if not 0 < alpha < 2:
        raise InvalidParameters("alpha must lie in (0, 2)")
    k = power_kernel(dim, dim + alpha, cutoff, intensity, family="stable", extra={"alpha": alpha})
    params = {"alpha": alpha, "cutoff": cutoff, "intensity": intensity}
    return LevyKernel(k.dimension, k.density, k.singularity_order, k.support_radius, True,
                      k.closed_form_moment, k.tail_mass_beyond, k.breakpoints, "stable", params)


def tempered_stable_kernel(dim: int, alpha: float, lam: float,
                           intensity: float = 1.0) -> LevyKernel:
    """``q = intensity exp(-lam |z|) |z|^{-N-alpha}`` on all of R^N."""
    if not 0 < alpha < 2 or lam <= 0:
        raise InvalidParameters("tempered stable needs alpha in (0, 2) and lambda > 0")
    area = sphere_area(dim)

    def density(z):
        r = _norm(z)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(r > 0, intensity * np.exp(-lam * r) * r ** (-dim - alpha), 0.0)

    def radial_m(eps):
        a = 2.0 - alpha
        return intensity * area * lam ** (-a) * special.gamma(a) * special.gammainc(a, lam * eps)

    def beyond(R):
        # r^{-1-alpha} <= R^{-1-alpha} on r > R
        return intensity * area * math.exp(-lam * R) * R ** (-1.0 - alpha) / lam

    return LevyKernel(dim, density, dim + alpha, math.inf, True,
                      _radial_moment_kernel(dim, radial_m), beyond, (), "tempered",
                      {"alpha": alpha, "lambda": lam, "intensity": intensity})


def gaussian_kernel(dim: int = 1, sigma: float = 1.0, intensity: float = 1.0) -> LevyKernel:
    """Finite Gaussian jump measure ``intensity N(0, sigma^2 I)`` (Merton-type)."""
    if sigma <= 0 or intensity < 0:
        raise InvalidParameters("gaussian kernel needs sigma > 0 and intensity >= 0")
    norm_c = intensity * (2.0 * math.pi * sigma**2) ** (-dim / 2)

    def density(z):
        return norm_c * np.exp(-0.5 * np.sum(z * z, axis=-1) / sigma**2)

    def radial_m(eps):
        t = eps**2 / sigma**2
        return intensity * sigma**2 * dim * special.gammainc((dim + 2) / 2.0, t / 2.0)

    def beyond(R):
        return intensity * float(special.gammaincc(dim / 2.0, R**2 / (2.0 * sigma**2)))

    return LevyKernel(dim, density, 0.0, math.inf, True, _radial_moment_kernel(dim, radial_m),
                      beyond, (), "gaussian", {"sigma": sigma, "intensity": intensity})


def zero_kernel(dim: int = 1) -> LevyKernel:
    def density(z):
        return np.zeros(np.shape(z)[:-1])

    return LevyKernel(dim, density, 0.0, 0.0, True, lambda eps: np.zeros((dim, dim)),
                      lambda R: 0.0, (), "zero", {})


def kernel_from_spec(spec: Mapping) -> LevyKernel:
    """Build a kernel from ``{family, dim, alpha?, lambda?, cutoff?, ...}``."""
    spec = dict(spec)
    family = spec.pop("family")
    dim = int(spec.pop("dim", 1))
    _check_dim(dim)
    builders = {
        "box": lambda: box_kernel(dim, spec.pop("cutoff", 1.0), spec.pop("intensity", 1.0)),
        "stable": lambda: truncated_stable_kernel(dim, spec.pop("alpha"), spec.pop("cutoff", 1.0),
                                                  spec.pop("intensity", 1.0)),
        "tempered": lambda: tempered_stable_kernel(dim, spec.pop("alpha"), spec.pop("lambda"),
                                                   spec.pop("intensity", 1.0)),
        "gaussian": lambda: gaussian_kernel(dim, spec.pop("sigma", 1.0), spec.pop("intensity", 1.0)),
        "power": lambda: power_kernel(dim, spec.pop("gamma"), spec.pop("cutoff", 1.0),
                                      spec.pop("intensity", 1.0)),
        "zero": lambda: zero_kernel(dim),
    }
    if family not in builders:
        raise KeyError(f"unknown kernel family {family!r}")
    try:
        kernel = builders[family]()
    except KeyError as exc:
        raise KeyError(f"kernel family {family!r} needs parameter {exc.args[0]!r}") from None
    if spec:
        raise KeyError(f"unexpected kernel parameters {sorted(spec)}")
    return kernel


def check_kernel_invariants(kernel: LevyKernel, n_samples: int = 512, seed: int = 0) -> list[str]:
    """Sampled invariants of a kernel; returns the list of violations."""
    rng = np.random.default_rng(seed)
    N = kernel.dimension
    problems = []
    dirs = rng.normal(size=(n_samples, N))
    dirs /= _norm(dirs)[:, None]
    radii = 10.0 ** rng.uniform(-6, 2, size=n_samples)
    z = dirs * radii[:, None]
    q = kernel(z)
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        problems.append("density negative or non-finite at sampled points")
    if kernel.singularity_order >= N + 2:
        problems.append(f"singularity order {kernel.singularity_order} >= N + 2")
    if kernel.radial_symmetry:
        other = rng.normal(size=(n_samples, N))
        other /= _norm(other)[:, None]
        q2 = kernel(other * radii[:, None])
        if not np.allclose(q, q2, rtol=1e-12, atol=0.0):
            problems.append("declared radial symmetry violated")
    return problems


def _rule(kernel, cfg):
    return angular_rule(kernel.dimension, cfg.angular_order)


def quadrature_moment(kernel: LevyKernel, eps: float, cfg: QuadratureConfig | None = None):
    """``int_{|z|<eps} z z^T q dz`` by graded quadrature, with its error estimate."""
    cfg = cfg or QuadratureConfig()
    N = kernel.dimension
    _check_dim(N)
    dirs, w = _rule(kernel, cfg)

    def outer(z):
        return (z[..., :, None] * z[..., None, :]).reshape(z.shape[:-1] + (N * N,))

    G = polar_integrand(outer, kernel.density, N)
    res = integrate_graded(G, dirs, w, eps, cfg)
    if res.diverged:
        raise DivergentMoment(f"small-ball second moment diverges for {kernel.family}")
    M = res.value.reshape(N, N)
    return 0.5 * (M + M.T), res.error


def small_ball_quadratic_moment(kernel: LevyKernel, eps: float,
                                cfg: QuadratureConfig | None = None) -> np.ndarray:
    """``M(eps) = int_{|z|<eps} z z^T q(z) dz`` (closed form when available)."""
    if not eps > 0:
        raise InvalidParameters("eps must be positive")
    if kernel.singularity_order >= kernel.dimension + 2:
        raise DivergentMoment(
            f"singularity order {kernel.singularity_order} >= N + 2 = {kernel.dimension + 2}")
    if kernel.closed_form_moment is not None:
        return np.asarray(kernel.closed_form_moment(eps), dtype=float)
    return quadrature_moment(kernel, eps, cfg)[0]


def verify_levy_integrability(kernel: LevyKernel,
                              quad_cfg: QuadratureConfig | None = None) -> MomentReport:
    """Check ``int_{|z|<1}|z|^2 q + int_{|z|>=1} q < inf`` numerically.

    Both pieces are integrated by quadrature (closed forms are never used
    here, so the report can be compared against them).  Divergence is
    detected by the Cauchy criterion on dyadic partial sums.
    """
    cfg = quad_cfg or QuadratureConfig()
    N = kernel.dimension
    _check_dim(N)
    dirs, w = _rule(kernel, cfg)
    near_G = polar_integrand(lambda z: np.sum(z * z, axis=-1), kernel.density, N)
    near = integrate_graded(near_G, dirs, w, 1.0, cfg)
    if near.diverged:
        raise DivergentMoment(
            f"int_(|z|<1) |z|^2 q dz fails the Cauchy test after {near.levels} levels")
    mass_G = polar_integrand(lambda z: np.ones(z.shape[:-1]), kernel.density, N)
    error = near.error
    tail = 0.0
    if kernel.support_radius > 1.0:
        top = min(kernel.support_radius, cfg.tail_truncation_radius)
        body = integrate_shells(mass_G, dirs, w, 0.0, math.inf, 1.0, top, cfg,
                                extra=kernel.breakpoints)
        tail = float(body.value[0])
        error += body.error
        if kernel.support_radius > top:
            rest, diverged = probe_divergence(mass_G, dirs, w, top, cfg)
            if diverged:
                raise DivergentMoment("int_(|z|>=1) q dz fails the Cauchy test")
            tail += rest
            error += cfg.level_floor
    return MomentReport(float(near.value[0]), tail, error)
