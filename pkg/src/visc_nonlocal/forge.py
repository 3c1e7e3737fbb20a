"""C^2 test functions: glue spline, parallelotope function and approximating sequences.

Conventions
-----------
* ``T`` holds the eigenvectors of ``D^2 phi(x_hat)`` as columns, sorted by
  descending eigenvalue with the largest-magnitude entry of every column
  made positive.  Local coordinates are ``y = T^T (x - x_hat)``.
* ``lambda_i`` is half the i-th eigenvalue of ``D^2 phi(x_hat) + r I`` so
  that the quadratic model reads ``sum_i lambda_i y_i^2``.
* Negative ``lambda_i`` get a glue spline, the others stay quadratic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.special import expit

from .errors import ExtensionFailure, InvalidParameters, MaxViolated, NoValidScale, OutOfDomain
from .functions import CandidateFunction, jet_at
from .sampling import ball_offsets, halton, halton_ball

_EXP_CUTOFF = 700.0


# smooth cutoffs ---------------------------------------------------------------

def smoothstep(t):
    """C-infinity step, 0 for t <= 0 and 1 for t >= 1, with two derivatives."""
    t = np.asarray(t, dtype=float)
    inner = (t > 0) & (t < 1)
    tc = np.where(inner, t, 0.5)
    w = 1.0 / tc - 1.0 / (1.0 - tc)
    L = expit(-w)
    L1 = -L * expit(w)            # dL/dw
    L2 = -L1 * (1.0 - 2.0 * L)    # d2L/dw2
    w1 = -1.0 / tc**2 - 1.0 / (1.0 - tc) ** 2
    w2 = 2.0 / tc**3 - 2.0 / (1.0 - tc) ** 3
    S = np.where(inner, L, np.where(t >= 1, 1.0, 0.0))
    S1 = np.where(inner, L1 * w1, 0.0)
    S2 = np.where(inner, L2 * w1 * w1 + L1 * w2, 0.0)
    return S, S1, S2


def cutoff(t):
    """``1 - smoothstep``: equals 1 for t <= 0 and 0 for t >= 1."""
    S, S1, S2 = smoothstep(t)
    return 1.0 - S, -S1, -S2


# glue spline -----------------------------------------------------------------

@dataclass(frozen=True)
class GlueSpline1D:
    """Even C^2 function: ``lam x^2`` near 0, the flat value ``2 lam s^2 / 9`` near ``|x| = s``."""

    lam: float
    s: float

    def __post_init__(self):
        if not (self.lam < 0 and self.s > 0):
            raise InvalidParameters("glue spline needs lambda < 0 and s > 0")

    @property
    def alpha(self) -> float:
        return 2.0 * self.s / 3.0

    @property
    def a(self) -> float:
        return -math.e * self.lam * self.s**2 / 9.0

    @property
    def b(self) -> float:
        return 2.0 * self.lam * self.s**2 / 9.0

    @property
    def c(self) -> float:
        return self.s**2 / 9.0

    def evaluate(self, x):
        """Value and two derivatives, continued as a constant beyond ``|x| = s``."""
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        sgn = np.where(x < 0, -1.0, 1.0)
        s, lam = self.s, self.lam
        inner = ax <= s / 3.0
        flat = ax >= 2.0 * s / 3.0
        mid = ~(inner | flat)
        t = np.where(mid, ax - self.alpha, -s / 3.0)
        ratio = self.c / (t * t)
        E = np.where(ratio > _EXP_CUTOFF, 0.0, np.exp(-np.minimum(ratio, _EXP_CUTOFF)))
        aE = self.a * E
        g0 = aE + self.b
        g1 = aE * 2.0 * self.c / t**3
        g2 = aE * (4.0 * self.c**2 / t**6 - 6.0 * self.c / t**4)
        v = np.where(inner, lam * ax * ax, np.where(mid, g0, self.b))
        d1 = np.where(inner, 2.0 * lam * ax, np.where(mid, g1, 0.0)) * sgn
        d2 = np.where(inner, 2.0 * lam, np.where(mid, g2, 0.0))
        return v, d1, d2

    def evaluate_precise(self, x, dps: int = 40):
        """Value at a single point in ``dps`` decimal digits (for difference stencils)."""
        with mpmath.workdps(dps):
            x = abs(mpmath.mpf(x))
            s, lam = mpmath.mpf(self.s), mpmath.mpf(self.lam)
            if x <= s / 3:
                return lam * x * x
            if x >= 2 * s / 3:
                return 2 * lam * s * s / 9
            t = x - 2 * s / 3
            c = s * s / 9
            return -mpmath.e * lam * s * s / 9 * mpmath.exp(-c / (t * t)) + 2 * lam * s * s / 9


def build_glue_1d(lam: float, s: float) -> GlueSpline1D:
    return GlueSpline1D(float(lam), float(s))


def eval_glue(spline: GlueSpline1D, x: float):
    """``(psi(x), psi'(x), psi''(x))`` for ``|x| <= s``."""
    if abs(x) > spline.s:
        raise OutOfDomain(f"|x| = {abs(x)} exceeds s = {spline.s}")
    v, d1, d2 = spline.evaluate(x)
    return float(v), float(d1), float(d2)


def one_sided_second_difference(spline: GlueSpline1D, x0: float, h: float, side: int,
                                dps: int = 40) -> float:
    """Second-order one-sided stencil ``(2f0 - 5f1 + 4f2 - f3) / h^2`` in extended precision."""
    with mpmath.workdps(dps):
        x0m, hm = mpmath.mpf(x0), mpmath.mpf(h)
        f = [spline.evaluate_precise(x0m + side * k * hm, dps) for k in range(4)]
        return float((2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / (hm * hm))


def junction_diagnostics(spline: GlueSpline1D, h: float) -> list[dict]:
    """One-sided second differences on both sides of the two junctions."""
    rows = []
    for x0 in (spline.s / 3.0, 2.0 * spline.s / 3.0):
        left = one_sided_second_difference(spline, x0, h, -1)
        right = one_sided_second_difference(spline, x0, h, +1)
        exact_left = float(spline.evaluate(np.nextafter(x0, -np.inf))[2])
        exact_right = float(spline.evaluate(np.nextafter(x0, np.inf))[2])
        rows.append({"junction": x0, "h": h, "left_fd": left, "right_fd": right,
                     "left_exact": exact_left, "right_exact": exact_right,
                     "jump_fd": abs(left - right),
                     "worst_vs_exact": max(abs(left - exact_left), abs(right - exact_right))})
    return rows


# regions ------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Balls, cubes and parallelotopes with their annular variants.

    ``kind`` is one of ``ball``, ``cube``, ``ball_annulus``, ``cube_annulus``,
    ``parallelotope``, ``parallelotope_annulus``.  Cubes have half-edge
    ``inner`` (edge length ``2 inner``).  Cube and parallelotope annuli follow
    the coordinatewise definition: every coordinate strictly between the two
    half-edges.  For parallelotopes ``inner``/``outer`` are multiples of the
    base half-edge ``base``.
    """

    kind: str
    center: np.ndarray
    inner: float
    outer: float | None = None
    T: np.ndarray | None = None
    base: float = 1.0

    def _coords(self, x):
        y = np.atleast_2d(np.asarray(x, dtype=float)) - self.center
        if self.kind.startswith("parallelotope"):
            y = y @ self.T / self.base
        return y

    def contains(self, x) -> np.ndarray:
        y = self._coords(x)
        if self.kind == "ball":
            return np.linalg.norm(y, axis=1) < self.inner
        if self.kind == "ball_annulus":
            r = np.linalg.norm(y, axis=1)
            return (r > self.inner) & (r < self.outer)
        a = np.abs(y)
        if self.kind in ("cube", "parallelotope"):
            return np.all(a < self.inner, axis=1)
        if self.kind in ("cube_annulus", "parallelotope_annulus"):
            return np.all((a > self.inner) & (a < self.outer), axis=1)
        raise InvalidParameters(f"unknown region kind {self.kind!r}")

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """Low-discrepancy points inside the region."""
        dim = self.center.size
        if self.kind in ("ball", "ball_annulus"):
            if self.kind == "ball":
                return self.center + self.inner * halton_ball(n, dim, seed)
            u = halton(n, dim, seed)
            d = np.random.default_rng(seed).normal(size=(n, dim))
            d /= np.linalg.norm(d, axis=1)[:, None]
            r = (self.inner**dim + u[:, 0] * (self.outer**dim - self.inner**dim)) ** (1.0 / dim)
            return self.center + r[:, None] * d
        u = halton(n, dim, seed)
        if self.kind in ("cube", "parallelotope"):
            y = (2.0 * u - 1.0) * self.inner
        else:
            mag = self.inner + u * (self.outer - self.inner)
            signs = np.where(halton(n, dim, seed + 1) < 0.5, -1.0, 1.0)
            y = signs * mag
        if self.kind.startswith("parallelotope"):
            return self.center + (y * self.base) @ self.T.T
        return self.center + y


# parallelotope test function ----------------------------------------------------

@dataclass(frozen=True)
class ScaleSearch:
    s_max: float = 1.0
    levels: int = 40
    n_points: int = 100
    seed: int = 0
    strict_margin: float = 1e-9


def _eigenbasis(H):
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    for j in range(V.shape[1]):
        k = int(np.argmax(np.abs(V[:, j])))
        if V[k, j] < 0:
            V[:, j] = -V[:, j]
    return w, V


@dataclass(frozen=True, eq=False)
class ParallelotopeTestFunction:
    base_point: np.ndarray
    r: float
    s_r: float
    T: np.ndarray
    eigenvalues: np.ndarray
    reference_value: float
    reference_gradient: np.ndarray
    reference_hessian: np.ndarray
    pieces: tuple = field(default=())
    convention: str = "lambda_i = eig(D2phi(x_hat) + r I) / 2"

    @property
    def dimension(self) -> int:
        return self.base_point.size

    @property
    def taylor_constant(self) -> float:
        return float(np.linalg.norm(self.reference_hessian, 2)) + 1.0

    @property
    def glue_coordinates(self) -> list[int]:
        return [i for i, p in enumerate(self.pieces) if isinstance(p, GlueSpline1D)]

    def local(self, x):
        return (np.asarray(x, dtype=float) - self.base_point) @ self.T

    def jet(self, x):
        """Value, gradient and Hessian of the natural C^2 extension to R^N."""
        x = np.asarray(x, dtype=float)
        y = self.local(x)
        vals, d1, d2 = [], [], []
        for i, piece in enumerate(self.pieces):
            yi = y[..., i]
            if isinstance(piece, GlueSpline1D):
                v, a, b = piece.evaluate(yi)
            else:
                lam = self.eigenvalues[i]
                v, a, b = lam * yi * yi, 2.0 * lam * yi, np.full_like(yi, 2.0 * lam)
            vals.append(v)
            d1.append(a)
            d2.append(b)
        vals, d1, d2 = np.stack(vals, -1), np.stack(d1, -1), np.stack(d2, -1)
        dx = x - self.base_point
        value = self.reference_value + dx @ self.reference_gradient + np.sum(vals, axis=-1)
        grad = self.reference_gradient + d1 @ self.T.T
        hess = np.einsum("ij,...j,kj->...ik", self.T, d2, self.T)
        return value, grad, hess

    def __call__(self, x):
        return self.jet(x)[0]

    def quadratic_model(self, x):
        """``phi(x_hat) + <grad, x - x_hat> + 1/2 <(D2phi + rI)(x - x_hat), x - x_hat>``."""
        dx = np.asarray(x, dtype=float) - self.base_point
        A = self.reference_hessian + self.r * np.eye(self.dimension)
        return (self.reference_value + dx @ self.reference_gradient
                + 0.5 * np.einsum("...i,ij,...j->...", dx, A, dx))

    def region(self, inner: float = 1.0, outer: float | None = None) -> Region:
        kind = "parallelotope" if outer is None else "parallelotope_annulus"
        return Region(kind, self.base_point, inner, outer, self.T, self.s_r)

    def as_candidate(self) -> CandidateFunction:
        from .functions import Envelope

        f = self
        ev = lambda x: f.jet(x)[0]
        return CandidateFunction(self.dimension, ev, "C2", f.jet, False, None, None,
                                 Envelope(lambda s: ev, lambda s: ev, 0.0), "psi_r")


def _check_touching(phi, u, x_hat, samples):
    u0, p0 = u(x_hat), phi(x_hat)
    if abs(u0 - p0) > 1e-12 * (1.0 + abs(u0)):
        raise MaxViolated(f"u(x_hat) = {u0} differs from phi(x_hat) = {p0}")
    gap = np.atleast_1d(u(samples)) - np.atleast_1d(phi(samples))
    worst = float(np.max(gap))
    if worst > 1e-12 * (1.0 + abs(u0)):
        raise MaxViolated(f"u - phi exceeds its value at x_hat by {worst:.3e}")


def _quadratic_model(phi_jet, r):
    x_hat, v, g, H = phi_jet
    A = H + r * np.eye(x_hat.size)

    def q(x):
        dx = x - x_hat
        return v + dx @ g + 0.5 * np.einsum("...i,ij,...j->...", dx, A, dx)

    return q


def select_s(phi: CandidateFunction, u: CandidateFunction, x_hat, r: float,
             search: ScaleSearch | None = None) -> float:
    """Largest admissible dyadic scale for the parallelotope construction.

    Scales are ``s_max 2^-j``; only ``s <= s_max r`` is admissible, which
    makes ``r -> s(r)`` nondecreasing and ``s(r) -> 0``.  A scale passes if
    on samples of ``B_{2s}(x_hat)``: ``phi <= psi_0`` and
    ``u - psi_0 < (u - psi_0)(x_hat) - mu |x - x_hat|^2``.
    """
    search = search or ScaleSearch()
    if not r > 0:
        raise InvalidParameters("r must be positive")
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    J = jet_at(phi, x_hat)
    psi0 = _quadratic_model((x_hat, J.value, J.p, J.X), r)
    N = x_hat.size
    _check_touching(phi, u, x_hat, x_hat + ball_offsets(N, search.s_max, 8, 64, search.seed))
    base = float(u(x_hat)) - float(psi0(x_hat))
    cap = search.s_max * min(r, 1.0)
    for j in range(search.levels):
        s = search.s_max * 2.0**-j
        if s > cap * (1 + 1e-15):
            continue
        z = ball_offsets(N, 2.0 * s * (1.0 - 2.0**-20), 21, search.n_points, search.seed)
        pts = x_hat + z
        q = psi0(pts)
        ph = np.atleast_1d(phi(pts))
        uu = np.atleast_1d(u(pts))
        tol = 64 * np.finfo(float).eps * (1.0 + np.abs(q))
        r2 = np.sum(z * z, axis=1)
        if np.all(ph <= q + tol) and np.all(uu - q < base - search.strict_margin * r2):
            return s
    raise NoValidScale(f"no dyadic scale passes for r = {r} at {x_hat.tolist()}")


def build_psi_r(phi: CandidateFunction, u: CandidateFunction, x_hat, r: float,
                search: ScaleSearch | None = None) -> ParallelotopeTestFunction:
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    s = select_s(phi, u, x_hat, r, search)
    J = jet_at(phi, x_hat)
    w, T = _eigenbasis(J.X)
    lam = 0.5 * (w + r)
    pieces = tuple(GlueSpline1D(float(l), s) if l < 0 else "quadratic" for l in lam)
    return ParallelotopeTestFunction(x_hat, float(r), s, T, lam, float(J.value), J.p, J.X, pieces)


# exterior sequences -----------------------------------------------------------------

def _shell_cap(dim: int) -> float:
    """Largest blend width keeping ``P_{1+rho}`` inside ``B_{2s}``."""
    return 1.0 if dim == 1 else 0.99 * (2.0 / math.sqrt(dim) - 1.0)


def _product_cutoff(y, s, width):
    """``prod_i cutoff((|y_i| - s) / width)`` with gradient and Hessian in y."""
    a = np.abs(y)
    sg = np.where(y < 0, -1.0, 1.0)
    k0, k1, k2 = cutoff((a - s) / width)
    k1 = k1 * sg / width
    k2 = k2 / width**2
    N = y.shape[-1]
    val = np.prod(k0, axis=-1)
    grad = np.empty_like(y)
    hess = np.empty(y.shape + (N,))
    for i in range(N):
        others = np.prod(np.delete(k0, i, axis=-1), axis=-1) if N > 1 else 1.0
        grad[..., i] = k1[..., i] * others
        for j in range(N):
            if i == j:
                hess[..., i, i] = k2[..., i] * others
            else:
                rest = [m for m in range(N) if m not in (i, j)]
                pr = np.prod(k0[..., rest], axis=-1) if rest else 1.0
                hess[..., i, j] = k1[..., i] * k1[..., j] * pr
    return val, grad, hess


@dataclass(frozen=True, eq=False)
class ExteriorSequence:
    """``psi_n = chi_n psi^r + (1 - chi_n) m_{sigma_n} + omega_n D`` outside ``P^r``.

    ``chi_n`` cuts off across ``P^r_{1, 1+rho_n}``, ``m_sigma`` is the
    majorant family of ``u``, ``D`` vanishes on ``P^r`` and is positive
    outside, ``omega_n = 1/n`` and ``sigma_n = sigma_0 2^-n``.
    """

    base: ParallelotopeTestFunction
    u: CandidateFunction
    sigma0: float
    shell_gap: float
    rho_cap: float

    def rho(self, n: int) -> float:
        return min(2.0**-n, self.rho_cap)

    def sigma(self, n: int) -> float:
        return self.sigma0 * 2.0**-n

    @staticmethod
    def omega(n: int) -> float:
        return 1.0 / n

    def profile(self, x):
        y = self.base.local(x)
        s = self.base.s_r
        return 1.0 - _product_cutoff(y, s, s)[0]

    def term(self, n: int) -> CandidateFunction:
        if n < 1:
            raise InvalidParameters("sequence index starts at 1")
        base, s = self.base, self.base.s_r
        width = self.rho(n) * s
        maj = self.u.envelope.upper(self.sigma(n))
        om = self.omega(n)

        def ev(x):
            x = np.asarray(x, dtype=float)
            y = base.local(x)
            chi = _product_cutoff(y, s, width)[0]
            D = 1.0 - _product_cutoff(y, s, s)[0]
            inside = chi >= 1.0
            out = np.empty(x.shape[:-1])
            psi = base.jet(x)[0]
            if np.all(inside):
                return psi
            m = maj(x)
            out = chi * psi + (1.0 - chi) * m + om * D
            return np.where(inside, psi, out)

        def jet(x):
            x = np.asarray(x, dtype=float)
            y = base.local(x)
            if not np.all(np.max(np.abs(y), axis=-1) <= s):
                raise ValueError("analytic jet of psi_n only inside P^r")
            return base.jet(x)

        env = None
        return CandidateFunction(base.dimension, ev, "C2", jet, False, None, None, env,
                                 f"psi_r_{n}")


def extend_decreasing_sequence(base: ParallelotopeTestFunction, u: CandidateFunction,
                               n: int | None = None, n_samples: int = 2048, seed: int = 0):
    """Exterior sequence around ``psi^r``; returns the n-th term or the whole sequence.

    Raises ExtensionFailure when ``u`` has no majorant family, when
    ``psi^r < u`` somewhere in ``P^r`` or on the blend shell, or when the
    shell gap cannot absorb a majorant with positive ``K``.
    """
    if u.envelope is None:
        raise ExtensionFailure(f"{u.name} has no majorant family to extend with")
    cap = _shell_cap(base.dimension)
    inner = base.region(1.0).sample(n_samples, seed)
    tol = 1e-12 * (1.0 + abs(base.reference_value))
    if np.any(base(inner) < np.atleast_1d(u(inner)) - tol):
        raise ExtensionFailure("psi^r falls below u inside P^r")
    shell = base.region(1.0, 1.0 + cap).sample(n_samples, seed + 7)
    faces = _face_samples(base, cap, n_samples, seed)
    pts = np.concatenate([shell, faces])
    gap = float(np.min(base(pts) - np.atleast_1d(u(pts))))
    K = u.envelope.constant
    if gap < -tol or (K > 0 and gap <= 0):
        raise ExtensionFailure(f"psi^r - u has sampled minimum {gap:.3e} on the blend shell")
    sigma0 = gap / (4.0 * K) if K > 0 else 1.0
    seq = ExteriorSequence(base, u, sigma0, gap, cap)
    return seq if n is None else seq.term(n)


def _face_samples(base, cap, n, seed):
    """Points on the blend shell ``1 <= max_i |y_i| / s <= 1 + cap`` (not only corners)."""
    N = base.dimension
    u = halton(n, N, seed + 3)
    y = (2.0 * u - 1.0) * (1.0 + cap)
    k = np.arange(n) % N
    mag = 1.0 + cap * halton(n, 1, seed + 5)[:, 0]
    sign = np.where(u[np.arange(n), k] < 0.5, -1.0, 1.0)
    y[np.arange(n), k] = sign * mag
    return base.base_point + (y * base.s_r) @ base.T.T


# second sequence ---------------------------------------------------------------------

@dataclass(frozen=True)
class RadialCapConfig:
    n_max: int = 32
    n_samples: int = 1024
    seed: int = 0


@dataclass(frozen=True, eq=False)
class RadialCapSequence:
    """``psi_n = chi_n Q_n + (1 - chi_n) m_{sigma_n} + omega_n D`` around ``x_hat``.

    ``Q_n = phi(x_hat) + <grad phi, x - x_hat> + 2 M_n |x - x_hat|^2``,
    ``chi_n = cutoff(2n|x - x_hat| - 1)``, ``omega_n = 1/(2n)`` and ``D``
    vanishes on ``|x - x_hat| <= 1/2``.
    """

    x_hat: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    M: tuple
    u: CandidateFunction
    sigma0: float

    def M_n(self, n: int) -> float:
        return self.M[min(n, len(self.M)) - 1]

    def term(self, n: int) -> CandidateFunction:
        if n < 1:
            raise InvalidParameters("sequence index starts at 1")
        x_hat, g, v = self.x_hat, self.gradient, self.value
        M = self.M_n(n)
        maj = self.u.envelope.upper(self.sigma0 * 2.0**-n)
        om = 1.0 / (2.0 * n)
        N = x_hat.size

        def ev(x):
            x = np.asarray(x, dtype=float)
            dx = x - x_hat
            d = np.sqrt(np.sum(dx * dx, axis=-1))
            Q = v + dx @ g + 2.0 * M * d * d
            chi = cutoff(2.0 * n * d - 1.0)[0]
            D = 1.0 - cutoff((d - 0.5) / 0.5)[0]
            if np.all(chi >= 1.0):
                return Q
            return np.where(chi >= 1.0, Q, chi * Q + (1.0 - chi) * maj(x) + om * D)

        def jet(x):
            x = np.asarray(x, dtype=float)
            dx = x - x_hat
            if np.any(np.sqrt(np.sum(dx * dx, axis=-1)) > 0.5 / n):
                raise ValueError("analytic jet of psi_n only on the inner cap")
            shape = x.shape[:-1]
            return (ev(x), g + 4.0 * M * dx,
                    np.broadcast_to(4.0 * M * np.eye(N), shape + (N, N)).copy())

        return CandidateFunction(N, ev, "C2", jet, False, None, None, None, f"psi_{n}")


def _hessian_norm_sup(phi, x_hat, radius, n, seed):
    pts = x_hat + radius * halton_ball(n, x_hat.size, seed)
    pts = np.concatenate([x_hat[None, :], pts])
    if phi.analytic_jet is not None:
        H = phi.jet(pts)[2]
        return float(np.max(np.linalg.norm(H, ord=2, axis=(-2, -1))))
    return max(float(np.linalg.norm(jet_at(phi, p).X, 2)) for p in pts)


def build_prop2_sequence(phi: CandidateFunction, u: CandidateFunction, x_hat, n: int | None = None,
                         cfg: RadialCapConfig | None = None):
    """Radial-cap sequence touching ``u`` from above at ``x_hat``.

    ``M_n`` is the sampled sup of ``|D^2 phi|`` over ``|x - x_hat| <= 1/k``,
    maximised over ``k = n .. n_max`` so that it is nonincreasing in n.
    """
    cfg = cfg or RadialCapConfig()
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    if u.envelope is None:
        raise ExtensionFailure(f"{u.name} has no majorant family to extend with")
    _check_touching(phi, u, x_hat, x_hat + ball_offsets(x_hat.size, 2.0, 12, 256, cfg.seed))
    J = jet_at(phi, x_hat)
    sups = [_hessian_norm_sup(phi, x_hat, 1.0 / k, cfg.n_samples, cfg.seed)
            for k in range(1, cfg.n_max + 1)]
    M = tuple(max(sups[k:]) for k in range(cfg.n_max))
    K = u.envelope.constant
    m_min = M[-1]
    if K > 0 and m_min <= 0:
        raise ExtensionFailure("phi has zero curvature near x_hat; the cap cannot absorb the majorant")
    sigma0 = min(0.5, 0.15 * m_min) / K if K > 0 else 1.0
    seq = RadialCapSequence(x_hat, float(J.value), J.p, J.X, M, u, sigma0)
    return seq if n is None else seq.term(n)
