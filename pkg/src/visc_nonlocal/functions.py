"""Candidate functions u, test functions phi, jets and jet certificates.

Evaluators are vectorised: they take points of shape ``(..., N)`` and
return values of shape ``(...)``.  Analytic jets follow the same rule and
return ``(value, gradient (..., N), hessian (..., N, N))``.

Every builtin also knows a *majorant family* ``m_sigma >= u`` with
``m_sigma <= u + K sigma`` that is nonincreasing along dyadic sigma.
The exterior extensions of the forge are assembled from it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import InvalidParameters, NotSmooth
from .sampling import ball_offsets

SMOOTHNESS_CLASSES = ("C2", "piecewise_C2", "usc_grid", "lsc_grid")
_RANK = {"C2": 0, "piecewise_C2": 1, "usc_grid": 2, "lsc_grid": 2}


@dataclass(frozen=True)
class GridData:
    lo: np.ndarray
    hi: np.ndarray
    spacing: np.ndarray
    values: np.ndarray

    @property
    def axes(self):
        return tuple(np.linspace(l, h, n) for l, h, n in zip(self.lo, self.hi, self.values.shape))


@dataclass(frozen=True)
class Envelope:
    """``upper(sigma) >= u >= lower(sigma)``, each within ``constant * sigma`` of u."""

    upper: Callable[[float], Callable[[np.ndarray], np.ndarray]]
    lower: Callable[[float], Callable[[np.ndarray], np.ndarray]]
    constant: float


@dataclass(frozen=True, eq=False)
class CandidateFunction:
    dimension: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    smoothness_class: str = "C2"
    analytic_jet: Callable | None = None
    bounded: bool = False
    sup_abs: float | None = None
    grid_data: GridData | None = None
    envelope: Envelope | None = None
    name: str = "custom"
    notes: tuple = ()

    def __post_init__(self):
        if self.smoothness_class not in SMOOTHNESS_CLASSES:
            raise InvalidParameters(f"unknown smoothness class {self.smoothness_class!r}")

    def _points(self, x):
        x = np.asarray(x, dtype=float)
        if self.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return x

    def __call__(self, x):
        pts = self._points(x)
        out = np.asarray(self.evaluator(pts), dtype=float)
        return float(out) if out.ndim == 0 else out

    def jet(self, x):
        if self.analytic_jet is None:
            raise NotSmooth(f"{self.name} has no analytic jet")
        return self.analytic_jet(self._points(x))

    @property
    def is_grid(self) -> bool:
        return self.smoothness_class in ("usc_grid", "lsc_grid")

    # composition ---------------------------------------------------------
    def __add__(self, other: "CandidateFunction") -> "CandidateFunction":
        if not isinstance(other, CandidateFunction):
            return self.plus_constant(float(other))
        if other.dimension != self.dimension:
            raise InvalidParameters("dimension mismatch in sum")
        f, g = self, other
        jet = None
        if f.analytic_jet and g.analytic_jet:
            def jet(x):
                a, b = f.analytic_jet(x), g.analytic_jet(x)
                return a[0] + b[0], a[1] + b[1], a[2] + b[2]
        env = None
        if f.envelope and g.envelope:
            def upper(s):
                fu, gu = f.envelope.upper(s), g.envelope.upper(s)
                return lambda x: fu(x) + gu(x)

            def lower(s):
                fl, gl = f.envelope.lower(s), g.envelope.lower(s)
                return lambda x: fl(x) + gl(x)
            env = Envelope(upper, lower, f.envelope.constant + g.envelope.constant)
        cls = max(f.smoothness_class, g.smoothness_class, key=_RANK.get)
        sup = None if f.sup_abs is None or g.sup_abs is None else f.sup_abs + g.sup_abs
        return CandidateFunction(f.dimension, lambda x: f.evaluator(x) + g.evaluator(x), cls,
                                 jet, f.bounded and g.bounded, sup, None, env,
                                 f"({f.name} + {g.name})", f.notes + g.notes)

    def scaled(self, factor: float) -> "CandidateFunction":
        f, c = self, float(factor)
        jet = None
        if f.analytic_jet:
            def jet(x):
                v, g, h = f.analytic_jet(x)
                return c * v, c * g, c * h
        env = None
        if f.envelope:
            up, lo = (f.envelope.upper, f.envelope.lower) if c >= 0 else (f.envelope.lower, f.envelope.upper)

            def upper(s):
                m = up(s)
                return lambda x: c * m(x)

            def lower(s):
                m = lo(s)
                return lambda x: c * m(x)
            env = Envelope(upper, lower, abs(c) * f.envelope.constant)
        cls = f.smoothness_class
        if cls == "usc_grid" and c < 0:
            cls = "lsc_grid"
        elif cls == "lsc_grid" and c < 0:
            cls = "usc_grid"
        sup = None if f.sup_abs is None else abs(c) * f.sup_abs
        return CandidateFunction(f.dimension, lambda x: c * f.evaluator(x), cls, jet, f.bounded,
                                 sup, None, env, f"{c:g}*{f.name}", f.notes)

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other if isinstance(other, CandidateFunction) else -float(other))

    def __rmul__(self, factor):
        return self.scaled(factor)

    def plus_constant(self, const: float) -> "CandidateFunction":
        return self + constant(const, self.dimension)

    def shifted(self, offset) -> "CandidateFunction":
        """``x -> f(x - offset)``."""
        f = self
        a = np.atleast_1d(np.asarray(offset, dtype=float))
        jet = None
        if f.analytic_jet:
            def jet(x):
                return f.analytic_jet(x - a)
        env = None
        if f.envelope:
            def upper(s):
                m = f.envelope.upper(s)
                return lambda x: m(x - a)

            def lower(s):
                m = f.envelope.lower(s)
                return lambda x: m(x - a)
            env = Envelope(upper, lower, f.envelope.constant)
        return CandidateFunction(f.dimension, lambda x: f.evaluator(x - a), f.smoothness_class,
                                 jet, f.bounded, f.sup_abs, None, env, f"{f.name}(x-a)", f.notes)


def _smooth_envelope(evaluator):
    return Envelope(lambda s: evaluator, lambda s: evaluator, 0.0)


def _smooth(dim, evaluator, jet, name, bounded=False, sup_abs=None):
    return CandidateFunction(dim, evaluator, "C2", jet, bounded, sup_abs, None,
                             _smooth_envelope(evaluator), name)


# builtins -----------------------------------------------------------------

def constant(value: float = 0.0, dim: int = 1) -> CandidateFunction:
    c = float(value)

    def ev(x):
        return np.full(x.shape[:-1], c)

    def jet(x):
        shape = x.shape[:-1]
        return np.full(shape, c), np.zeros(shape + (dim,)), np.zeros(shape + (dim, dim))

    return _smooth(dim, ev, jet, f"constant({c:g})", True, abs(c))


def zero(dim: int = 1) -> CandidateFunction:
    f = constant(0.0, dim)
    return CandidateFunction(dim, f.evaluator, "C2", f.analytic_jet, True, 0.0, None,
                             f.envelope, "zero")


def linear(b, c: float = 0.0) -> CandidateFunction:
    b = np.atleast_1d(np.asarray(b, dtype=float))
    dim = b.size

    def ev(x):
        return x @ b + c

    def jet(x):
        shape = x.shape[:-1]
        return ev(x), np.broadcast_to(b, shape + (dim,)).copy(), np.zeros(shape + (dim, dim))

    bounded = not np.any(b)
    return _smooth(dim, ev, jet, "linear", bounded, abs(c) if bounded else None)


def quadratic(Q, b=None, c: float = 0.0, center=None) -> CandidateFunction:
    """``<Q(x-a), x-a> + <b, x-a> + c``; the Hessian is ``Q + Q^T``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    dim = Q.shape[0]
    if Q.shape != (dim, dim):
        raise InvalidParameters("Q must be square")
    b = np.zeros(dim) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    a = np.zeros(dim) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    H = Q + Q.T

    def ev(x):
        y = x - a
        return np.einsum("...i,ij,...j->...", y, Q, y) + y @ b + c

    def jet(x):
        y = x - a
        shape = x.shape[:-1]
        return ev(x), y @ H.T + b, np.broadcast_to(H, shape + (dim, dim)).copy()

    bounded = not (np.any(Q) or np.any(b))
    return _smooth(dim, ev, jet, "quadratic", bounded, abs(c) if bounded else None)


def polynomial_1d(coeffs: Sequence[float]) -> CandidateFunction:
    """``sum_k coeffs[k] x^k`` in one variable."""
    P = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    dP, d2P = P.deriv(1), P.deriv(2)

    def ev(x):
        return P(x[..., 0])

    def jet(x):
        t = x[..., 0]
        return P(t), dP(t)[..., None], d2P(t)[..., None, None]

    bounded = P.degree() < 1
    return _smooth(1, ev, jet, "polynomial_1d", bounded,
                   abs(float(P.coef[0])) if bounded else None)


def gaussian_bump(amplitude: float = 1.0, center=0.0, width: float = 1.0,
                  dim: int | None = None) -> CandidateFunction:
    """``A exp(-|x - center|^2 / width^2)``."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if dim is not None and c.size == 1 and dim > 1:
        c = np.full(dim, c[0])
    dim = c.size
    if width <= 0:
        raise InvalidParameters("width must be positive")
    A, w2 = float(amplitude), float(width) ** 2

    def ev(x):
        y = x - c
        return A * np.exp(-np.sum(y * y, axis=-1) / w2)

    def jet(x):
        y = x - c
        v = ev(x)
        g = v[..., None] * (-2.0 * y / w2)
        outer = y[..., :, None] * y[..., None, :]
        h = v[..., None, None] * (4.0 * outer / w2**2 - 2.0 * np.eye(dim) / w2)
        return v, g, h

    return _smooth(dim, ev, jet, "gaussian_bump", True, abs(A))


def smooth_step(amplitude: float = 1.0, direction=1.0, offset: float = 0.0,
                width: float = 1.0) -> CandidateFunction:
    """``A (1 + tanh((<e, x> - offset) / width)) / 2`` along a unit direction e."""
    e = np.atleast_1d(np.asarray(direction, dtype=float))
    e = e / np.linalg.norm(e)
    dim = e.size
    A, w = float(amplitude), float(width)
    if w <= 0:
        raise InvalidParameters("width must be positive")

    def ev(x):
        return 0.5 * A * (1.0 + np.tanh((x @ e - offset) / w))

    def jet(x):
        t = np.tanh((x @ e - offset) / w)
        sech2 = 1.0 - t * t
        g = (0.5 * A * sech2 / w)[..., None] * e
        h = (-A * t * sech2 / w**2)[..., None, None] * np.outer(e, e)
        return 0.5 * A * (1.0 + t), g, h

    return _smooth(dim, ev, jet, "smooth_step", True, abs(A))


def cone(sign: float = 1.0, apex=0.0, slope: float = 1.0, dim: int | None = None) -> CandidateFunction:
    """``sign * slope * |x - apex|``; smooth away from the apex."""
    a = np.atleast_1d(np.asarray(apex, dtype=float))
    if dim is not None and a.size == 1 and dim > 1:
        a = np.full(dim, a[0])
    dim = a.size
    sgn = 1.0 if sign >= 0 else -1.0
    k = float(slope)
    if k < 0:
        raise InvalidParameters("slope must be >= 0")

    def dist(x):
        y = x - a
        return np.sqrt(np.sum(y * y, axis=-1))

    def ev(x):
        return sgn * k * dist(x)

    def jet(x):
        y = x - a
        d = dist(x)
        if np.any(d == 0):
            raise NotSmooth("cone is not differentiable at its apex")
        n = y / d[..., None]
        h = (np.eye(dim) - n[..., :, None] * n[..., None, :]) / d[..., None, None]
        return sgn * k * d, sgn * k * n, sgn * k * h

    def soft(s):
        return lambda x: k * np.sqrt(dist(x) ** 2 + s * s)

    def soft_low(s):
        return lambda x: k * (np.sqrt(dist(x) ** 2 + s * s) - s)

    if sgn > 0:
        env = Envelope(soft, soft_low, k)
    else:
        env = Envelope(lambda s: (lambda x, m=soft_low(s): -m(x)),
                       lambda s: (lambda x, m=soft(s): -m(x)), k)
    return CandidateFunction(dim, ev, "piecewise_C2", jet, k == 0, 0.0 if k == 0 else None,
                             None, env, "cone" if sgn > 0 else "negative_cone")


# grid-backed candidates ------------------------------------------------------

_MOLL_NODES = 6


def _mollifier_rule():
    y, w = np.polynomial.legendre.leggauss(_MOLL_NODES)
    w = w * (1.0 - y * y) ** 3
    return y, w / w.sum()


def grid_function(lo, hi, values, kind: str = "usc_grid") -> CandidateFunction:
    """Multilinear interpolant of tensor-grid data on the box ``[lo, hi]``.

    Points outside the box are clamped onto it (constant extension).  The
    interpolant is continuous, so it coincides with both its upper and its
    lower semicontinuous envelope.
    """
    if kind not in ("usc_grid", "lsc_grid"):
        raise InvalidParameters("grid kind must be usc_grid or lsc_grid")
    values = np.asarray(values, dtype=float)
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    dim = lo.size
    if values.ndim != dim or np.any(np.array(values.shape) < 2) or np.any(hi <= lo):
        raise InvalidParameters("grid values must be an N-dimensional array with >= 2 nodes per axis")
    spacing = (hi - lo) / (np.array(values.shape) - 1)
    data = GridData(lo, hi, spacing, values)
    interp = RegularGridInterpolator(data.axes, values, method="linear")

    def ev(x):
        shape = x.shape[:-1]
        pts = np.clip(x.reshape(-1, dim), lo, hi)
        return interp(pts).reshape(shape)

    lips = np.array([np.max(np.abs(np.diff(values, axis=i))) / spacing[i] for i in range(dim)])
    y, w = _mollifier_rule()
    mean_abs = float(np.sum(w * np.abs(y)))
    K = float(np.sum(lips) * mean_abs)
    grids = np.stack(np.meshgrid(*([y] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    weights = np.prod(np.stack(np.meshgrid(*([w] * dim), indexing="ij"), axis=-1).reshape(-1, dim), axis=1)

    def averaged(s):
        def m(x):
            pts = x[..., None, :] - s * grids
            return np.einsum("...j,j->...", ev(pts), weights)
        return m

    def upper(s):
        m = averaged(s)
        return lambda x: m(x) + 3.0 * K * s

    def lower(s):
        m = averaged(s)
        return lambda x: m(x) - 3.0 * K * s

    return CandidateFunction(dim, ev, kind, None, True, float(np.max(np.abs(values))), data,
                             Envelope(upper, lower, 4.0 * K), f"grid[{kind}]",
                             ("grid exterior: constant extension",))


def load_grid_csv(path, kind: str = "usc_grid") -> CandidateFunction:
    """Read ``x1,...,xN,value`` rows sampled on a full tensor grid."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(v) for v in row] for row in reader if row]
    dim = len(header) - 1
    expected = [f"x{i + 1}" for i in range(dim)] + ["value"]
    if header != expected:
        raise InvalidParameters(f"grid CSV header must be {','.join(expected)}")
    arr = np.array(rows)
    axes = [np.unique(arr[:, i]) for i in range(dim)]
    shape = tuple(len(a) for a in axes)
    if arr.shape[0] != int(np.prod(shape)):
        raise InvalidParameters("grid CSV does not cover a full tensor grid")
    for a in axes:
        d = np.diff(a)
        if not np.allclose(d, d[0], rtol=1e-9, atol=0):
            raise InvalidParameters("grid CSV spacing must be uniform per axis")
    values = np.full(shape, np.nan)
    idx = tuple(np.searchsorted(axes[i], arr[:, i]) for i in range(dim))
    values[idx] = arr[:, -1]
    if np.any(np.isnan(values)):
        raise InvalidParameters("grid CSV has missing nodes")
    return grid_function([a[0] for a in axes], [a[-1] for a in axes], values, kind)


def function_from_spec(spec: Mapping, dim: int | None = None, base_dir=None) -> CandidateFunction:
    """Build a candidate from a scenario table ``{family, params..., grid_file?}``."""
    spec = dict(spec)
    family = spec.pop("family")
    d = int(spec.pop("dim", dim or 1))

    def take(key, default=None):
        return spec.pop(key, default)

    if family == "zero":
        f = zero(d)
    elif family == "constant":
        f = constant(take("value", 0.0), d)
    elif family == "linear":
        f = linear(take("b"), take("c", 0.0))
    elif family == "quadratic":
        f = quadratic(take("Q"), take("b"), take("c", 0.0), take("center"))
    elif family == "polynomial_1d":
        f = polynomial_1d(take("coeffs"))
    elif family == "gaussian_bump":
        f = gaussian_bump(take("amplitude", 1.0), take("center", 0.0), take("width", 1.0), d)
    elif family == "smooth_step":
        f = smooth_step(take("amplitude", 1.0), take("direction", [1.0] * d),
                        take("offset", 0.0), take("width", 1.0))
    elif family == "cone":
        f = cone(take("sign", 1.0), take("apex", 0.0), take("slope", 1.0), d)
    elif family == "grid":
        path = Path(take("grid_file"))
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        f = load_grid_csv(path, take("kind", "usc_grid"))
    elif family == "sum":
        terms = [function_from_spec(t, d, base_dir) for t in take("terms", [])]
        if not terms:
            raise InvalidParameters("sum needs at least one term")
        f = terms[0]
        for t in terms[1:]:
            f = f + t
    elif family == "scale":
        f = function_from_spec(take("function"), d, base_dir).scaled(take("factor"))
    else:
        raise KeyError(f"unknown function family {family!r}")
    shift = take("shift")
    if shift is not None:
        f = f.shifted(shift)
    if spec:
        raise KeyError(f"unexpected parameters for {family!r}: {sorted(spec)}")
    if f.dimension != d:
        raise InvalidParameters(f"{family} has dimension {f.dimension}, expected {d}")
    return f


# jets --------------------------------------------------------------------------

@dataclass(frozen=True)
class SecondOrderJet:
    base_point: np.ndarray
    p: np.ndarray
    X: np.ndarray
    value: float = math.nan

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.base_point, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        X = 0.5 * (X + X.T)
        if p.shape != x.shape or X.shape != (x.size, x.size):
            raise InvalidParameters("jet shapes do not match the base point")
        object.__setattr__(self, "base_point", x)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "X", X)


@dataclass(frozen=True)
class JetCertificate:
    jet: SecondOrderJet
    delta: float
    epsilon: float

    def __post_init__(self):
        if not (self.delta > 0 and self.epsilon > 0):
            raise InvalidParameters("certificate needs delta > 0 and epsilon > 0")


def _fd_jet(f: CandidateFunction, x: np.ndarray, h_grad: float = 1e-6, h_hess: float = 1e-4):
    dim = x.size
    eye = np.eye(dim)
    hg = h_grad * max(1.0, float(np.max(np.abs(x))))
    g = np.array([(f(x + hg * eye[i]) - f(x - hg * eye[i])) / (2 * hg) for i in range(dim)])
    return g, _fd_hessian(f, x, h_hess * max(1.0, float(np.max(np.abs(x)))))


def _fd_hessian(f, x, h):
    dim = x.size
    eye = np.eye(dim)
    f0 = f(x)
    H = np.empty((dim, dim))
    for i in range(dim):
        H[i, i] = (f(x + h * eye[i]) - 2 * f0 + f(x - h * eye[i])) / h**2
        for j in range(i + 1, dim):
            e = h * (eye[i] + eye[j])
            d = h * (eye[i] - eye[j])
            H[i, j] = H[j, i] = (f(x + e) - f(x + d) - f(x - d) + f(x - e)) / (4 * h * h)
    return H


def jet_at(f: CandidateFunction, x) -> SecondOrderJet:
    """Value, gradient and Hessian of a C^2 candidate at ``x``."""
    if f.is_grid:
        raise NotSmooth(f"{f.name} is grid-backed and has no classical jet")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if f.analytic_jet is not None:
        v, g, h = f.jet(x)
        return SecondOrderJet(x, np.asarray(g), np.asarray(h), float(v))
    if f.smoothness_class != "C2":
        raise NotSmooth(f"{f.name} is {f.smoothness_class} without an analytic jet")
    g, h = _fd_jet(f, x)
    return SecondOrderJet(x, g, h, f(x))


def validate_jet_fd(f: CandidateFunction, x, h: float) -> float:
    """Largest gap between the analytic jet and central differences at step ``h``."""
    if not h > 0:
        raise InvalidParameters("h must be positive")
    if f.analytic_jet is None or f.is_grid:
        raise NotSmooth(f"{f.name} has no analytic jet to validate")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _, g, H = f.jet(x)
    eye = np.eye(x.size)
    g_fd = np.array([(f(x + h * eye[i]) - f(x - h * eye[i])) / (2 * h) for i in range(x.size)])
    H_fd = _fd_hessian(f, x, h)
    return float(max(np.max(np.abs(g - g_fd)), np.max(np.abs(H - H_fd))))


def jet_excess(u: CandidateFunction, jet: SecondOrderJet, delta: float, z: np.ndarray,
               mode: str) -> np.ndarray:
    """Signed excess over the jet bound at offsets ``z``; <= 0 means satisfied."""
    x = jet.base_point
    du = np.atleast_1d(u(x + z)) - u(x)
    quad = z @ jet.p + 0.5 * np.einsum("ki,ij,kj->k", z, jet.X, z)
    r2 = np.sum(z * z, axis=1)
    if mode == "sub":
        return du - quad - delta * r2
    if mode == "super":
        return quad - delta * r2 - du
    raise InvalidParameters(f"mode must be sub or super, got {mode!r}")


def verify_jet(u: CandidateFunction, cert: JetCertificate, mode: str = "sub",
               samples: int = 100, seed: int = 0) -> tuple[bool, float]:
    """Check the jet inequality on dyadic shells and a low-discrepancy ball cloud.

    Returns ``(ok, worst_violation)`` where the violation is the largest
    signed excess; a rounding allowance proportional to ``|u|`` is granted.
    """
    if samples < 1:
        raise InvalidParameters("samples must be a positive integer")
    jet = cert.jet
    z = ball_offsets(jet.base_point.size, cert.epsilon, n_points=samples, seed=seed)
    excess = jet_excess(u, jet, cert.delta, z, mode)
    worst = float(np.max(excess))
    scale = 1.0 + abs(u(jet.base_point)) + float(np.max(np.abs(u(jet.base_point + z))))
    return bool(worst <= 64 * np.finfo(float).eps * scale), worst
