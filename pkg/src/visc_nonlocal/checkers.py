"""Pointwise sub/supersolution checks under the five nonlocal definitions.

Each check assembles ``residual = F_term - (integral terms)`` and compares
it against ``tol = combined error estimate + slack_rel (1 + |F_term|)``:
a subsolution check passes when ``residual <= tol``, a supersolution check
when ``residual >= -tol``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np

from ._polar import QuadratureConfig
from .errors import InvalidParameters, JetRejected, MaxViolated, PhiCertificateFailed
from .functions import CandidateFunction, JetCertificate, SecondOrderJet, jet_at, verify_jet
from .kernels import LevyKernel, small_ball_quadratic_moment
from .quadrature import (IntegralValue, compensated_full_integral, nonsmooth_full_integral,
                         small_ball_bound_term, small_ball_remainder, tail_integral)
from .sampling import ball_offsets, box_samples

DEFINITIONS = ("A", "Aprime", "B", "Bprime", "C")
MODES = ("sub", "super")


# operators -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FOperator:
    """``F(x, r, p, X)``; affine families are stored by their coefficients.

    ``F = const + <cx, x> + cr r + <cp, p> + trace(CX X)`` for affine
    families, otherwise ``func`` is called directly.
    """

    dimension: int
    family: str
    params: dict = field(default_factory=dict)
    const: float = 0.0
    cx: np.ndarray | None = None
    cr: float = 0.0
    cp: np.ndarray | None = None
    CX: np.ndarray | None = None
    func: Callable | None = None
    degenerate_ellipticity_declared: bool = True

    def __call__(self, x, r, p, X) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.func is not None:
            return float(self.func(x, float(r), p, X))
        N = self.dimension
        cx = self.cx if self.cx is not None else np.zeros(N)
        cp = self.cp if self.cp is not None else np.zeros(N)
        CX = self.CX if self.CX is not None else np.zeros((N, N))
        return float(self.const + cx @ x + self.cr * r + cp @ p + np.sum(CX * X))

    @property
    def is_affine(self) -> bool:
        return self.func is None

    def mirrored(self) -> "FOperator":
        """``(x, r, p, X) -> -F(x, -r, -p, -X)``, the operator seen by ``-u``."""
        if self.func is not None:
            f = self.func
            return FOperator(self.dimension, self.family + "_mirror", dict(self.params),
                             func=lambda x, r, p, X: -f(x, -r, -p, -X),
                             degenerate_ellipticity_declared=self.degenerate_ellipticity_declared)
        neg = lambda a: None if a is None else -a
        return FOperator(self.dimension, self.family + "_mirror", dict(self.params),
                         -self.const, neg(self.cx), self.cr, self.cp, self.CX,
                         degenerate_ellipticity_declared=self.degenerate_ellipticity_declared)

    def ellipticity_violations(self, n_pairs: int = 64, seed: int = 0) -> list[str]:
        """Sampled pairs ``X >= Y`` with ``F(.., X) > F(.., Y)``."""
        rng = np.random.default_rng(seed)
        N = self.dimension
        bad = []
        for k in range(n_pairs):
            x, p = rng.normal(size=N), rng.normal(size=N)
            r = float(rng.normal())
            Y = rng.normal(size=(N, N))
            Y = Y + Y.T
            B = rng.normal(size=(N, N))
            X = Y + B @ B.T
            fx, fy = self(x, r, p, X), self(x, r, p, Y)
            if fx > fy + 1e-12 * (1 + abs(fx) + abs(fy)):
                bad.append(f"pair {k}: F(X) - F(Y) = {fx - fy:.3e} with X >= Y")
        return bad

    def continuity_violations(self, n: int = 64, seed: int = 0, h: float = 1e-7) -> list[str]:
        rng = np.random.default_rng(seed)
        N = self.dimension
        bad = []
        for k in range(n):
            x, p = rng.normal(size=N), rng.normal(size=N)
            r = float(rng.normal())
            X = rng.normal(size=(N, N))
            X = X + X.T
            f0 = self(x, r, p, X)
            f1 = self(x + h * rng.normal(size=N), r + h, p + h, X + h)
            if abs(f1 - f0) > 1e3 * h * (1 + abs(f0)):
                bad.append(f"sample {k}: jump {abs(f1 - f0):.3e} under perturbation {h}")
        return bad

    def describe(self) -> dict:
        return {"family": self.family, **{k: _plain(v) for k, v in self.params.items()}}


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _vec(v, N, default=0.0):
    if v is None:
        return np.full(N, float(default))
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.size == 1 and N > 1:
        a = np.full(N, float(a[0]))
    if a.shape != (N,):
        raise InvalidParameters(f"expected a vector of length {N}")
    return a


def _mat(v, N, default_identity=False):
    if v is None:
        return np.eye(N) if default_identity else np.zeros((N, N))
    a = np.atleast_2d(np.asarray(v, dtype=float))
    if a.size == 1 and N > 1:
        a = float(a[0, 0]) * np.eye(N)
    if a.shape != (N, N):
        raise InvalidParameters(f"expected an {N}x{N} matrix")
    return 0.5 * (a + a.T)


def zero_operator(dim: int = 1) -> FOperator:
    return FOperator(dim, "zero")


def zeroth_order(dim: int = 1, c: float = 1.0) -> FOperator:
    """``F = c r``."""
    return FOperator(dim, "zeroth", {"c": c}, cr=float(c))


def pure_second(dim: int = 1) -> FOperator:
    """``F = -trace X``."""
    return FOperator(dim, "pure_second", {}, CX=-np.eye(dim))


def linear_elliptic(dim: int = 1, A=None, b=None, c: float = 0.0, f: float = 0.0) -> FOperator:
    """``F = -trace(A X) + <b, p> + c r - f`` with ``A`` positive semidefinite."""
    A = _mat(A, dim, default_identity=True)
    if np.min(np.linalg.eigvalsh(A)) < -1e-12:
        raise InvalidParameters("A must be positive semidefinite")
    return FOperator(dim, "linear_elliptic", {"A": A, "b": b, "c": c, "f": f},
                     const=-float(f), cr=float(c), cp=_vec(b, dim), CX=-A)


def custom_affine(dim: int = 1, const: float = 0.0, cx=None, cr: float = 0.0, cp=None,
                  CX=None) -> FOperator:
    CXm = _mat(CX, dim)
    declared = bool(np.max(np.linalg.eigvalsh(CXm)) <= 1e-12)
    return FOperator(dim, "custom_affine",
                     {"const": const, "cx": cx, "cr": cr, "cp": cp, "CX": CX},
                     float(const), _vec(cx, dim), float(cr), _vec(cp, dim), CXm,
                     degenerate_ellipticity_declared=declared)


def custom_operator(dim: int, func: Callable, elliptic: bool = True) -> FOperator:
    return FOperator(dim, "custom", {}, func=func, degenerate_ellipticity_declared=elliptic)


def operator_from_spec(spec: Mapping | None, dim: int) -> FOperator:
    spec = dict(spec or {"family": "zero"})
    family = spec.pop("family")
    builders = {
        "zero": lambda: zero_operator(dim),
        "zeroth": lambda: zeroth_order(dim, spec.pop("c", 1.0)),
        "pure_second": lambda: pure_second(dim),
        "linear_elliptic": lambda: linear_elliptic(dim, spec.pop("A", None), spec.pop("b", None),
                                                   spec.pop("c", 0.0), spec.pop("f", 0.0)),
        "custom_affine": lambda: custom_affine(dim, spec.pop("const", 0.0), spec.pop("cx", None),
                                               spec.pop("cr", 0.0), spec.pop("cp", None),
                                               spec.pop("CX", None)),
    }
    if family not in builders:
        raise KeyError(f"unknown operator family {family!r}")
    op = builders[family]()
    if spec:
        raise KeyError(f"unexpected parameters for operator {family!r}: {sorted(spec)}")
    return op


# configuration and reports ----------------------------------------------------------

@dataclass(frozen=True)
class CheckConfig:
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    slack_rel: float = 1e-9
    box: tuple | None = None
    box_samples: int = 512
    jet_samples: int = 100
    seed: int = 0


@dataclass(frozen=True)
class CertificateSearch:
    eps_max: float = 1.0
    levels: int = 40
    samples: int = 100
    seed: int = 0


@dataclass
class CheckReport:
    definition: str
    mode: str
    point: list
    F_term: float
    small_ball_term: float
    tail_term: float
    full_integral_term: float
    residual: float
    verdict: str
    tol: float
    error_estimate: float
    epsilon: float | None = None
    delta: float | None = None
    p: list | None = None
    X: list | None = None
    integrable: bool | None = None
    integrable_indicator_free: bool | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def _verdict(residual, tol, mode):
    if not math.isfinite(residual):
        return "not_integrable"
    if mode == "sub":
        return "pass" if residual <= tol else "fail"
    return "pass" if residual >= -tol else "fail"


def _check_mode(mode):
    if mode not in MODES:
        raise InvalidParameters(f"mode must be sub or super, got {mode!r}")


def _assemble(definition, mode, x_hat, F_term, terms: dict[str, IntegralValue | float],
              cfg: CheckConfig, **extra) -> CheckReport:
    small = terms.get("small_ball", 0.0)
    tail = terms.get("tail")
    full = terms.get("full")
    values, err, diverged = [], 0.0, False
    for t in (small, tail, full):
        if isinstance(t, IntegralValue):
            diverged |= t.diverged
            values.append(t.value)
            err += t.total_error if math.isfinite(t.total_error) else 0.0
        elif t is not None:
            values.append(float(t))
    val = lambda t: (t.value if isinstance(t, IntegralValue) else float(t)) if t is not None else 0.0
    residual = math.nan if diverged else F_term - sum(values)
    tol = err + cfg.slack_rel * (1.0 + abs(F_term))
    free = full.integrable_indicator_free if isinstance(full, IntegralValue) else None
    return CheckReport(definition, mode, [float(v) for v in x_hat], float(F_term),
                       val(small), val(tail), val(full), residual,
                       _verdict(residual, tol, mode), tol, err,
                       integrable=not diverged, integrable_indicator_free=free, **extra)


def _touching_points(x_hat, cfg: CheckConfig):
    N = x_hat.size
    near = x_hat + ball_offsets(N, 1.0, 21, 64, cfg.seed)
    if cfg.box is None:
        return near
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (N,)) for b in cfg.box)
    return np.concatenate([near[np.all((near >= lo) & (near <= hi), axis=1)],
                           box_samples(lo, hi, cfg.box_samples, cfg.seed)])


def check_touching(u: CandidateFunction, phi: CandidateFunction, x_hat, mode: str,
                   cfg: CheckConfig) -> float:
    """Raise MaxViolated unless ``u(x_hat) = phi(x_hat)`` and ``u - phi`` is extremal there."""
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    u0, p0 = float(u(x_hat)), float(phi(x_hat))
    scale = 1e-12 * (1.0 + abs(u0))
    if abs(u0 - p0) > scale:
        raise MaxViolated(f"u(x_hat) = {u0!r} but phi(x_hat) = {p0!r}")
    pts = _touching_points(x_hat, cfg)
    d = np.atleast_1d(u(pts)) - np.atleast_1d(phi(pts))
    worst = float(np.max(d)) if mode == "sub" else float(np.max(-d))
    if worst > scale:
        kind = "maximum" if mode == "sub" else "minimum"
        raise MaxViolated(f"u - phi has no {kind} at x_hat on samples (excess {worst:.3e})")
    return worst


def _F_term(F, x_hat, value, p, X):
    return F(x_hat, value, p, X)


# the five checks ---------------------------------------------------------------------

def check_definition_A(F: FOperator, u: CandidateFunction, cert: JetCertificate,
                       kernel: LevyKernel, mode: str = "sub",
                       cfg: CheckConfig | None = None) -> CheckReport:
    cfg = cfg or CheckConfig()
    _check_mode(mode)
    ok, worst = verify_jet(u, cert, mode, cfg.jet_samples, cfg.seed)
    if not ok:
        raise JetRejected(f"jet inequality fails by {worst:.3e} within eps = {cert.epsilon}")
    jet = cert.jet
    x_hat = jet.base_point
    Fv = _F_term(F, x_hat, float(u(x_hat)), jet.p, jet.X)
    small = small_ball_bound_term(jet.X, cert.delta, cert.epsilon, kernel, mode, cfg.quad)
    tail = tail_integral(u, x_hat, jet.p, cert.epsilon, kernel, cfg.quad)
    return _assemble("A", mode, x_hat, Fv, {"small_ball": small, "tail": tail}, cfg,
                     epsilon=cert.epsilon, delta=cert.delta, p=jet.p.tolist(), X=jet.X.tolist())


def check_definition_Aprime(F: FOperator, u: CandidateFunction, phi: CandidateFunction, x_hat,
                            epsilon: float, delta: float, kernel: LevyKernel, mode: str = "sub",
                            cfg: CheckConfig | None = None,
                            enforce_certificate: bool = True) -> CheckReport:
    """With ``enforce_certificate=False`` a failing phi certificate is noted instead of raised."""
    cfg = cfg or CheckConfig()
    _check_mode(mode)
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    check_touching(u, phi, x_hat, mode, cfg)
    J = jet_at(phi, x_hat)
    cert = JetCertificate(J, delta, epsilon)
    ok, worst = verify_jet(phi, cert, mode, cfg.jet_samples, cfg.seed)
    message = f"(eps, delta) = ({epsilon}, {delta}) leave phi excess {worst:.3e}"
    if not ok and enforce_certificate:
        raise PhiCertificateFailed(message)
    Fv = _F_term(F, x_hat, float(u(x_hat)), J.p, J.X)
    small = small_ball_bound_term(J.X, delta, epsilon, kernel, mode, cfg.quad)
    tail = tail_integral(u, x_hat, J.p, epsilon, kernel, cfg.quad)
    rep = _assemble("Aprime", mode, x_hat, Fv, {"small_ball": small, "tail": tail}, cfg,
                    epsilon=epsilon, delta=delta, p=J.p.tolist(), X=J.X.tolist())
    if not ok:
        rep.notes.append("phi certificate failed: " + message)
    return rep


def check_definition_B(F: FOperator, u: CandidateFunction, phi: CandidateFunction, x_hat,
                       kernel: LevyKernel, mode: str = "sub",
                       cfg: CheckConfig | None = None) -> CheckReport:
    cfg = cfg or CheckConfig()
    _check_mode(mode)
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    check_touching(u, phi, x_hat, mode, cfg)
    J = jet_at(phi, x_hat)
    Fv = _F_term(F, x_hat, float(u(x_hat)), J.p, J.X)
    full = compensated_full_integral(phi, x_hat, kernel, cfg.quad)
    return _assemble("B", mode, x_hat, Fv, {"full": full}, cfg, p=J.p.tolist(), X=J.X.tolist())


def check_definition_Bprime(F: FOperator, u: CandidateFunction, phi: CandidateFunction, x_hat,
                            epsilon: float, kernel: LevyKernel, mode: str = "sub",
                            cfg: CheckConfig | None = None) -> CheckReport:
    cfg = cfg or CheckConfig()
    _check_mode(mode)
    if not epsilon > 0:
        raise InvalidParameters("epsilon must be positive")
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    check_touching(u, phi, x_hat, mode, cfg)
    J = jet_at(phi, x_hat)
    Fv = _F_term(F, x_hat, float(u(x_hat)), J.p, J.X)
    small = small_ball_remainder(phi, x_hat, epsilon, kernel, cfg.quad)
    tail = tail_integral(u, x_hat, J.p, epsilon, kernel, cfg.quad)
    return _assemble("Bprime", mode, x_hat, Fv, {"small_ball": small, "tail": tail}, cfg,
                     epsilon=epsilon, p=J.p.tolist(), X=J.X.tolist())


def check_definition_C(F: FOperator, u: CandidateFunction, phi: CandidateFunction, x_hat,
                       kernel: LevyKernel, mode: str = "sub",
                       cfg: CheckConfig | None = None) -> CheckReport:
    cfg = cfg or CheckConfig()
    _check_mode(mode)
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    check_touching(u, phi, x_hat, mode, cfg)
    J = jet_at(phi, x_hat)
    Fv = _F_term(F, x_hat, float(u(x_hat)), J.p, J.X)
    full = nonsmooth_full_integral(u, x_hat, J.p, kernel, cfg.quad)
    rep = _assemble("C", mode, x_hat, Fv, {"full": full}, cfg, p=J.p.tolist(), X=J.X.tolist())
    if rep.integrable_indicator_free is False and rep.integrable:
        rep.notes.append("u(x+z) - u(x) without the gradient term is not L1 near the origin")
    return rep


# certificates and dispatch --------------------------------------------------------------

def find_certificate(u: CandidateFunction, x_hat, p, X, mode: str, delta: float,
                     search: CertificateSearch | None = None) -> JetCertificate | None:
    """Largest dyadic ``eps_max 2^-j`` for which ``(p, X, delta, eps)`` certifies the jet."""
    search = search or CertificateSearch()
    _check_mode(mode)
    jet = SecondOrderJet(x_hat, p, X, float(u(np.atleast_1d(np.asarray(x_hat, dtype=float)))))
    for j in range(search.levels):
        cert = JetCertificate(jet, delta, search.eps_max * 2.0**-j)
        if verify_jet(u, cert, mode, search.samples, search.seed)[0]:
            return cert
    return None


_ALLOWED = {
    "A": {"cert"},
    "Aprime": {"phi", "x_hat", "epsilon", "delta"},
    "B": {"phi", "x_hat"},
    "Bprime": {"phi", "x_hat", "epsilon"},
    "C": {"phi", "x_hat"},
}


def run_check(definition: str, F: FOperator, u: CandidateFunction, kernel: LevyKernel,
              mode: str = "sub", cfg: CheckConfig | None = None, **params) -> CheckReport:
    """Dispatch to one definition; parameters foreign to that definition are rejected."""
    if definition not in _ALLOWED:
        raise InvalidParameters(f"unknown definition {definition!r}")
    given = {k for k, v in params.items() if v is not None}
    extra = given - _ALLOWED[definition]
    missing = _ALLOWED[definition] - given
    if extra:
        raise InvalidParameters(f"definition {definition} takes no {sorted(extra)}")
    if missing:
        raise InvalidParameters(f"definition {definition} needs {sorted(missing)}")
    if definition == "A":
        return check_definition_A(F, u, params["cert"], kernel, mode, cfg)
    if definition == "Aprime":
        return check_definition_Aprime(F, u, params["phi"], params["x_hat"], params["epsilon"],
                                       params["delta"], kernel, mode, cfg)
    if definition == "B":
        return check_definition_B(F, u, params["phi"], params["x_hat"], kernel, mode, cfg)
    if definition == "Bprime":
        return check_definition_Bprime(F, u, params["phi"], params["x_hat"], params["epsilon"],
                                       kernel, mode, cfg)
    return check_definition_C(F, u, params["phi"], params["x_hat"], kernel, mode, cfg)


def trace_moment(kernel: LevyKernel, eps: float, quad: QuadratureConfig | None = None) -> float:
    if kernel.is_zero:
        return 0.0
    return float(np.trace(small_ball_quadratic_moment(kernel, eps, quad)))
