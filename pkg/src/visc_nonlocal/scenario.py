"""Scenario files: TOML documents describing one verification setup.

Grammar (all tables optional unless marked)::

    name = "smooth_bump"          # required
    dimension = 1                 # default 1
    mode = "sub"                  # sub | super
    seed = 0

    [kernel]                      # required; see kernels.kernel_from_spec
    [u]                           # required; see functions.function_from_spec
    [phi]                         # defaults to u
    [operator]                    # defaults to {family = "zero"}

    [points]                      # exactly one of:
    list = [[0.0], [0.5]]         #   explicit points
    lo = [-1.0]; hi = [1.0]; spacing = [0.5]   # tensor grid

    [schedules]                   # strictly decreasing positive sequences
    epsilon = [0.5, 0.25]
    delta = [0.1, 0.05]
    r = [1.0, 0.5]
    n = [1, 2, 3]                 # increasing indices for the monotone study

    [quadrature]                  # tol, levels, tail_radius, richardson, ...
    [checks]                      # slack_rel, box_lo, box_hi, box_samples, jet_samples
    [forge]                       # r, s_max, point
    [outputs]                     # dir
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ._polar import QuadratureConfig
from .checkers import CheckConfig, FOperator, operator_from_spec
from .errors import ScenarioInvalid, ViscNonlocalError
from .functions import CandidateFunction, function_from_spec
from .kernels import LevyKernel, kernel_from_spec

TOP_LEVEL = {"name", "dimension", "mode", "seed", "kernel", "u", "phi", "operator", "points",
             "schedules", "quadrature", "checks", "forge", "outputs", "description"}

DEFAULT_EPSILON = tuple(2.0**-k for k in range(1, 9))
DEFAULT_DELTA = (0.1, 0.05, 0.025)
DEFAULT_R = (1.0, 0.5, 0.25)
DEFAULT_N = tuple(range(1, 21))


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    dimension: int
    mode: str
    seed: int
    kernel: LevyKernel
    u: CandidateFunction
    phi: CandidateFunction
    operator: FOperator
    points: np.ndarray
    epsilon_schedule: tuple
    delta_schedule: tuple
    r_schedule: tuple
    n_schedule: tuple
    quad: QuadratureConfig
    check: CheckConfig
    forge: dict
    output_dir: str | None
    raw: dict = field(default_factory=dict)
    source: Path | None = None

    def with_seed(self, seed: int) -> "Scenario":
        return build_scenario(self.raw, self.source.parent if self.source else None,
                              self.source, seed_override=seed)


def _decreasing(name, values, integer=False):
    vals = tuple(int(v) if integer else float(v) for v in values)
    if not vals:
        raise ScenarioInvalid(f"schedule {name!r} is empty")
    if integer:
        if any(v < 1 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ScenarioInvalid(f"schedule {name!r} must be increasing positive integers")
    elif any(v <= 0 for v in vals) or any(b >= a for a, b in zip(vals, vals[1:])):
        raise ScenarioInvalid(f"schedule {name!r} must be strictly decreasing and positive")
    return vals


def _points(spec: dict, dim: int) -> np.ndarray:
    spec = dict(spec)
    if "list" in spec:
        pts = np.atleast_2d(np.asarray(spec.pop("list"), dtype=float))
        if dim == 1 and pts.shape[0] == 1 and pts.shape[1] != 1:
            pts = pts.T
    elif "lo" in spec:
        lo = np.atleast_1d(np.asarray(spec.pop("lo"), dtype=float))
        hi = np.atleast_1d(np.asarray(spec.pop("hi"), dtype=float))
        h = np.atleast_1d(np.asarray(spec.pop("spacing"), dtype=float))
        if np.any(h <= 0) or np.any(hi < lo):
            raise ScenarioInvalid("point grid needs lo <= hi and positive spacing")
        axes = [lo[i] + h[i] * np.arange(int(np.floor((hi[i] - lo[i]) / h[i] + 1e-9)) + 1)
                for i in range(lo.size)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
    else:
        raise ScenarioInvalid("[points] needs either list or lo/hi/spacing")
    if spec:
        raise ScenarioInvalid(f"unexpected keys in [points]: {sorted(spec)}")
    if pts.shape[1] != dim:
        raise ScenarioInvalid(f"points have dimension {pts.shape[1]}, scenario has {dim}")
    return pts


def build_scenario(doc: dict, base_dir=None, source=None, seed_override: int | None = None) -> Scenario:
    try:
        return _build(doc, base_dir, source, seed_override)
    except ScenarioInvalid:
        raise
    except (KeyError, TypeError, ValueError, ViscNonlocalError) as exc:
        raise ScenarioInvalid(f"{type(exc).__name__}: {exc}") from exc


def _build(doc, base_dir, source, seed_override):
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        raise ScenarioInvalid(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("name", "kernel", "u"):
        if key not in doc:
            raise ScenarioInvalid(f"scenario is missing {key!r}")
    dim = int(doc.get("dimension", 1))
    mode = doc.get("mode", "sub")
    if mode not in ("sub", "super"):
        raise ScenarioInvalid(f"mode must be sub or super, got {mode!r}")
    seed = int(doc.get("seed", 0) if seed_override is None else seed_override)
    kspec = dict(doc["kernel"])
    kspec.setdefault("dim", dim)
    kernel = kernel_from_spec(kspec)
    if kernel.dimension != dim:
        raise ScenarioInvalid("kernel dimension differs from the scenario dimension")
    u = function_from_spec(doc["u"], dim, base_dir)
    phi = function_from_spec(doc["phi"], dim, base_dir) if "phi" in doc else u
    op = operator_from_spec(doc.get("operator"), dim)
    points = _points(doc.get("points", {"list": [[0.0] * dim]}), dim)
    sch = dict(doc.get("schedules", {}))
    eps = _decreasing("epsilon", sch.pop("epsilon", DEFAULT_EPSILON))
    delta = _decreasing("delta", sch.pop("delta", DEFAULT_DELTA))
    r = _decreasing("r", sch.pop("r", DEFAULT_R))
    n = _decreasing("n", sch.pop("n", DEFAULT_N), integer=True)
    if sch:
        raise ScenarioInvalid(f"unknown schedules: {sorted(sch)}")
    quad = QuadratureConfig.from_mapping(doc.get("quadrature"))
    checks = dict(doc.get("checks", {}))
    box = None
    if "box_lo" in checks or "box_hi" in checks:
        box = (tuple(np.broadcast_to(np.asarray(checks.pop("box_lo"), dtype=float), (dim,))),
               tuple(np.broadcast_to(np.asarray(checks.pop("box_hi"), dtype=float), (dim,))))
    cfg = CheckConfig(quad, float(checks.pop("slack_rel", 1e-9)), box,
                      int(checks.pop("box_samples", 512)), int(checks.pop("jet_samples", 100)), seed)
    if checks:
        raise ScenarioInvalid(f"unknown keys in [checks]: {sorted(checks)}")
    forge = dict(doc.get("forge", {}))
    unknown_forge = set(forge) - {"r", "s_max", "point"}
    if unknown_forge:
        raise ScenarioInvalid(f"unknown keys in [forge]: {sorted(unknown_forge)}")
    outputs = dict(doc.get("outputs", {}))
    return Scenario(str(doc["name"]), dim, mode, seed, kernel, u, phi, op, points, eps, delta, r,
                    n, quad, cfg, forge, outputs.get("dir"), dict(doc),
                    Path(source) if source else None)


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ScenarioInvalid(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioInvalid(f"{path}: {exc}") from exc
    return build_scenario(doc, path.parent, path, seed_override)


def bundled_scenario_paths() -> list[Path]:
    here = Path(__file__).parent / "scenarios"
    return sorted(here.glob("*.toml"))


def scenario_summary(sc: Scenario) -> dict[str, Any]:
    return {"name": sc.name, "dimension": sc.dimension, "mode": sc.mode, "seed": sc.seed,
            "kernel": sc.kernel.describe(), "operator": sc.operator.describe(),
            "u": sc.u.name, "phi": sc.phi.name, "n_points": int(sc.points.shape[0])}
