"""Command-line entry point ``visc-nonlocal``.

Exit codes: 0 success, 2 coherence failure, 3 invalid scenario or usage,
4 divergence encountered.  ``VISC_NONLOCAL_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .checkers import DEFINITIONS, CertificateSearch, run_check, find_certificate
from .errors import DivergentMoment, ScenarioInvalid, ViscNonlocalError
from .experiments import (EXIT_COHERENCE, EXIT_DIVERGENCE, EXIT_OK, EXIT_SCENARIO, StudyTable,
                          epsilon_refinement_study, monotone_convergence_experiment,
                          run_equivalence_suite)
from .forge import GlueSpline1D, ScaleSearch, build_psi_r, junction_diagnostics
from .functions import jet_at
from .kernels import check_kernel_invariants, verify_levy_integrability
from .reports import emit_reports, write_json, write_table
from .sampling import halton
from .scenario import Scenario, bundled_scenario_paths, load_scenario, scenario_summary

log = logging.getLogger("visc_nonlocal")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_SCENARIO)


def _load(args, path=None) -> Scenario:
    sc = load_scenario(path or args.scenario, args.seed)
    mode = getattr(args, "mode", None)
    if mode:
        sc = dataclasses.replace(sc, mode=mode)
    return sc


def _out(args, sc: Scenario) -> Path:
    return Path(args.out or sc.output_dir or f"out/{sc.name}")


def _combine(codes):
    if EXIT_COHERENCE in codes:
        return EXIT_COHERENCE
    if EXIT_DIVERGENCE in codes:
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_check(args) -> int:
    sc = _load(args)
    eps, delta = sc.epsilon_schedule[-1], sc.delta_schedule[-1]
    reports = []
    for x_hat in sc.points:
        params = {"phi": sc.phi, "x_hat": x_hat}
        if args.definition == "A":
            J = jet_at(sc.phi, x_hat)
            cert = find_certificate(sc.u, x_hat, J.p, J.X, sc.mode, delta,
                                    CertificateSearch(eps, 40, sc.check.jet_samples, sc.seed))
            if cert is None:
                raise ScenarioInvalid(f"no jet certificate at {x_hat.tolist()}")
            params = {"cert": cert}
        elif args.definition == "Aprime":
            params.update(epsilon=eps, delta=delta)
        elif args.definition == "Bprime":
            params.update(epsilon=eps)
        reports.append(run_check(args.definition, sc.operator, sc.u, sc.kernel, sc.mode,
                                 sc.check, **params))
    emit_reports(_out(args, sc), reports, None, sc.dimension)
    for r in reports:
        print(f"{args.definition} {sc.mode} at {r.point}: residual {r.residual:.12g} -> {r.verdict}")
    return EXIT_DIVERGENCE if any(r.verdict == "not_integrable" for r in reports) else EXIT_OK


def cmd_suite(args) -> int:
    paths = args.scenario_list or bundled_scenario_paths()
    if not paths:
        raise ScenarioInvalid("no scenarios given and none bundled")
    codes = []
    for path in paths:
        sc = _load(args, path)
        res = run_equivalence_suite(sc)
        out = Path(args.out) / sc.name if args.out else _out(args, sc)
        emit_reports(out, res.reports, res.table, sc.dimension,
                     {"scenario": scenario_summary(sc), "status": res.status,
                      "failures": res.failures})
        verdicts = sorted({r.verdict for r in res.reports})
        print(f"{sc.name}: status {res.status}, verdicts {verdicts}, "
              f"{len(res.failures)} failure(s)")
        for f in res.failures:
            print(f"  {f}")
        codes.append(res.status)
    return _combine(codes)


def cmd_study_epsilon(args) -> int:
    sc = _load(args)
    table, reports = epsilon_refinement_study(sc)
    emit_reports(_out(args, sc), reports, table, sc.dimension,
                 {"scenario": scenario_summary(sc), "flags": table.monotone_flags, **table.meta})
    for row in table.rows:
        print(f"{row['stage']:>7} eps={row['epsilon']:.6g} delta={row['delta']:.6g} "
              f"gap={row['gap']:.6e} bound={row['bound']:.6e}")
    print("flags:", table.monotone_flags)
    return EXIT_OK if all(table.monotone_flags.values()) else EXIT_COHERENCE


def cmd_study_monotone(args) -> int:
    sc = _load(args)
    table = monotone_convergence_experiment(sc)
    emit_reports(_out(args, sc), [], table, sc.dimension,
                 {"scenario": scenario_summary(sc), "flags": table.monotone_flags, **table.meta})
    print(f"limit {table.meta['limit']:.12g} reference {table.meta['reference']:.12g} "
          f"flags {table.monotone_flags}")
    return EXIT_OK if all(table.monotone_flags.values()) else EXIT_COHERENCE


def _region_label(base, y):
    a = np.abs(y) / base.s_r
    if np.all(a < 1.0 / 3.0):
        return "inner"
    if np.all((a > 2.0 / 3.0) & (a < 1.0)):
        return "corner"
    if np.all(a <= 1.0):
        return "middle"
    return "outside"


def cmd_forge(args) -> int:
    sc = _load(args)
    x_hat = np.atleast_1d(np.asarray(sc.forge.get("point", sc.points[0]), dtype=float))
    r = float(sc.forge.get("r", sc.r_schedule[0]))
    base = build_psi_r(sc.phi, sc.u, x_hat, r,
                       ScaleSearch(s_max=float(sc.forge.get("s_max", 1.0)), seed=sc.seed))
    N = sc.dimension
    y = (2.0 * halton(512, N, sc.seed) - 1.0) * 1.25 * base.s_r
    pts = x_hat + y @ base.T.T
    v, g, H = base.jet(pts)
    cols = ([f"x{i + 1}" for i in range(N)] + ["psi"] + [f"grad{i + 1}" for i in range(N)]
            + ["hessian_min_eig", "region"])
    samples = StudyTable(cols)
    for k in range(pts.shape[0]):
        row = {f"x{i + 1}": pts[k, i] for i in range(N)}
        row.update({f"grad{i + 1}": g[k, i] for i in range(N)})
        samples.add(psi=v[k], hessian_min_eig=float(np.linalg.eigvalsh(H[k])[0]),
                    region=_region_label(base, y[k]), **row)
    junc = StudyTable(["coordinate", "junction", "h", "left_fd", "right_fd", "left_exact",
                       "right_exact", "jump_fd", "worst_vs_exact"])
    for i, piece in enumerate(base.pieces):
        if isinstance(piece, GlueSpline1D):
            for h in (1e-3, 1e-4):
                for row in junction_diagnostics(piece, h):
                    junc.add(coordinate=i + 1, **row)
    out = _out(args, sc)
    write_table(out / "forge_samples.csv", samples)
    write_table(out / "junctions.csv", junc)
    write_json(out / "forge.json", {
        "point": x_hat.tolist(), "r": r, "s_r": base.s_r, "eigenvalues": base.eigenvalues.tolist(),
        "T": base.T.tolist(), "glue_coordinates": [i + 1 for i in base.glue_coordinates],
        "taylor_constant": base.taylor_constant, "convention": base.convention})
    print(f"s_r = {base.s_r:.6g}, eigenvalues {base.eigenvalues.tolist()}, "
          f"glue on {[i + 1 for i in base.glue_coordinates]}")
    return EXIT_OK


def cmd_verify_kernel(args) -> int:
    sc = _load(args)
    out = _out(args, sc)
    problems = check_kernel_invariants(sc.kernel, seed=sc.seed)
    try:
        rep = verify_levy_integrability(sc.kernel, sc.quad)
    except DivergentMoment as exc:
        write_json(out / "kernel.json", {"kernel": sc.kernel.describe(), "admissible": False,
                                         "reason": str(exc), "invariant_problems": problems})
        print(f"kernel inadmissible: {exc}")
        return EXIT_DIVERGENCE
    write_json(out / "kernel.json", {"kernel": sc.kernel.describe(), "admissible": True,
                                     **dataclasses.asdict(rep), "invariant_problems": problems})
    print(f"near second moment {rep.near_second_moment:.15g}, tail mass {rep.tail_mass:.15g}, "
          f"error {rep.quadrature_error_estimate:.3g}")
    return EXIT_OK if not problems else EXIT_COHERENCE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="visc-nonlocal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, scenario_required=True):
        if scenario_required:
            p.add_argument("--scenario", required=True, help="scenario TOML file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the scenario seed")

    p = sub.add_parser("check", help="run one definition at every scenario point")
    common(p)
    p.add_argument("--definition", required=True, choices=DEFINITIONS)
    p.add_argument("--mode", choices=("sub", "super"))
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("suite", help="equivalence suite over scenarios (bundled set by default)")
    common(p, scenario_required=False)
    p.add_argument("--scenario", dest="scenario_list", action="append",
                   help="scenario TOML (repeatable)")
    p.add_argument("--mode", choices=("sub", "super"))
    p.set_defaults(func=cmd_suite)

    for name, func, text in (("study-epsilon", cmd_study_epsilon, "epsilon/delta refinement study"),
                             ("study-monotone", cmd_study_monotone, "monotone convergence experiment"),
                             ("forge-test-function", cmd_forge, "build psi^r and write samples"),
                             ("verify-kernel", cmd_verify_kernel, "kernel admissibility")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("VISC_NONLOCAL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioInvalid as exc:
        print(f"scenario invalid: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except DivergentMoment as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ViscNonlocalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
