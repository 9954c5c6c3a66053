"""Command-line interface: ``superdsap <command> ...``.

Commands::

    gen halfspaces|box-corner     write a problem file
    feasibility PROBLEM           plain DSAP run
    superiorize PROBLEM           superiorized DSAP run (+ optional report)
    compare PROBLEM               both runs from the same start, with the gap
    check-fejer TRACE --ref P     Fejer check of a trace CSV
    suite                         acceptance battery

All randomness is seeded by ``--seed`` (default 0).  Malformed input exits
with status 2 and a message naming the offending field.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .diagnostics import ReferencePoint, check_fejer, dichotomy_report, displacement_bound_holds, superiority_gap
from .errors import InputError, SuperDSAPError
from .feasibility import StopRule, Trace, run_dsap
from .problems import ProblemSpec, gen_box_corner, gen_consistent_halfspaces
from .strings import Amalgamator, MStarParams, PlanSchedule, cimmino_plan, kaczmarz_plan
from .superiorize import InnerLoopPlan, make_beta_schedule, run_superiorized_dsap


def _load_json(path: str, what: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what} {path}: invalid JSON ({exc})") from None


def _load_point(arg: str, dim: int | None = None, what: str = "point") -> ReferencePoint:
    """Accept ``"1,2,3"``, a JSON array file or a JSON object file with ``point``."""
    if not os.path.exists(arg):
        try:
            vals = [float(t) for t in arg.split(",")]
        except ValueError:
            raise InputError(f"{what}: cannot parse {arg!r}") from None
        ref = ReferencePoint(what, vals)
    else:
        d = _load_json(arg, what)
        ref = ReferencePoint(what, d) if isinstance(d, list) else ReferencePoint.from_dict(d)
    if dim is not None and ref.point.size != dim:
        raise InputError(f"{what}: dimension {ref.point.size} does not match problem dimension {dim}")
    return ref


def _plan(arg: str, m: int, rotate: bool) -> PlanSchedule:
    if arg == "kaczmarz":
        am = kaczmarz_plan(m)
    elif arg == "cimmino":
        am = cimmino_plan(m)
    else:
        am = Amalgamator.from_dict(_load_json(arg, "amalgamator"))
    params = MStarParams.default_for(am, m)
    if rotate:
        return PlanSchedule.cyclic_rotation(am, m, params)
    return PlanSchedule.constant(am, m, params)


def _start(spec: ProblemSpec, arg: str | None) -> np.ndarray:
    if arg is not None:
        return _load_point(arg, spec.dimension, "x0").point
    if spec.x0 is not None:
        return spec.x0
    return np.zeros(spec.dimension)


def _stop(args) -> StopRule:
    return StopRule(violation_tol=args.tol, max_iters=args.max_iters, stall_tol=args.stall_tol)


def _write_trace(trace: Trace, path: str | None) -> None:
    if path:
        trace.to_csv(path)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False)


def _summary(trace: Trace) -> dict:
    f = trace.final
    return {
        "iterations": f.k,
        "stop_reason": trace.stop_reason,
        "final_violation": f.max_violation,
        "final_phi": f.phi,
        "final_iterate": f.iterate.tolist(),
    }


def _run_plain(spec, args, x0):
    plan = _plan(args.plan, spec.m, args.rotate)
    return run_dsap(spec.family, plan, x0, _stop(args), objective=spec.objective, refs=spec.reference_points())


def _run_sup(spec, args, x0):
    if spec.objective is None:
        raise InputError("objective: problem has no objective; superiorization needs one")
    plan = _plan(args.plan, spec.m, args.rotate)
    beta = make_beta_schedule(args.eta0, args.rho)
    inner = InnerLoopPlan.from_name(args.nk, args.N, args.seed)
    return run_superiorized_dsap(
        spec.family, plan, spec.objective, beta, inner, x0, _stop(args), args.zero_tol,
        refs=spec.reference_points(),
    )


def _sup_report(spec: ProblemSpec, trace: Trace, phi_tol: float) -> dict:
    rep = _summary(trace)
    rep["beta_consumed"] = float(sum(trace.beta_sums))
    rep["displacement_bound_holds"] = displacement_bound_holds(trace)
    minimal = [r for r in spec.reference_points() if r.kind == "minimal"]
    if minimal:
        v = dichotomy_report(trace, minimal[0], phi_tol, spec.objective)
        rep.update(v.to_dict())
    else:
        rep.update({"verdict": None, "k0": None, "c0": None, "note": "no known minimizer in problem file"})
    return rep


def cmd_gen(args) -> int:
    if args.family == "halfspaces":
        spec = gen_consistent_halfspaces(args.dim, args.m, args.seed, args.margin)
    else:
        spec = gen_box_corner(args.dim)
    text = spec.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_feasibility(args) -> int:
    spec = ProblemSpec.load(args.problem)
    tr = _run_plain(spec, args, _start(spec, args.x0))
    _write_trace(tr, args.out)
    print(_dump(_summary(tr)))
    return 0


def cmd_superiorize(args) -> int:
    spec = ProblemSpec.load(args.problem)
    tr = _run_sup(spec, args, _start(spec, args.x0))
    _write_trace(tr, args.out)
    rep = _sup_report(spec, tr, args.phi_tol)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(_dump(rep) + "\n")
    print(_dump(_summary(tr)))
    return 0


def cmd_compare(args) -> int:
    spec = ProblemSpec.load(args.problem)
    x0 = _start(spec, args.x0)
    plain = _run_plain(spec, args, x0)
    if spec.objective is None:
        raise InputError("objective: problem has no objective; compare needs one")
    sup = _run_sup(spec, args, x0)
    _write_trace(plain, args.out_plain)
    _write_trace(sup, args.out_sup)
    out = {
        "superiority_gap": superiority_gap(plain, sup),
        "plain": _summary(plain),
        "superiorized": _summary(sup),
    }
    print(_dump(out))
    return 0


def cmd_check_fejer(args) -> int:
    try:
        trace = Trace.from_csv(args.trace)
    except OSError as exc:
        raise InputError(f"trace: {exc}") from None
    ref = _load_point(args.ref, trace.records[0].iterate.size if trace.records else None, "ref")
    rep = check_fejer(trace, ref, strict=args.strict)
    print(_dump(rep.to_dict()))
    return 0 if rep.passed else 1


def cmd_suite(args) -> int:
    from .suite import run_suite

    only = set(args.only) if args.only else None
    results = run_suite(args.seed, only=only, timings=args.timings)
    return 0 if all(r.passed for r in results) else 1


def _add_run_options(p, superiorized: bool) -> None:
    p.add_argument("problem", help="problem JSON file")
    p.add_argument("--plan", default="kaczmarz", help="kaczmarz, cimmino or an amalgamator JSON file")
    p.add_argument("--rotate", action="store_true", help="relabel indices cyclically with k")
    p.add_argument("--x0", help="start point: 'a,b,...' or JSON file (default: problem x0, else origin)")
    p.add_argument("--tol", type=float, default=1e-8, help="max-violation tolerance")
    p.add_argument("--max-iters", type=int, default=100_000)
    p.add_argument("--stall-tol", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    if superiorized:
        p.add_argument("--eta0", type=float, default=1.0)
        p.add_argument("--rho", type=float, default=0.99)
        p.add_argument("--N", type=int, default=1, help="inner-loop cap")
        p.add_argument("--nk", choices=("const", "cycle", "random"), default="const")
        p.add_argument("--zero-tol", type=float, default=1e-12)
        p.add_argument("--phi-tol", type=float, default=1e-6, help="tolerance for the minimum-reached verdict")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="superdsap", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a problem file")
    g.add_argument("family", choices=("halfspaces", "box-corner"))
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--m", type=int, default=10)
    g.add_argument("--margin", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("feasibility", help="run plain DSAP")
    _add_run_options(f, superiorized=False)
    f.add_argument("--out", help="trace CSV path")
    f.set_defaults(func=cmd_feasibility)

    s = sub.add_parser("superiorize", help="run superiorized DSAP")
    _add_run_options(s, superiorized=True)
    s.add_argument("--out", help="trace CSV path")
    s.add_argument("--report", help="report JSON path")
    s.set_defaults(func=cmd_superiorize)

    c = sub.add_parser("compare", help="run plain and superiorized DSAP from one start")
    _add_run_options(c, superiorized=True)
    c.add_argument("--out-plain")
    c.add_argument("--out-sup")
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("check-fejer", help="check Fejer monotonicity of a trace CSV")
    k.add_argument("trace")
    k.add_argument("--ref", required=True, help="reference point: 'a,b,...' or JSON file")
    k.add_argument("--strict", action="store_true")
    k.set_defaults(func=cmd_check_fejer)

    t = sub.add_parser("suite", help="run the acceptance battery")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    t.add_argument("--timings", action="store_true", help="append wall-clock times (breaks byte-identity)")
    t.set_defaults(func=cmd_suite)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SuperDSAPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
