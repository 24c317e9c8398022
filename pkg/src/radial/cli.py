"""``radial`` command line: check, certify, solve, bench."""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .algorithms import (
    ConfigurationError, ProjectionFailure, StepPolicy, default_L_eta, frank_wolfe, box_lmo,
    linprog_lmo, projected_gradient, accelerated_projected, radial_accelerated,
    radial_smoothing, radial_subgradient,
)
from .bench import METHODS, load_config, run_benchmark
from .conditioning import certify
from .core import BracketError, RadialityError, SingularityError, check_upper_radial
from .problems import ProblemFileError, QpInstance, load_problem

EXIT_OK, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="radial", description="Radial duality toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="probe upper radiality of a problem")
    c.add_argument("problem")
    c.add_argument("--directions", type=int, default=64, help="random directions besides the axes")
    c.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("certify", help="print R, D, L and derived dual constants")
    c.add_argument("problem")

    s = sub.add_parser("solve", help="run one solver and write its trace")
    s.add_argument("problem")
    s.add_argument("--method", choices=METHODS, default="radial_subgradient")
    s.add_argument("--policy", choices=StepPolicy.KINDS, default="relative_eps")
    s.add_argument("--eps", type=float, default=1e-3)
    s.add_argument("--alpha", type=float, help="step for the constant policy")
    s.add_argument("--d-star", type=float, help="optimal dual value for polyak_gap")
    s.add_argument("--eta", type=float, help="smoothing parameter (default eps / 2 log(#pieces))")
    s.add_argument("--iters", type=int, default=1000)
    s.add_argument("--tol", type=float, help="stop tolerance")
    s.add_argument("--p-star", type=float, help="known optimal value for rel_gap")
    s.add_argument("--momentum-clip", action="store_true",
                   help="use max(0, (k-1)/(k+2)) instead of the raw momentum coefficient")
    s.add_argument("--out", default="trace.csv")

    b = sub.add_parser("bench", help="run the QP benchmark")
    b.add_argument("--config", help="JSON/YAML or key=value config file")
    b.add_argument("--seed", type=int)
    b.add_argument("--out-dir")
    b.add_argument("--iterations", type=int)
    b.add_argument("--large", action="store_true", help="add the (1600, 6400, 100) instance")
    return p


def _cmd_check(args):
    from .core import default_directions

    spec = load_problem(args.problem)
    dirs = default_directions(spec.problem.dim, n_random=args.directions, seed=args.seed)
    report = check_upper_radial(spec.problem, dirs)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_SOLVER


def _cmd_certify(args):
    spec = load_problem(args.problem)
    rep = certify(spec.problem, **spec.meta)
    for line in rep.lines():
        print(line)
    return EXIT_OK


def _policy(args):
    if args.policy == "polyak_gap":
        if args.d_star is None:
            raise ConfigurationError("--policy polyak_gap needs --d-star")
        return StepPolicy.polyak_gap(args.d_star)
    if args.policy == "constant":
        if args.alpha is None:
            raise ConfigurationError("--policy constant needs --alpha")
        return StepPolicy.constant(args.alpha)
    return StepPolicy(args.policy, args.eps)


def _cmd_solve(args):
    spec = load_problem(args.problem)
    prob, x0 = spec.problem, spec.x0
    p_star = args.p_star if args.p_star is not None else spec.p_star
    if args.method == "radial_subgradient":
        policy = StepPolicy.polyak_gap(spec.d_star) if (
            args.policy == "polyak_gap" and args.d_star is None and spec.d_star is not None
        ) else _policy(args)
        trace = radial_subgradient(prob, x0, policy, args.iters, stop_tol=args.tol, p_star=p_star,
                                   nonconvex=policy.kind == "nonconvex_eps",
                                   lipschitz_dual=certify(prob, **spec.meta).lipschitz_dual
                                   if policy.kind == "nonconvex_eps" else None)
    elif args.method == "radial_smoothing":
        if not hasattr(prob, "finite_max_parts"):
            raise ConfigurationError("radial_smoothing needs a QP or min-composite problem")
        rep = certify(prob, **spec.meta)
        n_pieces = len(prob.dual_pieces(np.zeros(prob.dim))[0])
        eta = args.eta if args.eta is not None else args.eps / (2.0 * math.log(max(n_pieces, 2)))
        bound = rep.smooth_dual_bound if rep.smooth_dual_bound is not None else 0.0
        L = default_L_eta(eta, bound, rep.lipschitz_dual, prob.rows)
        trace = radial_smoothing(prob, x0, eta, L, args.iters, p_star=p_star, stop_tol=args.tol,
                                 momentum_clip=args.momentum_clip)
    elif args.method == "radial_accelerated":
        if getattr(prob, "m", 0) or len(getattr(prob, "pieces", ())) > 1:
            raise ConfigurationError("radial_accelerated needs a smooth dual; "
                                     "use radial_smoothing for finite-max duals")
        rep = certify(prob, **spec.meta)
        if rep.L is None or not math.isfinite(rep.D):
            raise ConfigurationError("radial_accelerated needs finite D and known L")
        trace = radial_accelerated(prob, x0, rep.L, rep.D, rep.safe_R, args.iters, p_star=p_star,
                                   stop_tol=args.tol, momentum_clip=args.momentum_clip)
    else:
        if not isinstance(prob, QpInstance):
            raise ConfigurationError(f"{args.method} runs on QP problems only")
        L = prob.smoothness()
        if args.method == "frank_wolfe":
            lmo = _lmo_for(prob)
            trace = frank_wolfe(prob, lmo, x0, args.iters, p_star=p_star, stop_tol=args.tol)
        else:
            fn = projected_gradient if args.method == "projected_gradient" else accelerated_projected
            trace = fn(prob, x0, L, args.iters, p_star=p_star, stop_tol=args.tol)
    trace.write_csv(args.out, f"method={args.method}\nstatus={trace.status}")
    print(f"status={trace.status}")
    print(f"iterations={trace.iterations}")
    if trace.records:
        print(f"best_primal={trace.best_primal!r}")
    if trace.best_rel_gap is not None:
        print(f"best_rel_gap={trace.best_rel_gap!r}")
    if trace.certificate is not None:
        print("certificate=" + " ".join(repr(float(v)) for v in trace.certificate))
    if trace.message:
        print(f"message={trace.message}")
    print(f"trace={args.out}")
    return EXIT_SOLVER if trace.status in ("error", "projection_failure") else EXIT_OK


def _lmo_for(prob: QpInstance):
    A, b = prob.A, prob.b
    n = prob.dim
    # axis-aligned boxes get the exact oracle
    rows = A / b[:, None]
    nz = np.count_nonzero(rows, axis=1)
    if A.shape[0] == 2 * n and np.all(nz == 1):
        hi = np.full(n, np.inf)
        lo = np.full(n, -np.inf)
        for row, bi in zip(A, b):
            j = int(np.flatnonzero(row)[0])
            if row[j] > 0:
                hi[j] = min(hi[j], bi / row[j])
            else:
                lo[j] = max(lo[j], bi / row[j])
        if np.all(np.isfinite(hi)) and np.all(np.isfinite(lo)):
            return box_lmo(lo, hi)
    return linprog_lmo(A, b)


def _cmd_bench(args):
    over = {"out_dir": args.out_dir, "iterations": args.iterations}
    cfg = load_config(args.config, {k: v for k, v in over.items() if v is not None})
    if args.seed is not None:
        cfg.seed = args.seed
    if args.large:
        cfg.sizes.append((1600, 6400, 100))
    run_benchmark(cfg)
    print(f"summary={cfg.out_dir}/summary.csv")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"check": _cmd_check, "certify": _cmd_certify, "solve": _cmd_solve,
               "bench": _cmd_bench}[args.command]
    try:
        return handler(args)
    except (ProblemFileError, ConfigurationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (RadialityError, SingularityError, BracketError, ProjectionFailure,
            ArithmeticError, RuntimeError) as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
