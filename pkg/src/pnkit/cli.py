"""Command-line front end.

Subcommands expose the three solver interfaces plus a benchmark runner, all
with machine-readable JSON reports that are byte-reproducible under a fixed
seed (excluding the wall-time field).

Exit codes: 0 success, 1 runtime/numerical failure, 2 non-convergence,
3 benchmark gate failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import diffeq, linalg, problems, quad, randvars
from .errors import NumericalError, ResourceLimitError, SolverFailure
from .linalg import SolverConfig, StoppingReason
from .problems import ProblemFormatError, ProblemSpec

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_GATE_FAILURE = 3
EXIT_USAGE = 64

SCHEMA_VERSION = 1


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the contract wants 64.
    def error(self, message):
        raise _UsageError(message)


def _report(command: list[str], seed: int | None, result: dict, diagnostics: dict,
            started: float) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "seed": seed,
        "wall_time_s": time.perf_counter() - started,
        "result": result,
        "diagnostics": diagnostics,
    }


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


_GENERATOR_RE = re.compile(r"^random_spd\((?P<args>[^)]*)\)$")


def resolve_problem(token: str) -> ProblemSpec:
    """Problem from a path, "-" for stdin, a builtin name, or random_spd(...)."""
    if token == "-":
        return problems.load(sys.stdin)
    match = _GENERATOR_RE.match(token.replace(" ", ""))
    if match:
        kwargs: dict = {}
        if match.group("args"):
            for part in match.group("args").split(","):
                key, _, value = part.partition("=")
                if key not in ("n", "condition_target", "seed"):
                    raise _UsageError(f"unknown random_spd argument {key!r}")
                kwargs[key] = float(value) if key == "condition_target" else int(value)
        if "n" not in kwargs:
            raise _UsageError("random_spd(...) requires n")
        return problems.random_spd_system(**kwargs)
    if token in problems.builtin_names():
        return problems.builtin(token)
    path = Path(token)
    if not path.exists():
        raise FileNotFoundError(f"problem file not found: {token}")
    return problems.load(path)


# --- linsolve ---------------------------------------------------------------


def cmd_linsolve(args, command: list[str]) -> int:
    started = time.perf_counter()
    spec = resolve_problem(args.problem)
    system = spec.to_linear_system()
    config = SolverConfig(atol=args.atol, rtol=args.rtol, maxiter=args.maxiter)
    belief = linalg.problinsolve(system, system.b, config=config)
    result = {
        "mean": belief.x.mean.tolist(),
        "std": belief.x.std.tolist(),
        "belief": json.loads(randvars.to_json(belief.x)),
    }
    diagnostics = {
        "problem": spec.name,
        "iterations": belief.iterations,
        "stopping_reason": belief.stopping_reason.value,
        "residual_norm": belief.residual_norms[-1],
    }
    reference = spec.reference_values()
    if reference is not None:
        diagnostics["reference_error"] = float(
            np.linalg.norm(belief.x.mean - reference) / max(np.linalg.norm(reference), 1e-300)
        )
    _emit(_report(command, args.seed, result, diagnostics, started), args.out)
    if belief.stopping_reason is StoppingReason.MAXITER:
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


# --- odesolve ---------------------------------------------------------------


def _parse_eval(text: str | None, ivp) -> list[float]:
    if not text:
        return [float(ivp.tmax)]
    points = [float(tok) for tok in text.split(",") if tok.strip()]
    for t in points:
        if t < ivp.t0 or t > ivp.tmax:
            raise ValueError(f"evaluation point {t} outside [{ivp.t0}, {ivp.tmax}]")
    return points


def cmd_odesolve(args, command: list[str]) -> int:
    started = time.perf_counter()
    spec = resolve_problem(args.problem)
    ivp = spec.to_ivp()
    eval_points = _parse_eval(args.eval, ivp)

    if args.method == "perturbed":
        rng = np.random.default_rng(args.seed)
        solution = diffeq.perturbed_solve(
            ivp,
            base_method=args.base_method,
            h=args.h,
            scale=args.scale,
            ensemble_size=args.ensemble,
            rng=rng,
        )
        means = [solution.mean_at(t).tolist() for t in eval_points]
        stds = [solution.std_at(t).tolist() for t in eval_points]
        diagnostics = {
            "problem": spec.name,
            "method": "perturbed",
            "base_method": args.base_method,
            "base_order": solution.order,
            "ensemble_size": solution.size,
            "excluded": solution.excluded,
            "h_nominal": solution.h_nominal,
            "scale": solution.scale,
        }
    else:
        grid = None
        if args.grid is not None:
            grid = np.linspace(ivp.t0, ivp.tmax, args.grid + 1)
        posterior = diffeq.solve_ivp(
            ivp, q=args.q, mode=args.method, rtol=args.rtol, atol=args.atol,
            fixed_grid=grid,
        )
        beliefs = [posterior.solution(t) for t in eval_points]
        means = [rv.mean.tolist() for rv in beliefs]
        stds = [rv.std.tolist() for rv in beliefs]
        belief_payloads = [json.loads(randvars.to_json(rv)) for rv in beliefs]
        diagnostics = {
            "problem": spec.name,
            "method": args.method,
            "q": args.q,
            "sigma2": posterior.sigma2,
            "grid_size": int(posterior.times.size),
            "steps_accepted": sum(1 for s in posterior.steps if s.accepted),
            "steps_rejected": sum(1 for s in posterior.steps if not s.accepted),
        }

    result = {"eval_points": eval_points, "mean": means, "std": stds}
    if args.method != "perturbed":
        result["beliefs"] = belief_payloads
    reference = spec.reference_values()
    ref_at = (spec.reference_solution or {}).get("at")
    if reference is not None and ref_at is not None and ref_at in eval_points:
        idx = eval_points.index(ref_at)
        diagnostics["reference_error"] = float(
            np.max(np.abs(np.asarray(means[idx]) - reference))
        )
    _emit(_report(command, args.seed, result, diagnostics, started), args.out)
    return EXIT_OK


# --- quad -------------------------------------------------------------------


def cmd_quad(args, command: list[str]) -> int:
    started = time.perf_counter()
    if (args.n_nodes is None) == (args.nodes_file is None):
        raise _UsageError("provide exactly one of --n-nodes / --nodes-file")
    spec = resolve_problem(args.problem)
    problem = spec.to_quad_problem()
    kernel = spec.default_kernel()

    if args.nodes_file is not None:
        payload = json.loads(Path(args.nodes_file).read_text())
        nodes = np.atleast_2d(np.asarray(payload["nodes"], dtype=float))
        values = problem.evaluate(nodes)
        if args.optimize_lengthscale:
            kernel = quad.optimize_lengthscale(nodes, values, kernel)
        belief = quad.bq_integrate(problem, nodes, values, kernel)
        n_nodes = int(nodes.shape[0])
    elif args.n_nodes == 0:
        belief = quad.prior_belief(kernel, problem.measure)
        n_nodes = 0
    else:
        rng = np.random.default_rng(args.seed)
        nodes = problem.measure.sample(rng, args.n_nodes)
        values = problem.evaluate(nodes)
        if args.optimize_lengthscale:
            kernel = quad.optimize_lengthscale(nodes, values, kernel)
        belief = quad.bq_integrate(problem, nodes, values, kernel)
        n_nodes = args.n_nodes

    result = {
        "mean": float(belief.mean[0]),
        "std": float(belief.std[0]),
        "belief": json.loads(randvars.to_json(belief)),
    }
    diagnostics = {
        "problem": spec.name,
        "n_nodes": n_nodes,
        "kernel": {
            "lengthscales": kernel.lengthscales.tolist(),
            "output_scale": kernel.output_scale,
        },
    }
    reference = spec.reference_values()
    if reference is not None:
        diagnostics["reference_error"] = float(abs(result["mean"] - reference[0]))
    _emit(_report(command, args.seed, result, diagnostics, started), args.out)
    return EXIT_OK


# --- bench ------------------------------------------------------------------


def _bench_rows_smoke():
    """(problem, metric, comparison, default threshold, runner) rows."""

    def linsolve_error():
        spec = problems.random_spd_system(12, 50.0, seed=3)
        system = spec.to_linear_system()
        belief = linalg.problinsolve(system, system.b)
        ref = spec.reference_values()
        return float(np.linalg.norm(belief.x.mean - ref) / np.linalg.norm(ref))

    def linsolve_residual():
        spec = problems.random_spd_system(30, 100.0, seed=5)
        system = spec.to_linear_system()
        belief = linalg.problinsolve(system, system.b)
        return float(belief.residual_norms[-1] / np.linalg.norm(system.b))

    def linear_decay_error():
        spec = problems.builtin("linear_decay")
        posterior = diffeq.solve_ivp(spec.to_ivp(), q=2, mode="ek1", rtol=1e-8, atol=1e-10)
        return float(abs(posterior.solution(1.0).mean[0] - np.exp(-1.0)))

    def logistic_error():
        spec = problems.builtin("logistic")
        posterior = diffeq.solve_ivp(spec.to_ivp(), q=2, mode="ek1", rtol=1e-6, atol=1e-8)
        fn = problems.reference_solution_fn("logistic")
        errs = [
            abs(posterior.solution(t).mean[0] - fn(t)[0]) for t in posterior.times
        ]
        return float(max(errs))

    def logistic_coverage():
        spec = problems.builtin("logistic")
        posterior = diffeq.solve_ivp(spec.to_ivp(), q=2, mode="ek1", rtol=1e-6, atol=1e-8)
        fn = problems.reference_solution_fn("logistic")
        hits = 0
        for t in posterior.times:
            rv = posterior.solution(t)
            hits += abs(rv.mean[0] - fn(t)[0]) <= 3.0 * rv.std[0]
        return float(hits / posterior.times.size)

    def perturbed_degenerate_std():
        spec = problems.builtin("linear_decay")
        rng = np.random.default_rng(7)
        sol = diffeq.perturbed_solve(
            spec.to_ivp(), base_method="rk4", h=0.05, scale=0.0, ensemble_size=20, rng=rng
        )
        return float(np.max(sol.std()))

    def gauss_x2_error():
        spec = problems.builtin("gauss_x2")
        rng = np.random.default_rng(1)
        belief, _ = quad.bayesian_monte_carlo(
            spec.to_quad_problem(), 50, spec.default_kernel(), rng
        )
        return float(abs(belief.mean[0] - 1.0))

    def genz_error():
        spec = problems.builtin("genz_oscillatory_1d")
        problem = spec.to_quad_problem()
        kernel = spec.default_kernel()
        nodes = np.linspace(0.0, 1.0, 40)[:, None]
        values = problem.evaluate(nodes)
        belief = quad.bq_integrate(problem, nodes, values, kernel)
        return float(abs(belief.mean[0] - spec.reference_values()[0]))

    return [
        ("random_spd_n12", "rel_error", "<=", 1e-6, linsolve_error),
        ("random_spd_n30", "rel_residual", "<=", 1e-7, linsolve_residual),
        ("linear_decay", "abs_error_at_1", "<=", 1e-5, linear_decay_error),
        ("logistic", "max_error", "<=", 1e-4, logistic_error),
        ("logistic", "coverage_3std", ">=", 0.9, logistic_coverage),
        ("linear_decay_perturbed", "scale0_ensemble_std", "<=", 0.0, perturbed_degenerate_std),
        ("gauss_x2", "abs_error", "<=", 5e-2, gauss_x2_error),
        ("genz_oscillatory_1d", "abs_error", "<=", 1e-2, genz_error),
    ]


_SUITES = {"smoke": _bench_rows_smoke}


def cmd_bench(args, command: list[str]) -> int:
    started = time.perf_counter()
    if not args.suite:
        raise _UsageError("suite name must not be empty")
    try:
        rows_factory = _SUITES[args.suite]
    except KeyError:
        raise _UsageError(
            f"unknown suite {args.suite!r}; available: {', '.join(sorted(_SUITES))}"
        ) from None
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text())

    records = []
    failures = []
    for problem, metric, comparison, threshold, runner in rows_factory():
        threshold = float(overrides.get(f"{problem}.{metric}", threshold))
        value = float(runner())
        passed = value <= threshold if comparison == "<=" else value >= threshold
        records.append(
            {
                "problem": problem,
                "metric": metric,
                "value": value,
                "threshold": threshold,
                "comparison": comparison,
                "passed": passed,
            }
        )
        if not passed:
            failures.append(f"{problem}.{metric}: {value:.6g} !{comparison} {threshold:.6g}")

    buffer = io.StringIO()
    writer = csv.DictWriter(
        buffer, fieldnames=["problem", "metric", "value", "threshold", "comparison", "passed"]
    )
    writer.writeheader()
    for record in records:
        writer.writerow(record)
    csv_text = buffer.getvalue()

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "summary.csv").write_text(csv_text)
        report = _report(command, args.seed, {"rows": records}, {"suite": args.suite}, started)
        (out_dir / "report.json").write_text(json.dumps(report, sort_keys=True) + "\n")
    else:
        sys.stdout.write(csv_text)

    if failures:
        print("benchmark gate failures:", file=sys.stderr)
        for line in failures:
            print(f"  {line}", file=sys.stderr)
        return EXIT_GATE_FAILURE
    return EXIT_OK


# --- entry point ------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="pnkit", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_lin = sub.add_parser("linsolve", help="probabilistic linear solver")
    p_lin.add_argument("problem", help="path, '-', builtin name, or random_spd(...)")
    p_lin.add_argument("--rtol", type=float, default=1e-8)
    p_lin.add_argument("--atol", type=float, default=1e-10)
    p_lin.add_argument("--maxiter", type=int, default=None)
    p_lin.add_argument("--seed", type=int, default=0)
    p_lin.add_argument("--out", default=None)
    p_lin.set_defaults(func=cmd_linsolve)

    p_ode = sub.add_parser("odesolve", help="probabilistic ODE solvers")
    p_ode.add_argument("problem")
    p_ode.add_argument("--q", type=int, default=2)
    p_ode.add_argument("--method", choices=["ek0", "ek1", "perturbed"], default="ek1")
    p_ode.add_argument("--rtol", type=float, default=1e-6)
    p_ode.add_argument("--atol", type=float, default=1e-8)
    p_ode.add_argument("--grid", type=int, default=None, help="number of fixed uniform steps")
    p_ode.add_argument("--seed", type=int, default=0)
    p_ode.add_argument("--eval", default=None, help="comma-separated evaluation times")
    p_ode.add_argument("--scale", type=float, default=1.0, help="perturbation scale")
    p_ode.add_argument("--ensemble", type=int, default=100)
    p_ode.add_argument("--h", type=float, default=0.05, help="perturbed nominal step")
    p_ode.add_argument("--base-method", choices=["euler", "rk4"], default="rk4")
    p_ode.add_argument("--out", default=None)
    p_ode.set_defaults(func=cmd_odesolve)

    p_quad = sub.add_parser("quad", help="Bayesian quadrature")
    p_quad.add_argument("problem")
    p_quad.add_argument("--n-nodes", type=int, default=None)
    p_quad.add_argument("--nodes-file", default=None)
    p_quad.add_argument("--seed", type=int, default=0)
    p_quad.add_argument("--optimize-lengthscale", action="store_true")
    p_quad.add_argument("--out", default=None)
    p_quad.set_defaults(func=cmd_quad)

    p_bench = sub.add_parser("bench", help="benchmark suite with tolerance gates")
    p_bench.add_argument("suite", help="suite name (e.g. smoke)")
    p_bench.add_argument("--out", default=None, help="output directory")
    p_bench.add_argument("--config", default=None, help="JSON threshold overrides")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ProblemFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except SolverFailure as exc:
        reached = f" (last time reached: {exc.t_reached})" if exc.t_reached is not None else ""
        print(f"solver failure: {exc}{reached}", file=sys.stderr)
        return EXIT_FAILURE
    except (NumericalError, ResourceLimitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
