"""Command-line front end.

Exit codes: 0 success, 1 validation or assumption failure, 2 I/O error,
3 certificate refused (improper closed loop), 4 bound violation.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys

import numpy as np

from . import scenarios
from .certificates import (CertificateReport, ce_certificate, min_time_certificate,
                           rollout_certificate, sharpness_ratio)
from .errors import (FactorTooLargeError, ImproperPolicyError, InvalidModelError,
                     NoProperPolicyError, SSPError)
from .exact_solver import DEFAULT_TOL, value_iteration
from .io import Instance, load_instance, read_vector, scenario_from_dict, write_json
from .model import DisturbanceSsp, induce_kernel, policy_to_dict, unit_cost, validate
from .montecarlo import cross_check, estimate
from .rollout import ce_policy, greedy_policy

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_IMPROPER, EXIT_VIOLATION = 0, 1, 2, 3, 4


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_table(rows, out) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([fmt(v) for v in row])
    out.write(buf.getvalue())


def parse_int_list(text: str) -> list[int]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def parse_float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _add_source(p):
    p.add_argument("--model", help="model or scenario file (JSON)")
    p.add_argument("--scenario", choices=["sharpness", "gridworld", "random", "corridor"])
    p.add_argument("--M", type=int, default=4)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-states", type=int, default=8)
    p.add_argument("--n-actions", type=int, default=3)
    p.add_argument("--n-disturbances", type=int, default=0,
                   help="random scenario: >0 builds a disturbance-form model")
    p.add_argument("--length", type=int, default=20)
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--height", type=int, default=5)
    p.add_argument("--penalty", type=float, default=0.0)
    p.add_argument("--radius", type=int, default=0)
    p.add_argument("--value", help="approximate value function file (JSON array)")
    p.add_argument("--surrogate", choices=["builtin", "exact", "noise", "offset", "frozen"],
                   help="how to build V when --value is not given")
    p.add_argument("--noise", type=float, default=0.1, help="noise amplitude / offset amount")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--from", dest="start", type=int)


def _instance(args) -> Instance:
    if args.model:
        return load_instance(args.model)
    if not args.scenario:
        raise SystemExit("either --model or --scenario is required")
    spec = {"kind": args.scenario}
    if args.scenario == "sharpness":
        spec.update(M=args.M, eps=args.eps)
    elif args.scenario == "random":
        spec.update(seed=args.seed, n_states=args.n_states, n_actions=args.n_actions,
                    n_disturbances=args.n_disturbances)
    elif args.scenario == "corridor":
        spec.update(length=args.length)
    else:
        spec.update(width=args.width, height=args.height, collision_penalty=args.penalty,
                    arrival_radius=args.radius, target=(args.height - 1, args.width - 1),
                    obstacle_start=(args.height // 2, args.width // 2))
    return scenario_from_dict(spec)


def _kernel(model):
    return induce_kernel(model) if isinstance(model, DisturbanceSsp) else model


def _surrogate(args, inst: Instance, vstar: np.ndarray) -> np.ndarray:
    if args.value:
        return read_vector(args.value)
    kind = args.surrogate or ("builtin" if inst.V is not None else "exact")
    t = inst.model.terminal
    if kind in ("builtin", "frozen"):
        if inst.V is None:
            raise SystemExit(f"scenario {inst.label} has no built-in surrogate")
        return inst.V
    if kind == "exact":
        return vstar.copy()
    if kind == "noise":
        return scenarios.noisy_value(vstar, args.noise, t, args.noise_seed)
    V = vstar + args.noise
    V[t] = 0.0
    return V


def _exit_code(checks) -> int:
    if any(not c.passed and c.category == "bound" for c in checks):
        return EXIT_VIOLATION
    if any(not c.passed for c in checks):
        return EXIT_INVALID
    return EXIT_OK


def cmd_validate(args, out) -> int:
    try:
        inst = load_instance(args.model)
    except InvalidModelError as exc:
        violations = exc.violations
    else:
        violations = validate(inst.model)
    for v in violations:
        out.write(f"{v}\n")
    if not violations:
        out.write("valid\n")
    return EXIT_INVALID if violations else EXIT_OK


def cmd_certify(args, out) -> int:
    inst = _instance(args)
    start = inst.start if args.start is None else args.start
    lyap = None
    if args.lyapunov:
        if args.c is None:
            raise SystemExit("--lyapunov requires --c")
        lyap = (read_vector(args.lyapunov), args.c)
    if args.ce and not isinstance(inst.model, DisturbanceSsp):
        raise SystemExit("--ce needs a disturbance-form model")
    model = inst.model if args.ce else _kernel(inst.model)

    if args.min_time:
        hstar = value_iteration(_kernel(unit_cost(inst.model)), tol=args.tol).value
        V = _surrogate(args, inst, hstar)
        try:
            report = min_time_certificate(model, V, start, N=args.N, lyapunov=lyap)
        except FactorTooLargeError as exc:
            _emit(exc.report.to_dict(), args, out)
            return EXIT_INVALID
        except ImproperPolicyError:
            out.write(json.dumps({"proper": False, "start": start}) + "\n")
            return EXIT_IMPROPER
        _emit(report.to_dict(), args, out)
        return _exit_code(report.checks)

    solve = value_iteration(_kernel(inst.model), tol=args.tol)
    V = _surrogate(args, inst, solve.value)
    certify = ce_certificate if args.ce else rollout_certificate
    try:
        report = certify(model, V, start, N=args.N, lyapunov=lyap, restrict_eps=args.restrict_eps,
                         local_eps=args.local_eps, vstar=solve)
    except ImproperPolicyError as exc:
        report = exc.report
        _emit_report(report, args, out)
        return EXIT_IMPROPER
    _emit_report(report, args, out)
    return _exit_code(report.checks)


def _emit(d, args, out):
    if args.output:
        write_json(d, args.output)
    else:
        write_json(d, stream=out)


def _emit_report(report: CertificateReport, args, out):
    if args.format == "table":
        rows = [list(CertificateReport.TABLE_COLUMNS), report.table_row()]
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                write_table(rows, fh)
        else:
            write_table(rows, out)
    else:
        _emit(report.to_dict(), args, out)


def sharpness_rows(M_list, eps_list):
    header = ["M", "eps", "gap", "expected_tau", "bound", "ratio", "passed"]
    rows, ok = [header], True
    for M in M_list:
        for eps in eps_list:
            s = scenarios.sharpness_chain(M, eps)
            r = rollout_certificate(s.model, s.V, s.start)
            ratio = sharpness_ratio(r)
            passed = r.passed and 0.25 - 1e-12 <= ratio <= 2 + 1e-12
            ok &= passed
            rows.append([M, eps, r.gap, r.expected_tau, r.bound_hitting, ratio, passed])
    return rows, ok


def random_rows(seeds, noise, n_states, n_actions):
    header = ["seed", "noise", "epsilon", "gap", "expected_tau", "bound", "ratio", "status"]
    rows, ok = [header], True
    for seed in seeds:
        model = scenarios.random_proper_ssp(n_states, n_actions, seed=seed)
        solve = value_iteration(model)
        V = scenarios.noisy_value(solve.value, noise, model.terminal, seed)
        try:
            r = rollout_certificate(model, V, 0, vstar=solve)
        except ImproperPolicyError:
            rows.append([seed, noise, None, None, None, None, None, "refused"])
            continue
        ratio = r.gap / (r.epsilon * r.expected_tau) if r.epsilon > 0 else None
        status = "certified" if r.passed else "violated"
        ok &= r.passed
        rows.append([seed, noise, r.epsilon, r.gap, r.expected_tau, r.bound_hitting, ratio, status])
    return rows, ok


def cmd_sweep(args, out) -> int:
    if args.scenario == "sharpness":
        rows, ok = sharpness_rows(parse_int_list(args.M_list), parse_float_list(args.eps_list))
    else:
        rows, ok = random_rows(parse_int_list(args.seeds), args.noise, args.n_states, args.n_actions)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            write_table(rows, fh)
    else:
        write_table(rows, out)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_simulate(args, out) -> int:
    inst = _instance(args)
    start = inst.start if args.start is None else args.start
    kernel = _kernel(inst.model)
    solve = value_iteration(kernel, tol=args.tol)
    if args.policy == "optimal":
        pi = solve.greedy
    else:
        V = _surrogate(args, inst, solve.value)
        if args.policy == "ce":
            if not isinstance(inst.model, DisturbanceSsp):
                raise SystemExit("--policy ce needs a disturbance-form model")
            pi = ce_policy(inst.model, V)
        else:
            pi, _ = greedy_policy(kernel, V)
    result = {"policy": policy_to_dict(pi, inst.model), "start": start}
    code = EXIT_OK
    if args.cross_check:
        try:
            cc = cross_check(inst.model, pi, start, args.reps, args.seed_mc, args.max_steps)
        except ImproperPolicyError:
            result["proper"] = False
            _emit(result, args, out)
            return EXIT_IMPROPER
        result.update(estimate=cc.estimate.to_dict(), exact_cost=cc.exact_cost,
                      exact_tau=cc.exact_tau, cross_check_passed=cc.passed)
        code = EXIT_OK if cc.passed else EXIT_VIOLATION
    else:
        est = estimate(inst.model, pi, start, args.reps, args.seed_mc, args.max_steps)
        result["estimate"] = est.to_dict()
    _emit(result, args, out)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssprollout", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("model")

    p = sub.add_parser("certify", help="certify a rollout or CE policy")
    _add_source(p)
    p.add_argument("--ce", action="store_true", help="certainty-equivalent policy")
    p.add_argument("--N", type=float, help="claimed uniform bound on E[tau]")
    p.add_argument("--lyapunov", help="Lyapunov function file (JSON array)")
    p.add_argument("--c", type=float, help="drift constant")
    p.add_argument("--local-eps", action="store_true")
    p.add_argument("--restrict-eps", action="store_true")
    p.add_argument("--min-time", action="store_true")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--format", choices=["report", "table"], default="report")
    p.add_argument("--output")

    p = sub.add_parser("sweep", help="certify a family of instances")
    p.add_argument("--scenario", choices=["sharpness", "random"], default="sharpness")
    p.add_argument("--M-list", default="1,4,10,100")
    p.add_argument("--eps-list", default="0.1,0.01")
    p.add_argument("--seeds", default="0-99")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--n-states", type=int, default=10)
    p.add_argument("--n-actions", type=int, default=3)
    p.add_argument("--output")

    p = sub.add_parser("simulate", help="Monte Carlo estimate of a policy")
    _add_source(p)
    p.add_argument("--policy", choices=["rollout", "ce", "optimal"], default="rollout")
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed-mc", type=int, default=0, help="simulation seed")
    p.add_argument("--max-steps", type=int, default=10**6)
    p.add_argument("--cross-check", action="store_true")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--output")
    return parser


COMMANDS = {"validate": cmd_validate, "certify": cmd_certify, "sweep": cmd_sweep,
            "simulate": cmd_simulate}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO
    except (InvalidModelError, NoProperPolicyError) as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_INVALID
    except SSPError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
