"""Command line entry point ``contraction-lab``.

Exit codes: 0 success, 2 bad configuration or arguments, 3 numerical
failure, 4 a requested check did not pass.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bounds as bd
from .dynamics import IntegrationError, VectorField, integrate
from .experiment import ExperimentConfig, emit_bound_overlay, lp_bound_columns, run_experiment
from .linexp import LinExpParams, sat
from .lp import (LpProblem, box_lp, check_hurwitz, conjecture_probe, jacobian_f_lp,
                 lp_vector_field, solve_lp_by_integration)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("contraction_lab")


class ConfigError(ValueError):
    pass


def parse_t_grid(spec: str) -> np.ndarray:
    """``start:stop:step`` -> grid including ``stop`` when it is a whole number of steps."""
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad --t-grid {spec!r}; expected start:stop:step") from exc
    if step <= 0 or stop < start or start < 0:
        raise ConfigError(f"bad --t-grid {spec!r}")
    n = int(np.floor((stop - start) / step + 1e-9))
    return start + step * np.arange(n + 1)


def _load_json(arg: str):
    text = arg.strip()
    if text.startswith("{") or text.startswith("["):
        return json.loads(text)
    with open(arg) as fh:
        return json.load(fh)


def _write_csv_rows(header, rows, fh) -> None:
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _open_out(args, name: str):
    if args.out is None:
        return sys.stdout, False
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return open(out / name, "w", newline=""), True


def _emit_json(args, name: str, payload) -> None:
    fh, close = _open_out(args, name)
    json.dump(payload, fh, indent=1)
    fh.write("\n")
    if close:
        fh.close()


def _emit_table(args, name: str, header, rows) -> None:
    fh, close = _open_out(args, name)
    _write_csv_rows(header, rows, fh)
    if close:
        fh.close()


def cmd_linexp_eval(args) -> int:
    p = _load_json(args.params)
    params = LinExpParams(p["q"], p["c_lin"], p["c_exp"], p["t_c"])
    t = parse_t_grid(args.t_grid)
    _emit_table(args, "linexp.csv", ["t", "value"], zip(t, params(t)))
    return EXIT_OK


def cmd_bound(args) -> int:
    data = _load_json(args.profile)
    profile = bd.ContractionProfile.from_json(data)
    t = parse_t_grid(args.t_grid)
    mode = args.mode
    if mode == "same":
        env = bd.same_norm_bound(profile, args.dist0)
    elif mode == "diff":
        if args.rho is None:
            if args.dist0 > profile.r:
                rho, env = bd.best_rho(profile, args.dist0)
                log.info("using grid-optimal rho=%.2f", rho)
            else:
                env = bd.diff_norm_bound(profile, args.dist0, 0.5)
        else:
            env = bd.diff_norm_bound(profile, args.dist0, args.rho)
    elif mode == "gB":
        if args.rho is None:
            raise ConfigError("--mode gB needs --rho")
        env = lambda s: bd.piecewise_bound_gB(s, profile, args.dist0, args.rho)  # noqa: E731
    else:
        L_u = args.L_u if args.L_u is not None else data.get("L_u")
        u_max = args.u_max if args.u_max is not None else data.get("u_max")
        if L_u is None or u_max is None:
            raise ConfigError("--mode iss needs L_u and u_max (flags or profile keys)")
        env = bd.iss_envelope(bd.IssProfile(profile, float(L_u), float(u_max)), args.dist0)
    if not profile.certified:
        log.warning("equivalence coefficients are sampled estimates; bound is not certified")
    _emit_table(args, f"bound_{mode}.csv", ["t", "bound"], zip(t, np.asarray(env(t))))
    return EXIT_OK


def _builtin_field(name: str, dim: int) -> VectorField:
    if name == "decay":
        return VectorField(dim, lambda t, x: -x, lambda t, x: -np.eye(dim), vectorized=True,
                           name="decay")
    if name == "saturated":
        return VectorField(dim, lambda t, x: -sat(x, 1.0), vectorized=True, name="saturated")
    if name == "box-lp":
        return lp_vector_field(box_lp())
    raise ConfigError(f"unknown builtin field {name!r} (decay, saturated, box-lp)")


def _parse_field(spec: str, dim: int) -> VectorField:
    kind, _, rest = spec.partition(":")
    if kind == "lp":
        return lp_vector_field(LpProblem.load(rest))
    if kind == "builtin":
        return _builtin_field(rest, dim)
    return _builtin_field(spec, dim)


def cmd_simulate(args) -> int:
    x0 = np.array([float(v) for v in args.x0.split(",")])
    vf = _parse_field(args.field, len(x0))
    traj = integrate(vf, x0, args.t_end, args.dt, args.scheme, args.stride)
    fh, close = _open_out(args, "trajectory.csv")
    traj.to_csv(fh)
    if close:
        fh.close()
    return EXIT_OK


def _problem(args) -> LpProblem:
    if args.problem in (None, "box3"):
        return box_lp(args.gamma)
    prob = LpProblem.load(args.problem)
    return prob


def cmd_lp(args) -> int:
    prob = _problem(args)
    action = args.action
    if action == "solve":
        sol = solve_lp_by_integration(prob, dt=args.dt, t_end=args.t_end, tol=args.tol)
        _emit_json(args, "solve.json", {
            "z_final": sol.z_final.tolist(), "x": sol.x.tolist(), "converged": sol.converged,
            "residual": sol.residual, "kkt": sol.kkt.as_dict(),
        })
        return EXIT_OK if sol.converged else EXIT_VERIFY
    if action == "check-hurwitz":
        if args.z is not None:
            z = np.array([float(v) for v in args.z.split(",")])
        else:
            sol = solve_lp_by_integration(prob, dt=args.dt, t_end=args.t_end, tol=args.tol)
            z = sol.z_final
        J, kinks = jacobian_f_lp(z, prob)
        hr = check_hurwitz(J)
        _emit_json(args, "hurwitz.json", {"z": z.tolist(), "alpha": hr.alpha,
                                          "hurwitz": hr.hurwitz, "kinks": kinks.tolist()})
        return EXIT_OK if hr.hurwitz else EXIT_VERIFY
    if action == "probe":
        records = conjecture_probe(args.seed, args.count)
        decided = [r for r in records if not r.inconclusive]
        agree = sum(bool(r.agree) for r in decided)
        _emit_json(args, "probe.json", {
            "records": [r.as_dict() for r in records],
            "n_decided": len(decided),
            "agreement_fraction": agree / len(decided) if decided else None,
        })
        return EXIT_OK
    # experiment on the given problem with command-line settings
    config = ExperimentConfig(seed=args.seed, problem=prob, gamma=prob.gamma, dt=args.dt,
                              t_end=args.t_end, n_trajectories=args.n_trajectories)
    return _run_and_report(config, args)


def _run_and_report(config: ExperimentConfig, args) -> int:
    result = run_experiment(config, out_dir=args.out)
    if args.out is not None and result.hurwitz:
        try:
            cols = lp_bound_columns(result, config.resolve_problem())
        except ValueError as exc:
            log.warning("no bound overlay: %s", exc)
        else:
            with open(Path(args.out) / "overlay.csv", "w", newline="") as fh:
                emit_bound_overlay(result.times, result.distances, cols, fh)
    msg = (f"{int(result.converged.sum())}/{len(result.converged)} trajectories within "
           f"{config.tol:g} of z_star; alpha(DF_LP(z_star)) = {result.alpha:.6g}")
    print(msg, file=sys.stderr)
    if args.out is None:
        json.dump(result.summary(), sys.stdout)
        sys.stdout.write("\n")
    return EXIT_OK if result.all_converged else EXIT_VERIFY


def cmd_experiment(args) -> int:
    data = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        data["seed"] = args.seed
    config = ExperimentConfig.from_json(data)
    return _run_and_report(config, args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contraction-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (default: stdout)")
        return p

    p = common(sub.add_parser("linexp-eval", help="evaluate a linear-exponential function"))
    p.add_argument("--params", required=True, help="JSON file or inline JSON {q, c_lin, c_exp, t_c}")
    p.add_argument("--t-grid", required=True, help="start:stop:step")
    p.set_defaults(func=cmd_linexp_eval)

    p = common(sub.add_parser("bound", help="evaluate a convergence envelope"))
    p.add_argument("--mode", choices=("same", "diff", "iss", "gB"), required=True)
    p.add_argument("--profile", required=True, help="JSON file or inline JSON")
    p.add_argument("--dist0", type=float, required=True)
    p.add_argument("--rho", type=float)
    p.add_argument("--L-u", dest="L_u", type=float)
    p.add_argument("--u-max", dest="u_max", type=float)
    p.add_argument("--t-grid", required=True)
    p.set_defaults(func=cmd_bound)

    p = common(sub.add_parser("simulate", help="integrate a vector field"))
    p.add_argument("--field", required=True, help="builtin:<decay|saturated|box-lp> or lp:<file.json>")
    p.add_argument("--x0", required=True, help="comma-separated initial state; write --x0=-1,2 for negative entries")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--scheme", choices=("euler", "rk4"), default="euler")
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("lp", help="primal-dual LP dynamics"))
    p.add_argument("action", choices=("solve", "experiment", "probe", "check-hurwitz"))
    p.add_argument("--problem", help="LP JSON {c, A, b, gamma}; default: the cube LP")
    p.add_argument("--gamma", type=float, default=0.5, help="gamma for the builtin problem")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=40.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--z", help="comma-separated state for check-hurwitz (--z=... form for negative entries)")
    p.add_argument("--n-trajectories", type=int, default=150)
    p.set_defaults(func=cmd_lp)

    p = common(sub.add_parser("experiment", help="seeded ensemble run from a config file"))
    p.add_argument("--config", help="experiment JSON; defaults reproduce the cube-LP run")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, KeyError, TypeError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
