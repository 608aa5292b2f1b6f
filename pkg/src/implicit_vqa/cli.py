"""Command-line entry point.

Exit codes: 0 on success, 1 on usage errors (and failed self-tests), 2 when
an iterative solver did not converge. Settings may come from an INI file
(``--config``); values given on the command line take precedence.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
import warnings

import numpy as np

from .implicit import LinearSolveConfig
from .optim import ConvergenceError, GDConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGED = 2

# per-command defaults; None in the parser means "not given on the command line"
DEFAULTS = {
    "susceptibility": {
        "n": 5, "layers": 5, "gamma": 1.0, "delta": 1e-3, "a_min": -1.0, "a_max": 1.0, "a_steps": 21,
        "inner_lr": 0.1, "inner_tol": 1e-8, "inner_max_iter": 20000,
    },
    "hyperopt": {
        "layers": 5, "n_train": 200, "n_val": 100, "outer_steps": 30, "outer_lr": 0.01, "init_penalty": 0.01,
        "inner_lr": 0.5, "inner_tol": 1e-8, "inner_max_iter": 20000,
    },
    "entanglement": {
        "n": 2, "layers": 1, "outer_steps": 2000, "outer_lr": 0.001,
        "inner_lr": 1.0, "inner_tol": 1e-9, "inner_max_iter": 1000,
    },
    "selftest": {},
}
COMMON = {"solver": "gmres", "damping": 1e-6, "seed": 0, "format": "json", "out": None}

_TYPES = {
    "n": int, "layers": int, "a_steps": int, "outer_steps": int, "seed": int, "inner_max_iter": int,
    "n_train": int, "n_val": int, "solver": str, "format": str, "out": str,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="implicit-vqa", description="Implicit differentiation experiments for variational circuits.")
    parser.add_argument("--config", help="INI file with a [defaults] and/or per-command section")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--solver", choices=("direct", "cg", "gmres", "neumann"))
        p.add_argument("--damping", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file (stdout if omitted)")
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--inner-lr", type=float)
        p.add_argument("--inner-tol", type=float)
        p.add_argument("--inner-max-iter", type=int)

    p = sub.add_parser("susceptibility", help="susceptibility sweep of the spin chain")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--a-min", type=float)
    p.add_argument("--a-max", type=float)
    p.add_argument("--a-steps", type=int)

    p = sub.add_parser("hyperopt", help="per-layer regularization search for the classifier")
    common(p)
    p.add_argument("--layers", type=int)
    p.add_argument("--outer-lr", type=float)
    p.add_argument("--outer-steps", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-val", type=int)
    p.add_argument("--init-penalty", type=float)

    p = sub.add_parser("entanglement", help="maximize geometric entanglement")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--layers", type=int, help="entangler layers")
    p.add_argument("--outer-lr", type=float)
    p.add_argument("--outer-steps", type=int)

    sub.add_parser("selftest", help="quick numerical sanity checks")
    return parser


def _read_config(path: str, command: str) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path!r}")
    values = {}
    for section in ("defaults", command):
        if cp.has_section(section):
            for key, raw in cp.items(section):
                values[key.replace("-", "_")] = raw
    return values


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and command-line flags (highest priority)."""
    known = {**COMMON, **DEFAULTS[args.command]}
    settings = dict(known)
    if args.config:
        for key, raw in _read_config(args.config, args.command).items():
            if key not in known:
                raise UsageError(f"unknown key {key!r} in config for {args.command}")
            try:
                settings[key] = _TYPES.get(key, float)(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {key!r}: {raw!r}") from exc
    for key in known:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _emit(result, settings) -> None:
    from .experiments import emit_results, render

    if settings["out"]:
        emit_results(result, settings["out"], settings["format"])
    else:
        sys.stdout.write(render(result, settings["format"]))


def _configs(s) -> tuple[GDConfig, LinearSolveConfig]:
    inner = GDConfig(learning_rate=s["inner_lr"], max_iter=s["inner_max_iter"], tol=s["inner_tol"], seed=s["seed"])
    return inner, LinearSolveConfig(method=s["solver"], damping=s["damping"])


def run_command(command: str, s: dict) -> int:
    if command == "selftest":
        return selftest()
    inner, cfg = _configs(s)
    if command == "susceptibility":
        from .experiments import run_susceptibility

        if s["a_steps"] < 0:
            raise UsageError("--a-steps must be non-negative")
        grid = np.linspace(s["a_min"], s["a_max"], s["a_steps"])
        result = run_susceptibility(s["n"], s["layers"], s["gamma"], s["delta"], grid, inner, cfg, s["seed"])
        _emit(result, s)
        return EXIT_OK if bool(np.all(result.converged)) else EXIT_NONCONVERGED
    if command == "hyperopt":
        from .experiments.hyperopt import run_hyperopt

        result = run_hyperopt(s["layers"], s["n_train"], s["n_val"], s["outer_steps"], inner, s["outer_lr"],
                              s["seed"], cfg=cfg, init_penalty=s["init_penalty"])
        _emit(result, s)
        return EXIT_OK
    from .experiments.entanglement import run_entanglement

    result = run_entanglement(s["n"], s["layers"], s["outer_steps"], inner, s["outer_lr"], s["seed"], cfg=cfg)
    _emit(result, s)
    return EXIT_OK if all(step.inner_converged for step in result.outer_steps) else EXIT_NONCONVERGED


def selftest() -> int:
    """Fast checks of the simulator, shift rule, implicit solver and oracles; prints one line each."""
    from . import oracle
    from .circuits import two_design_ansatz
    from .diff import energy, fd_grad, grad_z
    from .implicit import OptimalityProblem, implicit_jacobian
    from .observables import build_spin_chain
    from .statevec import StateVector

    rng = np.random.default_rng(0)
    H = build_spin_chain(3)
    field = energy(two_design_ansatz(3, 1), H)
    z = rng.uniform(0, 2 * np.pi, field.dim_z)
    a = np.array([0.3])
    shift_err = np.max(np.abs(grad_z(field, z, a) - fd_grad(lambda x: field(x, a), z)))
    sqrt_map = OptimalityProblem(f=lambda z, a: z**2 - a, dim_z=1, dim_a=1)
    jac = implicit_jacobian(sqrt_map, [2.0], [4.0], LinearSolveConfig(method="direct", damping=0.0))[0, 0]
    bell = StateVector(2, np.array([1, 0, 0, 1]) / np.sqrt(2))
    checks = [
        ("shift rule matches finite differences", shift_err < 1e-6),
        ("implicit derivative of sqrt(a) at a=4", abs(jac - 0.25) < 1e-10),
        ("Bell-state geometric entanglement", abs(oracle.entanglement_brute(bell, restarts=8) - 0.5) < 1e-3),
    ]
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_USAGE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        settings = resolve(args)
        return run_command(args.command, settings)
    except UsageError as exc:
        print(f"implicit-vqa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"implicit-vqa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"implicit-vqa: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
