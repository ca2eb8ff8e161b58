"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 a verify check failed.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import MetrologyError, NumericalError, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="floquet-metrology", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_args(sp):
        sp.add_argument("config", help="scenario YAML file or the name of a bundled scenario")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. control.omega=1000 (repeatable)")
        sp.add_argument("--out", default=None, help="directory for CSV, JSON report and plotting script")

    sp = sub.add_parser("sweep-time", help="QFI against probe time")
    scenario_args(sp)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--no-residual", action="store_true", help="skip optimality residuals")

    sp = sub.add_parser("sweep-n", help="QFI against chain length")
    scenario_args(sp)
    sp.add_argument("--workers", type=int, default=None)

    sp = sub.add_parser("optimize", help="optimize restricted control coefficients")
    scenario_args(sp)

    sp = sub.add_parser("afm", help="print the amplitude-matching drive frequency")
    sp.add_argument("--system", choices=("qubit", "chain"), default="qubit")
    sp.add_argument("--c", type=_floats, default=[10.0] * 5, help="first-family amplitudes for harmonics 1, 2, ...")
    sp.add_argument("--c-tilde", type=_floats, default=None, help="second-family amplitudes (default: same)")
    sp.add_argument("-L", "--harmonics", type=int, default=None,
                    help="repeat a single amplitude over harmonics 1..L")
    sp.add_argument("--Delta", type=float, default=1.0)
    sp.add_argument("--exact", action="store_true", help="sum the matching series with rational arithmetic")

    sp = sub.add_parser("verify", help="run the oracle-equivalence checks")
    sp.add_argument("--n-max", type=int, default=6, help="largest site count used by the checks")
    sp.add_argument("--dense-limit", type=int, default=None)
    sp.add_argument("--pairs", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mutate", choices=("none", "flip-commutator-sign"), default="none",
                    help=argparse.SUPPRESS)

    sp = sub.add_parser("scenarios", help="list bundled scenarios")
    return p


def _expand(values, L):
    if L is None:
        return values
    if len(values) != 1:
        raise ValidationError("-L repeats a single amplitude; pass one value")
    return values * L


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        dump = getattr(exc, "dump", None)
        if dump:
            print(f"state: {dump}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MetrologyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def _dispatch(args) -> int:
    from . import config, runner

    if args.command == "afm":
        from .floquet import afm_frequency_chain, afm_frequency_qubit
        c = _expand(args.c, args.harmonics)
        ct = c if args.c_tilde is None else _expand(args.c_tilde, args.harmonics)
        if args.system == "qubit":
            omega = afm_frequency_qubit(c, [-1j * x for x in ct], args.Delta, exact=args.exact)
        else:
            omega = afm_frequency_chain(c, ct, args.Delta, exact=args.exact)
        print(f"omega = {omega:.6f}")
        return EXIT_OK

    if args.command == "verify":
        from .floquet import effective_hamiltonian
        from .pauli import DENSE_LIMIT
        effective = None
        if args.mutate == "flip-commutator-sign":
            def effective(h, d):
                return effective_hamiltonian(h, d, sign=-1)
        checks = runner.run_verify(effective, n_max=args.n_max, dense_limit=args.dense_limit or DENSE_LIMIT,
                                   fuzz_pairs=args.pairs, seed=args.seed)
        print(runner.format_checks(checks))
        return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY

    if args.command == "scenarios":
        for name, text in sorted(config.bundled_scenarios().items()):
            sc = config.parse_scenario(text)
            flag = " [long-running]" if sc.long_running else ""
            print(f"{name}{flag}: {sc.description}")
        return EXIT_OK

    sc = config.load_scenario(args.config, args.overrides)
    if args.command == "sweep-time":
        report = runner.run_sweep_time(sc, args.workers, want_residual=not args.no_residual)
    elif args.command == "sweep-n":
        report = runner.run_sweep_n(sc, args.workers)
    else:
        report = runner.run_optimize(sc)
    print(report.table())
    if args.out:
        for p in report.write(args.out):
            print(f"wrote {p}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
