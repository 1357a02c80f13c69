import argparse
import logging

import numpy as np

from . import __version__
from .config import (
    DEFAULT_CELLS,
    DEFAULT_TIMES,
    FAMILIES,
    parse_lambda_pair,
    parse_lambdas,
    parse_times,
    run_config,
)
from .errors import NetflowError
from .files import (
    format_function,
    format_number,
    load_graph,
    read_function,
    format_report,
    validate_report,
    write_gnuplot,
)
from .flow import aligned_times, evolve, flow_system
from .function_space import DimensionError, piecewise_random, refine
from .harness import (
    RESOLVENT,
    SEMIGROUP,
    check_preconditions,
    format_lambda,
    ladder_experiment,
    tk1_resolvent_errors,
    tk1_semigroup_errors,
    tk2_limit_candidate,
    trend_agreement,
)
from .matrices import network_matrices
from .output import DENSE_EDGE_LIMIT, matrix_lines
from .resolvent import pseudoresolvent_defect, resolve


log = logging.getLogger(__name__)


class UnsupportedCommand(Exception):
    pass


class UsageError(NetflowError):
    module = "cli"


class CommandExit(Exception):
    def __init__(self, status):
        super().__init__(status)
        self.status = status


class CommandParser(argparse.ArgumentParser):
    """ argparse writing to the command output and raising instead of exiting. """

    def __init__(self, output, **kwargs):
        self.output = output
        super().__init__(**kwargs)

    def _print_message(self, message, file=None):
        if message:
            self.output(message.rstrip("\n"))

    def exit(self, status=0, message=None):
        if message:
            self.output(message.rstrip("\n"))
        raise CommandExit(status)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class Command:
    def __init__(self, name, output, sub_commands=[]) -> None:
        self.name = name
        self.output = output
        self._sub_commands = sub_commands

    def sub_commands(self):
        return self._sub_commands

    def handle(self, words=[]):
        if words:
            if words[0].lower().startswith("help"):
                self.describe()
                return 0
            raise UnsupportedCommand()
        self.describe()
        return 0

    def describe(self):
        if self.name:
            self.output(self.name.capitalize())
            self.output("".join(["-" for _ in self.name]))
        else:
            self.output("----")

        if self.sub_commands():
            for sc in self.sub_commands():
                desc = sc.__doc__ if sc.__doc__ else "..."
                self.output(f"{sc.name}: {desc.strip()}")


class ToolCommand(Command):
    """ A leaf command with its own flags. """

    def __init__(self, name, output, threads=1):
        self.threads = threads
        super().__init__(name, output)

    def parser(self) -> CommandParser:
        return CommandParser(self.output, prog=self.name, description=self.__doc__)

    def handle(self, words=[]):
        if words and words[0].lower() == "help":
            self.describe()
            return 0
        args = self.parser().parse_args(words)
        return self.run(args)

    def describe(self):
        self.parser().print_help()

    def run(self, args) -> int:
        raise NotImplementedError

    def header(self, config) -> list:
        return [f"netflow {__version__}", f"config: {config.echo()}", f"seed: {config.seed}"]


class Matrices(ToolCommand):
    """<graph-file> prints Phi-, Phi+, Phi, A and B"""

    def __init__(self, output, threads=1):
        super().__init__("matrices", output, threads)

    def parser(self):
        parser = super().parser()
        parser.add_argument("graph")
        parser.add_argument("--dense-limit", type=int, default=DENSE_EDGE_LIMIT,
                            help="largest edge count printed densely")
        return parser

    def run(self, args):
        g, _ = load_graph(args.graph)
        nm = network_matrices(g)
        dense = g.edge_count <= args.dense_limit
        for name, matrix in (
            ("Phi-", nm.phi_minus),
            ("Phi+", nm.phi_plus),
            ("Phi", nm.phi),
            ("A", nm.adjacency),
            ("B", nm.line_adjacency),
        ):
            for line in matrix_lines(name, matrix, dense):
                self.output(line)
        return 0


def _grid_function(path, cells):
    f = read_function(path)
    if cells is None or cells == f.cells:
        return f
    if cells % f.cells:
        raise DimensionError(f"--cells {cells} is not a multiple of the {f.cells} cells in {path}")
    return refine(f, cells // f.cells)


def _emit(command, out, text):
    if out:
        with open(out, "w", encoding="utf-8") as stream:
            stream.write(text)
        command.output(f"wrote {out}")
    else:
        for line in text.splitlines():
            command.output(line)


class Simulate(ToolCommand):
    """<graph-file> --initial <function-file> --t <real> evolves the flow"""

    def __init__(self, output, threads=1):
        super().__init__("simulate", output, threads)

    def parser(self):
        parser = super().parser()
        parser.add_argument("graph")
        parser.add_argument("--initial", required=True)
        parser.add_argument("--t", type=float, required=True)
        method = parser.add_mutually_exclusive_group()
        method.add_argument("--exact", dest="method", action="store_const", const="exact")
        method.add_argument("--upwind", dest="method", action="store_const", const="upwind")
        parser.add_argument("--cfl", type=float, default=1.0)
        parser.add_argument("--cells", type=int, help="defaults to the grid of the initial function")
        parser.add_argument("--out")
        return parser

    def run(self, args):
        g, velocities = load_graph(args.graph)
        f = _grid_function(args.initial, args.cells)
        config = run_config(
            subcommand=self.name, graph=args.graph, initial=args.initial, out=args.out,
            cells=f.cells, t=args.t, method=args.method, cfl=args.cfl,
        )
        sys = flow_system(g, velocities)
        result = evolve(sys, f, config.t, config.method, config.cfl)
        _emit(self, args.out, format_function(result, self.header(config)))
        return 0


class Resolvent(ToolCommand):
    """<graph-file> --lambda <re>[,<im>] --initial <function-file> applies R(lambda, A)"""

    def __init__(self, output, threads=1):
        super().__init__("resolvent", output, threads)

    def parser(self):
        parser = super().parser()
        parser.add_argument("graph")
        parser.add_argument("--lambda", dest="lam", type=parse_lambda_pair, required=True)
        parser.add_argument("--initial", required=True)
        parser.add_argument("--cells", type=int)
        parser.add_argument("--out")
        return parser

    def run(self, args):
        g, velocities = load_graph(args.graph)
        f = _grid_function(args.initial, args.cells)
        config = run_config(
            subcommand=self.name, graph=args.graph, initial=args.initial, out=args.out,
            cells=f.cells, lambdas=[args.lam],
        )
        result = resolve(flow_system(g, velocities), config.lambda_values[0], f)
        _emit(self, args.out, format_function(result, self.header(config)))
        return 0


class PseudoresolventCheck(ToolCommand):
    """<graph-file> --lambda a --mu b --trials k prints the largest resolvent-identity defect"""

    def __init__(self, output, threads=1):
        super().__init__("pseudoresolvent-check", output, threads)

    def parser(self):
        parser = super().parser()
        parser.add_argument("graph")
        parser.add_argument("--lambda", dest="lam", type=parse_lambda_pair, required=True)
        parser.add_argument("--mu", type=parse_lambda_pair, required=True)
        parser.add_argument("--trials", type=int, default=5)
        parser.add_argument("--cells", type=int, default=DEFAULT_CELLS)
        parser.add_argument("--seed", type=int, default=0)
        return parser

    def run(self, args):
        config = run_config(
            subcommand=self.name, graph=args.graph, cells=args.cells, lambdas=[args.lam],
            mu=args.mu, trials=args.trials, seed=args.seed,
        )
        g, velocities = load_graph(config.graph)
        sys = flow_system(g, velocities)
        rng = np.random.default_rng(config.seed)
        pieces = np.gcd(config.cells, 8)
        defects = [
            pseudoresolvent_defect(
                sys, config.lambda_values[0], config.mu_value,
                piecewise_random(rng, g.edge_count, config.cells, int(pieces)),
            )
            for _ in range(config.trials)
        ]
        self.output(f"max defect: {format_number(max(defects))}")
        return 0


class TkConvergence(ToolCommand):
    """--family ladder --n-max K --reference N runs both Trotter-Kato comparisons"""

    def __init__(self, output, threads=1):
        super().__init__("tk-convergence", output, threads)

    def parser(self):
        parser = super().parser()
        parser.add_argument("--family", choices=FAMILIES, default="ladder")
        parser.add_argument("--n-max", type=int, default=5)
        parser.add_argument("--reference", type=int, default=8)
        parser.add_argument("--cells", type=int, default=DEFAULT_CELLS)
        parser.add_argument("--times", type=parse_times)
        parser.add_argument("--lambdas", type=parse_lambdas)
        parser.add_argument("--seed", type=int, default=0)
        method = parser.add_mutually_exclusive_group()
        method.add_argument("--exact", dest="method", action="store_const", const="exact")
        method.add_argument("--upwind", dest="method", action="store_const", const="upwind")
        parser.add_argument("--cfl", type=float, default=1.0)
        parser.add_argument("--out")
        parser.add_argument("--gnuplot", action="store_true",
                            help="also write <out>.<kind>.<probe>.dat files")
        return parser

    def run(self, args):
        fields = dict(
            subcommand=self.name, family=args.family, n_max=args.n_max,
            reference=args.reference, cells=args.cells, seed=args.seed, out=args.out,
            method=args.method, cfl=args.cfl, threads=self.threads, gnuplot=args.gnuplot,
        )
        if args.times is None:
            fields["times"] = aligned_times(DEFAULT_TIMES, args.cells)
        else:
            fields["times"] = args.times
        if args.lambdas is not None:
            fields["lambdas"] = args.lambdas
        config = run_config(**fields)
        if config.gnuplot and not config.out:
            raise UsageError("--gnuplot needs --out")

        exp = ladder_experiment(
            config.n_max, config.reference, config.cells, config.times,
            config.lambda_values, config.seed, method=config.method, cfl=config.cfl,
        )
        norms = check_preconditions(exp)
        log.info("preconditions: %s", norms)
        report = tk1_semigroup_errors(exp, self.threads).merge(
            tk1_resolvent_errors(exp, self.threads)
        )
        text = format_report(report, self.header(config))
        _emit(self, config.out, text)
        if config.gnuplot:
            for path in write_gnuplot(config.out, report):
                self.output(f"wrote {path}")

        self.output(f"{len(report)} rows, evaluator {exp.evaluator}")
        for kind in (SEMIGROUP, RESOLVENT):
            sup = report.sup_over_params(kind)
            for n in report.indices(kind):
                worst = max(error for (m, _), error in sup.items() if m == n)
                self.output(f"{kind} n={n}: sup error {format_number(worst)}")
        for probe, rho in trend_agreement(report).items():
            self.output(f"trend agreement {probe}: {rho:.3f}")
        if len(exp.indices) >= 2 and exp.lambdas:
            candidate = tk2_limit_candidate(exp, exp.lambdas[0])
            self.output(
                f"limit candidate at lambda={format_lambda(exp.lambdas[0])}: "
                f"cauchy gap {format_number(candidate.cauchy_gap)}, "
                f"range proxy {format_number(candidate.range_density_proxy)}"
            )
        return 0


class ValidateReport(ToolCommand):
    """<report.csv> checks a convergence report"""

    def __init__(self, output, threads=1):
        super().__init__("validate-report", output, threads)

    def parser(self):
        parser = super().parser()
        parser.add_argument("report")
        return parser

    def run(self, args):
        problems = validate_report(args.report)
        for problem in problems:
            self.output(problem)
        if problems:
            return 1
        self.output(f"{args.report}: ok")
        return 0


def build_commands(output, threads=1):
    return Command(
        "netflow",
        output,
        [
            Matrices(output, threads),
            Simulate(output, threads),
            Resolvent(output, threads),
            PseudoresolventCheck(output, threads),
            TkConvergence(output, threads),
            ValidateReport(output, threads),
        ],
    )
