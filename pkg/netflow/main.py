import argparse
import sys

from . import __version__
from .commander import Commander
from .commands import build_commands
from .config import ConfigError, log_levels, resolve_threads
from .notification import install
from .output import ConsoleOutput, create_style


def argument_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netflow",
        description="Transport flows on directed metric graphs and Trotter-Kato experiments.",
    )
    parser.add_argument("--version", action="version", version=f"netflow {__version__}")
    parser.add_argument("--threads", type=int, help="worker threads (NETFLOW_THREADS overrides)")
    parser.add_argument("--loglevel", choices=log_levels, default="WARNING")
    parser.add_argument("--fg", help="foreground color, web name or hex")
    parser.add_argument("--bg", help="background color, web name or hex")
    parser.add_argument("words", nargs=argparse.REMAINDER, help="command and its arguments")
    return parser


def main(argv=None, output=None) -> int:
    args = argument_parser().parse_args(argv)
    if output is None:
        output = ConsoleOutput(create_style(args.fg, args.bg))
    install(output, args.loglevel)
    try:
        threads = resolve_threads(args.threads)
    except ConfigError as e:
        output(f"Error {e}")
        return 1
    commander = Commander(build_commands(output, threads), output)
    return commander(args.words)


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
