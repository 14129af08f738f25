#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Command Line
Argument parsing, configuration defaults and the exit-code contract
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from config.config import get_config

from ..models.errors import (
    CapExceeded,
    DSetNotSeparating,
    InfluenceOnObservationOrReward,
    ModelFormatError,
    ModelValidationError,
    UnreachableHistory,
    ZeroEvidence,
)
from ..utils.export_manager import ExportManager
from ..utils.logger import setup_logging
from .commands import COMMANDS, DOMAINS, EXIT_CAP, EXIT_FAILED, EXIT_USAGE

logger = logging.getLogger(__name__)

EPILOG = "exit codes: 0 pass, 1 check failed, 2 usage, 3 resource cap"


def build_parser(config=None) -> argparse.ArgumentParser:
    """Parser whose numeric defaults come from the configuration class"""
    config = config or get_config()
    engine = config.engine_settings()
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_argument_group('model source')
    source.add_argument('--model', help='model document (JSON)')
    source.add_argument('--domain', choices=DOMAINS, help='built-in domain instead of a model file')
    source.add_argument('--seed', type=int, default=0, help='seed for the random domain')
    source.add_argument('--agent', type=int, default=None, help='protagonist agent index')
    source.add_argument('--horizon', type=int, default=None, help='horizon override')
    source.add_argument('--proxy', action='store_true',
                        help='route foreign observation and reward parents through proxy factors')

    numeric = common.add_argument_group('numerics')
    numeric.add_argument('--tol', type=float, default=engine['derived_tolerance'],
                         help='tolerance for derived quantities and d-set checks')
    numeric.add_argument('--exact-tol', type=float, default=engine['exact_tolerance'],
                         help='tolerance for exact identities')
    numeric.add_argument('--tie-tol', type=float, default=engine['tie_tolerance'],
                         help='Q-value gap within which the lowest action index wins')
    numeric.add_argument('--cap-aohs', type=int, default=engine['cap_aohs'])
    numeric.add_argument('--cap-trajs', type=int, default=engine['cap_trajectories'])
    numeric.add_argument('--force', action='store_true', help='build even when the d-set is not separating')
    numeric.add_argument('--jobs', type=int, default=engine['jobs'])

    output = common.add_argument_group('output')
    output.add_argument('--format', choices=('human', 'table', 'json'), default=config.REPORT_FORMAT)
    output.add_argument('--out', help='output file (gen: model document; otherwise the report)')
    output.add_argument('--log-level', default=None, help='override LOG_LEVEL')

    parser = argparse.ArgumentParser(
        prog='influence-toolkit',
        description='Influence-based abstraction on factored POSGs',
        epilog=EPILOG,
    )
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('validate', parents=[common], help='check model, policies and local form')
    sub.add_parser('gen', parents=[common], help='write a built-in domain as a model document')
    solve = sub.add_parser('solve', parents=[common], help='solve GFBRM and/or IALM exactly')
    solve.add_argument('--which', choices=('gfbrm', 'ialm', 'both'), default='both')
    solve.add_argument('--tree', action='store_true', help='include the full value tree')
    influence = sub.add_parser('influence', parents=[common], help='dump the influence point')
    influence.add_argument('--stage', type=int, default=None)
    sub.add_parser('verify', parents=[common], help='check value equivalence and the lemmas')
    sub.add_parser('stats', parents=[common], help='reachable sizes of both models per stage')
    dsep = sub.add_parser('dsep', parents=[common], help='d-separation verdict per stage')
    dsep.add_argument('--stage', type=int, default=None)
    query = sub.add_parser('query', parents=[common], help='exact inference on the unrolled network')
    query.add_argument('--target', action='append', default=[], help='x:<factor>:<t>, a:<agent>:<t>, o:<agent>:<t>')
    query.add_argument('--evidence', action='append', default=[], help='<node>=<value>')
    return parser


def _emit(text: str, out: Optional[str]):
    if out:
        with open(out, 'w', encoding='utf-8') as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def run(args, config=None) -> int:
    """Dispatch one parsed command line; returns the exit code"""
    config = config or get_config()
    try:
        outcome = COMMANDS[args.command](args)
    except CapExceeded as exc:
        print(f"error: {exc} (raise --cap-{'aohs' if exc.kind == 'aohs' else 'trajs'} to continue)",
              file=sys.stderr)
        return EXIT_CAP
    except (DSetNotSeparating, InfluenceOnObservationOrReward, UnreachableHistory) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ModelValidationError as exc:
        for violation in exc.violations:
            print(f"invalid model: {violation}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelFormatError, ZeroEvidence, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if outcome.text is not None:
        sys.stdout.write(outcome.text)
    elif outcome.report is not None:
        text = ExportManager.render(outcome.report, args.format, config.REPORT_VERSION)
        _emit(text, args.out if args.command != 'gen' else None)
    logger.debug("%s finished with exit code %d", args.command, outcome.code)
    return outcome.code


def main(argv: Optional[Sequence[str]] = None) -> int:
    config = get_config()
    parser = build_parser(config)
    args = parser.parse_args(argv)
    setup_logging(config, args.log_level)
    return run(args, config)


if __name__ == '__main__':
    sys.exit(main())
