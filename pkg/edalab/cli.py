"""Command-line entry point: `eda-lab <subcommand>`"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from colorama import Fore, Style, init

from . import EdaLab
from .config import (
    DEFAULT_EXPERIMENT_CONFIG,
    DEFAULT_R_CONFIG,
    DEFAULT_TERGM_CONFIG,
    all_defaults,
    dump_config,
    load_config,
)
from .network import Constraint
from .stats import Model, parse_terms
from .types import EdaLabError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED_CELLS = 2


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.replace(',', ' ').split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='eda-lab', description="EDA tergm coefficient transforms and simulations")
    parser.add_argument('--seed', type=int, default=None, help="root RNG seed (default: config seed or 0)")
    parser.add_argument('--out', default='eda-out', help="output directory")
    parser.add_argument('--workers', type=int, default=1, help="parallel worker processes")
    parser.add_argument('--verbose', '-v', action='store_true', help="debug logging")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('transform', help="formation/dissolution coefficients for one dyad")
    p.add_argument('--theta', type=float, required=True)
    p.add_argument('--duration', type=float, required=True)
    p.add_argument('--variant', choices=['old', 'new', 'exact'], default='new')

    p = sub.add_parser('error-table', help="closed-form relative errors over p")
    p.add_argument('--duration', type=float, required=True)

    p = sub.add_parser('simulate-tergm', help="simulate a discrete-time EDA tergm")
    p.add_argument('--config', required=True)

    p = sub.add_parser('simulate-r', help="simulate the infinitesimal-time chain R")
    p.add_argument('--config', required=True)

    p = sub.add_parser('oracle', help="exact report on a small state space")
    p.add_argument('--model', required=True, help="model file")
    p.add_argument('--nodes', type=int, required=True)
    p.add_argument('--constraint', default='none')
    p.add_argument('--lambdas', type=_floats, default=[16.0, 32.0, 64.0, 128.0])
    p.add_argument('--duration-base', type=float, default=1.0)
    p.add_argument('--report', default='report.json', help="report file name inside the output directory")
    p.add_argument('--out', dest='out_file', default=None, help="report path (*.json) or output directory")

    p = sub.add_parser('calibrate', help="coefficients matching target statistics")
    p.add_argument('--terms', required=True, help="e.g. 'edges + degree(1)'")
    p.add_argument('--targets', type=_floats, required=True)
    p.add_argument('--nodes', type=int, required=True)
    p.add_argument('--exact', action='store_true', help="Newton on the enumerated state space (n <= 6)")
    p.add_argument('--constraint', default='none')
    p.add_argument('--budget', type=int, default=400)
    p.add_argument('--out', dest='out_file', default=None, help="coefficient path (*.json) or output directory")

    p = sub.add_parser('experiment', help="run a grid experiment")
    p.add_argument('--config', default=None)
    p.add_argument('--full-scale', action='store_true', help="1000 nodes and unscaled targets")

    p = sub.add_parser('config', help="show configuration defaults")
    p.add_argument('--print-defaults', action='store_true')
    return parser


def _success(message: str) -> None:
    print(f"{Fore.GREEN}✓ {message}{Style.RESET_ALL}")


def resolve_output(out_dir: str, out_file: Optional[str], default_name: str) -> Tuple[str, str]:
    """
    Split a subcommand `--out` into (directory, file name)

    A value ending in `.json` names the file and its parent is the directory;
    any other value is a directory. Without a value the global `--out` is used.
    """
    if out_file is None:
        return out_dir, default_name
    path = Path(out_file)
    if path.suffix == '.json':
        return str(path.parent), path.name
    return str(path), default_name


def _run(args: argparse.Namespace) -> int:
    if args.command == 'config':
        print(dump_config(all_defaults()))
        return EXIT_OK

    out_dir, filename = args.out, None
    if args.command == 'oracle':
        out_dir, filename = resolve_output(args.out, args.out_file, args.report)
    elif args.command == 'calibrate':
        out_dir, filename = resolve_output(args.out, args.out_file, 'coefs.json')

    seed = args.seed if args.seed is not None else 0
    with EdaLab(seed=seed, out_dir=out_dir, workers=args.workers) as lab:
        if args.command == 'transform':
            print(json.dumps(lab.transforms.transform(args.theta, args.duration, args.variant), indent=2))
        elif args.command == 'error-table':
            _success(f"Error table written to {lab.transforms.write_error_table(args.duration)}")
        elif args.command == 'simulate-tergm':
            summary = lab.tergm.run_config(load_config(args.config, DEFAULT_TERGM_CONFIG))
            print(json.dumps(summary['statistics'], indent=2))
            _success(f"Simulation written to {args.out}")
        elif args.command == 'simulate-r':
            summary = lab.rchain.run_config(load_config(args.config, DEFAULT_R_CONFIG))
            print(json.dumps(summary['statistics'], indent=2))
            _success(f"Simulation written to {args.out} (lam={summary['lambda']['lam']:.6g})")
        elif args.command == 'oracle':
            report = lab.oracle.report(
                Model.load(args.model), args.nodes, Constraint.parse(args.constraint),
                args.lambdas, {1: args.duration_base}, filename,
            )
            if report['asymptotics'] is not None:
                print(json.dumps(report['asymptotics']['slopes'], indent=2))
            _success(f"Report over {report['states']} states written")
        elif args.command == 'calibrate':
            terms = parse_terms(args.terms)
            if args.exact:
                result = lab.calibrate.exact(terms, args.targets, args.nodes, Constraint.parse(args.constraint))
            else:
                result = lab.calibrate.stochastic(
                    terms, args.targets, args.nodes, args.budget,
                    constraint=Constraint.parse(args.constraint),
                )
            _success(f"Coefficients written to {lab.calibrate.write(result, filename)}")
        elif args.command == 'experiment':
            config = load_config(args.config, DEFAULT_EXPERIMENT_CONFIG) if args.config else dict(DEFAULT_EXPERIMENT_CONFIG)
            if args.full_scale:
                config['full_scale'] = True
            result = lab.experiments.run(config, args.seed)
            if result.failed:
                print(f"{Fore.YELLOW}{len(result.failed)} of {len(result.cells)} cells failed{Style.RESET_ALL}")
                return EXIT_FAILED_CELLS
            _success(f"{len(result.cells)} cells written to {args.out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    init()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except EdaLabError as e:
        print(f"{Fore.RED}{e}{Style.RESET_ALL}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
