#!/usr/bin/env python3
"""
Experiment runner for the adaptive GMsDGM solver
Batch verbs: run, compare, gen-kappa, diag-eigs, list
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

# Load .env file if it exists
from dotenv import load_dotenv
load_dotenv()

from src.fields.permeability import GENERATORS, load_or_generate_kappa, save_kappa
from src.orchestrator.experiment_config import ConfigLoader, parse_scalar, summary
from src.orchestrator.experiment_runner import ExperimentRunner, compare, diag_eigs
from src.orchestrator.run_tracker import list_runs, load_run
from src.reporting.convergence_report import ConvergenceReport

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def configure_logging(level: str = 'INFO', verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        force=True,
    )


def parse_generator_spec(text: str) -> Tuple[Dict[str, Any], int]:
    """
    'channels:contrast=1e4,seed=7,nx=64' -> ({'kind': 'channels', ...}, 64)

    nx is the number of fine cells per axis (default 64).
    """
    kind, _, rest = text.partition(':')
    spec: Dict[str, Any] = {'kind': kind.strip()}
    for item in filter(None, (p.strip() for p in rest.split(','))):
        if '=' not in item:
            raise ValueError(f"Generator argument '{item}' is not of the form key=value")
        key, value = item.split('=', 1)
        spec[key.strip()] = parse_scalar(value)
    n_cells = int(spec.pop('nx', 64))
    return spec, n_cells


def cmd_run(loader: ConfigLoader, args) -> int:
    config = loader.load_experiment(args.experiment, args.set)
    configure_logging(config.logging_config.get('level', 'INFO'), args.verbose)

    print("\n" + "=" * 60)
    print(summary(config))
    print("=" * 60 + "\n")
    print(f"🚀 Running {config.adaptive.strategy} ...")

    result = ExperimentRunner(config, args.out).run()
    report = ConvergenceReport(config.name, result.strategy.records, result.output_dir)
    print(report.format_summary(result.analysis))

    if result.recommendations:
        print("📋 Recommendations:")
        print("-" * 40)
        for rec in result.recommendations:
            print(f"  {rec}")

    print(f"\n✅ Run complete!")
    print(f"📊 Artifacts saved to: {result.output_dir}")
    return 0


def cmd_compare(loader: ConfigLoader, args) -> int:
    configs = [loader.load_experiment(name, args.set) for name in args.experiments]
    if configs:
        configure_logging(configs[0].logging_config.get('level', 'INFO'), args.verbose)
    out = Path(args.out) if args.out else Path(configs[0].output.directory if configs else '.') / 'comparison.csv'

    frame = compare(configs, out)
    print("\n" + "=" * 60)
    print("COMPARISON")
    print("=" * 60)
    for name, group in frame.groupby('experiment', sort=False):
        last = group.iloc[-1]
        print(f"  {name:<28} {last['strategy']:<18} DOF={int(last['dof']):>7d}  "
              f"ea={last['ea']:.4e}  e2={last['e2']:.4e}")
    print(f"\n📊 Comparison saved to: {out}")
    return 0


def cmd_gen_kappa(loader: ConfigLoader, args) -> int:
    if args.spec in loader.available_experiments or args.spec.endswith(('.yaml', '.yml')):
        config = loader.load_experiment(args.spec)
        spec, n_cells = dict(config.fields.kappa), config.grid.n_cells
    else:
        spec, n_cells = parse_generator_spec(args.spec)
    field = load_or_generate_kappa(spec, n_cells)
    save_kappa(args.out, field)
    print(f"✅ Wrote {n_cells}x{n_cells} permeability (contrast {field.contrast:.3g}) to {args.out}")
    return 0


def cmd_diag_eigs(loader: ConfigLoader, args) -> int:
    config = loader.load_experiment(args.experiment, args.set)
    configure_logging(config.logging_config.get('level', 'INFO'), args.verbose)
    frame = diag_eigs(config, args.out)

    print("\n" + "=" * 60)
    print("LARGEST SNAPSHOT EIGENVALUE")
    print("=" * 60)
    print(f"  without oversampling: {frame['lambda_max'].max():.6g}")
    print(f"  with oversampling:    {frame['lambda_max_oversampled'].max():.6g}")
    return 0


def cmd_list(loader: ConfigLoader, args) -> int:
    print("\nAvailable Experiments:")
    print("-" * 40)
    for name in loader.list_experiments():
        print(f"  {name:<28} {loader.describe(name)}")
    print(f"\nPermeability generators: {', '.join(sorted(GENERATORS))}")

    results_dir = Path(args.out) if args.out else loader.results_directory()
    runs = list_runs(results_dir)
    print(f"\nPast runs in {results_dir}:")
    print("-" * 40)
    if not runs:
        print("  (none)")
    for run in runs:
        results = load_run(run['directory']).get('results') or {}
        ea = results.get('final_ea')
        detail = f"DOF={results['final_dof']}  ea={ea:.4e}" if ea is not None else run['status']
        print(f"  {run['experiment']:<28} {run['start_time'][:19]}  {detail}")
    return 0


COMMANDS = {
    'run': cmd_run,
    'compare': cmd_compare,
    'gen-kappa': cmd_gen_kappa,
    'diag-eigs': cmd_diag_eigs,
    'list': cmd_list,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Adaptive GMsDGM experiment runner")
    parser.add_argument('-c', '--config-dir', default=os.getenv('GMSDG_CONFIG_DIR', 'config'),
                        help='Directory holding base_config.yaml and experiments/')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run one experiment')
    run.add_argument('experiment', help='Experiment name or YAML path')
    run.add_argument('--out', help='Output directory (default output.directory/<name>)')

    cmp_ = sub.add_parser('compare', help='Run several experiments on one problem')
    cmp_.add_argument('experiments', nargs='+')
    cmp_.add_argument('--out', help='Comparison CSV path')

    gen = sub.add_parser('gen-kappa', help='Write a permeability field')
    gen.add_argument('spec', help="Generator spec 'kind:key=value,...' or an experiment")
    gen.add_argument('out', help='Output file (.bin for binary)')

    diag = sub.add_parser('diag-eigs', help='Largest snapshot eigenvalues with/without oversampling')
    diag.add_argument('experiment')
    diag.add_argument('--out', help='CSV path')

    lst = sub.add_parser('list', help='List discovered experiments and past runs')
    lst.add_argument('--out', help='Results directory to scan (default GMSDG_OUT or output.directory)')

    for p in (run, cmp_, diag):
        p.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                       help='Dotted override, e.g. grid.Nc=8 (repeatable)')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    configure_logging(verbose=args.verbose)

    try:
        loader = ConfigLoader(args.config_dir)
        return COMMANDS[args.command](loader, args)
    except KeyboardInterrupt:
        logger.warning("Aborted by user")
        return 1
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"\n❌ {args.command} failed: {type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
