"""
Command-line interface for polysketch

Every subcommand reads a JSON config validated against its pydantic model
(see CONFIG.md); --seed and --out override the matching config fields.
Exit codes: 0 success, 2 configuration error, 3 numerical error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Type

import pandas as pd
from pydantic import BaseModel, ValidationError

from polysketch import service
from polysketch.config import get_config
from polysketch.errors import ConfigurationError, NumericalError
from polysketch.experiments import fig1_benchmark, run_experiment
from polysketch.models import (
    AllocateCommand,
    ExperimentConfig,
    Fig1Command,
    GpCommand,
    SketchCommand,
    VarianceCommand,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# Regularization grids swept by `bench --sweep`
NOISE_GRID = [10.0 ** k for k in range(-5, 1)]
ALPHA_GRID = [2.0 ** k for k in range(-15, 16)]


def _load_command(path: Optional[str], model: Type[BaseModel], args) -> BaseModel:
    if path is None:
        data = {}
    else:
        with open(path) as f:
            data = json.load(f)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top-level JSON value must be an object")
    if args.out is not None:
        data['output'] = args.out
    if args.seed is not None:
        if model is ExperimentConfig:
            data['seeds'] = [args.seed]
        elif model is SketchCommand:
            data.setdefault('sketch', {})['seed'] = args.seed
        else:
            data['seed'] = args.seed
    return model.model_validate(data)


def _write_text(text: str, output: Optional[str]):
    if output is None:
        print(text)
        return
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")
    print(f"[OK] Wrote {path}", file=sys.stderr)


def _write_frame(frame: pd.DataFrame, output: Optional[str]):
    if output is None:
        frame.to_csv(sys.stdout, index=False)
        return
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    print(f"[OK] Wrote {path} ({len(frame)} rows)", file=sys.stderr)


def cmd_sketch(args) -> int:
    cmd = _load_command(args.config, SketchCommand, args)
    _write_frame(service.sketch_features(cmd), cmd.output)
    return EXIT_OK


def cmd_variance(args) -> int:
    cmd = _load_command(args.config, VarianceCommand, args)
    _write_text(json.dumps(service.variance_report(cmd), indent=2), cmd.output)
    return EXIT_OK


def cmd_allocate(args) -> int:
    cmd = _load_command(args.config, AllocateCommand, args)
    alloc = service.allocate(cmd)
    logger.info(f"allocation: p*={alloc.p_star}, D={alloc.num_features}")
    _write_text(alloc.to_json(), cmd.output)
    return EXIT_OK


def cmd_gp(args) -> int:
    cmd = _load_command(args.config, GpCommand, args)
    result = service.gp_run(cmd)
    _write_frame(result['predictions'], cmd.output)
    summary = {'metrics': result['metrics'], 'allocation': result['allocation']}
    print(json.dumps(summary, indent=2), file=sys.stderr if cmd.output is None else sys.stdout)
    return EXIT_OK


def _sweep_configs(cfg: ExperimentConfig) -> List[ExperimentConfig]:
    if cfg.output is None:
        raise ConfigurationError("--sweep needs an output path (--out or 'output')")
    field, grid = (('alpha', ALPHA_GRID) if cfg.task == "gp_classification"
                   else ('noise', NOISE_GRID))
    stem = Path(cfg.output).with_suffix('')
    return [cfg.model_copy(update={field: value, 'output': f"{stem}_{field}{value:g}.json"})
            for value in grid]


def cmd_bench(args) -> int:
    cfg = _load_command(args.config, ExperimentConfig, args)
    if args.sweep:
        swept = _sweep_configs(cfg)
        for variant in swept:
            run_experiment(variant)
        print(f"[OK] Swept {len(swept)} regularization values", file=sys.stderr)
        return EXIT_OK
    report = run_experiment(cfg)
    if cfg.output is None:
        print(report.model_dump_json(indent=2))
    else:
        for agg in report.aggregates:
            print(f"  {agg.method:<24} D={agg.num_features:<6} {agg.metric:<16} "
                  f"{agg.mean:.6g} +- {agg.std:.3g} ({agg.runs} runs)")
    return EXIT_OK


def cmd_fig1(args) -> int:
    cmd = _load_command(args.config, Fig1Command, args)
    table = fig1_benchmark(cmd.d, cmd.num_features, cmd.degrees, cmd.trials, cmd.seed)
    _write_frame(table, cmd.output)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    cfg = get_config()
    uvicorn.run("polysketch.main:app", host=args.host or cfg.server_host,
                port=args.port or cfg.server_port, log_level=cfg.log_level.lower())
    return EXIT_OK


def cmd_config(args) -> int:
    get_config().print_config()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polysketch",
        description="Random-feature approximations of dot-product and Gaussian kernels",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Exit codes: 0 success, 2 configuration error, 3 numerical error",
    )
    parser.add_argument('--settings', type=str, default=None,
                        help='Path to config.ini (default: $POLYSKETCH_CONFIG or ./config.ini)')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    def add(name: str, func, help_text: str, config_required: bool = True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('--config', type=str, required=config_required,
                       help='JSON config file (see CONFIG.md)')
        p.add_argument('--seed', type=int, default=None, help='Override the config seed')
        p.add_argument('--out', type=str, default=None, help='Output path (default: stdout)')
        p.set_defaults(func=func)
        return p

    add('sketch', cmd_sketch, 'Emit sketch features of a dataset as CSV')
    add('variance', cmd_variance, 'Evaluate variance formulas for two vectors')
    add('allocate', cmd_allocate, 'Optimize the Maclaurin truncation and feature allocation')
    add('gp', cmd_gp, 'Fit a feature-space GP and predict a test set')
    bench = add('bench', cmd_bench, 'Run an experiment config over methods, sizes and seeds')
    bench.add_argument('--sweep', action='store_true',
                       help='Repeat over the noise (regression) or alpha (classification) grid')
    add('fig1', cmd_fig1, 'Real vs complex Rademacher error table', config_required=False)

    serve = sub.add_parser('serve', help='Start the HTTP API')
    serve.add_argument('--host', type=str, default=None)
    serve.add_argument('--port', type=int, default=None)
    serve.set_defaults(func=cmd_serve)

    show = sub.add_parser('config', help='Print the effective config.ini settings')
    show.set_defaults(func=cmd_config)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        cfg = get_config(args.settings)
    except FileNotFoundError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else cfg.log_level,
                        format=cfg.log_format)

    try:
        return args.func(args)
    except ValidationError as e:
        print(f"[ERROR] Invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as e:
        print(f"[ERROR] Malformed JSON in {args.config}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, FileNotFoundError) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"[ERROR] Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
