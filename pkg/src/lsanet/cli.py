"""Command-line surface: train, eval, density, export-sdw, gradcheck, params, ablation."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Sequence

from rich.console import Console
from rich.table import Table

from lsanet.app_paths import AppPaths
from lsanet.config import NetworkConfig, RunRecord, load_network_config
from lsanet.db import RunLedger
from lsanet.errors import ConfigError, LSANetError
from lsanet.geometry import AugmentOptions
from lsanet.network import build, count_parameters, evaluate
from lsanet.pipeline import (
    TrainRun,
    assert_gradients,
    eval_density_sweep,
    export_sdw,
    load_model,
    load_splits,
    run_ablation,
    run_gradcheck,
    train,
)
from lsanet.settings import DENSITY_POINT_COUNTS, DROPOUT_MAX_RATIO


logger = logging.getLogger(__name__)
console = Console()

# Reference totals for the informational comparison printed by `params`
REFERENCE_PARAMS = 2.30e6
REFERENCE_BASELINE_PARAMS = 1.48e6


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f'expected comma-separated integers, got {text!r}') from exc


def _add_flag_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--no-sfe', action='store_true', help='Disable the spatial feature extractor')
    parser.add_argument('--no-lsa', action='store_true', help='Replace SDW modulation with plain set abstraction')
    parser.add_argument('--no-region-encoder', action='store_true', help='Drop the region-wide spatial half')
    parser.add_argument('--no-pool-modulation', action='store_true', help='Plain max pool at the end of each layer')


def _add_data_arguments(parser: argparse.ArgumentParser, default: str | None = 'synthetic') -> None:
    parser.add_argument(
        '--data',
        default=default,
        help='"synthetic" or a directory of OFF class folders',
    )
    parser.add_argument('--n-train', type=int, default=512)
    parser.add_argument('--n-test', type=int, default=128)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='lsanet', description='LSANet point-cloud classification kit')
    commands = parser.add_subparsers(dest='command', required=True)

    train_cmd = commands.add_parser('train', help='Train a classifier')
    train_cmd.add_argument('--config', default='desk', help='Preset name or JSON/YAML config path')
    train_cmd.add_argument('--seed', type=int, default=0)
    train_cmd.add_argument('--epochs', type=int, default=None)
    train_cmd.add_argument('--out', type=Path, default=None)
    _add_flag_arguments(train_cmd)
    train_cmd.add_argument('--rotate', action='store_true', help='Random rotation about the up axis')
    train_cmd.add_argument('--dropout-aug', type=float, default=DROPOUT_MAX_RATIO,
                           help='Maximum random input dropout ratio, 0 disables')
    train_cmd.add_argument('--jitter', type=float, default=0.01, help='Gaussian jitter sigma, clipped at 0.05')
    train_cmd.add_argument('--checkpoint-every', type=int, default=10)
    train_cmd.add_argument('--resume', action='store_true')
    _add_data_arguments(train_cmd)

    eval_cmd = commands.add_parser('eval', help='Accuracy of a checkpoint')
    eval_cmd.add_argument('--ckpt', type=Path, required=True)
    eval_cmd.add_argument('--points', type=int, default=None)
    eval_cmd.add_argument('--rotate', action='store_true')
    eval_cmd.add_argument('--seed', type=int, default=0)
    _add_data_arguments(eval_cmd, default=None)

    density_cmd = commands.add_parser('density', help='Accuracy across input point counts')
    density_cmd.add_argument('--ckpt', type=Path, required=True)
    density_cmd.add_argument('--points', type=_int_list, default=list(DENSITY_POINT_COUNTS))
    density_cmd.add_argument('--out', type=Path, default=None, help='CSV output path')
    density_cmd.add_argument('--seed', type=int, default=0)
    _add_data_arguments(density_cmd, default=None)

    sdw_cmd = commands.add_parser('export-sdw', help='Write the SDWs of one layer to CSV')
    sdw_cmd.add_argument('--ckpt', type=Path, required=True)
    sdw_cmd.add_argument('--layer', type=int, default=0)
    sdw_cmd.add_argument('--out', type=Path, required=True)
    sdw_cmd.add_argument('--index', type=int, default=0, help='Test cloud to export')
    _add_data_arguments(sdw_cmd, default=None)

    grad_cmd = commands.add_parser('gradcheck', help='Finite-difference gradient suites')
    grad_cmd.add_argument('--scope', choices=['op', 'layer', 'network'], default='network')
    grad_cmd.add_argument('--seed', type=int, default=0)
    grad_cmd.add_argument('--seeds', type=int, default=20, help='Random instances per target')

    params_cmd = commands.add_parser('params', help='Parameter count breakdown')
    params_cmd.add_argument('--config', default='modelnet40')
    _add_flag_arguments(params_cmd)

    ablation_cmd = commands.add_parser('ablation', help='Train every flag configuration on shared data')
    ablation_cmd.add_argument('--config', default='desk')
    ablation_cmd.add_argument('--seeds', type=_int_list, default=[0, 1, 2])
    ablation_cmd.add_argument('--epochs', type=int, default=None)
    ablation_cmd.add_argument('--out', type=Path, default=None)
    ablation_cmd.add_argument('--dropout-aug', type=float, default=DROPOUT_MAX_RATIO)
    _add_data_arguments(ablation_cmd)
    return parser


def _config_with_flags(args: argparse.Namespace) -> NetworkConfig:
    config = load_network_config(args.config)
    return config.with_flags(
        use_sfe=config.use_sfe and not args.no_sfe,
        use_lsa=config.use_lsa and not args.no_lsa,
        use_region_encoder=config.use_region_encoder and not args.no_region_encoder,
        use_modulated_pool=config.use_modulated_pool and not args.no_pool_modulation,
    )


def _data_section(args: argparse.Namespace, seed: int) -> dict:
    if args.data in (None, 'synthetic'):
        return {'source': 'synthetic', 'n_train': args.n_train, 'n_test': args.n_test, 'seed': seed}
    return {'source': str(Path(args.data).resolve())}


def _test_split(args: argparse.Namespace, run: dict, n_points: int):
    data = run.get('data') or {'source': 'synthetic'}
    if args.data is not None:
        data = _data_section(args, int(run['seed']))
    return load_splits(data, int(run['seed']), n_points)[1]


def _ledger() -> RunLedger | None:
    """The app ledger, or None before the app directory exists"""
    if not AppPaths.main_dir_path.exists():
        return None
    ledger = RunLedger()
    ledger.db_setup()
    return ledger


def cmd_train(args: argparse.Namespace) -> int:
    config = _config_with_flags(args)
    out = args.out or AppPaths.runs_path / f'{Path(args.config).stem}-seed{args.seed}'
    data = _data_section(args, args.seed)
    augment = AugmentOptions(rotate_z=args.rotate, jitter_sigma=args.jitter, dropout_max_ratio=args.dropout_aug)
    seed = args.seed
    record = RunRecord(out)
    if args.resume and record.exists():
        stored = record.read()
        config = record.network_config()
        data = stored['data']
        augment = AugmentOptions(**stored['augment'])
        seed = int(stored['seed'])
        if seed != args.seed:
            logger.info('resuming %s with its recorded seed %d', out, seed)
    train_set, test_set = load_splits(data, seed, config.training.n_points)
    run = TrainRun(
        config=config,
        out_dir=out,
        seed=seed,
        epochs=args.epochs,
        augment=augment,
        checkpoint_every=args.checkpoint_every,
        name=out.name,
        data=data,
        show_progress=True,
    )
    result = train(run, train_set, test_set, resume=args.resume, ledger=_ledger())
    last = result.history[-1] if result.history else {}
    console.print(f"[bold green]Training complete:[/bold green] {out} test OA {last.get('test_oa', float('nan')):.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    params, run = load_model(args.ckpt)
    n_points = args.points or params.config.training.n_points
    dataset = _test_split(args, run, params.config.training.n_points)
    result = evaluate(params, dataset, n_points, seed=args.seed, rotate=args.rotate)
    table = Table(title=f'{args.ckpt} at {n_points} points')
    table.add_column('Metric', style='cyan')
    table.add_column('Value', justify='right')
    table.add_row('Overall accuracy', f'{result.overall_accuracy:.2%}')
    table.add_row('Mean class accuracy', f'{result.mean_class_accuracy:.2%}')
    for label, accuracy in enumerate(result.per_class_accuracy):
        name = dataset.class_names[label] if label < len(dataset.class_names) else str(label)
        table.add_row(f'  {name}', f'{accuracy:.2%}')
    console.print(table)
    return 0


def cmd_density(args: argparse.Namespace) -> int:
    params, run = load_model(args.ckpt)
    dataset = _test_split(args, run, max(args.points + [params.config.training.n_points]))
    rows = eval_density_sweep(params, dataset, args.points, seed=args.seed, out_csv=args.out)
    table = Table(title='Accuracy by input point count')
    table.add_column('Points', justify='right', style='cyan')
    table.add_column('OA', justify='right')
    table.add_column('mA', justify='right')
    for row in rows:
        table.add_row(str(row.n_points), f'{row.overall_accuracy:.2%}', f'{row.mean_class_accuracy:.2%}')
    console.print(table)
    return 0


def cmd_export_sdw(args: argparse.Namespace) -> int:
    params, run = load_model(args.ckpt)
    dataset = _test_split(args, run, params.config.training.n_points)
    if not 0 <= args.index < len(dataset):
        raise ConfigError(f'cloud index {args.index} outside the {len(dataset)} test clouds')
    rows = export_sdw(params, dataset[args.index], args.layer, args.out)
    console.print(f'Wrote {rows} rows to {args.out}')
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_gradcheck(args.scope, seed=args.seed, n_seeds=args.seeds)
    table = Table(title=f'Gradient check ({args.scope}, {args.seeds} seeds, float64)')
    table.add_column('Target', style='cyan')
    table.add_column('Worst rel. error', justify='right')
    table.add_column('Result')
    for result in results:
        verdict = '[green]pass[/green]' if result.passed else '[bold red]FAIL[/bold red]'
        table.add_row(result.target, f'{result.worst_rel_error:.3e}', verdict)
    console.print(table)
    assert_gradients(results)
    return 0


def cmd_params(args: argparse.Namespace) -> int:
    config = _config_with_flags(args)
    total, breakdown = count_parameters(build(config, seed=0))
    baseline_total, _ = count_parameters(build(config.with_flags(use_sfe=False, use_lsa=False), seed=0))
    table = Table(title=f'Parameters of {args.config}')
    table.add_column('Module', style='cyan')
    table.add_column('Count', justify='right')
    for name, count in breakdown.items():
        table.add_row(name, f'{count:,}')
    table.add_row('[bold]total[/bold]', f'[bold]{total:,}[/bold]')
    console.print(table)
    console.print(f'Full model {total / 1e6:.2f}M vs reference {REFERENCE_PARAMS / 1e6:.2f}M (informational)')
    console.print(
        f'Plain set-abstraction baseline {baseline_total / 1e6:.2f}M '
        f'vs reference {REFERENCE_BASELINE_PARAMS / 1e6:.2f}M (informational)'
    )
    return 0


def cmd_ablation(args: argparse.Namespace) -> int:
    config = load_network_config(args.config)
    out = args.out or AppPaths.runs_path / f'ablation-{Path(args.config).stem}'
    data = _data_section(args, args.seeds[0])
    train_set, test_set = load_splits(data, args.seeds[0], config.training.n_points)
    rows = run_ablation(
        config,
        args.seeds,
        out,
        train_set,
        test_set,
        epochs=args.epochs,
        augment=AugmentOptions(jitter_sigma=0.01, dropout_max_ratio=args.dropout_aug),
        ledger=_ledger(),
        data=data,
    )
    table = Table(title='Ablation (final test OA)')
    table.add_column('Configuration', style='cyan')
    table.add_column('Mean OA', justify='right')
    table.add_column('Std', justify='right')
    for row in rows:
        table.add_row(row.variant, f'{row.mean:.2%}', f'{row.std:.2%}')
    console.print(table)
    return 0


COMMANDS = {
    'train': cmd_train,
    'eval': cmd_eval,
    'density': cmd_density,
    'export-sdw': cmd_export_sdw,
    'gradcheck': cmd_gradcheck,
    'params': cmd_params,
    'ablation': cmd_ablation,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Parse `argv`, dispatch, and map library errors to exit status 1"""
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except LSANetError as exc:
        logger.error('%s: %s', type(exc).__name__, exc)
        return 1
