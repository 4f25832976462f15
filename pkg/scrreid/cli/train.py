"""Consistency-regularized training of the linear embedder"""

import dataclasses
import pathlib

import click

from scrreid import quantizer, trainer
from scrreid.cli import common


# flag name -> TrainConfig field
FIELDS = {
    'epochs': 'epochs',
    'batch_size': 'batch_size',
    'instances': 'instances_per_identity',
    'lr': 'learning_rate',
    'warmup': 'warmup_epochs',
    'margin': 'margin',
    'alpha': 'alpha',
    'refresh_period': 'refresh_period',
    'subspaces': 'num_subspaces',
    'centroids': 'num_centroids',
    'int_mode': 'int_mode',
    'embed_dim': 'embed_dim',
    'kmeans_iters': 'kmeans_iters',
    'seed': 'rng_seed',
}

DEFAULTS = {
    flag: getattr(trainer.TrainConfig(), field)
    for flag, field in FIELDS.items()}


@click.command()
@click.argument(
    'features', type=click.Path(
        exists=True, dir_okay=False, path_type=pathlib.Path))
@click.option(
    '-o', '--out-dir', required=True, type=pathlib.Path,
    help='Directory receiving codebook.cbk, params.npz and train_log.csv')
@click.option('--epochs', type=int, help='Number of epochs [120]')
@click.option('--batch-size', type=int, help='Batch size P x K [64]')
@click.option('--instances', type=int, help='K instances per identity [4]')
@click.option('--lr', type=float, help='Initial learning rate [3.5e-4]')
@click.option('--warmup', type=int, help='Warm-up epochs [10]')
@click.option('--margin', type=float, help='Triplet margin [0.3]')
@click.option('--alpha', type=float, help='Consistency loss weight [0.01]')
@click.option(
    '-T', '--refresh-period', type=int,
    help='Epochs between codebook refreshes [10]')
@click.option('-M', '--subspaces', type=int, help='Number of sub-spaces [4]')
@click.option(
    '-C', '--centroids', type=int, help='Centroids per sub-space [256]')
@click.option(
    '--int-mode/--float-mode', default=None,
    help='Consistency against the 8-bit table [float]')
@click.option(
    '--embed-dim', type=int, help='Embedding dimension [input dimension]')
@click.option('--kmeans-iters', type=int, help='Lloyd iterations [25]')
@click.option('--seed', type=int, help='Random seed [0]')
@common.config_option
@common.handle_errors
def train(features, out_dir, config_file, **flags):
    """Train a linear embedder and its codebook on FEATURES (.fvs)"""
    options = common.settings(DEFAULTS, config_file, **flags)
    config = trainer.TrainConfig(
        **{field: options[flag] for flag, field in FIELDS.items()})
    config.validate()

    print(f'Training (T={config.refresh_period}, alpha={config.alpha}, '
          f'C={config.num_centroids}, M={config.num_subspaces}, '
          f'margin={config.margin}, epochs={config.epochs}, '
          f'int_mode={config.int_mode})...')
    for name, value in dataclasses.asdict(config).items():
        print(f'  > {name}: {value}')

    loaded = common.load_features(features)
    out_dir.mkdir(parents=True, exist_ok=True)

    params, codebook, log = trainer.run_training(loaded, config, verbose=True)
    for refresh in log.refreshes:
        print(f'  > refresh at epoch {refresh["epoch"]}: quantization error '
              f'{refresh["error_before"]:.4f} -> {refresh["error_after"]:.4f}')

    quantizer.save_codebook(codebook, out_dir / 'codebook.cbk')
    print(f'  > Wrote {out_dir / "codebook.cbk"}')
    trainer.save_params(params, out_dir / 'params.npz')
    print(f'  > Wrote {out_dir / "params.npz"}')
    common.write_csv(
        log.to_frame(), out_dir / 'train_log.csv', float_format='%.6g')
