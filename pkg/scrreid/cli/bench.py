"""Ranking speed benchmark over gallery sizes and pipelines"""

import dataclasses
import pathlib

import click

from scrreid import evaluation
from scrreid.cli import common


# flag name -> BenchConfig field
FIELDS = {
    'dim': 'dim',
    'subspaces': 'num_subspaces',
    'centroids': 'num_centroids',
    'bits': 'num_bits',
    'ids': 'num_identities',
    'queries': 'num_queries',
    'warmup': 'warmup',
    'train_size': 'train_size',
    'kmeans_iters': 'kmeans_iters',
    'seed': 'rng_seed',
}

DEFAULTS = {
    'sizes': '1e3,1e4,1e5',
    'pipelines': 'exact,scr,intscr,hamming',
    **{flag: getattr(evaluation.BenchConfig(), field)
       for flag, field in FIELDS.items()}}


@click.command()
@click.option(
    '-s', '--sizes', help='Comma separated gallery sizes [1e3,1e4,1e5]')
@click.option(
    '-p', '--pipelines',
    help='Comma separated pipelines [exact,scr,intscr,hamming]')
@click.option('--dim', type=int, help='Vector dimension [128]')
@click.option('-M', '--subspaces', type=int, help='Number of sub-spaces [4]')
@click.option(
    '-C', '--centroids', type=int, help='Centroids per sub-space [256]')
@click.option('--bits', type=int, help='Hamming code length [32]')
@click.option('--ids', type=int, help='Identities of the synthetic data [1000]')
@click.option('--queries', type=int, help='Timed queries, at least 10 [10]')
@click.option('--warmup', type=int, help='Untimed warm-up queries [1]')
@click.option(
    '--train-size', type=int, help='Codebook training sample size [20000]')
@click.option('--kmeans-iters', type=int, help='Lloyd iterations [10]')
@click.option('--seed', type=int, help='Random seed [0]')
@click.option(
    '-o', '--output', type=pathlib.Path, help='Output CSV file')
@click.option(
    '--sort-output', type=pathlib.Path,
    help='Also time counting sort against comparison sort at each size and '
    'write the results to this CSV file')
@common.config_option
@common.handle_errors
def bench(output, sort_output, config_file, **flags):
    """Time distance computation and ranking per query"""
    options = common.settings(DEFAULTS, config_file, **flags)
    sizes = common.parse_list(options['sizes'], int)
    pipelines = common.parse_list(options['pipelines'])
    config = evaluation.BenchConfig(
        **{field: options[flag] for flag, field in FIELDS.items()})
    config.validate()

    print(f'Benchmarking {", ".join(pipelines)} on sizes '
          f'{", ".join(str(s) for s in sizes)}...')
    for name, value in dataclasses.asdict(config).items():
        print(f'  > {name}: {value}')

    report = evaluation.bench_ranking(sizes, pipelines, config, verbose=True)
    frame = report.to_frame()
    common.print_table(frame, title='Ranking speed per query', spec='.4g')
    if output:
        common.write_csv(
            frame, common.prepare_output(output), float_format='%.6g')

    if sort_output:
        print('Benchmarking sorting...')
        sorting = evaluation.bench_sorting(
            sizes, max_value=255 * config.num_subspaces,
            repeats=config.num_queries, rng_seed=config.rng_seed)
        common.print_table(sorting, title='Sort time per row', spec='.4g')
        common.write_csv(
            sorting, common.prepare_output(sort_output), float_format='%.6g')
