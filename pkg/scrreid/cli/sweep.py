"""Accuracy sweep over the number of sub-spaces and centroids"""

import pathlib

import click

from scrreid import evaluation
from scrreid.cli import common
from scrreid.exception import ValidationError


DEFAULTS = {
    'subspaces': '4',
    'centroids': '4,16,64,256',
    'pipelines': 'scr,intscr',
    'seeds': 3,
    'seed': 0,
    'iters': 25,
    'njobs': 1,
}

_FILE = click.Path(exists=True, dir_okay=False, path_type=pathlib.Path)


@click.command()
@click.argument('query', type=_FILE)
@click.argument('gallery', type=_FILE)
@click.option(
    '-M', '--subspaces', help='Comma separated numbers of sub-spaces [4]')
@click.option(
    '-C', '--centroids',
    help='Comma separated numbers of centroids [4,16,64,256]')
@click.option(
    '-p', '--pipelines',
    help='Comma separated pipelines among exact, scr, intscr, hamming '
    '[scr,intscr]')
@click.option(
    '--seeds', type=int, help='Number of codebook seeds averaged [3]')
@click.option('--seed', type=int, help='First seed [0]')
@click.option('--iters', type=int, help='Maximal Lloyd iterations [25]')
@click.option(
    '--params', type=_FILE, help='Embed the features with trained params first')
@click.option('-j', '--njobs', type=int, help='Parallel jobs [1]')
@click.option(
    '-o', '--output', type=pathlib.Path, help='Output CSV file')
@common.config_option
@common.handle_errors
def sweep(query, gallery, params, output, config_file, **flags):
    """Evaluate retrieval of QUERY in GALLERY (.fvs) for several M and C

    Hamming codes are evaluated at the code length of each (M, C).

    """
    options = common.settings(DEFAULTS, config_file, **flags)
    subspaces = common.parse_list(options['subspaces'], int)
    centroids = common.parse_list(options['centroids'], int)
    pipelines = common.parse_list(options['pipelines'])
    if options['seeds'] < 1:
        raise ValidationError(
            f'seeds must be positive, it is {options["seeds"]}')
    seeds = range(options['seed'], options['seed'] + options['seeds'])

    print('Loading features...')
    query_set = common.load_features(query, params)
    gallery_set = common.load_features(gallery, params)

    print(f'Sweeping M in {subspaces}, C in {centroids} over '
          f'{len(seeds)} seeds...')
    frame = evaluation.sweep_accuracy(
        query_set, gallery_set, subspaces, centroids, pipelines, seeds,
        kmeans_iters=options['iters'], njobs=options['njobs'])

    common.print_table(frame, title='Accuracy versus M and C')
    if output:
        common.write_csv(frame, common.prepare_output(output))
