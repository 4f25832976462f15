"""Generation of synthetic clustered feature sets"""

import pathlib

import click

from scrreid import features
from scrreid.cli import common


DEFAULTS = {
    'ids': 100,
    'per_id': 10,
    'dim': 128,
    'stddev': 1.0,
    'separation': 20.0,
    'cameras': 2,
    'seed': 0,
    'query_fraction': 0.3,
    'normalize': False,
}


@click.command()
@click.option(
    '-o', '--out', required=True, type=pathlib.Path,
    help='Output .fvs file (the gallery when --query-out is given)')
@click.option(
    '--query-out', type=pathlib.Path,
    help='Split a query set and write it to this .fvs file')
@click.option('--ids', type=int, help='Number of identities [100]')
@click.option('--per-id', type=int, help='Instances per identity [10]')
@click.option('--dim', type=int, help='Vector dimension [128]')
@click.option('--stddev', type=float, help='Within-identity deviation [1.0]')
@click.option(
    '--separation', type=float,
    help='Side of the cube holding the identity means [20.0]')
@click.option('--cameras', type=int, help='Number of cameras [2]')
@click.option('--seed', type=int, help='Random seed [0]')
@click.option(
    '--query-fraction', type=float,
    help='Fraction of each identity sent to the query set [0.3]')
@click.option(
    '--normalize/--no-normalize', default=None,
    help='Scale vectors to unit L2 norm [no]')
@common.config_option
@common.handle_errors
def gen(out, query_out, config_file, **flags):
    """Generate a synthetic feature set of clustered identities"""
    options = common.settings(DEFAULTS, config_file, **flags)
    spec = features.SynthSpec(
        options['ids'], options['per_id'], options['dim'],
        cluster_stddev=options['stddev'],
        identity_separation=options['separation'],
        num_cameras=options['cameras'],
        rng_seed=options['seed'])

    print(f'Generating {spec.num_identities} x {spec.instances_per_identity} '
          f'vectors of dimension {spec.dim}...')
    generated = features.generate_synthetic(spec)
    if options['normalize']:
        generated = features.l2_normalize(generated)

    if query_out:
        query, gallery = features.split_query_gallery(
            generated, options['query_fraction'], rng_seed=options['seed'])
        features.save_features(query, common.prepare_output(query_out))
        print(f'  > Wrote {query_out} (N={query.size})')
        generated = gallery

    features.save_features(generated, common.prepare_output(out))
    print(f'  > Wrote {out} (N={generated.size}, D={generated.dim}, '
          f'ids={generated.num_identities})')
