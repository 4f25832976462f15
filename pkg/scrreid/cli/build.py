"""Offline stage: codebook, gallery codes and distance look-up tables"""

import pathlib

import click

from scrreid import distance, quantizer
from scrreid.cli import common


DEFAULTS = {
    'subspaces': 4,
    'centroids': 256,
    'iters': 25,
    'tol': 1e-4,
    'seed': 0,
    'njobs': 1,
}


@click.command()
@click.argument(
    'features', type=click.Path(
        exists=True, dir_okay=False, path_type=pathlib.Path))
@click.option(
    '-o', '--out-dir', required=True, type=pathlib.Path,
    help='Directory receiving codebook.cbk, codes.pqc, scr.lut and intscr.lut')
@click.option(
    '--codebook', type=click.Path(
        exists=True, dir_okay=False, path_type=pathlib.Path),
    help='Use this codebook instead of training one')
@click.option(
    '--params', type=click.Path(
        exists=True, dir_okay=False, path_type=pathlib.Path),
    help='Embed the features with trained params first')
@click.option('-M', '--subspaces', type=int, help='Number of sub-spaces [4]')
@click.option(
    '-C', '--centroids', type=int, help='Centroids per sub-space [256]')
@click.option('--iters', type=int, help='Maximal Lloyd iterations [25]')
@click.option('--tol', type=float, help='Relative stopping tolerance [1e-4]')
@click.option('--seed', type=int, help='Random seed [0]')
@click.option(
    '-j', '--njobs', type=int, help='Sub-spaces trained in parallel [1]')
@common.config_option
@common.handle_errors
def build(features, out_dir, codebook, params, config_file, **flags):
    """Build the gallery codes and look-up tables of FEATURES (.fvs)"""
    options = common.settings(DEFAULTS, config_file, **flags)

    print('Loading gallery...')
    gallery = common.load_features(features, params)
    out_dir.mkdir(parents=True, exist_ok=True)

    if codebook:
        print(f'Loading codebook {codebook}...')
        codebook = quantizer.load_codebook(codebook)
    else:
        print(f'Training codebook (M={options["subspaces"]}, '
              f'C={options["centroids"]})...')
        codebook, report = quantizer.train_codebook(
            gallery, options['subspaces'], options['centroids'],
            max_iters=options['iters'], tol=options['tol'],
            rng_seed=options['seed'], njobs=options['njobs'], verbose=True)
        print(f'  > {report.iterations_run} iterations, quantization error '
              f'{report.total_quantization_error:.4f}')

    print(f'  > code length: {codebook.code_bits} bits '
          f'(M={codebook.num_subspaces}, C={codebook.num_centroids})')

    codes = quantizer.encode(gallery, codebook)
    lut = distance.build_lut(codebook)
    intlut = distance.quantize_lut(lut)

    for path, save, artifact in (
            ('codebook.cbk', quantizer.save_codebook, codebook),
            ('codes.pqc', quantizer.save_codes, codes),
            ('scr.lut', distance.save_lut, lut),
            ('intscr.lut', distance.save_lut, intlut)):
        save(artifact, out_dir / path)
        print(f'  > Wrote {out_dir / path}')
