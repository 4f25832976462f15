"""Evaluation of retrieval pipelines with CMC and mAP"""

import pathlib

import click
import pandas

from scrreid import distance, evaluation, features, pipeline, quantizer
from scrreid.cli import common


DEFAULTS = {
    'pipelines': 'exact',
    'ranker': None,
    'subspaces': 4,
    'centroids': 256,
    'iters': 25,
    'bits': None,
    'distractors': 0,
    'seed': 0,
    'njobs': 1,
}

_FILE = click.Path(exists=True, dir_okay=False, path_type=pathlib.Path)


def _codebook(gallery, codebook_file, options):
    if codebook_file:
        print(f'  > codebook {codebook_file}')
        return quantizer.load_codebook(codebook_file)

    print(f'  > training codebook on the gallery (M={options["subspaces"]}, '
          f'C={options["centroids"]})')
    codebook, _ = quantizer.train_codebook(
        gallery, options['subspaces'], options['centroids'],
        max_iters=options['iters'], rng_seed=options['seed'],
        njobs=options['njobs'], verbose=True)
    return codebook


@click.command()
@click.argument('query', type=_FILE)
@click.argument('gallery', type=_FILE)
@click.option(
    '-p', '--pipelines',
    help='Comma separated pipelines among exact, scr, intscr, hamming [exact]')
@click.option(
    '--ranker', type=click.Choice(['counting', 'comparison']),
    help='Ranking algorithm [pipeline default]')
@click.option(
    '--codebook', type=_FILE,
    help='Codebook (.cbk), trained on the gallery when not given')
@click.option('--codes', type=_FILE, help='Gallery codes (.pqc)')
@click.option('--lut', type=_FILE, help='Look-up table (.lut) for scr')
@click.option('--intlut', type=_FILE, help='Look-up table (.lut) for intscr')
@click.option(
    '--params', type=_FILE, help='Embed the features with trained params first')
@click.option('-M', '--subspaces', type=int, help='Number of sub-spaces [4]')
@click.option(
    '-C', '--centroids', type=int, help='Centroids per sub-space [256]')
@click.option('--iters', type=int, help='Maximal Lloyd iterations [25]')
@click.option('--bits', type=int, help='Hamming code length [dimension]')
@click.option(
    '--distractors', type=int,
    help='Add distractor vectors of fresh identities to the gallery [0]')
@click.option('--seed', type=int, help='Random seed [0]')
@click.option(
    '-j', '--njobs', type=int, help='Parallel jobs over queries [1]')
@click.option(
    '-o', '--output', type=pathlib.Path,
    help='Output CSV file, one row per pipeline')
@common.config_option
@common.handle_errors
def evaluate(query, gallery, codebook, codes, lut, intlut, params, output,
             config_file, **flags):
    """Evaluate retrieval of the QUERY set in the GALLERY set (.fvs)

    Gallery items of the query identity seen by the query camera are ignored,
    queries without any other match are skipped.

    """
    options = common.settings(DEFAULTS, config_file, **flags)
    kinds = [pipeline.get_pipeline(p)
             for p in common.parse_list(options['pipelines'])]

    print('Loading features...')
    query_set = common.load_features(query, params)
    gallery_set = common.load_features(gallery, params)
    if options['distractors']:
        if codes:
            raise click.UsageError('--distractors cannot be used with --codes')
        gallery_set = features.add_distractors(
            gallery_set, options['distractors'], rng_seed=options['seed'])
        print(f'  > added {options["distractors"]} distractors, '
              f'N={gallery_set.size}')

    quantized = {pipeline.Pipeline.scr, pipeline.Pipeline.intscr} & set(kinds)
    codebook = _codebook(gallery_set, codebook, options) if quantized else None
    codes = quantizer.load_codes(codes) if codes else None
    tables = {
        pipeline.Pipeline.scr: distance.load_lut(lut) if lut else None,
        pipeline.Pipeline.intscr: distance.load_lut(intlut) if intlut else None}

    reports = []
    for kind in kinds:
        print(f'Evaluating {kind.name}...')
        report = evaluation.evaluate(
            query_set, gallery_set, kind, algorithm=options['ranker'],
            codebook=codebook, codes=codes, lut=tables.get(kind),
            num_bits=options['bits'], rng_seed=options['seed'],
            njobs=options['njobs'])
        if report.num_skipped:
            print(f'  > {report.num_skipped} queries skipped '
                  f'(no valid match)')
        reports.append(report.to_frame())

    frame = pandas.concat(reports, ignore_index=True)
    common.print_table(frame, title='Retrieval accuracy')
    if output:
        common.write_csv(frame, common.prepare_output(output))
