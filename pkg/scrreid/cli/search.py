"""Online stage: ranking of query features against a gallery"""

import pathlib
import sys

import click
import pandas

from scrreid import distance, pipeline, quantizer, ranking
from scrreid.cli import common


DEFAULTS = {
    'pipeline': 'exact',
    'ranker': None,
    'topk': 10,
    'bits': None,
    'seed': 0,
}

_FILE = click.Path(exists=True, dir_okay=False, path_type=pathlib.Path)


def results_frame(results, gallery):
    """Returns one row per (query, rank) of the RankResult list"""
    records = []
    for result in results:
        for rank, (index, value) in enumerate(
                zip(result.order, result.distances), start=1):
            records.append({
                'query': result.query_index,
                'rank': rank,
                'gallery_index': int(index),
                'person_id': int(gallery.person_ids[index]),
                'camera_id': int(gallery.camera_ids[index]),
                'distance': value})
    return pandas.DataFrame(
        records, columns=[
            'query', 'rank', 'gallery_index', 'person_id', 'camera_id',
            'distance'])


@click.command()
@click.argument('queries', type=_FILE)
@click.option(
    '-g', '--gallery', required=True, type=_FILE,
    help='Gallery features (.fvs)')
@click.option(
    '--codebook', type=_FILE, help='Codebook (.cbk), required by scr/intscr')
@click.option('--codes', type=_FILE, help='Gallery codes (.pqc)')
@click.option('--lut', type=_FILE, help='Look-up table (.lut)')
@click.option(
    '--params', type=_FILE, help='Embed the features with trained params first')
@click.option(
    '-p', '--pipeline', 'pipeline_name',
    type=click.Choice([p.name for p in pipeline.Pipeline]),
    help='Distance pipeline [exact]')
@click.option(
    '--ranker', type=click.Choice([a.name for a in ranking.Algorithm]),
    help='Ranking algorithm [pipeline default]')
@click.option('-k', '--topk', type=int, help='Results per query [10]')
@click.option('--bits', type=int, help='Hamming code length [dimension]')
@click.option('--seed', type=int, help='Seed of the hamming projection [0]')
@click.option(
    '-o', '--output', type=pathlib.Path,
    help='Output CSV file [standard output]')
@common.config_option
@common.handle_errors
def search(queries, gallery, codebook, codes, lut, params, output,
           config_file, pipeline_name, **flags):
    """Rank the QUERIES (.fvs) against a gallery"""
    options = common.settings(
        DEFAULTS, config_file, pipeline=pipeline_name, **flags)
    log = sys.stderr if output is None else sys.stdout

    query_set = common.load_features(queries, params, stream=log)
    gallery_set = common.load_features(gallery, params, stream=log)

    searcher = pipeline.Searcher(
        gallery_set, options['pipeline'],
        codebook=quantizer.load_codebook(codebook) if codebook else None,
        codes=quantizer.load_codes(codes) if codes else None,
        lut=distance.load_lut(lut) if lut else None,
        num_bits=options['bits'], rng_seed=options['seed'],
        algorithm=options['ranker'])
    print(f'  > pipeline {searcher.pipeline.name} '
          f'({searcher.code_length_bits} bits per item, '
          f'{searcher.algorithm.name} sort)', file=log)

    topk = min(options['topk'], gallery_set.size)
    frame = results_frame(searcher.search(query_set, topk), gallery_set)

    if output is None:
        frame.to_csv(sys.stdout, index=False, float_format='%.6g')
    else:
        common.write_csv(
            frame, common.prepare_output(output), float_format='%.6g')
