import numpy as np
import pandas
import pytest
from click.testing import CliRunner

from scrreid import features, quantizer, trainer
from scrreid.cli.bench import bench
from scrreid.cli.build import build
from scrreid.cli.evaluate import evaluate
from scrreid.cli.gen import gen
from scrreid.cli.search import search
from scrreid.cli.sweep import sweep
from scrreid.cli.train import train


def run(command, *args):
    return CliRunner().invoke(command, [str(a) for a in args])


@pytest.fixture
def dataset(tmp_path):
    """Synthetic query and gallery files of 100 identities in dimension 16"""
    query, gallery = tmp_path / 'query.fvs', tmp_path / 'gallery.fvs'
    result = run(
        gen, '--ids', 100, '--per-id', 10, '--dim', 16, '--seed', 1,
        '--out', gallery, '--query-out', query)
    assert result.exit_code == 0, result.output
    return query, gallery


@pytest.fixture
def artifacts(tmp_path, dataset):
    def make(num_centroids, name):
        out_dir = tmp_path / name
        result = run(
            build, dataset[1], '-o', out_dir, '-M', 4, '-C', num_centroids)
        assert result.exit_code == 0, result.output
        return out_dir
    return make


class TestGen:
    def test_size(self, tmp_path):
        result = run(
            gen, '--ids', 50, '--per-id', 8, '--dim', 128, '--seed', 1,
            '--out', tmp_path / 'a.fvs')
        assert result.exit_code == 0, result.output
        assert features.load_features(tmp_path / 'a.fvs').size == 400

    def test_deterministic(self, tmp_path):
        for name in ('a.fvs', 'b.fvs'):
            run(gen, '--ids', 5, '--per-id', 4, '--dim', 8, '--seed', 3,
                '--out', tmp_path / name)
        assert (tmp_path / 'a.fvs').read_bytes() == \
            (tmp_path / 'b.fvs').read_bytes()

    def test_missing_out(self):
        result = run(gen, '--ids', 5)
        assert result.exit_code == 2
        assert '--out' in result.output

    def test_invalid_value(self, tmp_path):
        result = run(gen, '--ids', 0, '--out', tmp_path / 'a.fvs')
        assert result.exit_code == 2
        assert 'num_identities' in result.output

    def test_io_failure(self, tmp_path):
        (tmp_path / 'blocker').write_text('')
        result = run(gen, '--out', tmp_path / 'blocker' / 'a.fvs')
        assert result.exit_code == 1

    def test_config_file(self, tmp_path):
        (tmp_path / 'gen.cfg').write_text('ids = 5\nper-id = 2  # small\n')
        run(gen, '--config', tmp_path / 'gen.cfg', '--out', tmp_path / 'a.fvs')
        assert features.load_features(tmp_path / 'a.fvs').size == 10

        run(gen, '--config', tmp_path / 'gen.cfg', '--ids', 3,
            '--out', tmp_path / 'b.fvs')
        assert features.load_features(tmp_path / 'b.fvs').size == 6

    def test_unknown_config_key(self, tmp_path):
        (tmp_path / 'gen.cfg').write_text('identities = 5\n')
        result = run(
            gen, '--config', tmp_path / 'gen.cfg', '--out', tmp_path / 'a.fvs')
        assert result.exit_code == 2
        assert 'identities' in result.output


class TestTrain:
    def test_smoke(self, tmp_path):
        run(gen, '--ids', 20, '--per-id', 5, '--dim', 16,
            '--out', tmp_path / 'train.fvs')
        result = run(
            train, tmp_path / 'train.fvs', '-o', tmp_path / 'model',
            '--epochs', 1)
        assert result.exit_code == 0, result.output
        assert 'T=10' in result.output
        assert 'alpha=0.01' in result.output
        assert 'C=256' in result.output

        for name in ('codebook.cbk', 'params.npz'):
            assert (tmp_path / 'model' / name).is_file()
        lines = (tmp_path / 'model' / 'train_log.csv').read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == 'epoch,lr,ce,triplet,consistency,total,quant_error'

    def test_defaults_converge(self, tmp_path):
        run(gen, '--ids', 20, '--per-id', 10, '--dim', 32,
            '--out', tmp_path / 'train.fvs')
        result = run(
            train, tmp_path / 'train.fvs', '-o', tmp_path / 'model',
            '--epochs', 20, '-C', 16)
        assert result.exit_code == 0, result.output

        frame = pandas.read_csv(tmp_path / 'model' / 'train_log.csv')
        assert frame.total.iloc[-1] < frame.total.iloc[0]

    def test_diverging(self, tmp_path, monkeypatch):
        total_loss = trainer.total_loss

        def diverging(*args):
            breakdown, gradient = total_loss(*args)
            return breakdown, trainer.EmbedderParams(
                gradient.projection * np.nan, gradient.classifier)

        monkeypatch.setattr(trainer, 'total_loss', diverging)
        run(gen, '--ids', 10, '--per-id', 4, '--dim', 8,
            '--out', tmp_path / 'train.fvs')
        result = run(
            train, tmp_path / 'train.fvs', '-o', tmp_path / 'model',
            '--epochs', 1, '-M', 2, '-C', 4)
        assert result.exit_code == 1
        assert 'non-finite' in result.output

    def test_singleton_identity(self, tmp_path):
        features.save_features(
            features.FeatureSet(np.eye(4), [0, 0, 1, 2], [0, 1, 0, 0]),
            tmp_path / 'bad.fvs')
        result = run(
            train, tmp_path / 'bad.fvs', '-o', tmp_path / 'model',
            '--epochs', 1, '-M', 2, '-C', 2, '--batch-size', 8)
        assert result.exit_code == 2
        assert 'single instance' in result.output


class TestBuild:
    def test_artifacts(self, artifacts):
        out_dir = artifacts(256, 'a')
        for name in ('codebook.cbk', 'codes.pqc', 'scr.lut', 'intscr.lut'):
            assert (out_dir / name).is_file()
        codebook = quantizer.load_codebook(out_dir / 'codebook.cbk')
        assert codebook.code_bits == 32

    def test_code_length(self, dataset, tmp_path):
        result = run(build, dataset[1], '-o', tmp_path / 'a', '-C', 256)
        assert 'code length: 32 bits' in result.output

    def test_deterministic(self, artifacts):
        first = artifacts(16, 'a') / 'codebook.cbk'
        second = artifacts(16, 'b') / 'codebook.cbk'
        assert first.read_bytes() == second.read_bytes()

    def test_bad_subspaces(self, dataset, tmp_path):
        result = run(build, dataset[1], '-o', tmp_path / 'a', '-M', 5)
        assert result.exit_code == 2


class TestSearch:
    def test_topk(self, dataset, artifacts, tmp_path):
        out_dir = artifacts(16, 'a')
        result = run(
            search, dataset[0], '-g', dataset[1], '-p', 'intscr', '-k', 10,
            '--codebook', out_dir / 'codebook.cbk',
            '--codes', out_dir / 'codes.pqc',
            '--lut', out_dir / 'intscr.lut', '-o', tmp_path / 'ranks.csv')
        assert result.exit_code == 0, result.output

        frame = pandas.read_csv(tmp_path / 'ranks.csv')
        assert len(frame) == 10 * 300
        assert frame.groupby('query').size().eq(10).all()
        assert frame['rank'].tolist()[:10] == list(range(1, 11))

    def test_exact_finds_itself(self, dataset, tmp_path):
        result = run(
            search, dataset[1], '-g', dataset[1], '-k', 1,
            '-o', tmp_path / 'ranks.csv')
        assert result.exit_code == 0, result.output
        frame = pandas.read_csv(tmp_path / 'ranks.csv')
        assert (frame['query'] == frame['gallery_index']).all()
        assert (frame['distance'] == 0).all()

    def test_mismatch(self, dataset, artifacts, tmp_path):
        first, second = artifacts(16, 'a'), artifacts(8, 'b')
        result = run(
            search, dataset[0], '-g', dataset[1], '-p', 'intscr',
            '--codebook', first / 'codebook.cbk',
            '--codes', first / 'codes.pqc',
            '--lut', second / 'intscr.lut', '-o', tmp_path / 'ranks.csv')
        assert result.exit_code == 2
        assert 'mismatch' in result.output

    def test_missing_codebook(self, dataset, tmp_path):
        result = run(
            search, dataset[0], '-g', dataset[1], '-p', 'scr',
            '-o', tmp_path / 'ranks.csv')
        assert result.exit_code == 2

    def test_missing_file(self, dataset, tmp_path):
        result = run(search, tmp_path / 'missing.fvs', '-g', dataset[1])
        assert result.exit_code == 2


class TestEvaluate:
    def test_exact(self, dataset, tmp_path):
        result = run(evaluate, *dataset, '-o', tmp_path / 'eval.csv')
        assert result.exit_code == 0, result.output
        assert 'Retrieval accuracy' in result.output
        frame = pandas.read_csv(tmp_path / 'eval.csv')
        assert frame.rank_1.tolist() == [1.0]

    def test_pipelines(self, dataset, artifacts, tmp_path):
        out_dir = artifacts(16, 'a')
        result = run(
            evaluate, *dataset, '-p', 'exact,scr,intscr,hamming',
            '--codebook', out_dir / 'codebook.cbk', '--bits', 8,
            '-o', tmp_path / 'eval.csv')
        assert result.exit_code == 0, result.output
        frame = pandas.read_csv(tmp_path / 'eval.csv')
        assert frame.pipeline.tolist() == ['exact', 'scr', 'intscr', 'hamming']

    def test_distractors_with_codes(self, dataset, artifacts):
        out_dir = artifacts(16, 'a')
        result = run(
            evaluate, *dataset, '-p', 'scr', '--distractors', 10,
            '--codebook', out_dir / 'codebook.cbk',
            '--codes', out_dir / 'codes.pqc')
        assert result.exit_code == 2


def test_bench(tmp_path):
    result = run(
        bench, '--sizes', '2e2,5e2', '--dim', 32, '-C', 16, '--bits', 16,
        '--ids', 50, '--train-size', 200, '--kmeans-iters', 2,
        '-o', tmp_path / 'bench.csv', '--sort-output', tmp_path / 'sort.csv')
    assert result.exit_code == 0, result.output
    frame = pandas.read_csv(tmp_path / 'bench.csv')
    assert len(frame) == 8
    assert sorted(set(frame.gallery_size)) == [200, 500]
    assert len(pandas.read_csv(tmp_path / 'sort.csv')) == 2


def test_sweep(dataset, tmp_path):
    result = run(
        sweep, *dataset, '-M', 2, '-C', '4,8', '--seeds', 2, '--iters', 5,
        '-o', tmp_path / 'sweep.csv')
    assert result.exit_code == 0, result.output
    frame = pandas.read_csv(tmp_path / 'sweep.csv')
    assert len(frame) == 4
    assert set(frame.pipeline) == {'scr', 'intscr'}

    result = run(sweep, *dataset, '--seeds', 0)
    assert result.exit_code == 2
