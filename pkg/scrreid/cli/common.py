"""Helpers shared by the scrreid command-line programs"""

import functools
import pathlib
import sys

import click
from rich.console import Console
from rich.table import Table

from scrreid import config, features, trainer
from scrreid.exception import ValidationError


console = Console()


def handle_errors(command):
    """Maps errors raised by a command body to exit codes

    Validation errors exit with 2, I/O and other runtime failures with 1.
    Usage errors are handled by click before the body runs (exit 2).

    """
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            command(*args, **kwargs)
        except ValidationError as error:
            print(f'ERROR: {error}', file=sys.stderr)
            sys.exit(2)
        except click.ClickException:
            raise
        except Exception as error:
            print(f'ERROR: {error}', file=sys.stderr)
            sys.exit(1)
    return wrapper


def config_option(function):
    return click.option(
        '--config', 'config_file', type=click.Path(
            exists=True, dir_okay=False, path_type=pathlib.Path),
        help='key=value file of options, overridden by flags')(function)


def settings(defaults, config_file, **flags):
    """Returns the options merged from defaults, `config_file` and flags"""
    file_values = config.load_config(config_file) if config_file else None
    return config.merge_config(defaults, file_values, flags)


def parse_list(value, cast=str):
    """Parses a comma separated list (or a single scalar from a config file)"""
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [v.strip() for v in str(value).split(',') if v.strip()]

    try:
        if cast is int:
            return [int(float(v)) for v in items]
        return [cast(v) for v in items]
    except ValueError:
        raise ValidationError(f'invalid list: {value}')


def prepare_output(path):
    """Creates the parent directory of `path` and returns it as a Path"""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(frame, filename, float_format='%.4f'):
    frame.to_csv(filename, index=False, float_format=float_format)
    print(f'  > Wrote {filename}')


def print_table(frame, title=None, spec='.4f'):
    table = Table(title=title, show_header=True, header_style='bold magenta')
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*(
            f'{v:{spec}}' if isinstance(v, float) else str(v) for v in row))
    console.print(table)


def load_features(path, params_file=None, stream=None):
    """Loads a feature set, projected by trained params when given"""
    stream = stream or sys.stdout
    loaded = features.load_features(path)
    print(f'  > {path}: N={loaded.size}, D={loaded.dim}, '
          f'ids={loaded.num_identities}', file=stream)
    if params_file:
        loaded = trainer.load_params(params_file).embed(loaded)
        print(f'  > embedded with {params_file}: D={loaded.dim}', file=stream)
    return loaded
