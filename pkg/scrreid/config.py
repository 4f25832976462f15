"""Plain-text key=value configuration files merged with command-line flags"""

import numbers

import yaml

from scrreid.exception import ConfigurationError, FormatError, MismatchError


def _parse_value(value):
    # yaml 1.1 reads '1e6' as a string
    typed = yaml.safe_load(value) if value else None
    if isinstance(typed, str):
        try:
            number = float(typed)
        except ValueError:
            return typed
        if number.is_integer() and 'e' in typed.lower():
            return int(number)
        return number
    return typed


def load_config(path):
    """Returns the entries of a key=value configuration file as a dict

    Blank lines and text after a '#' are ignored, values are typed as YAML
    scalars (int, float, bool, string) and keys may use dashes or
    underscores.

    Raises
    ------
    FormatError
        If a line is not a key=value pair or a key is duplicated.
    OSError
        If the file cannot be read.

    """
    entries = {}
    offset = 0
    with open(path, 'r') as fp:
        for line in fp:
            content = line.split('#', 1)[0].strip()
            if content:
                key, sep, value = content.partition('=')
                key = key.strip().replace('-', '_')
                if not sep or not key:
                    raise FormatError(
                        path, offset, f'not a key=value line: {content}')
                if key in entries:
                    raise FormatError(path, offset, f'duplicated key {key}')
                try:
                    entries[key] = _parse_value(value.strip())
                except yaml.YAMLError:
                    raise FormatError(path, offset, f'invalid value for {key}')
            offset += len(line.encode())
    return entries


def _coerce(name, value, default):
    if value is None or default is None:
        return value

    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f'{name} must be a boolean, it is {value}')
        return value

    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            if not (isinstance(value, float) and value.is_integer()):
                raise ConfigurationError(
                    f'{name} must be an integer, it is {value}')
        return int(value)

    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            raise ConfigurationError(f'{name} must be a number, it is {value}')
        return float(value)

    return type(default)(value)


def merge_config(defaults, file_values=None, flags=None):
    """Returns the configuration: flags override file, file overrides defaults

    Flags set to None are considered as not given. Values are converted to the
    type of their default.

    Raises
    ------
    MismatchError
        If the file or the flags hold keys with no default.
    ConfigurationError
        If a value does not have the type of its default.

    """
    file_values = file_values or {}
    flags = {k: v for k, v in (flags or {}).items() if v is not None}

    unknown = (set(file_values) | set(flags)) - set(defaults)
    if unknown:
        raise MismatchError('unknown configuration keys', set(), unknown)

    merged = dict(defaults)
    merged.update(file_values)
    merged.update(flags)
    return {k: _coerce(k, v, defaults[k]) for k, v in merged.items()}
