"""Custom exceptions for the quantized retrieval engine"""


def _print_sublist(entries, num=3):
    """Returns a string containing the `n` first elements of `entries`"""
    entries = list(entries)
    if len(entries) <= num:
        return '[' + ', '.join(str(e) for e in entries) + ']'

    return (
        '[' + ', '.join(str(e) for e in entries[:num]) +
        f', ...] and {len(entries) - num} more')


class ValidationError(Exception):
    """Raised when detecting invalid inputs, configurations or artifacts"""


class ConfigurationError(ValidationError):
    """Raised on inconsistent sizes (M, C, dimensions, shapes)"""


class ArgumentError(ValidationError, ValueError):
    """Raised when a scalar argument is out of its valid range"""


class ContractError(ValidationError):
    """Raised when a ranking precondition is violated"""


class CorruptionError(ValidationError):
    """Raised when a code or a table holds an impossible value"""


class FormatError(ValidationError):
    """Raised when detecting a bad format in a binary file"""
    def __init__(self, file, offset, message):
        super().__init__(message)
        self._file = file
        self._offset = offset

    @property
    def offset(self):
        return self._offset

    def __str__(self):
        return (
            f'bad format (file {self._file}, byte {self._offset}): ' +
            super().__str__())


class ProtocolError(ValidationError):
    """Raised when a dataset does not satisfy an evaluation protocol"""
    def __init__(self, message, offending=None):
        super().__init__(message)
        self._offending = sorted(offending) if offending is not None else []

    @property
    def offending(self):
        return self._offending

    def __str__(self):
        message = super().__str__()
        if self._offending:
            message += f': {_print_sublist(self._offending)}'
        return message


class MismatchError(ValidationError):
    """Raised when detecting a mismatch between two sets"""
    def __init__(self, message, expected, observed):
        super().__init__()
        self._message = message

        expected = set(expected)
        observed = set(observed)

        missing = sorted(expected - observed, key=str)
        extra = sorted(observed - expected, key=str)

        if missing or extra:
            self._message += ': '
        if missing:
            self._message += f'missing {_print_sublist(missing)}'
        if missing and extra:
            self._message += ', '
        if extra:
            self._message += f'extra {_print_sublist(extra)}'

    def __str__(self):
        return self._message


class TrainingError(Exception):
    """Raised when the training loop diverges to non-finite parameters"""
