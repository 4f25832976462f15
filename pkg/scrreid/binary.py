"""Little-endian layouts shared by the .fvs, .cbk, .pqc and .lut files

Every artifact starts with a 4 bytes magic string followed by an unsigned
32-bit version number, then a fixed header described by a `struct` layout,
then one or several raw arrays.

"""

import pathlib
import struct

import numpy as np

from scrreid.exception import FormatError


VERSION = 1


def write_artifact(path, magic, layout, header, arrays):
    """Writes `magic`, the version, the `header` fields and the `arrays`

    Parameters
    ----------
    path : path
        The file to write, overwritten if existing.
    magic : bytes
        The 4 bytes identifying the file type.
    layout : str
        The `struct` layout of the header fields (without byte order).
    header : sequence
        The values of the header fields.
    arrays : sequence of (numpy.ndarray, dtype)
        The payload, each array is converted to the little-endian `dtype`.

    Raises
    ------
    OSError
        If the file cannot be written.

    """
    chunks = [magic, struct.pack('<I' + layout, VERSION, *header)]
    chunks += [np.ascontiguousarray(a, dtype=dtype).tobytes()
               for a, dtype in arrays]
    # an empty path resolves to '.' and fails with IsADirectoryError
    pathlib.Path(path).write_bytes(b''.join(chunks))


class Reader:
    """Sequential reader over the bytes of a binary artifact"""
    def __init__(self, path):
        self.path = pathlib.Path(path)
        self.buffer = self.path.read_bytes()
        self.offset = 0

    def _error(self, message, offset=None):
        return FormatError(
            self.path, self.offset if offset is None else offset, message)

    def header(self, magic, layout):
        """Checks magic and version, returns the unpacked header fields"""
        if self.buffer[:4] != magic:
            raise self._error(
                f'bad magic {self.buffer[:4]!r}, expected {magic!r}', 0)
        self.offset = 4

        version, = self.unpack('I')
        if version != VERSION:
            raise self._error(
                f'unsupported version {version}, expected {VERSION}',
                self.offset - 4)

        return self.unpack(layout)

    def unpack(self, layout):
        layout = '<' + layout
        size = struct.calcsize(layout)
        if self.offset + size > len(self.buffer):
            raise self._error(
                f'truncated header: need {size} bytes, '
                f'{len(self.buffer) - self.offset} left')

        values = struct.unpack_from(layout, self.buffer, self.offset)
        self.offset += size
        return values

    def array(self, dtype, count, what='payload'):
        """Returns the next `count` elements of type `dtype` as a new array"""
        dtype = np.dtype(dtype)
        size = dtype.itemsize * count
        left = len(self.buffer) - self.offset
        if size > left:
            raise self._error(
                f'truncated {what}: need {size} bytes, {left} left')

        array = np.frombuffer(
            self.buffer, dtype=dtype, count=count, offset=self.offset).copy()
        self.offset += size
        return array

    def finite(self, array, start, what='payload'):
        """Raises a FormatError located on the first non-finite value"""
        bad = np.flatnonzero(~np.isfinite(array))
        if bad.size:
            raise self._error(
                f'non-finite value in {what}',
                start + int(bad[0]) * array.dtype.itemsize)

    def finish(self):
        if self.offset != len(self.buffer):
            raise self._error(
                f'{len(self.buffer) - self.offset} unexpected trailing bytes')
