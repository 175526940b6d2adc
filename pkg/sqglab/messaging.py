"""SQGF/SQGE snapshot format"""
import io
import struct

from enum import IntEnum

import numpy as np

from sqglab import buffer, extension, spectral
from sqglab.exception import SnapshotError, SnapshotVersionError


# constants
MAGIC_FIELD = b'SQGF'
MAGIC_EXTENSION = b'SQGE'
V1 = 1
MAGIC_SIZE = 4

# all little-endian
pack_header = struct.Struct('<4sII').pack
unpack_header = struct.Struct('<4sII').unpack
HEADER_SIZE = struct.calcsize('<4sII')

pack_double = struct.Struct('<d').pack
unpack_double = struct.Struct('<d').unpack
DOUBLE_SIZE = 8

pack_uint_64 = struct.Struct('<Q').pack
unpack_uint_64 = struct.Struct('<Q').unpack
UINT_64_SIZE = 8

# dims / lengths per spatial dimension
DIMS_STRUCTS = {n: struct.Struct('<{}Q'.format(n)) for n in (1, 2, 3)}
LENGTHS_STRUCTS = {n: struct.Struct('<{}d'.format(n)) for n in (1, 2, 3)}

FLOAT_DTYPE = np.dtype('<f8')


class SnapshotKind(IntEnum):
    FIELD = 0
    EXTENSION = 1


MAGICS = {
    MAGIC_FIELD: SnapshotKind.FIELD,
    MAGIC_EXTENSION: SnapshotKind.EXTENSION
}


def _pack_grid(grid, buf):
    n = grid.ndim
    buf.write(DIMS_STRUCTS[n].pack(*grid.dims))
    buf.write(LENGTHS_STRUCTS[n].pack(*grid.lengths))


def _unpack_grid(ndim, buf):
    if ndim not in DIMS_STRUCTS:
        raise SnapshotError('Unsupported spatial dimension {}'.format(ndim))
    dims_struct = DIMS_STRUCTS[ndim]
    lengths_struct = LENGTHS_STRUCTS[ndim]
    dims = dims_struct.unpack(buf.read(dims_struct.size))
    lengths = lengths_struct.unpack(buf.read(lengths_struct.size))
    try:
        return spectral.Grid(dims, lengths)
    except Exception as e:
        raise SnapshotError('Invalid grid in snapshot header: {}'.format(e)) from e


def _unpack_values(buf, count):
    nbytes = count * DOUBLE_SIZE
    if buf.remaining != nbytes:
        raise SnapshotError(
            'Expected {} bytes of values, found {}'.format(nbytes, buf.remaining))
    return np.frombuffer(buf.read(nbytes), dtype=FLOAT_DTYPE).astype(np.float64)


def _read_header(buf, expected):
    magic, version, ndim = unpack_header(buf.read(HEADER_SIZE))
    if magic not in MAGICS:
        raise SnapshotError("Bad magic bytes '{}'".format(bytes(magic)))
    if MAGICS[magic] != expected:
        raise SnapshotError("Expected {} snapshot, got magic '{}'".format(
            expected.name.lower(), magic.decode('ascii')))
    if version != V1:
        raise SnapshotVersionError('Unsupported snapshot version {}'.format(version))
    return ndim


def serialize_field(field, *, buf=None):
    """PhysicalField -> bytes. A missing time tag is written as NaN"""
    if buf is None:
        buf = io.BytesIO()
    grid = field.grid
    buf.write(pack_header(MAGIC_FIELD, V1, grid.ndim))
    _pack_grid(grid, buf)
    buf.write(pack_double(float('nan') if field.time_tag is None else field.time_tag))
    buf.write(np.ascontiguousarray(field.values, dtype=FLOAT_DTYPE).tobytes())
    return buf.getvalue()


def deserialize_field(data):
    buf = buffer.ReadBuffer(data)
    ndim = _read_header(buf, SnapshotKind.FIELD)
    grid = _unpack_grid(ndim, buf)
    time_tag, = unpack_double(buf.read(DOUBLE_SIZE))
    values = _unpack_values(buf, grid.npoints)
    return spectral.PhysicalField(grid, values, None if np.isnan(time_tag) else time_tag)


def serialize_extension(ext, *, buf=None):
    if buf is None:
        buf = io.BytesIO()
    grid = ext.grid
    buf.write(pack_header(MAGIC_EXTENSION, V1, grid.ndim))
    _pack_grid(grid, buf)
    buf.write(pack_uint_64(ext.z_levels.size))
    buf.write(np.ascontiguousarray(ext.z_levels, dtype=FLOAT_DTYPE).tobytes())
    buf.write(np.ascontiguousarray(ext.values, dtype=FLOAT_DTYPE).tobytes())
    return buf.getvalue()


def deserialize_extension(data):
    buf = buffer.ReadBuffer(data)
    ndim = _read_header(buf, SnapshotKind.EXTENSION)
    grid = _unpack_grid(ndim, buf)
    nz, = unpack_uint_64(buf.read(UINT_64_SIZE))
    z_bytes = buf.read(nz * DOUBLE_SIZE)
    z_levels = np.frombuffer(z_bytes, dtype=FLOAT_DTYPE).astype(np.float64)
    values = _unpack_values(buf, nz * grid.npoints)
    try:
        return extension.ExtensionField(grid, z_levels, values)
    except Exception as e:
        raise SnapshotError('Invalid extension snapshot: {}'.format(e)) from e


SERIALIZERS = {
    SnapshotKind.FIELD: serialize_field,
    SnapshotKind.EXTENSION: serialize_extension
}


DESERIALIZERS = {
    SnapshotKind.FIELD: deserialize_field,
    SnapshotKind.EXTENSION: deserialize_extension
}


def snapshot_kind(data):
    magic = bytes(data[:MAGIC_SIZE])
    try:
        return MAGICS[magic]
    except KeyError:
        raise SnapshotError("Bad magic bytes '{}'".format(magic))


def deserialize_snapshot(data):
    """Dispatch on the magic bytes"""
    return DESERIALIZERS[snapshot_kind(data)](data)


def write_snapshot(path, obj):
    kind = SnapshotKind.EXTENSION if hasattr(obj, 'z_levels') else SnapshotKind.FIELD
    data = SERIALIZERS[kind](obj)
    with open(path, 'wb') as f:
        f.write(data)
    return len(data)


def read_snapshot(path):
    with open(path, 'rb') as f:
        data = f.read()
    return deserialize_snapshot(data)
