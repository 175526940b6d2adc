import numpy as np
import pytest

from sqglab import extension, messaging, spectral
from sqglab.exception import BufferError, SnapshotError, SnapshotVersionError


def get_hexbytes(packed):
    return ''.join(['{:02x}'.format(b) for b in packed])


@pytest.fixture(scope='function')
def line_field():
    grid = spectral.Grid((8,), 1.0)
    yield spectral.PhysicalField(grid, np.arange(8, dtype=np.float64), 0.5)


def test_pack_field_header(line_field):
    output = messaging.serialize_field(line_field)
    expected = """53 51 47 46  01 00 00 00  01 00 00 00
                  08 00 00 00  00 00 00 00
                  00 00 00 00  00 00 f0 3f
                  00 00 00 00  00 00 e0 3f""".replace(' ', '').replace('\n', '')
    assert get_hexbytes(output[:36]) == expected
    assert len(output) == 36 + 8 * 8


def test_pack_field_values_row_major():
    grid = spectral.Grid((8, 8))
    values = np.arange(64, dtype=np.float64).reshape(8, 8)
    output = messaging.serialize_field(spectral.PhysicalField(grid, values))
    payload = output[-64 * 8:]
    assert np.array_equal(np.frombuffer(payload, dtype='<f8'), values.ravel())


def test_unpack_field(line_field):
    field = messaging.deserialize_field(messaging.serialize_field(line_field))
    assert field.grid == line_field.grid
    assert field.time_tag == 0.5
    assert np.array_equal(field.values, line_field.values)


def test_missing_time_tag_is_nan(line_field):
    output = messaging.serialize_field(line_field._replace(time_tag=None))
    assert get_hexbytes(output[28:36]) == '000000000000f87f'
    assert messaging.deserialize_field(output).time_tag is None


def test_bad_magic(line_field):
    output = b'XXXX' + messaging.serialize_field(line_field)[4:]
    with pytest.raises(SnapshotError):
        messaging.deserialize_snapshot(output)
    with pytest.raises(SnapshotError):
        messaging.deserialize_field(output)


def test_bad_version(line_field):
    output = bytearray(messaging.serialize_field(line_field))
    output[4] = 2
    with pytest.raises(SnapshotVersionError):
        messaging.deserialize_field(bytes(output))


def test_truncated(line_field):
    output = messaging.serialize_field(line_field)
    with pytest.raises(SnapshotError):
        messaging.deserialize_field(output[:-8])
    with pytest.raises(BufferError):
        messaging.deserialize_field(output[:20])


def test_bad_grid_in_header(line_field):
    output = bytearray(messaging.serialize_field(line_field))
    output[12] = 12
    with pytest.raises(SnapshotError):
        messaging.deserialize_field(bytes(output))


def test_extension_snapshot(line_field):
    ext = extension.harmonic_extension(line_field, [0.0, 0.1, 0.5])
    output = messaging.serialize_extension(ext)
    assert output[:4] == messaging.MAGIC_EXTENSION
    assert messaging.snapshot_kind(output) == messaging.SnapshotKind.EXTENSION
    back = messaging.deserialize_snapshot(output)
    assert np.array_equal(back.z_levels, ext.z_levels)
    assert np.array_equal(back.values, ext.values)
    with pytest.raises(SnapshotError):
        messaging.deserialize_field(output)


def test_write_and_read(tmp_path, line_field):
    path = str(tmp_path / 'theta.sqgf')
    size = messaging.write_snapshot(path, line_field)
    assert size == 36 + 64
    field = messaging.read_snapshot(path)
    assert np.array_equal(field.values, line_field.values)
