"""Buffer tests"""
import pytest

from sqglab.buffer import ReadBuffer
from sqglab.exception import BufferError


def test_sequential_reads():
    rb = ReadBuffer(b'abcdefgh')
    assert bytes(rb.read(3)) == b'abc'
    assert rb.position == 3
    assert rb.remaining == 5
    assert bytes(rb.read_rest()) == b'defgh'
    assert rb.remaining == 0


def test_short_read():
    rb = ReadBuffer(b'abc')
    rb.read(2)
    with pytest.raises(BufferError):
        rb.read(2)


def test_negative_read():
    with pytest.raises(BufferError):
        ReadBuffer(b'abc').read(-1)
