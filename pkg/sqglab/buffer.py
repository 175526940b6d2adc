"""Read cursor over snapshot bytes"""
from sqglab.exception import BufferError


class ReadBuffer:
    """
    Sequential reader used by the snapshot deserializers. Wraps the payload in a
    memoryview so reads don't copy.
    """

    def __init__(self, data):
        self._buf = memoryview(data)
        self._size = len(self._buf)
        self._pos = 0

    @property
    def remaining(self):
        """Read only property. Number of unread bytes"""
        return self._size - self._pos

    @property
    def position(self):
        return self._pos

    def read(self, num):
        if num < 0:
            raise BufferError('Negative read size {}'.format(num))
        if self._pos + num > self._size:
            raise BufferError(
                'Not enough bytes to read: wanted {}, have {}'.format(num, self.remaining))
        result = self._buf[self._pos:self._pos + num]
        self._pos += num
        return result

    def read_rest(self):
        return self.read(self.remaining)
