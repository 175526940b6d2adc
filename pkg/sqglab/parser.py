"""Line parser for experiment configs. Same callback shape as a streaming protocol parser"""
from sqglab.exception import ConfigError


COMMENT = '#'


class ConfigParser:

    def __init__(self, handler):
        self._handler_on_section = getattr(handler, 'on_section', None)
        self._handler_on_item = getattr(handler, 'on_item', None)
        self._handler_on_complete = getattr(handler, 'on_complete', None)

    def feed_data(self, data):
        """
        Feed config text into the parser. ``[name]`` lines open a section, ``key = value``
        lines are items, ``#`` starts a comment
        """
        if isinstance(data, (bytes, bytearray)):
            data = data.decode('utf-8')
        for lineno, line in enumerate(data.splitlines(), start=1):
            line = line.split(COMMENT, 1)[0].strip()
            if not line:
                continue
            if line.startswith('['):
                if not line.endswith(']') or len(line) < 3:
                    raise ConfigError("Malformed section header '{}'".format(line), lineno)
                if self._handler_on_section:
                    self._handler_on_section(line[1:-1].strip(), lineno)
                continue
            key, sep, value = line.partition('=')
            key = key.strip()
            if not sep or not key:
                raise ConfigError("Expected 'key = value', got '{}'".format(line), lineno)
            if self._handler_on_item:
                self._handler_on_item(key, value.strip(), lineno)
        if self._handler_on_complete:
            self._handler_on_complete()
