from logging import (
    CRITICAL,
    DEBUG,
    ERROR,
    Formatter,
    getLogger,
    INFO,
    StreamHandler,
    WARNING,
)
from sys import stderr


def _ansi(code):
    def paint(s):
        return "\x1b[{}m{:s}\x1b[0m".format(code, s)
    return paint


grey = _ansi("30;1")
red = _ansi("31;1")
yellow = _ansi("33")
bright_yellow = _ansi("33;1")
cyan = _ansi("36")


LEVEL_COLOURS = {
    CRITICAL: red,
    ERROR: bright_yellow,
    WARNING: yellow,
    DEBUG: cyan,
}


def verbosity_level(count):
    """Map the number of ``-v`` flags to a logging level."""
    if count <= 0:
        return WARNING
    if count == 1:
        return INFO
    return DEBUG


class ColourFormatter(Formatter):

    def __init__(self, fmt, datefmt=None, colour=True):
        super().__init__(fmt, datefmt)
        self.colour = colour

    def format(self, record):
        s = super().format(record)
        if not self.colour:
            return s
        bits = s.split("  ", maxsplit=1)
        bits[0] = grey(bits[0])
        if len(bits) > 1:
            paint = LEVEL_COLOURS.get(record.levelno)
            if paint is not None:
                bits[1] = paint(bits[1])
        return "  ".join(bits)


class Watcher:
    """Attach a single console handler to the ``elife`` logger tree."""

    handlers = {}

    def __init__(self, logger_name):
        self.logger_name = logger_name
        self.logger = getLogger(self.logger_name)

    def watch(self, level=INFO, out=stderr):
        self.stop()
        colour = hasattr(out, "isatty") and out.isatty()
        handler = StreamHandler(out)
        handler.setFormatter(ColourFormatter(
            "%(asctime)s  %(name)s  %(message)s", "%H:%M:%S", colour=colour
        ))
        self.handlers[self.logger_name] = handler
        self.logger.addHandler(handler)
        self.logger.setLevel(level)

    def stop(self):
        handler = self.handlers.pop(self.logger_name, None)
        if handler is not None:
            self.logger.removeHandler(handler)


def watch(logger_name, level=INFO, out=stderr):
    """Quick wrapper for using the Watcher.

    :param logger_name: name of logger to watch
    :param level: minimum log level to show (default INFO)
    :param out: where to send output (default stderr, stdout carries results)
    :return: Watcher instance
    """
    watcher = Watcher(logger_name)
    watcher.watch(level, out)
    return watcher
