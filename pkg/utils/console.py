"""
Console helpers shared by the fairfl library and scripts
Colored [TAG] log lines, elapsed time formatting
"""
import logging
import os
import sys

#
# Console text coloring
#

try:
    import colorama
    from colorama import Fore, Style
    colorama.init()

    FOREGROUND_GREEN = Fore.GREEN
    FOREGROUND_INTENSE_CYAN = Fore.CYAN + Style.BRIGHT
    FOREGROUND_INTENSE_RED = Fore.RED + Style.BRIGHT
    FOREGROUND_INTENSE_YELLOW = Fore.YELLOW + Style.BRIGHT
    RESET_COLORS = Style.RESET_ALL

except ImportError:
    # Fallback if colorama not available
    FOREGROUND_GREEN = ""
    FOREGROUND_INTENSE_CYAN = ""
    FOREGROUND_INTENSE_RED = ""
    FOREGROUND_INTENSE_YELLOW = ""
    RESET_COLORS = ""

LEVEL_COLORS = {
    logging.DEBUG: FOREGROUND_INTENSE_CYAN,
    logging.INFO: "",
    logging.WARNING: FOREGROUND_INTENSE_YELLOW,
    logging.ERROR: FOREGROUND_INTENSE_RED,
    logging.CRITICAL: FOREGROUND_INTENSE_RED,
}

LOG_LEVEL_ENV = "FOCUS_FL_LOG_LEVEL"
_forced_level = None


def print_color(print_string, color):
    print(color + print_string + RESET_COLORS)


def print_ok(print_string):
    """Green [OK] line, used by scripts for pass verdicts"""
    print_color(f"[OK] {print_string}", FOREGROUND_GREEN)


#
# Logging
#

class TagFormatter(logging.Formatter):
    """Renders records as '[TAG] message', colored by level"""

    def __init__(self, tag, use_color=True):
        super().__init__()
        self.tag = tag
        self.use_color = use_color

    def format(self, record):
        message = record.getMessage()
        if record.exc_info:
            message = message + "\n" + self.formatException(record.exc_info)
        line = f"[{self.tag}] {message}"
        color = LEVEL_COLORS.get(record.levelno, "") if self.use_color else ""
        if color:
            return color + line + RESET_COLORS
        return line


def _resolve_level():
    if _forced_level is not None:
        return _forced_level
    name = os.environ.get(LOG_LEVEL_ENV, "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def get_logger(tag):
    """
    Get the logger for one part of the simulator.

    Args:
        tag: Short name shown in brackets, e.g. 'FOCUS' or 'FedAvg'

    Returns:
        logging.Logger named fairfl.<tag> with a single stderr handler
    """
    logger = logging.getLogger(f"fairfl.{tag}")
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(TagFormatter(tag, use_color=sys.stderr.isatty()))
        logger.addHandler(handler)
        logger.setLevel(_resolve_level())
        # keep records out of the root logger so lines are not printed twice
        logger.propagate = False
    return logger


def set_verbosity(verbose):
    """Switch every fairfl logger to DEBUG (verbose) or back to the env level"""
    global _forced_level
    _forced_level = logging.DEBUG if verbose else None
    level = _resolve_level()
    for name, logger in logging.Logger.manager.loggerDict.items():
        if name.startswith("fairfl.") and isinstance(logger, logging.Logger):
            logger.setLevel(level)


#
# Time
#

# duration in seconds, return elapsed time in hh:mm:ss
def format_elapsed(duration):
    e = int(duration)
    return '{:02d}:{:02d}:{:02d}'.format(e // 3600, (e % 3600 // 60), e % 60)
