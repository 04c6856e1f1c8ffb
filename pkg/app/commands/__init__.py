"""
Subcommands of the hifinet command line; each module exposes register()
and run(args) -> exit code
"""
import os
import sys

sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..', 'scripts'))
from errors import HiFiNetError, NumericError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class CommandError(Exception):
    """A command failure with the process exit code and a one-line detail"""

    def __init__(self, exit_code: int, detail: str):
        self.exit_code = exit_code
        self.detail = detail
        super().__init__(detail)


def command_error(action: str, err: Exception) -> CommandError:
    """Numeric failures exit 1; bad input, config and usage exit 2"""
    if isinstance(err, NumericError):
        return CommandError(EXIT_FAILED, f"{action} failed: {err}")
    if isinstance(err, (HiFiNetError, OSError, ValueError)):
        return CommandError(EXIT_USAGE, f"{action} failed: {err}")
    return CommandError(EXIT_FAILED, f"{action} failed: {type(err).__name__}: {err}")
