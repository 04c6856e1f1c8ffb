"""
Exception hierarchy shared by the analysis modules
"""
from typing import Optional


class HiFiNetError(Exception):
    """Base class for every error raised by the toolkit"""


class ShapeError(HiFiNetError, ValueError):
    """Operand dimensions do not agree"""


class ContractError(HiFiNetError, ValueError):
    """A documented precondition was violated"""


class ConfigError(HiFiNetError, ValueError):
    """Configuration values are invalid or inconsistent"""


class NetworkLoadError(HiFiNetError, ValueError):
    """An input file could not be parsed or validated"""


class NumericError(HiFiNetError, ArithmeticError):
    """Non-finite values or a numerical routine that failed to converge"""


class DivergenceError(NumericError):
    """Training produced a non-finite total loss"""

    def __init__(self, epoch: int, detail: Optional[str] = None):
        self.epoch = epoch
        super().__init__(detail or f"total loss became non-finite at epoch {epoch}")


class EvaluationError(HiFiNetError, ValueError):
    """A metric or classifier is undefined for the given input"""


class CheckpointError(HiFiNetError, ValueError):
    """A checkpoint container is malformed or from an unknown version"""
