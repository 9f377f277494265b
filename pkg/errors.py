# errors.py

from typing import List, Optional


class ISmallNetError(Exception):
    """Base class for every error raised by this package."""

    exit_code: int = 1


class ConfigError(ISmallNetError, ValueError):
    exit_code = 2


class LoadError(ISmallNetError, FileNotFoundError):
    """A dataset file is missing or unreadable. Always names the sample id."""

    exit_code = 2

    def __init__(self, sample_id: str, message: str):
        super().__init__(f"[{sample_id}] {message}")
        self.sample_id = sample_id


class DataError(ISmallNetError, ValueError):
    exit_code = 2


class SynthesisError(ISmallNetError, RuntimeError):
    exit_code = 1


class DomainError(ISmallNetError, ValueError):
    """A mathematical precondition does not hold (empty foreground, zero variance, ...)."""

    exit_code = 1


class ShapeError(ISmallNetError, ValueError):
    exit_code = 1


class TrainingError(ISmallNetError, RuntimeError):
    exit_code = 1

    def __init__(self, message: str, epoch: int, step: int, lr: float):
        super().__init__(f"{message} (epoch={epoch}, step={step}, lr={lr:.6g})")
        self.epoch = epoch
        self.step = step
        self.lr = lr


class ManifestMismatch(ISmallNetError):
    exit_code = 2

    def __init__(self, fields: List[str], message: Optional[str] = None):
        text = message or "checkpoint manifest does not match config"
        super().__init__(f"{text}: {', '.join(fields)}")
        self.fields = fields


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code (0 ok, 1 invariant, 2 usage/IO)."""
    if isinstance(exc, ISmallNetError):
        return exc.exit_code
    if isinstance(exc, AssertionError):
        return 1
    if isinstance(exc, (OSError, ValueError, KeyError)):
        return 2
    return 1
