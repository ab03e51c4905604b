"""Exception hierarchy shared by all fisdim modules."""

from __future__ import annotations


class FisdimError(Exception):
    """Base class for every error raised by the package."""

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class ParseError(FisdimError):
    """Syntax error in an expression string.

    ``offset`` is the 1-based byte position of the offending token; end of
    input is reported at ``len(text) + 1``.
    """

    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        detail = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(offset=self.offset, expected=self.expected)
        return d


class DomainError(FisdimError):
    """Evaluation left the domain of an operator (sqrt < 0, x/0, ...)."""


class ValidationError(FisdimError):
    """A standing hypothesis on the IFS data failed."""

    def __init__(self, message: str, failures: list[dict] | None = None):
        self.failures = failures or []
        super().__init__(message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["failures"] = self.failures
        return d


class ConsistencyError(FisdimError):
    """Grid values reached along two routes disagree."""


class ResolutionError(FisdimError):
    """The sampled grid is too coarse for the requested cell level."""


class SizeGuardError(FisdimError):
    """A requested matrix or cell enumeration exceeds the size guard."""


class ConfigError(FisdimError):
    """Configuration file failed to load; ``errors`` lists (field, reason)."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{f}: {r}" for f, r in self.errors))

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["errors"] = [{"field": f, "reason": r} for f, r in self.errors]
        return d
