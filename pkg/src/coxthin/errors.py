"""Exception hierarchy shared by every module."""


class CoxthinError(Exception):
    """Base class for all library errors."""


class ParameterError(CoxthinError, ValueError):
    """A model or sampler parameter is outside its admissible range."""


class DomainError(CoxthinError, ValueError):
    """A location lies outside the domain it is declared on."""


class ContractViolationError(CoxthinError, ValueError):
    """A caller-supplied function broke its documented contract."""


class StructureError(CoxthinError, ValueError):
    """A pattern is missing fields the operation needs."""


class SamplingError(CoxthinError, RuntimeError):
    """A sampler gave up (e.g. a rejection loop hit its iteration cap)."""


class SizeError(CoxthinError, ValueError):
    """A requested computation exceeds a memory or combinatorial guard."""


class DataFormatError(CoxthinError, ValueError):
    """An input file is malformed; ``line`` is the 1-based offending line when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
