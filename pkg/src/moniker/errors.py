"""Exception hierarchy for Moniker.

Every error carries the process exit code the CLI uses when the error
reaches the top level.
"""


class MonikerError(Exception):
    """Base class for all Moniker errors."""

    exit_code = 1


class ConfigError(MonikerError):
    """Raised when configuration is missing, malformed, or inconsistent."""

    exit_code = 2


class TemplateError(ConfigError):
    """Raised when a prompt template cannot be rendered."""

    pass


class BackendError(MonikerError):
    """Raised when the scoring backend cannot produce scores."""

    exit_code = 3


class TransportError(BackendError):
    """Network failure or timeout. Safe to retry."""

    pass


class ProtocolError(BackendError):
    """The backend rejected the request or answered out of contract."""

    pass


class DesignError(MonikerError):
    """Raised when an experimental design or dataset shape is invalid."""

    exit_code = 4


class ShortfallError(MonikerError):
    """Raised when too few gender-surname pairs qualify for a group."""

    exit_code = 5

    def __init__(self, deficits: dict[tuple[str, str], int]) -> None:
        self.deficits = deficits
        detail = ", ".join(
            f"{race}/{gender} short by {missing}"
            for (race, gender), missing in sorted(deficits.items())
        )
        super().__init__(f"Not enough qualifying pairs: {detail}")


class CensusError(MonikerError):
    """Base class for census data problems."""

    exit_code = 6


class CensusSchemaError(CensusError):
    """The census file header does not match the expected columns."""

    pass


class CensusParseError(CensusError):
    """A census row could not be parsed."""

    def __init__(self, line: int, message: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


class DataIntegrityError(CensusError):
    """Known percentages of a record exceed 100%."""

    pass


class DegenerateRecordError(CensusError):
    """All five race percentages of a record are zero."""

    pass


class NumericError(MonikerError):
    """Raised on non-finite scores or values."""

    exit_code = 7


class IncompleteRunError(MonikerError):
    """Raised when analysis is asked to use an incomplete run."""

    exit_code = 8


class RunLockedError(MonikerError):
    """Raised when another invocation holds the run directory."""

    exit_code = 9
