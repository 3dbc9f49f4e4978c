"""Exception hierarchy shared by all pipeline stages."""


class MonitorError(Exception):
    """Base class for every error raised by tourmonitor."""


class ValidationError(MonitorError):
    """Input data or configuration violates a documented contract."""


class FetchFailed(MonitorError):
    def __init__(self, url: str, attempts: int, cause: BaseException | None = None):
        super().__init__(f"fetch of {url} failed after {attempts} attempt(s): {cause}")
        self.url = url
        self.attempts = attempts
        self.cause = cause


class PolicyRefused(MonitorError):
    def __init__(self, url: str, reason: str = "disallowed by robots.txt"):
        super().__init__(f"{url}: {reason}")
        self.url = url


class StoreError(MonitorError):
    pass


class IntegrityError(StoreError):
    pass


class SnapshotNotFound(MonitorError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class ParseError(ValidationError):
    def __init__(self, field: str, selector: str, detail: str = "not found"):
        super().__init__(f"field {field!r} ({selector}): {detail}")
        self.field = field
        self.selector = selector


class ConversionError(ValidationError):
    pass


class GeometryError(ValidationError):
    pass


class UndefinedCorrelation(MonitorError, ValueError):
    pass


class StageError(MonitorError):
    def __init__(self, stage: str, path: str | None, cause: BaseException):
        where = f" [{path}]" if path else ""
        super().__init__(f"stage {stage!r} failed{where}: {cause}")
        self.stage = stage
        self.path = path
        self.cause = cause
