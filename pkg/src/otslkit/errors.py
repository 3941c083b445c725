"""Exception hierarchy shared by all otslkit modules."""


class OtslError(Exception):
    """Base class for every error raised by otslkit."""


class UnknownToken(OtslError):
    def __init__(self, position: int, character: str):
        self.position = position
        self.character = character
        super().__init__(f"unknown OTSL token {character!r} at position {position}")


class LengthMismatch(OtslError):
    pass


class InvalidStructure(OtslError):
    def __init__(self, violation):
        self.violation = violation
        super().__init__(str(violation))


class InvalidMatrix(InvalidStructure):
    pass


class BadGrid(OtslError):
    pass


class MalformedHtml(OtslError):
    pass


class InconsistentGeometry(OtslError):
    pass


class ParseError(OtslError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateId(OtslError):
    def __init__(self, record_id: str, line: int):
        self.record_id = record_id
        self.line = line
        super().__init__(f"line {line}: duplicate id {record_id!r}")


class MissingField(OtslError):
    def __init__(self, record_id: str, field: str):
        self.record_id = record_id
        self.field = field
        super().__init__(f"record {record_id!r} has no usable {field!r}")


class ZeroSamples(OtslError):
    pass


class ConfigError(OtslError):
    pass
