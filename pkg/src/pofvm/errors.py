"""Exception types shared across the package."""


class PofError(Exception):
    """Base error. ``code`` is a stable upper-case tag (``OUT_OF_RANGE``, ``TABLE_FULL``...)."""

    def __init__(self, code: str, message: str = "") -> None:
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class BitError(PofError):
    pass


class TableError(PofError):
    pass


class CompileError(PofError):
    pass


class AsmError(PofError):
    """Parse failure carrying a source position."""

    def __init__(self, code: str, message: str, line: int = 0, col: int = 0, filename: str = "<input>") -> None:
        self.line = line
        self.col = col
        self.filename = filename
        super().__init__(code, f"{filename}:{line}:{col}: {message}")


class CodecError(PofError):
    def __init__(self, code: str, message: str = "", offset: int = 0, section: str = "") -> None:
        self.offset = offset
        self.section = section
        super().__init__(code, message)


class RuntimeFault(PofError):
    pass
