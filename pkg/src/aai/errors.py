"""Exception hierarchy.

Every error carries a short ``category`` string and a process ``exit_code`` so
the CLI can report failures as ``error[<category>]: <message>`` and exit with a
code that identifies the failure class.
"""


class AAIError(Exception):
    category = "error"
    exit_code = 1


class ShapeError(AAIError, ValueError):
    category = "shape"
    exit_code = 3


class DegenerateRowError(AAIError, ValueError):
    category = "degenerate-row"
    exit_code = 3


class DegenerateInputError(AAIError, ValueError):
    category = "degenerate-input"
    exit_code = 3


class BoundsError(AAIError, IndexError):
    category = "bounds"
    exit_code = 3


class UnclassifiableError(AAIError, ValueError):
    category = "unclassifiable"
    exit_code = 3


class ConfigError(AAIError, ValueError):
    category = "config"
    exit_code = 4


class LengthError(AAIError, ValueError):
    category = "length"
    exit_code = 4


class TraceFormatError(AAIError, ValueError):
    category = "trace-format"
    exit_code = 5


class IncompleteTraceError(TraceFormatError):
    category = "incomplete-trace"


class AnnotationError(AAIError, ValueError):
    category = "annotation"
    exit_code = 6


class RenderError(AAIError, ValueError):
    category = "render"
    exit_code = 6


class GenerationError(AAIError, RuntimeError):
    category = "generation"
    exit_code = 7


class InconsistentWorldError(AAIError, ValueError):
    category = "inconsistent-world"
    exit_code = 7


class LoadError(AAIError, ValueError):
    category = "load"
    exit_code = 8

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(LoadError):
    category = "schema"


class CoverageError(AAIError, KeyError):
    category = "coverage"
    exit_code = 9

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EmptyInputError(AAIError, ValueError):
    category = "empty-input"
    exit_code = 9
