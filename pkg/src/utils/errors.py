class ExitCode:
    SUCCESS = 0   # Command finished
    USAGE = 1     # Bad flags, bad config file, invalid hyper-parameters
    DATA = 2      # Missing or malformed dataset, labels or weight file
    NUMERIC = 3   # NaN/Inf loss during training


class RipeLocError(Exception):
    """Base class for every error raised on purpose by this package."""

    exit_code = ExitCode.USAGE

    @property
    def kind(self) -> str:
        return self.__class__.__name__

    def error_line(self) -> str:
        """
        Format the machine-readable stderr line for this error.

        Returns:
            The line, without trailing newline
        """
        message = str(self).replace('"', "'").replace("\n", " ")
        return f'error code={self.exit_code} kind={self.kind} message="{message}"'


class ShapeError(RipeLocError):
    """Tensor extents do not fit the operation they were passed to."""

    def __init__(self, op: str, detail: str):
        super().__init__(f"{op}: {detail}")
        self.op = op


class ConfigError(RipeLocError):
    exit_code = ExitCode.USAGE


class DataError(RipeLocError):
    exit_code = ExitCode.DATA


class NumericError(RipeLocError):
    exit_code = ExitCode.NUMERIC
