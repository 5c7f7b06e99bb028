import logging

from rich.console import Console
from rich.logging import RichHandler

_configured = False


def setup_logging(verbose: bool = False, quiet: bool = False, console: Console = None) -> None:
    """
    Configure the root logger once with a rich handler.

    Args:
        verbose: Log DEBUG records
        quiet: Only log WARNING and above (wins over verbose)
        console: Console to render to, stderr by default
    """
    global _configured

    level = logging.INFO
    if verbose:
        level = logging.DEBUG
    if quiet:
        level = logging.WARNING

    root = logging.getLogger()
    root.setLevel(level)
    if _configured:
        return

    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
        log_time_format="[%H:%M:%S]",
    )
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    _configured = True
