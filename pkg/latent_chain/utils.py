import logging
import os
from typing import Any

from rich.console import Console
from rich.logging import RichHandler
from rich.rule import Rule

# Initialize the rich consoles.
_console = Console(markup=True, width=120, force_terminal=True, force_jupyter=False)
_err_console = Console(
    markup=True, width=120, stderr=True, force_terminal=True, force_jupyter=False
)

LOG_LEVEL_ENV = "LATENT_CHAIN_LOG_LEVEL"


def cprint(*args: Any, **kwargs: Any) -> None:
    """
    Custom print function to use rich console.

    Returns:
        None:
            This function does not return any value.

    """
    _console.print(*args, **kwargs)


def cerror(*args: Any, **kwargs: Any) -> None:
    """
    Custom print function for error messages. Errors go to standard error.

    Returns:
        None:
            This function does not return any value.

    """
    _err_console.print(*args, style="red", **kwargs)


def cwarning(*args: Any, **kwargs: Any) -> None:
    """
    Custom print function for warning messages.

    Returns:
        None:
            This function does not return any value.

    """
    _err_console.print(*args, style="yellow", **kwargs)


def crule(*args: Any, **kwargs: Any) -> None:
    """
    Custom print function for rules.

    Returns:
        None:
            This function does not return any value.

    """
    _console.print(Rule(*args, **kwargs))


def get_logger(name: str) -> logging.Logger:
    """
    Returns a logger that renders through rich on standard error.

    All package loggers hang below the ``latent_chain`` logger, which owns the
    single rich handler. The level is read from ``LATENT_CHAIN_LOG_LEVEL``
    (default ``WARNING``).

    Args:
        name (str):
            The logger name, usually ``__name__``.

    Returns:
        logging.Logger:
            The configured logger.

    """
    root = logging.getLogger("latent_chain")
    if not root.handlers:
        handler = RichHandler(console=_err_console, show_path=False, markup=False)
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
        root.setLevel(os.environ.get(LOG_LEVEL_ENV, "WARNING").upper())
        root.propagate = False
    return logging.getLogger(name)


def set_log_level(level: int | str) -> None:
    """
    Sets the level of the package logger.

    Args:
        level (int | str):
            A ``logging`` level or its name.

    """
    get_logger("latent_chain").setLevel(level)
