"""
This module provides convenience functions for accessing user-data on the associated `click.Context`, and for reading
the `key=value` configuration file whose values become click's defaults.
"""

import logging
from pathlib import Path

import click

from pdtour.errors import InvalidConfig


def set_option(option: str, value, ctx=None) -> bool:
    if ctx is None:
        ctx = click.get_current_context(silent=True)
    if ctx is not None:
        if ctx.obj is None:
            ctx.obj = {}
        ctx.obj[option] = value
        return True
    return False


def get_option(option: str, default_for_option=None, ctx=None):
    if ctx is None:
        ctx = click.get_current_context(silent=True)
    if ctx is not None and ctx.obj is not None and option in ctx.obj:
        return ctx.obj[option]
    return default_for_option


def is_verbose_mode(ctx=None) -> bool:
    return get_option("VERBOSE", False, ctx)


def is_debug_mode(ctx=None) -> bool:
    return get_option("DEBUG", False, ctx)


def is_audit_mode(ctx=None) -> bool:
    """Audit mode re-validates every visited tour; `--debug` turns it on."""
    return get_option("AUDIT", is_debug_mode(ctx), ctx)


def read_config_file(path: Path) -> dict[str, str]:
    """
    Read `key=value` lines.  `#` starts a comment, blank lines are skipped, and `-` in keys becomes `_` so a key can
    be written the way its flag is spelled.

    Returns: a dict of raw string values.  Raises `InvalidConfig` for a line without `=`.
    """
    values = {}
    for line_number, raw_line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{path}:{line_number}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    logging.info(f"Read {len(values)} settings from {path}")
    return values


def config_default_map(values: dict[str, str], commands) -> dict[str, dict[str, str]]:
    """Offer every setting to every command as a default; click ignores keys a command has no parameter for."""
    return {command: dict(values) for command in commands}
