"""This module provides utilities for working with output files."""

# Import standard modules
from os import replace
from pathlib import Path
from tempfile import NamedTemporaryFile

# Import internal modules
from .lang import DEFAULT_ENCODING, PathName


def ensure_dir(directory: PathName, /) -> Path:
    """Make sure a directory exists.

    Args:
        directory: The directory to create if missing.

    Returns:
        The directory as a Path.
    """
    (path := Path(directory)).mkdir(parents=True, exist_ok=True)
    return path


def write_text_atomic(filename: PathName, content: str, /) -> Path:
    """Write a text file so that readers never see a partial file.

    The content is written to a temporary file in the same directory which then replaces the target.

    Args:
        filename: The file to write.
        content: The text to write.

    Returns:
        The written file as a Path.
    """
    target = Path(filename)
    ensure_dir(target.parent)
    with NamedTemporaryFile('w', encoding=DEFAULT_ENCODING, newline='', dir=target.parent, prefix=f'.{target.name}.', delete=False) as stream:
        stream.write(content)
        temp_name = stream.name
    replace(temp_name, target)
    return target


def slurp(filename: PathName, /) -> str:
    """Return the contents of a UTF-8 text file."""
    return Path(filename).read_text(encoding=DEFAULT_ENCODING)
