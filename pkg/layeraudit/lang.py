"""This module provides Python language utilities.

Attributes:
    DEFAULT_ENCODING: The default encoding used for text file operations.
    DEBUG_VARIABLE: The environment variable which enables debug output.
"""

# Import standard modules
from dataclasses import dataclass
from os import getenv
from pathlib import Path, PurePath
from string import Template
from typing import Any, Dict, Optional

# Import third-party modules
from dotmap import DotMap
from yaml import safe_dump as yaml_dump, safe_load as yaml_load

# Useful constants
DEFAULT_ENCODING = 'UTF-8'
DEBUG_VARIABLE = 'LAYERAUDIT_DEBUG'

type MessageString = str | Template
type PathName = str | Path | PurePath


class MsgStr:
    """Class to create a universal abstract interface for message strings which may be templates."""

    def __init__(self, instr: MessageString = '', **variables):
        """
        Args:
            instr (optional, default=''): The input message string.
            variables (optional): A dictionary of variables to pass to the string.Template.substitute method.

        Attributes:
            _str: The value of the instr argument.
            _vars: The value of the variables argument.
        """
        self._str = instr
        self._vars = variables

    def __str__(self):
        return self._str.safe_substitute(self._vars) if isinstance(self._str, Template) else self._str


class LayerAuditException(Exception, MsgStr):
    """A base class to provide easier Exception management."""
    def __init__(self, err_obj: 'LayerAuditError', /, **variables):
        """
        Args:
            err_obj: The error object describing the failure.
            variables (optional): A dictionary of variables to pass to the string.Template.substitute method.

        Attributes:
            vars: The value of the variables argument.
            _err_obj: The value of the err_obj argument.
        """
        Exception.__init__(self, err_obj, variables)
        MsgStr.__init__(self, err_obj.msg, **variables)
        self._err_obj = err_obj
        self.vars = variables

    def __str__(self):
        return MsgStr.__str__(self)

    code = property(lambda s: s._err_obj.code, doc='A read-only property which returns the error code from the error object.')
    error = property(lambda s: s._err_obj, doc='A read-only property which returns the error object.')


@dataclass(frozen=True)
class LayerAuditError:
    """A class to provide an interface for inspecting exceptions.

        Attributes:
            code: A unique error code for this error.
            msg: A user-facing message for this error.
    """
    code: int
    msg: MessageString


def is_debug(test_value: Optional[str] = None, /) -> bool:
    """Determine if the LAYERAUDIT_DEBUG environment variable is set.

    Args:
        test_value (optional, default=None): If set, only return true if the value of test_value is in LAYERAUDIT_DEBUG.

    Return:
        True if the OS environment variable LAYERAUDIT_DEBUG is set, False otherwise.
    """
    if not (debug_value := getenv(DEBUG_VARIABLE)):
        return False
    if not test_value:
        return True
    return test_value in debug_value


def yaml_to_dotmap(yaml_info: str | PathName, /) -> DotMap:
    """Converts YAML to a DotMap.

    Args:
        yaml_info: If this is a string it is presumed to be raw YAML otherwise it is expected to be a Path which can be opened and read.

    Returns:
        A DotMap representing the YAML content. An empty document yields an empty DotMap.

    Raises:
        yaml.YAMLError: If the content is not valid YAML.
        ValueError: If the top level of the document is not a mapping.
    """
    if isinstance(yaml_info, str):
        content = yaml_load(yaml_info)
    else:
        with open(yaml_info, encoding=DEFAULT_ENCODING) as yaml_stream:
            content = yaml_load(yaml_stream)
    if content is None:
        content = {}
    if not isinstance(content, dict):
        raise ValueError(f'Expected a mapping at the top of the document, found {type(content).__name__}')
    return DotMap(content, _dynamic=False)


def dotmap_to_yaml(dotmap_thing: DotMap | Dict[str, Any], /) -> str:
    """Convert a DotMap (or plain dictionary) to YAML text.

    Args:
        dotmap_thing: The DotMap to convert.

    Returns:
        The YAML text with keys in insertion order.
    """
    plain = dotmap_thing.toDict() if isinstance(dotmap_thing, DotMap) else dotmap_thing
    return yaml_dump(plain, sort_keys=False, allow_unicode=True)

# cSpell:ignore dotmap layeraudit
