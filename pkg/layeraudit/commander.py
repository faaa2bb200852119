"""This module provides a simplified interface to the standard argparse module."""

# Import standard modules
from argparse import ArgumentParser, ArgumentDefaultsHelpFormatter, HelpFormatter, Namespace
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, Optional, Sequence, Type


class Argument:  # pylint: disable=too-few-public-methods
    """This is a simple container class to encapsulate an argument definition passed to ArgumentParser.add_argument()."""

    def __init__(self, *names: str, **options: Any):
        """
        Args:
            *names: A list of the argument names.
            **options (optional): A dictionary of the argument options.

        Attributes:
            names: The value of the names argument.
            options: The value of the options argument.
        """
        self.names: Sequence[str] = names
        self.options: Dict[str, Any] = options


@dataclass(frozen=True)
class SubParser:
    """This is a simple container class to encapsulate a subparser definition.

        Attributes:
            subcommand: The subcommand name for the subparser.
            command_runner: The function which runs the command, called with the parsed arguments.
            arguments (optional, default=()): A list of arguments for the subparser.
            help (optional, default=''): The one-line description of the subcommand.
    """
    subcommand: str
    command_runner: Callable[[Namespace], Any]
    arguments: Sequence[Argument] = field(default_factory=tuple)
    help: str = ''


class Commander:
    """This class provides a simplified interface to the argparse.ArgumentParser class."""

    def __init__(self, description: str, /, *, arguments: Sequence[Argument] = (), subparsers: Iterable[SubParser] = (),
                 version: Optional[str] = None, prog: Optional[str] = None, formatter_class: Type[HelpFormatter] = ArgumentDefaultsHelpFormatter):
        """
        Args:
            description: The description of the command.
            arguments (optional, default=()): A list of arguments for the command driver, given before the subcommand.
            subparsers (optional, default=()): A list of subparsers for the command driver.
            version (optional, default=None): If not None then add a version argument which prints this text.
            prog (optional, default=None): The program name, derived from sys.argv if None.
            formatter_class (optional, default=ArgumentDefaultsHelpFormatter): The formatter class to pass to the parser.

        Attributes:
            parser: The command parser instance.
            _subparsers: The value of the subparsers argument.
        """
        self._subparsers = tuple(subparsers)
        self.parser = ArgumentParser(prog=prog, description=description, formatter_class=formatter_class)
        _add_arguments_to_parser(self.parser, arguments)
        if version:
            self.parser.add_argument('--version', action='version', version=version)

        if self._subparsers:
            subparser_objects = self.parser.add_subparsers(dest='command', metavar='command')
            for subparser_def in self._subparsers:
                subparser = subparser_objects.add_parser(subparser_def.subcommand, help=subparser_def.help, formatter_class=formatter_class)
                _add_arguments_to_parser(subparser, subparser_def.arguments)
                subparser.set_defaults(command_runner=subparser_def.command_runner)

    def parse_args(self, argv: Optional[Sequence[str]] = None, /, *, err_msg: str = 'No command specified') -> Namespace:
        """Parse the command line.

        Args:
            argv (optional, default=None): The arguments to parse, otherwise sys.argv will be used.
            err_msg (optional, default='No command specified'): The error message to use if no subcommand is given.

        Returns:
            The parsed argument Namespace.

        Raises:
            SystemExit: With status 2 if the arguments are not valid.
        """
        args = self.parser.parse_args(argv)
        if self._subparsers and not args.command:
            self.parser.error(err_msg)
        return args


def _add_arguments_to_parser(parser: ArgumentParser, arglist: Iterable[Argument], /) -> None:
    """Add arguments to the specified parser.

    Args:
        parser: The parser to which to add the arguments.
        arglist: The arguments to add to the parser.

    Returns:
        Nothing.
    """
    for arg in arglist:
        parser.add_argument(*arg.names, **arg.options)
