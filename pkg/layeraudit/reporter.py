"""This module provides utilities for creating static reports.

Examples:
    The simplest usage would be::

        report = reporter.Report('REPORT HEADER', footer='REPORT FOOTER')

    To add a line to the report::

        report.add_line(reporter.Line('a line'))

    To add a section::

        section1 = reporter.Section('Section 1 Header')
        report.add_section(section1)

    A table is a list of column names and a list of rows, each row optionally colored::

        table = reporter.Table(['Rule', 'Count'], [['R01', 1]], header='Violations', colors=['red'])
        section1.add_table(table)

    A report can be output in each of the formats with::

        report.render(reporter.OutputFormat.markdown)

    or in the report's own format with::

        print(report)

Attributes:
    OutputFormat (Enum): The supported output formats.
"""

# Import standard modules
from enum import Enum
from html import escape
from typing import Any, List, Optional, Sequence

OutputFormat = Enum('OutputFormat', ('html', 'markdown', 'text'))

_HTML_STYLE = ('body {font-family: sans-serif; margin: 2em;} '
               'table {border-collapse: collapse; margin-bottom: 1em;} '
               'th, td {border: 1px solid #999; padding: 0.25em 0.75em; text-align: left;} '
               'th {background-color: #eee;}')
_TEXT_RULE_WIDTH = 79


def _cell_text(value: Any, /) -> str:
    return '' if value is None else str(value)


class ReportObject:
    """Class to create a universal abstract interface for a report object."""

    def __init__(self, container: Optional['Section'] = None, /):
        """
        Args:
            container (optional, default=None): The section containing this object.

        Attributes:
            container: The value of the container argument.
        """
        self.container = container

    @property
    def depth(self) -> int:
        """A read-only property which returns the report depth of this object."""
        return (self.container.depth + 1) if self.container else 1

    def render(self, output: OutputFormat, /) -> str:
        """Render the object.

        Args:
            output: The output format.

        Returns:
            The rendered text.
        """
        raise NotImplementedError


class Line(ReportObject):
    """Class to create a universal abstract interface for a report line."""

    def __init__(self, text: str, container: Optional['Section'] = None, /):
        """
        Args:
            text: The line text.
            container (optional, default=None): The section containing this line.

        Attributes:
            text: The value of the text argument.
        """
        super().__init__(container)
        self.text = text

    def render(self, output: OutputFormat, /) -> str:
        match output:
            case OutputFormat.html:
                return f'<p>{escape(self.text)}</p>\n'
            case OutputFormat.markdown:
                return f'{self.text}\n\n'
        return f'{self.text}\n'


class Table(ReportObject):
    """Class to create a universal abstract interface for a report table."""

    def __init__(self, columns: Sequence[str], rows: Sequence[Sequence[Any]], /, *, header: str = '', colors: Optional[Sequence[str]] = None):
        """
        Args:
            columns: The column names.
            rows: The table rows, each with one value per column.
            header (optional, default=''): The table caption.
            colors (optional, default=None): A color name per row used in html output.

        Attributes:
            columns: The value of the columns argument.
            colors: The value of the colors argument.
            header: The value of the header argument.
            rows: The value of the rows argument with every value converted to text.
        """
        super().__init__()
        self.columns = list(columns)
        self.rows = [[_cell_text(v) for v in row] for row in rows]
        self.header = header
        self.colors = list(colors) if colors else []

    def _render_html(self) -> str:
        the_str = '<table>\n'
        if self.header:
            the_str += f'<caption>{escape(self.header)}</caption>\n'
        the_str += '<tr>' + ''.join(f'<th>{escape(c)}</th>' for c in self.columns) + '</tr>\n'
        for (index, row) in enumerate(self.rows):
            style = f' style="color: {escape(self.colors[index])}"' if index < len(self.colors) else ''
            the_str += f'<tr{style}>' + ''.join(f'<td>{escape(v)}</td>' for v in row) + '</tr>\n'
        return the_str + '</table>\n'

    def _render_markdown(self) -> str:
        def md_row(values: Sequence[str]) -> str:
            return '| ' + ' | '.join(v.replace('|', '\\|') for v in values) + ' |\n'
        the_str = f'**{self.header}**\n\n' if self.header else ''
        the_str += md_row(self.columns) + md_row(['---'] * len(self.columns))
        return the_str + ''.join(md_row(r) for r in self.rows) + '\n'

    def _render_text(self) -> str:
        widths = [max([len(c)] + [len(r[i]) for r in self.rows if i < len(r)]) for (i, c) in enumerate(self.columns)]

        def text_row(values: Sequence[str]) -> str:
            return '| ' + ' | '.join(v.ljust(w) for (v, w) in zip(values, widths)) + ' |\n'
        the_str = f'{self.header}\n' if self.header else ''
        return the_str + text_row(self.columns) + text_row(['-' * w for w in widths]) + ''.join(text_row(r) for r in self.rows)

    def render(self, output: OutputFormat, /) -> str:
        match output:
            case OutputFormat.html:
                return self._render_html()
            case OutputFormat.markdown:
                return self._render_markdown()
        return self._render_text()


class Section(ReportObject):
    """Class to create a universal abstract interface for a report section."""

    def __init__(self, header: str = '', /, *, footer: str = '', container: Optional['Section'] = None):
        """
        Args:
            header (optional, default=''): The section header.
            footer (optional, default=''): The section footer.
            container (optional, default=None): The section containing this section.

        Attributes:
            footer: The value of the footer argument.
            header: The value of the header argument.
            _members: A list of objects contained in this section.
        """
        super().__init__(container)
        self.header = header
        self.footer = footer
        self._members: List[ReportObject] = []

    members = property(lambda s: tuple(s._members), doc='A read-only property which returns the objects contained in this section.')

    def add_member(self, thing: ReportObject, /) -> None:
        """Add a member to the section.

        Args:
            thing: The member to add to the section.

        Returns:
            Nothing.
        """
        self._members.append(thing)
        thing.container = self

    def add_line(self, line: Line | str, /) -> None:
        """Add a line (or plain text) to the section."""
        self.add_member(line if isinstance(line, Line) else Line(line))

    def add_section(self, section: 'Section', /) -> None:
        """Add a sub-section to the section."""
        self.add_member(section)

    def add_table(self, table: Table, /) -> None:
        """Add a table to the section."""
        self.add_member(table)

    def _render_heading(self, text: str, output: OutputFormat, /) -> str:
        level = min(self.depth, 6)
        match output:
            case OutputFormat.html:
                return f'<h{level}>{escape(text)}</h{level}>\n'
            case OutputFormat.markdown:
                return f'{"#" * level} {text}\n\n'
        rule = ('=' if level == 1 else '-') * min(max(len(text), 1), _TEXT_RULE_WIDTH)
        return f'{text}\n{rule}\n'

    def _render_body(self, output: OutputFormat, /) -> str:
        the_str = self._render_heading(self.header, output) if self.header else ''
        the_str += ''.join(m.render(output) for m in self._members)
        if self.footer:
            the_str += Line(self.footer, self).render(output)
        return the_str

    def render(self, output: OutputFormat, /) -> str:
        if output == OutputFormat.text and self.depth > 1:
            return '\n' + self._render_body(output)
        return self._render_body(output)


class Report(Section):
    """Class to create a universal abstract interface for a report."""

    def __init__(self, header: str = '', /, *, footer: str = '', output: OutputFormat = OutputFormat.html):
        """
        Args:
            header (optional, default=''): The report title.
            footer (optional, default=''): The report footer.
            output (optional, default=html): The format used by str().

        Attributes:
            output: The value of the output argument.
        """
        super().__init__(header, footer=footer)
        self.output = output

    def __str__(self):
        return self.render(self.output)

    def render(self, output: OutputFormat, /) -> str:
        if output != OutputFormat.html:
            return self._render_body(output)
        return ('<!DOCTYPE html>\n<html>\n<head>\n<meta charset="utf-8">\n'
                f'<title>{escape(self.header)}</title>\n<style>{_HTML_STYLE}</style>\n</head>\n<body>\n'
                f'{self._render_body(output)}</body>\n</html>\n')
