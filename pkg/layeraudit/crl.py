"""This module provides the compliance rule registry language.

Registry grammar:
    registry := (rule | listdef)*
    rule     := "rule" IDENT ":" body
    body     := STR "only" "after" STR
              | STR "not" "before" STR
              | STR "before" STR
              | "never" STR
              | "require" STR
              | STR "followed" "by" STR ["within" DURATION]
              | ("event" | "case") "attribute" IDENT OP valueref
    listdef  := "list" IDENT "from" STR
    OP       := "in" | "not_in" | "==" | "!="
    valueref := STR | "{" STR ("," STR)* "}" | IDENT

STR is double-quoted with backslash escapes, DURATION is an integer followed by m, h or d and # starts a comment.

Attributes:
    ContentScope (Enum): Where a content rule reads its attribute.
    ContentOperator (Enum): The content rule comparison operators.
"""

# Import standard modules
from dataclasses import dataclass, field
from datetime import timedelta
from enum import Enum
from logging import getLogger
from pathlib import Path
from re import VERBOSE, compile as re_compile
from string import Template
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

# Import internal modules
from .fileutil import slurp
from .lang import LayerAuditError, LayerAuditException, PathName
from .time import TimeError, format_deadline, parse_duration

ContentScope = Enum('ContentScope', ('event', 'case'))
ContentOperator = Enum('ContentOperator', ('member', 'not_member', 'eq', 'neq'))

OPERATOR_SYMBOLS = {ContentOperator.member: 'in', ContentOperator.not_member: 'not_in', ContentOperator.eq: '==', ContentOperator.neq: '!='}
_SYMBOL_OPERATORS = {v: k for (k, v) in OPERATOR_SYMBOLS.items()}
_SET_OPERATORS = (ContentOperator.member, ContentOperator.not_member)

_DEADLINE_UNITS = 'mhd'
_ESCAPES = {'n': '\n', 't': '\t'}
_TOKEN_REGEX = re_compile(r'''
    (?P<newline>\n)
   |(?P<space>[ \t\r\f]+)
   |(?P<comment>\#[^\n]*)
   |(?P<string>"(?:[^"\\\n]|\\.)*")
   |(?P<unterminated>"[^\n]*)
   |(?P<duration>\d+[A-Za-z]*)
   |(?P<op>==|!=)
   |(?P<punct>[:{},])
   |(?P<ident>[A-Za-z][A-Za-z0-9_]*)
   |(?P<error>.)
''', VERBOSE)

type ListLoader = Callable[[Path], Iterable[str]]

log = getLogger(__name__)


class RuleSyntaxError(LayerAuditException):
    """Rule registry syntax Exceptions.

    Attributes:
        BAD_DURATION: A deadline is not a positive integer followed by m, h or d.
        BAD_STRING: A string literal is not terminated on its line.
        SYNTAX: An unexpected token was found.
    """
    BAD_DURATION = LayerAuditError(1, Template('Line $line, column $column: invalid duration "$found": expected a positive integer followed by m, h or d'))
    BAD_STRING = LayerAuditError(2, Template('Line $line, column $column: unterminated string'))
    SYNTAX = LayerAuditError(3, Template('Line $line, column $column: expected $expected, found $found'))


class RuleRegistryError(LayerAuditException):
    """Rule registry semantic Exceptions.

    Attributes:
        BAD_ENCODING: A registry file is not valid UTF-8.
        BAD_OPERATOR_VALUE: The operator does not accept the kind of value given.
        DUPLICATE_LIST: A value list name is defined more than once.
        DUPLICATE_RULE: A rule identifier is defined more than once.
        EMPTY_ACTIVITY: A rule names an empty activity.
        LIST_FILE: A value list file could not be read.
        UNKNOWN_LIST: A content rule references an undefined value list.
    """
    BAD_OPERATOR_VALUE = LayerAuditError(1, Template('Line $line, column $column: operator $operator requires $required'))
    DUPLICATE_LIST = LayerAuditError(2, Template('Line $line: value list $name is already defined'))
    DUPLICATE_RULE = LayerAuditError(3, Template('Line $line: rule $rule_id is already defined'))
    EMPTY_ACTIVITY = LayerAuditError(4, Template('Line $line: rule $rule_id names an empty activity'))
    LIST_FILE = LayerAuditError(5, Template('Unable to read value list $name from $path: $err'))
    UNKNOWN_LIST = LayerAuditError(6, Template('Rule $rule_id references undefined value list $name'))
    BAD_ENCODING = LayerAuditError(7, Template('$path is not valid UTF-8: $err'))


@dataclass(frozen=True)
class Precedence:
    """The target activity can only occur after the guard activity."""
    target: str
    guard: str

    activities = property(lambda s: (s.target, s.guard), doc='A read-only property which returns the activities referenced.')


@dataclass(frozen=True)
class Absence:
    """The activity must never occur."""
    activity: str

    activities = property(lambda s: (s.activity,), doc='A read-only property which returns the activities referenced.')


@dataclass(frozen=True)
class Existence:
    """The activity must occur before the case completes."""
    activity: str

    activities = property(lambda s: (s.activity,), doc='A read-only property which returns the activities referenced.')


@dataclass(frozen=True)
class Response:
    """Every trigger must be followed by the response, optionally within a deadline."""
    trigger: str
    response: str
    deadline: Optional[timedelta] = None

    activities = property(lambda s: (s.trigger, s.response), doc='A read-only property which returns the activities referenced.')


@dataclass(frozen=True)
class Content:
    """An attribute condition every event (or the case) must satisfy.

        Attributes:
            scope: Whether the attribute is read from each event or from the case.
            attribute: The attribute name.
            operator: The comparison operator.
            values: The literal values in source order, empty when list_name is used.
            list_name: The value list referenced, if any.
    """
    scope: ContentScope
    attribute: str
    operator: ContentOperator
    values: Tuple[str, ...] = ()
    list_name: Optional[str] = None

    activities = property(lambda s: (), doc='A read-only property which returns the activities referenced.')


type RulePattern = Precedence | Absence | Existence | Response | Content


@dataclass(frozen=True)
class ComplianceRule:
    """One parsed rule.

        Attributes:
            rule_id: The unique rule identifier.
            pattern: The parsed rule body.
            description: The source text of the rule.
    """
    rule_id: str
    pattern: RulePattern
    description: str = field(default='', compare=False)

    def __str__(self):
        return format_rule(self)


@dataclass(frozen=True)
class ValueList:
    """A named value list loaded from a newline-delimited file.

        Attributes:
            name: The list name.
            path: The path as written in the registry.
            values: The normalized values.
    """
    name: str
    path: str
    values: FrozenSet[str] = field(default=frozenset(), compare=False)


@dataclass(frozen=True)
class RuleRegistry:
    """The parsed rule registry.

        Attributes:
            rules: The rules in source order.
            value_lists: The value lists keyed by name.
    """
    rules: Tuple[ComplianceRule, ...] = ()
    value_lists: Mapping[str, ValueList] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    activities = property(lambda s: {a for r in s.rules for a in r.pattern.activities}, doc='A read-only property which returns every activity referenced.')
    rule_ids = property(lambda s: [r.rule_id for r in s.rules], doc='A read-only property which returns the rule identifiers in order.')

    def rule(self, rule_id: str, /) -> ComplianceRule:
        """Return the rule with the given identifier.

        Raises:
            KeyError: If there is no such rule.
        """
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule
        raise KeyError(rule_id)

    def values_for(self, pattern: Content, /) -> FrozenSet[str]:
        """Return the normalized comparison values for a content rule."""
        if pattern.list_name is not None:
            return self.value_lists[pattern.list_name].values
        return frozenset(normalize_value(v) for v in pattern.values)


@dataclass(frozen=True)
class RuleWarning:
    """A validation warning for one rule.

        Attributes:
            rule_id: The rule warned about.
            activities: The referenced activities not found in the event data.
    """
    rule_id: str
    activities: Tuple[str, ...]

    def __str__(self):
        names = ', '.join(f'"{a}"' for a in self.activities)
        return f'Rule {self.rule_id} references activities not found in the event data: {names}'


class _Token(NamedTuple):
    kind: str
    text: str
    line: int
    column: int
    start: int
    end: int


def normalize_value(value: str, /) -> str:
    """Normalize a value for case-insensitive comparison after trimming."""
    return value.strip().casefold()


def _unquote(literal: str, /) -> str:
    """Remove the quotes and escapes from a string literal."""
    result: List[str] = []
    chars = iter(literal[1:-1])
    for char in chars:
        if char == '\\':
            escaped = next(chars)
            result.append(_ESCAPES.get(escaped, escaped))
        else:
            result.append(char)
    return ''.join(result)


def quote(value: str, /) -> str:
    """Return a string literal for a value."""
    escaped = value.replace('\\', '\\\\').replace('"', '\\"').replace('\n', '\\n').replace('\t', '\\t')
    return f'"{escaped}"'


def _tokenize(source: str, /) -> List[_Token]:
    """Split registry source into tokens.

    Raises:
        RuleSyntaxError.BAD_STRING: If a string literal is not terminated.
    """
    tokens: List[_Token] = []
    (line, line_start) = (1, 0)
    for found in _TOKEN_REGEX.finditer(source):
        kind = found.lastgroup or 'error'
        column = found.start() - line_start + 1
        match kind:
            case 'newline':
                line += 1
                line_start = found.end()
            case 'space' | 'comment':
                pass
            case 'unterminated':
                raise RuleSyntaxError(RuleSyntaxError.BAD_STRING, line=line, column=column)
            case _:
                tokens.append(_Token(kind, found.group(), line, column, found.start(), found.end()))
    tokens.append(_Token('eof', '', line, len(source) - line_start + 1, len(source), len(source)))
    return tokens


class _Parser:
    """Recursive descent parser over the registry tokens."""

    def __init__(self, source: str, /):
        """
        Args:
            source: The registry text.

        Attributes:
            _source: The value of the source argument.
            _tokens: The tokens of the source.
            _position: The index of the next token.
        """
        self._source = source
        self._tokens = _tokenize(source)
        self._position = 0

    def _peek(self, offset: int = 0, /) -> _Token:
        return self._tokens[min(self._position + offset, len(self._tokens) - 1)]

    def _advance(self) -> _Token:
        token = self._peek()
        self._position += 1
        return token

    def _fail(self, *expected: str) -> RuleSyntaxError:
        token = self._peek()
        found = 'end of input' if token.kind == 'eof' else f'"{token.text}"'
        return RuleSyntaxError(RuleSyntaxError.SYNTAX, line=token.line, column=token.column, expected=' or '.join(expected), found=found)

    def _is_keyword(self, keyword: str, offset: int = 0, /) -> bool:
        return (token := self._peek(offset)).kind == 'ident' and token.text == keyword

    def _keyword(self, keyword: str, /) -> _Token:
        if not self._is_keyword(keyword):
            raise self._fail(f'"{keyword}"')
        return self._advance()

    def _expect(self, kind: str, description: str, /) -> _Token:
        if self._peek().kind != kind:
            raise self._fail(description)
        return self._advance()

    def _punct(self, char: str, /) -> _Token:
        if (token := self._peek()).kind != 'punct' or token.text != char:
            raise self._fail(f'"{char}"')
        return self._advance()

    def _string(self) -> str:
        return _unquote(self._expect('string', 'string').text)

    def _activity(self, rule_id: str, rule_line: int, /) -> str:
        if not (activity := self._string().strip()):
            raise RuleRegistryError(RuleRegistryError.EMPTY_ACTIVITY, line=rule_line, rule_id=rule_id)
        return activity

    def parse(self) -> Tuple[List[Tuple[ComplianceRule, int]], List[Tuple[ValueList, int]]]:
        """Parse the whole registry.

        Returns:
            The rules and value list definitions, each with its source line.
        """
        rules: List[Tuple[ComplianceRule, int]] = []
        lists: List[Tuple[ValueList, int]] = []
        while self._peek().kind != 'eof':
            if self._is_keyword('rule'):
                rules.append(self._rule())
            elif self._is_keyword('list'):
                lists.append(self._list())
            else:
                raise self._fail('"rule"', '"list"')
        return (rules, lists)

    def _list(self) -> Tuple[ValueList, int]:
        start = self._keyword('list')
        name = self._expect('ident', 'list name').text
        self._keyword('from')
        return (ValueList(name, self._string()), start.line)

    def _rule(self) -> Tuple[ComplianceRule, int]:
        start = self._keyword('rule')
        rule_id = self._expect('ident', 'rule identifier').text
        self._punct(':')
        pattern = self._body(rule_id, start.line)
        end = self._tokens[self._position - 1].end
        return (ComplianceRule(rule_id, pattern, self._source[start.start:end]), start.line)

    def _body(self, rule_id: str, rule_line: int, /) -> RulePattern:
        if self._is_keyword('never'):
            self._advance()
            return Absence(self._activity(rule_id, rule_line))
        if self._is_keyword('require'):
            self._advance()
            return Existence(self._activity(rule_id, rule_line))
        if self._is_keyword('event') or self._is_keyword('case'):
            return self._content()
        if self._peek().kind != 'string':
            raise self._fail('string', '"never"', '"require"', '"event"', '"case"')
        first = self._activity(rule_id, rule_line)
        if self._is_keyword('only'):
            self._advance()
            self._keyword('after')
            return Precedence(first, self._activity(rule_id, rule_line))
        if self._is_keyword('not'):
            self._advance()
            self._keyword('before')
            return Precedence(first, self._activity(rule_id, rule_line))
        if self._is_keyword('before'):
            self._advance()
            return Precedence(self._activity(rule_id, rule_line), first)
        if self._is_keyword('followed'):
            self._advance()
            self._keyword('by')
            response = self._activity(rule_id, rule_line)
            deadline = None
            if self._is_keyword('within'):
                self._advance()
                deadline = self._duration()
            return Response(first, response, deadline)
        raise self._fail('"only"', '"not"', '"before"', '"followed"')

    def _duration(self) -> timedelta:
        token = self._expect('duration', 'duration')
        try:
            deadline = parse_duration(token.text, units=_DEADLINE_UNITS)
        except TimeError as err:
            raise RuleSyntaxError(RuleSyntaxError.BAD_DURATION, line=token.line, column=token.column, found=token.text) from err
        if deadline <= timedelta(0):
            raise RuleSyntaxError(RuleSyntaxError.BAD_DURATION, line=token.line, column=token.column, found=token.text)
        return deadline

    def _operator(self) -> Tuple[ContentOperator, _Token]:
        token = self._peek()
        if (token.kind == 'op') or (token.kind == 'ident' and token.text in ('in', 'not_in')):
            self._advance()
            return (_SYMBOL_OPERATORS[token.text], token)
        raise self._fail('"in"', '"not_in"', '"=="', '"!="')

    def _content(self) -> Content:
        scope = ContentScope[self._advance().text]
        self._keyword('attribute')
        attribute = self._expect('ident', 'attribute name').text
        (operator, op_token) = self._operator()
        value_token = self._peek()
        if operator in _SET_OPERATORS:
            if value_token.kind == 'ident':
                return Content(scope, attribute, operator, list_name=self._advance().text)
            if value_token.kind == 'punct' and value_token.text == '{':
                return Content(scope, attribute, operator, self._value_set())
            if value_token.kind == 'string':
                raise RuleRegistryError(RuleRegistryError.BAD_OPERATOR_VALUE, line=value_token.line, column=value_token.column,
                                        operator=op_token.text, required='a value set or list name')
            raise self._fail('"{"', 'list name')
        if (value_token.kind == 'ident') or (value_token.kind == 'punct' and value_token.text == '{'):
            raise RuleRegistryError(RuleRegistryError.BAD_OPERATOR_VALUE, line=value_token.line, column=value_token.column,
                                    operator=op_token.text, required='a string')
        return Content(scope, attribute, operator, (self._string(),))

    def _value_set(self) -> Tuple[str, ...]:
        self._punct('{')
        values = [self._string()]
        while (token := self._peek()).kind == 'punct' and token.text == ',':
            self._advance()
            values.append(self._string())
        self._punct('}')
        return tuple(values)


def read_value_list(path: Path, /) -> List[str]:
    """Read a newline-delimited value list file, ignoring blank lines."""
    return [v for line in slurp(path).splitlines() if (v := line.strip())]


def parse_registry(source: str, /, *, base_dir: Optional[PathName] = None, list_loader: ListLoader = read_value_list) -> RuleRegistry:
    """Parse registry text.

    Args:
        source: The registry text.
        base_dir (optional, default=None): The directory list paths are relative to, the current directory if None.
        list_loader (optional, default=read_value_list): The function which reads the values of a list file.

    Returns:
        The registry with rules in source order.

    Raises:
        RuleSyntaxError: If the source does not match the grammar.
        RuleRegistryError.DUPLICATE_RULE: If a rule identifier is repeated.
        RuleRegistryError.DUPLICATE_LIST: If a list name is repeated.
        RuleRegistryError.UNKNOWN_LIST: If a content rule references an undefined list.
        RuleRegistryError.LIST_FILE: If a list file cannot be read.
    """
    (parsed_rules, parsed_lists) = _Parser(source).parse()
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    value_lists: Dict[str, ValueList] = {}
    for (value_list, line) in parsed_lists:
        if value_list.name in value_lists:
            raise RuleRegistryError(RuleRegistryError.DUPLICATE_LIST, line=line, name=value_list.name)
        list_path = base / value_list.path
        try:
            values = frozenset(normalize_value(v) for v in list_loader(list_path))
        except (OSError, UnicodeDecodeError) as err:
            raise RuleRegistryError(RuleRegistryError.LIST_FILE, name=value_list.name, path=list_path, err=err) from err
        value_lists[value_list.name] = ValueList(value_list.name, value_list.path, values)
        log.debug('Loaded %d values for list %s', len(values), value_list.name)

    seen: Dict[str, int] = {}
    for (rule, line) in parsed_rules:
        if rule.rule_id in seen:
            raise RuleRegistryError(RuleRegistryError.DUPLICATE_RULE, line=line, rule_id=rule.rule_id)
        seen[rule.rule_id] = line
        if isinstance(rule.pattern, Content) and (rule.pattern.list_name is not None) and (rule.pattern.list_name not in value_lists):
            raise RuleRegistryError(RuleRegistryError.UNKNOWN_LIST, rule_id=rule.rule_id, name=rule.pattern.list_name)
    return RuleRegistry(tuple(r for (r, _unused_line) in parsed_rules), value_lists)


def load_registry(filename: PathName, /) -> RuleRegistry:
    """Parse a registry file; list paths are relative to the file's directory."""
    path = Path(filename)
    try:
        source = slurp(path)
    except UnicodeDecodeError as err:
        raise RuleRegistryError(RuleRegistryError.BAD_ENCODING, path=path, err=err) from err
    return parse_registry(source, base_dir=path.parent)


def validate_registry(registry: RuleRegistry, known_activities: Iterable[str], /) -> List[RuleWarning]:
    """Check the rule activities against the activities seen in the event data.

    Args:
        registry: The registry to check.
        known_activities: The activities found in the event data.

    Returns:
        One warning per rule which references an unknown activity.
    """
    known = set(known_activities)
    warnings = []
    for rule in registry:
        if unknown := tuple(a for a in rule.pattern.activities if a not in known):
            warnings.append(RuleWarning(rule.rule_id, unknown))
    return warnings


def format_pattern(pattern: RulePattern, /) -> str:
    """Return the canonical source text of a rule body."""
    match pattern:
        case Precedence(target=target, guard=guard):
            return f'{quote(target)} only after {quote(guard)}'
        case Absence(activity=activity):
            return f'never {quote(activity)}'
        case Existence(activity=activity):
            return f'require {quote(activity)}'
        case Response(trigger=trigger, response=response, deadline=deadline):
            within = f' within {format_deadline(deadline)}' if deadline else ''
            return f'{quote(trigger)} followed by {quote(response)}{within}'
        case Content():
            if pattern.list_name is not None:
                value = pattern.list_name
            elif pattern.operator in _SET_OPERATORS:
                value = '{ ' + ', '.join(quote(v) for v in pattern.values) + ' }'
            else:
                value = quote(pattern.values[0])
            return f'{pattern.scope.name} attribute {pattern.attribute} {OPERATOR_SYMBOLS[pattern.operator]} {value}'
    raise TypeError(f'Unknown rule pattern: {pattern!r}')


def format_rule(rule: ComplianceRule, /) -> str:
    """Return the canonical source text of a rule."""
    return f'rule {rule.rule_id}: {format_pattern(rule.pattern)}'


def pretty_print(registry: RuleRegistry, /) -> str:
    """Return the canonical text of a registry, list definitions first.

    Args:
        registry: The registry to print.

    Returns:
        The text, one definition per line, which parses back to an equal registry.
    """
    lines: Sequence[str] = [*(f'list {v.name} from {quote(v.path)}' for v in registry.value_lists.values()),
                            *(format_rule(r) for r in registry)]
    return ''.join(f'{line}\n' for line in lines)

# cSpell:ignore casefold listdef valueref
