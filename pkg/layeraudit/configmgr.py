"""This module provides the run configuration.

A run configuration is a YAML file::

    schema: 1
    events:
      business_flow: business.csv
      compliance_check: checks.csv
    registry: rules.crl
    checkpoint: state/checkpoint.yml
    outbox: outbox
    output: output
    webhooks:
      ticket: https://tickets.example.com/hooks/compliance
    completion_activities: [Completed]

Relative paths are relative to the directory of the configuration file.
"""

# Import standard modules
from dataclasses import dataclass, field, fields, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from string import Template
from typing import Any, FrozenSet, Optional

# Import third-party modules
from dotmap import DotMap
from yaml import YAMLError

# Import internal modules
from .engine import DEFAULT_COMPLETION
from .lang import LayerAuditError, LayerAuditException, PathName, yaml_to_dotmap
from .netutil import WebhookError, validate_endpoint
from .network import DEFAULT_SYSTEMIC_THRESHOLD, LayoutParams, NetworkError
from .time import Granularity, TimeError, parse_instant

TimelineScope = Enum('TimelineScope', ('violations', 'all'))

CONFIG_SCHEMA = 1
DEFAULT_CONFIG_FILE = 'layeraudit.yml'


class ConfigurationError(LayerAuditException):
    """Configuration Exceptions.

    Attributes:
        BAD_FORMAT: The configuration file format is invalid.
        BAD_SCHEMA: The configuration schema is not supported.
        BAD_VALUE: A configuration value is invalid.
        CONFIG_NOT_FOUND: The specified configuration file was not found.
        MISSING_PATH: An input file named by the configuration does not exist.
    """
    BAD_FORMAT = LayerAuditError(1, Template('Bad format for configuration file $file: $err'))
    BAD_SCHEMA = LayerAuditError(2, Template('Invalid schema in configuration file $file: $schema'))
    CONFIG_NOT_FOUND = LayerAuditError(3, Template('Unable to find the configuration file: $file'))
    MISSING_PATH = LayerAuditError(4, Template('The $item file does not exist: $path'))
    BAD_VALUE = LayerAuditError(5, Template('Invalid value for $item in $file: $value'))


@dataclass(frozen=True)
class RunConfig:  # pylint: disable=too-many-instance-attributes
    """The settings of a run.

        Attributes:
            source: The configuration file.
            business_flow: The business flow events file.
            registry: The rule registry file.
            compliance_check: The compliance check events file, if any.
            follow_up: An externally recorded follow-up events file, if any.
            case_attributes: The case attribute table, if any.
            checkpoint: The checkpoint file.
            outbox: The report outbox directory, no reports if None.
            output: The output directory.
            ticket_webhook: The ticket webhook URL, if any.
            rpa_webhook: The RPA webhook URL, if any.
            completion_activities: The activities which complete a case.
            layout: The network layout parameters.
            systemic_threshold: The case count from which a cluster is a systemic candidate.
            granularity: The period of the violation summary.
            timelines: Which cases get timeline files.
            dry_run: If True, no webhook is called.
            clock: The evaluation clock, the wall clock if None.
            fail_on_violation: If True, a run finding new violations exits with 1.
    """
    source: Path
    business_flow: Path
    registry: Path
    compliance_check: Optional[Path] = None
    follow_up: Optional[Path] = None
    case_attributes: Optional[Path] = None
    checkpoint: Path = Path('checkpoint.yml')
    outbox: Optional[Path] = Path('outbox')
    output: Path = Path('output')
    ticket_webhook: Optional[str] = None
    rpa_webhook: Optional[str] = None
    completion_activities: FrozenSet[str] = DEFAULT_COMPLETION
    layout: LayoutParams = field(default_factory=LayoutParams)
    systemic_threshold: int = DEFAULT_SYSTEMIC_THRESHOLD
    granularity: Granularity = Granularity.week
    timelines: TimelineScope = TimelineScope.violations
    dry_run: bool = False
    clock: Optional[datetime] = None
    fail_on_violation: bool = False

    input_files = property(lambda s: tuple((n, p) for (n, p) in (('events.business_flow', s.business_flow), ('registry', s.registry),
                                                                 ('events.compliance_check', s.compliance_check), ('events.follow_up', s.follow_up),
                                                                 ('case_attributes', s.case_attributes)) if p is not None),
                           doc='A read-only property which returns the configured input files with their configuration keys.')

    def check_inputs(self) -> None:
        """Check that every input file exists.

        Raises:
            ConfigurationError.MISSING_PATH: If an input file does not exist.
        """
        for (item, path) in self.input_files:
            if not path.is_file():
                raise ConfigurationError(ConfigurationError.MISSING_PATH, item=item, path=path)

    def with_overrides(self, /, *, clock: Optional[datetime] = None, dry_run: Optional[bool] = None, fail_on_violation: Optional[bool] = None) -> 'RunConfig':
        """Return a copy with the command line values which were given."""
        changes: dict[str, Any] = {}
        if clock is not None:
            changes['clock'] = clock
        if dry_run:
            changes['dry_run'] = True
        if fail_on_violation:
            changes['fail_on_violation'] = True
        return replace(self, **changes)


def _path(config: DotMap, key: str, base: Path, source: Path, /, *, default: Optional[str] = None, required: bool = False) -> Optional[Path]:
    node: Any = config
    for part in key.split('.'):
        node = node.get(part) if isinstance(node, DotMap) else None
    if node is None:
        node = default
    if node is None:
        if required:
            raise ConfigurationError(ConfigurationError.BAD_VALUE, item=key, file=source, value='missing')
        return None
    if not isinstance(node, str) or not node:
        raise ConfigurationError(ConfigurationError.BAD_VALUE, item=key, file=source, value=node)
    return base / node


def _choice(enum_type: Any, value: Any, item: str, source: Path, /) -> Any:
    try:
        return enum_type[str(value)]
    except KeyError as err:
        raise ConfigurationError(ConfigurationError.BAD_VALUE, item=item, file=source, value=value) from err


def _flag(value: Any, item: str, source: Path, /) -> bool:
    if not isinstance(value, bool):
        raise ConfigurationError(ConfigurationError.BAD_VALUE, item=item, file=source, value=value)
    return value


def _webhook(value: Any, item: str, source: Path, /) -> Optional[str]:
    if value is None:
        return None
    try:
        return validate_endpoint(str(value))
    except WebhookError as err:
        raise ConfigurationError(ConfigurationError.BAD_VALUE, item=item, file=source, value=value) from err


def parse_config(config: DotMap, source: PathName, /) -> RunConfig:
    """Interpret a configuration document.

    Args:
        config: The configuration document.
        source: The configuration file, whose directory anchors relative paths.

    Returns:
        The run configuration.

    Raises:
        ConfigurationError.BAD_SCHEMA: If the schema is not supported.
        ConfigurationError.BAD_VALUE: If a value is missing or invalid.
    """
    source = Path(source)
    if (schema := config.get('schema')) != CONFIG_SCHEMA:
        raise ConfigurationError(ConfigurationError.BAD_SCHEMA, file=source, schema=schema)
    base = source.parent
    webhooks = config.get('webhooks') or DotMap()
    values: dict[str, Any] = {
        'source': source,
        'business_flow': _path(config, 'events.business_flow', base, source, required=True),
        'registry': _path(config, 'registry', base, source, required=True),
        'compliance_check': _path(config, 'events.compliance_check', base, source),
        'follow_up': _path(config, 'events.follow_up', base, source),
        'case_attributes': _path(config, 'case_attributes', base, source),
        'checkpoint': _path(config, 'checkpoint', base, source, default='checkpoint.yml'),
        'outbox': _path(config, 'outbox', base, source, default='outbox'),
        'output': _path(config, 'output', base, source, default='output'),
        'ticket_webhook': _webhook(webhooks.get('ticket'), 'webhooks.ticket', source),
        'rpa_webhook': _webhook(webhooks.get('rpa'), 'webhooks.rpa', source)}

    if (completion := config.get('completion_activities')) is not None:
        if isinstance(completion, str):
            completion = [completion]
        if not completion or not all(isinstance(a, str) and a.strip() for a in completion):
            raise ConfigurationError(ConfigurationError.BAD_VALUE, item='completion_activities', file=source, value=completion)
        values['completion_activities'] = frozenset(a.strip() for a in completion)
    if (layout := config.get('layout')) is not None:
        layout_fields = {f.name for f in fields(LayoutParams)}
        try:
            if unknown := [k for k in layout if k not in layout_fields]:
                raise NetworkError(NetworkError.BAD_PARAMS, name=unknown[0], value=layout[unknown[0]])
            values['layout'] = LayoutParams(**layout.toDict())
        except (NetworkError, TypeError) as err:
            raise ConfigurationError(ConfigurationError.BAD_VALUE, item='layout', file=source, value=err) from err
    if (threshold := config.get('systemic_threshold')) is not None:
        if isinstance(threshold, bool) or not isinstance(threshold, int) or threshold < 1:
            raise ConfigurationError(ConfigurationError.BAD_VALUE, item='systemic_threshold', file=source, value=threshold)
        values['systemic_threshold'] = threshold
    if (granularity := config.get('granularity')) is not None:
        values['granularity'] = _choice(Granularity, granularity, 'granularity', source)
    if (timelines := config.get('timelines')) is not None:
        values['timelines'] = _choice(TimelineScope, timelines, 'timelines', source)
    for flag in ('dry_run', 'fail_on_violation'):
        if (value := config.get(flag)) is not None:
            values[flag] = _flag(value, flag, source)
    if (clock := config.get('clock')) is not None:
        try:
            values['clock'] = parse_instant(clock if isinstance(clock, datetime) else str(clock))
        except TimeError as err:
            raise ConfigurationError(ConfigurationError.BAD_VALUE, item='clock', file=source, value=clock) from err
    return RunConfig(**values)


def load_config(filename: PathName = DEFAULT_CONFIG_FILE, /) -> RunConfig:
    """Read a run configuration file.

    Args:
        filename (optional, default=DEFAULT_CONFIG_FILE): The configuration file.

    Returns:
        The run configuration.

    Raises:
        ConfigurationError.CONFIG_NOT_FOUND: If the file does not exist.
        ConfigurationError.BAD_FORMAT: If the file is not a YAML mapping.
        ConfigurationError.BAD_SCHEMA: If the schema is not supported.
        ConfigurationError.BAD_VALUE: If a value is missing or invalid.
    """
    path = Path(filename)
    if not path.is_file():
        raise ConfigurationError(ConfigurationError.CONFIG_NOT_FOUND, file=path)
    try:
        config = yaml_to_dotmap(path)
    except (YAMLError, ValueError) as err:
        raise ConfigurationError(ConfigurationError.BAD_FORMAT, file=path, err=err) from err
    return parse_config(config, path)

# cSpell:ignore dotmap
