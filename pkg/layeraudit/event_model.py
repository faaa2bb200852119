"""This module provides the event log data model and flat-file ingestion.

Event file definitions:
    CSV
        A header row is required and must name at least case_id, activity and timestamp.
        An optional layer column overrides the default layer per row.
        Every other column becomes an event attribute; empty cells mean the attribute is absent.

    JSONL
        One JSON object per line with the same keys as the CSV columns.

Timestamps are ISO-8601 (YYYY-MM-DD or YYYY-MM-DDTHH:MM:SSZ) and layers are one of
business_flow, compliance_check, violation or follow_up.

Attributes:
    Layer (Enum): The event log layers in tie-break order.
    EventFormat (Enum): The supported event file formats.
    REQUIRED_COLUMNS: The columns every event file must provide.
"""

# Import standard modules
from csv import DictReader, DictWriter, Error as CSVError
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from io import StringIO
from json import JSONDecodeError, dumps as json_dumps, loads as json_loads
from logging import getLogger
from pathlib import Path
from string import Template
from typing import Any, BinaryIO, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

# Import internal modules
from .fileutil import write_text_atomic
from .lang import LayerAuditError, LayerAuditException, PathName
from .time import TimeError, format_instant, parse_instant, to_utc

Layer = Enum('Layer', ('business_flow', 'compliance_check', 'violation', 'follow_up'))
EventFormat = Enum('EventFormat', ('csv', 'jsonl'))

CASE_COLUMN = 'case_id'
ACTIVITY_COLUMN = 'activity'
TIMESTAMP_COLUMN = 'timestamp'
LAYER_COLUMN = 'layer'
REQUIRED_COLUMNS = (CASE_COLUMN, ACTIVITY_COLUMN, TIMESTAMP_COLUMN)

type CaseAttributes = Dict[str, Dict[str, str]]
type EventKey = Tuple[str, Layer, int]

log = getLogger(__name__)


class EventLogError(LayerAuditException):
    """Event Log Exceptions.

    Attributes:
        BAD_ENCODING: The source is not valid UTF-8.
        BAD_JSON: A JSONL line is not a JSON object.
        BAD_LAYER: A row names an unknown layer.
        BAD_FORMAT: The CSV is malformed or a row has more fields than the header.
        BAD_TIMESTAMP: A row has a malformed timestamp.
        DUPLICATE_EVENT: Two sources contain the same (case_id, layer, ordinal) event.
        EMPTY_ACTIVITY: An event has an empty activity.
        MISMATCHED_CASE: A trace was built from events of different cases.
        MISSING_COLUMN: A required column is missing from the header.
        MISSING_VALUE: A row has no value for a required column.
    """
    BAD_ENCODING = LayerAuditError(1, Template('$source is not valid UTF-8: $err'))
    BAD_JSON = LayerAuditError(2, Template('$source line $line: expected a JSON object'))
    BAD_LAYER = LayerAuditError(3, Template('$source line $line: unknown layer "$value"'))
    BAD_FORMAT = LayerAuditError(4, Template('$source line $line: malformed row'))
    BAD_TIMESTAMP = LayerAuditError(5, Template('$source line $line: malformed timestamp "$value"'))
    DUPLICATE_EVENT = LayerAuditError(6, Template('Event ($case_id, $layer, $ordinal) found in both $first and $second'))
    EMPTY_ACTIVITY = LayerAuditError(7, Template('Empty activity for case $case_id'))
    MISMATCHED_CASE = LayerAuditError(8, Template('Event for case $found added to trace $case_id'))
    MISSING_COLUMN = LayerAuditError(9, Template('$source is missing required column(s): $columns'))
    MISSING_VALUE = LayerAuditError(10, Template('$source line $line: no value for $column'))


@dataclass(frozen=True)
class Event:
    """One timestamped activity occurrence in a case.

        Attributes:
            case_id: The case the event belongs to.
            activity: The activity label, trimmed and never empty.
            timestamp: The aware UTC instant of the event.
            layer: The event log layer.
            ordinal: The input sequence number, unique within the source.
            attributes: Any other event data as strings.
    """
    case_id: str
    activity: str
    timestamp: datetime
    layer: Layer = Layer.business_flow
    ordinal: int = 0
    attributes: Mapping[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if not (activity := self.activity.strip()):
            raise EventLogError(EventLogError.EMPTY_ACTIVITY, case_id=self.case_id)
        if self.ordinal < 0:
            raise ValueError(f'ordinal must be non-negative, got {self.ordinal}')
        object.__setattr__(self, 'activity', activity)
        object.__setattr__(self, 'timestamp', to_utc(self.timestamp))
        object.__setattr__(self, 'attributes', dict(self.attributes))

    key = property(lambda s: (s.case_id, s.layer, s.ordinal), doc='A read-only property which returns the (case_id, layer, ordinal) identity.')
    sort_key = property(lambda s: (s.timestamp, s.layer.value, s.ordinal), doc='A read-only property which returns the canonical ordering key.')

    def with_ordinal(self, ordinal: int, /) -> 'Event':
        """Return a copy of this event with a new ordinal."""
        return replace(self, ordinal=ordinal)


@dataclass(frozen=True)
class Trace:
    """The events of one case in canonical order.

        Attributes:
            case_id: The case identifier.
            events: The events sorted by (timestamp, layer, ordinal).
            case_attributes: The case attribute table row for this case.
    """
    case_id: str
    events: Tuple[Event, ...] = ()
    case_attributes: Mapping[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        for event in self.events:
            if event.case_id != self.case_id:
                raise EventLogError(EventLogError.MISMATCHED_CASE, case_id=self.case_id, found=event.case_id)
        object.__setattr__(self, 'events', tuple(self.events))
        object.__setattr__(self, 'case_attributes', dict(self.case_attributes))

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    activities = property(lambda s: [e.activity for e in s.events], doc='A read-only property which returns the activities in trace order.')


@dataclass(frozen=True)
class EventLog:
    """A collection of traces keyed by case.

        Attributes:
            traces: The traces keyed by case_id, in case_id order.
            source_descriptor: A description of where the events came from.
    """
    traces: Mapping[str, Trace] = field(default_factory=dict)
    source_descriptor: str = ''

    def __post_init__(self):
        seen: Dict[EventKey, Event] = {}
        for trace in self.traces.values():
            for event in trace:
                if event.key in seen:
                    raise EventLogError(EventLogError.DUPLICATE_EVENT, case_id=event.case_id, layer=event.layer.name, ordinal=event.ordinal,
                                        first=self.source_descriptor, second=self.source_descriptor)
                seen[event.key] = event
        object.__setattr__(self, 'traces', {c: self.traces[c] for c in sorted(self.traces)})

    @classmethod
    def from_events(cls, events: Iterable[Event], /, source_descriptor: str = '', *, case_attributes: Optional[CaseAttributes] = None) -> 'EventLog':
        """Build a log from loose events.

        Args:
            events: The events to group into traces.
            source_descriptor (optional, default=''): The provenance of the events.
            case_attributes (optional, default=None): Case attribute rows keyed by case_id.

        Returns:
            The log with every trace in canonical order.
        """
        grouped: Dict[str, List[Event]] = {}
        for event in events:
            grouped.setdefault(event.case_id, []).append(event)
        case_attributes = case_attributes or {}
        return cls({c: canonical_order(Trace(c, tuple(e), case_attributes.get(c, {}))) for (c, e) in grouped.items()}, source_descriptor)

    activities = property(lambda s: {e.activity for e in s.events()}, doc='A read-only property which returns the set of activity labels.')
    case_ids = property(lambda s: list(s.traces), doc='A read-only property which returns the case identifiers in order.')
    event_count = property(lambda s: sum(len(t) for t in s.traces.values()), doc='A read-only property which returns the number of events.')
    trace_count = property(lambda s: len(s.traces), doc='A read-only property which returns the number of traces.')

    def events(self) -> Iterator[Event]:
        """Iterate over every event, case by case in canonical trace order."""
        for trace in self.traces.values():
            yield from trace


def row_ordinal(row_index: int, layer: Layer, /) -> int:
    """Return the ordinal of an ingested row.

    Rows of different layers never share an ordinal, so a merged case needs no renumbering and the ordinal of a row
    only changes if rows are inserted before it.
    """
    return row_index * len(Layer) + layer.value - 1


def canonical_order(trace: Trace, /) -> Trace:
    """Sort the events of a trace by (timestamp, layer, ordinal).

    Args:
        trace: The trace to sort.

    Returns:
        The sorted trace. Sorting is stable and idempotent.
    """
    return Trace(trace.case_id, tuple(sorted(trace.events, key=lambda e: e.sort_key)), trace.case_attributes)


def merge_logs(logs: Sequence[EventLog], /) -> EventLog:
    """Merge logs into one unified log.

    Ingested ordinals are already global within a case (see row_ordinal), so they are kept as they are. Event keys
    therefore do not depend on which or how many sources are merged.

    Args:
        logs: The logs to merge, pairwise disjoint on (case_id, layer, ordinal).

    Returns:
        The merged log with every trace in canonical order.

    Raises:
        EventLogError.DUPLICATE_EVENT: If two sources share a (case_id, layer, ordinal) event.
    """
    if len(logs) == 1:
        return logs[0]
    owners: Dict[EventKey, str] = {}
    merged: List[Event] = []
    case_attributes: CaseAttributes = {}
    for (index, source) in enumerate(logs):
        for event in source.events():
            if event.key in owners:
                raise EventLogError(EventLogError.DUPLICATE_EVENT, case_id=event.case_id, layer=event.layer.name, ordinal=event.ordinal,
                                    first=owners[event.key], second=source.source_descriptor or f'log #{index}')
            owners[event.key] = source.source_descriptor or f'log #{index}'
            merged.append(event)
        for (case_id, trace) in source.traces.items():
            case_attributes[case_id] = trace.case_attributes | case_attributes.get(case_id, {})
    descriptor = '+'.join(s.source_descriptor for s in logs if s.source_descriptor)
    return EventLog.from_events(merged, descriptor, case_attributes=case_attributes)


def _decode(source: BinaryIO | bytes, descriptor: str, /) -> str:
    """Read and decode a UTF-8 byte source."""
    raw = source if isinstance(source, bytes) else source.read()
    try:
        return raw.decode('utf-8-sig')
    except UnicodeDecodeError as err:
        raise EventLogError(EventLogError.BAD_ENCODING, source=descriptor, err=err) from err


def _parse_layer(value: Any, default_layer: Layer, descriptor: str, line: int, /) -> Layer:
    """Resolve the layer for a row."""
    if value is None or not str(value).strip():
        return default_layer
    try:
        return Layer[str(value).strip()]
    except KeyError as err:
        raise EventLogError(EventLogError.BAD_LAYER, source=descriptor, line=line, value=value) from err


def _row_to_event(row: Mapping[str, Any], row_index: int, default_layer: Layer, descriptor: str, line: int, /) -> Event:
    """Convert one parsed row into an Event."""
    for column in REQUIRED_COLUMNS:
        if row.get(column) is None or not str(row[column]).strip():
            raise EventLogError(EventLogError.MISSING_VALUE, source=descriptor, line=line, column=column)
    try:
        timestamp = parse_instant(str(row[TIMESTAMP_COLUMN]))
    except TimeError as err:
        raise EventLogError(EventLogError.BAD_TIMESTAMP, source=descriptor, line=line, value=row[TIMESTAMP_COLUMN]) from err
    attributes = {str(k): str(v) for (k, v) in row.items() if (k not in REQUIRED_COLUMNS) and (k != LAYER_COLUMN) and (v is not None) and (str(v) != '')}
    layer = _parse_layer(row.get(LAYER_COLUMN), default_layer, descriptor, line)
    return Event(str(row[CASE_COLUMN]).strip(), str(row[ACTIVITY_COLUMN]), timestamp, layer, row_ordinal(row_index, layer), attributes)


def _iter_csv_rows(text: str, descriptor: str, /) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, row) pairs from CSV text after checking the header."""
    reader = DictReader(StringIO(text, newline=''))
    try:
        header = reader.fieldnames or []
    except CSVError as err:
        raise EventLogError(EventLogError.BAD_FORMAT, source=descriptor, line=1) from err
    if missing := [c for c in REQUIRED_COLUMNS if c not in header]:
        raise EventLogError(EventLogError.MISSING_COLUMN, source=descriptor, columns=', '.join(missing))
    try:
        for row in reader:
            if None in row:
                raise EventLogError(EventLogError.BAD_FORMAT, source=descriptor, line=reader.line_num)
            yield (reader.line_num, row)
    except CSVError as err:
        raise EventLogError(EventLogError.BAD_FORMAT, source=descriptor, line=reader.line_num) from err


def _iter_jsonl_rows(text: str, descriptor: str, /) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, row) pairs from JSONL text."""
    for (line_index, line) in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json_loads(line)
        except JSONDecodeError as err:
            raise EventLogError(EventLogError.BAD_JSON, source=descriptor, line=line_index) from err
        if not isinstance(row, dict):
            raise EventLogError(EventLogError.BAD_JSON, source=descriptor, line=line_index)
        if missing := [c for c in REQUIRED_COLUMNS if c not in row]:
            raise EventLogError(EventLogError.MISSING_COLUMN, source=descriptor, columns=', '.join(missing))
        yield (line_index, row)


def _iter_rows(source: BinaryIO | bytes, file_format: EventFormat, descriptor: str, /) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, row) pairs from a source of either format."""
    text = _decode(source, descriptor)
    if file_format == EventFormat.jsonl:
        return _iter_jsonl_rows(text, descriptor)
    return _iter_csv_rows(text, descriptor)


def ingest_events(source: BinaryIO | bytes, file_format: EventFormat = EventFormat.csv, default_layer: Layer = Layer.business_flow, /, *,
                  source_descriptor: str = '<stream>', skip_bad_rows: bool = False) -> EventLog:
    """Ingest an events file.

    Args:
        source: The UTF-8 byte stream (or bytes) to read.
        file_format (optional, default=csv): The format of the source.
        default_layer (optional, default=business_flow): The layer for rows with no layer value.
        source_descriptor (optional, default='<stream>'): The provenance recorded on the log and used in messages.
        skip_bad_rows (optional, default=False): If True, row-level errors are logged and the row skipped.

    Returns:
        The event log with ordinals assigned by input row order through row_ordinal.

    Raises:
        EventLogError.MISSING_COLUMN: If a required column is missing.
        EventLogError.BAD_TIMESTAMP: If a row has a malformed timestamp and skip_bad_rows is False.
        EventLogError: For any other row-level error when skip_bad_rows is False.
    """
    events: List[Event] = []
    for (row_index, (line, row)) in enumerate(_iter_rows(source, file_format, source_descriptor)):
        try:
            events.append(_row_to_event(row, row_index, default_layer, source_descriptor, line))
        except EventLogError as err:
            if (not skip_bad_rows) or (err.code == EventLogError.MISSING_COLUMN.code):
                raise
            log.warning('Skipping row: %s', err)
    log.debug('Ingested %d events from %s', len(events), source_descriptor)
    return EventLog.from_events(events, source_descriptor)


def format_for(filename: PathName, /) -> EventFormat:
    """Infer the event file format from the file suffix (.jsonl or anything else for CSV)."""
    return EventFormat.jsonl if Path(filename).suffix.lower() in ('.jsonl', '.ndjson') else EventFormat.csv


def read_events(filename: PathName, default_layer: Layer = Layer.business_flow, /, *, skip_bad_rows: bool = False) -> EventLog:
    """Ingest an events file from disk.

    Args:
        filename: The file to read; the format is inferred from the suffix.
        default_layer (optional, default=business_flow): The layer for rows with no layer value.
        skip_bad_rows (optional, default=False): Passed to ingest_events.

    Returns:
        The event log.
    """
    with open(filename, 'rb') as stream:
        return ingest_events(stream, format_for(filename), default_layer, source_descriptor=str(filename), skip_bad_rows=skip_bad_rows)


def ingest_case_attributes(source: BinaryIO | bytes, file_format: EventFormat = EventFormat.csv, /, *, source_descriptor: str = '<stream>') -> CaseAttributes:
    """Ingest a case attribute table.

    Args:
        source: The UTF-8 byte stream with a case_id column and one column per attribute.
        file_format (optional, default=csv): The format of the source.
        source_descriptor (optional, default='<stream>'): The provenance used in messages.

    Returns:
        The attributes keyed by case_id; later rows for a case override earlier values.

    Raises:
        EventLogError.MISSING_COLUMN: If there is no case_id column.
        EventLogError.BAD_JSON: If a JSONL line is not a JSON object.
        EventLogError.BAD_FORMAT: If the CSV is malformed.
    """
    text = _decode(source, source_descriptor)
    rows: List[Dict[str, Any]] = []
    if file_format == EventFormat.jsonl:
        for (line_index, line) in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json_loads(line)
            except JSONDecodeError as err:
                raise EventLogError(EventLogError.BAD_JSON, source=source_descriptor, line=line_index) from err
            if not isinstance(row, dict):
                raise EventLogError(EventLogError.BAD_JSON, source=source_descriptor, line=line_index)
            rows.append(row)
    else:
        reader = DictReader(StringIO(text, newline=''))
        try:
            if CASE_COLUMN not in (reader.fieldnames or []):
                raise EventLogError(EventLogError.MISSING_COLUMN, source=source_descriptor, columns=CASE_COLUMN)
            rows = list(reader)
        except CSVError as err:
            raise EventLogError(EventLogError.BAD_FORMAT, source=source_descriptor, line=reader.line_num) from err
    table: CaseAttributes = {}
    for row in rows:
        if not (case_id := str(row.get(CASE_COLUMN) or '').strip()):
            raise EventLogError(EventLogError.MISSING_COLUMN, source=source_descriptor, columns=CASE_COLUMN)
        table.setdefault(case_id, {}).update({str(k): str(v) for (k, v) in row.items() if k != CASE_COLUMN and v not in (None, '')})
    return table


def attach_case_attributes(event_log: EventLog, case_attributes: CaseAttributes, /) -> EventLog:
    """Return a copy of a log with case attribute rows attached to the matching traces."""
    return EventLog({c: Trace(c, t.events, t.case_attributes | case_attributes.get(c, {})) for (c, t) in event_log.traces.items()},
                    event_log.source_descriptor)


def serialize_events(events: Iterable[Event], file_format: EventFormat = EventFormat.csv, /, *, extra_columns: Sequence[str] = ()) -> str:
    """Serialize events in the events file format.

    Args:
        events: The events to write, in the order given.
        file_format (optional, default=csv): The output format.
        extra_columns (optional, default=()): Attribute columns to place first after the fixed columns.

    Returns:
        The serialized text which ingest_events reads back into the same events.
    """
    events = list(events)
    attribute_names = sorted({a for e in events for a in e.attributes} - set(extra_columns))
    columns = [*REQUIRED_COLUMNS, LAYER_COLUMN, *extra_columns, *attribute_names]
    rows = [{CASE_COLUMN: e.case_id, ACTIVITY_COLUMN: e.activity, TIMESTAMP_COLUMN: format_instant(e.timestamp), LAYER_COLUMN: e.layer.name} | dict(e.attributes)
            for e in events]
    if file_format == EventFormat.jsonl:
        return ''.join(json_dumps({c: r[c] for c in columns if c in r}, ensure_ascii=False) + '\n' for r in rows)
    output = StringIO(newline='')
    writer = DictWriter(output, fieldnames=columns, lineterminator='\n')
    writer.writeheader()
    writer.writerows(rows)
    return output.getvalue()


def write_events(filename: PathName, events: Iterable[Event], /, *, extra_columns: Sequence[str] = ()) -> Path:
    """Write events to a file in the format implied by its suffix."""
    return write_text_atomic(filename, serialize_events(events, format_for(filename), extra_columns=extra_columns))

# cSpell:ignore jsonl ndjson
