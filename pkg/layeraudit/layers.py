"""This module provides multi-layer event log composition and per-case timelines.

Attributes:
    LAYER_COLORS: The display color of each layer.
"""

# Import standard modules
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from re import compile as re_compile
from string import Template
from typing import Dict, Iterable, List, Mapping, Tuple

# Import internal modules
from .event_model import Event, EventLog, Layer
from .fileutil import ensure_dir, write_text_atomic
from .lang import LayerAuditError, LayerAuditException, PathName
from .reporter import OutputFormat, Report, Table
from .time import format_instant

LAYER_COLORS = {Layer.business_flow: 'blue', Layer.compliance_check: 'green', Layer.violation: 'red', Layer.follow_up: 'orange'}
TIMELINE_COLUMNS = ('timestamp', 'activity', 'layer', 'color')

_UNSAFE_FILENAME_CHARS = re_compile(r'[^A-Za-z0-9_.-]')


class LayerError(LayerAuditException):
    """Layer composition Exceptions.

    Attributes:
        BAD_TAG: An event is tagged with a different layer than its input.
        UNKNOWN_CASE: The requested case is not in the log.
    """
    BAD_TAG = LayerAuditError(1, Template('Event "$activity" in case $case_id is tagged $found but was supplied as $expected'))
    UNKNOWN_CASE = LayerAuditError(2, Template('Case $case_id not found'))


def _manifest(event_log: EventLog, /) -> Dict[Layer, int]:
    counts = {layer: 0 for layer in Layer}
    for event in event_log.events():
        counts[event.layer] += 1
    return counts


@dataclass(frozen=True)
class MultiLayerLog:
    """An event log spanning several layers.

        Attributes:
            log: The event log.
            layer_manifest: The number of events per layer.
    """
    log: EventLog = field(default_factory=EventLog)
    layer_manifest: Mapping[Layer, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'layer_manifest', _manifest(self.log))

    event_count = property(lambda s: s.log.event_count, doc='A read-only property which returns the number of events.')
    traces = property(lambda s: s.log.traces, doc='A read-only property which returns the traces keyed by case.')

    def events(self) -> Iterable[Event]:
        """Iterate over every event, case by case in canonical order."""
        return self.log.events()


def split_layers(event_log: EventLog, /) -> Dict[Layer, EventLog]:
    """Split a log into one log per layer."""
    return {layer: EventLog.from_events((e for e in event_log.events() if e.layer == layer), f'{event_log.source_descriptor}[{layer.name}]')
            for layer in Layer}


def compose(business: EventLog, checks: EventLog, violations: EventLog, followups: EventLog, /) -> MultiLayerLog:
    """Compose the four layers into one log.

    Ordinals are kept as supplied since events of different layers never share a (case_id, layer, ordinal) key.

    Args:
        business: The business flow layer.
        checks: The compliance check layer.
        violations: The violation layer.
        followups: The follow-up layer.

    Returns:
        The composed log, canonically ordered per case.

    Raises:
        LayerError.BAD_TAG: If an event is not tagged with the layer of its input.
    """
    events: List[Event] = []
    case_attributes: Dict[str, Dict[str, str]] = {}
    for (expected, source) in zip(Layer, (business, checks, violations, followups)):
        for event in source.events():
            if event.layer != expected:
                raise LayerError(LayerError.BAD_TAG, activity=event.activity, case_id=event.case_id, found=event.layer.name, expected=expected.name)
            events.append(event)
        for (case_id, trace) in source.traces.items():
            case_attributes[case_id] = dict(trace.case_attributes) | case_attributes.get(case_id, {})
    return MultiLayerLog(EventLog.from_events(events, 'composed', case_attributes=case_attributes))


def filter_event_types(multilog: MultiLayerLog, keep: Iterable[str], /) -> MultiLayerLog:
    """Keep only the events of the given activities.

    Args:
        multilog: The log to filter.
        keep: The activities to keep.

    Returns:
        The filtered log with order preserved and cases left without events dropped.
    """
    keep = set(keep)
    events = [e for e in multilog.events() if e.activity in keep]
    case_attributes = {c: dict(t.case_attributes) for (c, t) in multilog.traces.items()}
    return MultiLayerLog(EventLog.from_events(events, multilog.log.source_descriptor, case_attributes=case_attributes))


@dataclass(frozen=True)
class TimelineRow:
    """One row of a case timeline."""
    timestamp: datetime
    activity: str
    layer: Layer
    color: str

    def as_text(self) -> Tuple[str, str, str, str]:
        """Return the row as text values."""
        return (format_instant(self.timestamp), self.activity, self.layer.name, self.color)


@dataclass(frozen=True)
class Timeline:
    """The layered timeline of one case.

        Attributes:
            case_id: The case.
            rows: The rows in canonical trace order.
    """
    case_id: str
    rows: Tuple[TimelineRow, ...]

    def to_html(self) -> str:
        """Render the timeline as a static html document."""
        report = Report(f'Timeline for case {self.case_id}', output=OutputFormat.html)
        report.add_table(Table(TIMELINE_COLUMNS, [r.as_text() for r in self.rows], colors=[r.color for r in self.rows]))
        return str(report)

    def to_tsv(self) -> str:
        """Render the timeline as tab-separated text with a header row."""
        lines = ['\t'.join(TIMELINE_COLUMNS)]
        lines += ['\t'.join(v.replace('\t', ' ').replace('\n', ' ') for v in r.as_text()) for r in self.rows]
        return '\n'.join(lines) + '\n'


def render_timeline(multilog: MultiLayerLog, case_id: str, /) -> Timeline:
    """Build the timeline of a case.

    Args:
        multilog: The composed log.
        case_id: The case to render.

    Returns:
        The timeline.

    Raises:
        LayerError.UNKNOWN_CASE: If the case is not in the log.
    """
    if case_id not in multilog.traces:
        raise LayerError(LayerError.UNKNOWN_CASE, case_id=case_id)
    return Timeline(case_id, tuple(TimelineRow(e.timestamp, e.activity, e.layer, LAYER_COLORS[e.layer]) for e in multilog.traces[case_id]))


def timeline_basename(case_id: str, /) -> str:
    """Return the file name stem used for the timeline files of a case."""
    return f'timeline_{_UNSAFE_FILENAME_CHARS.sub("_", case_id)}'


def write_timeline(timeline: Timeline, directory: PathName, /) -> Tuple[Path, Path]:
    """Write the html and tsv files of a timeline.

    Returns:
        The html and tsv file paths.
    """
    stem = ensure_dir(directory) / timeline_basename(timeline.case_id)
    return (write_text_atomic(f'{stem}.html', timeline.to_html()), write_text_atomic(f'{stem}.tsv', timeline.to_tsv()))
