"""This module provides batch and incremental evaluation of compliance rules.

A case is complete at its first event whose activity is in the completion set. Precedence guard stamping,
Existence and Response only consider events up to and including that event.

Attributes:
    DEFAULT_COMPLETION: The default completion activities.
    CHECKPOINT_SCHEMA: The schema version written to checkpoint files.
"""

# Import standard modules
from dataclasses import dataclass, field
from datetime import datetime
from logging import getLogger
from pathlib import Path
from string import Template
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

# Import third-party modules
from yaml import YAMLError

# Import internal modules
from .crl import Absence, ComplianceRule, Content, ContentOperator, ContentScope, Existence, Precedence, Response, RuleRegistry, normalize_value
from .event_model import Event, EventLog, Layer, Trace
from .fileutil import write_text_atomic
from .lang import DEFAULT_ENCODING, LayerAuditError, LayerAuditException, PathName, dotmap_to_yaml, yaml_to_dotmap
from .time import TimeError, format_instant, parse_instant

DEFAULT_COMPLETION: FrozenSet[str] = frozenset({'Completed'})
CHECKPOINT_SCHEMA = 1
VIOLATION_ACTIVITY = Template('Continuous Audit finding; $rule_id violation')
VIOLATION_COLUMNS = ('rule_id', 'detection_ts')

type Watermark = Tuple[datetime, int, int]

log = getLogger(__name__)


class EngineError(LayerAuditException):
    """Rule evaluation Exceptions.

    Attributes:
        BAD_CHECKPOINT: The checkpoint file could not be interpreted.
        CHECKPOINT_SCHEMA: The checkpoint file has an unsupported schema.
        CLOCK_BEFORE_EVENTS: The evaluation clock is earlier than an event being evaluated.
        CLOCK_REGRESSION: The evaluation clock is earlier than the previous run.
        LATE_EVENT: An event dated before the previous run changes a violation already emitted.
        STALE_INPUT: An unseen event is at or below the processed watermark.
        UNSORTED_TRACE: A trace is not in canonical order.
    """
    BAD_CHECKPOINT = LayerAuditError(1, Template('Invalid checkpoint $path: $err'))
    CHECKPOINT_SCHEMA = LayerAuditError(2, Template('Unsupported checkpoint schema $schema in $path'))
    CLOCK_BEFORE_EVENTS = LayerAuditError(3, Template('Clock $clock is earlier than event at $timestamp in case $case_id'))
    CLOCK_REGRESSION = LayerAuditError(4, Template('Clock $clock is earlier than the previous run at $last'))
    LATE_EVENT = LayerAuditError(7, Template('Event $activity at $timestamp in case $case_id arrived after the run at $last and changes violation $dedup_key'))
    STALE_INPUT = LayerAuditError(5, Template('Event $activity at $timestamp in case $case_id is at or below the processed watermark'))
    UNSORTED_TRACE = LayerAuditError(6, Template('Trace $case_id is not in canonical order'))


@dataclass(frozen=True)
class EvidenceRef:
    """A reference to an event supporting a violation."""
    activity: str
    timestamp: datetime
    ordinal: int

    def __str__(self):
        return f'{self.activity}@{format_instant(self.timestamp)}'

    @classmethod
    def of(cls, event: Event, /) -> 'EvidenceRef':
        """Create a reference to an event."""
        return cls(event.activity, event.timestamp, event.ordinal)


@dataclass(frozen=True)
class ViolationRecord:
    """A detected rule violation.

        Attributes:
            case_id: The violating case.
            rule_id: The violated rule.
            violation_ts: When the violation took place.
            detection_ts: The evaluation clock which found it.
            evidence: The events supporting the violation, primary event first.
            ordinal: The ordinal of the primary offending event.
            provisional: True if later events could still change the verdict or its timestamp.
    """
    case_id: str
    rule_id: str
    violation_ts: datetime
    detection_ts: datetime
    evidence: Tuple[EvidenceRef, ...]
    ordinal: int
    provisional: bool = False

    dedup_key = property(lambda s: f'{s.case_id}|{s.rule_id}|{s.ordinal}', doc='A read-only property which returns the key identifying the violation across runs.')
    sort_key = property(lambda s: (s.violation_ts, s.rule_id, s.ordinal), doc='A read-only property which returns the per-case output ordering key.')
    evidence_summary = property(lambda s: '; '.join(str(e) for e in s.evidence), doc='A read-only property which returns the evidence as text.')


@dataclass
class EngineCheckpoint:
    """The persisted state of continuous evaluation.

        Attributes:
            watermarks: The sort key of the last processed event per case.
            emitted_keys: The dedup keys of every emitted violation.
            clock_of_last_run: The clock of the last run.
            history: The processed events per case.
            case_attributes: The case attribute rows seen per case.
            violations: Every emitted violation.
            pending: The provisional violations of the last run.
            actions: The completed follow-up action kinds per dedup key.
            followups: The follow-up events recorded so far.
    """
    watermarks: Dict[str, Watermark] = field(default_factory=dict)
    emitted_keys: Set[str] = field(default_factory=set)
    clock_of_last_run: Optional[datetime] = None
    history: Dict[str, List[Event]] = field(default_factory=dict)
    case_attributes: Dict[str, Dict[str, str]] = field(default_factory=dict)
    violations: List[ViolationRecord] = field(default_factory=list)
    pending: List[ViolationRecord] = field(default_factory=list)
    actions: Dict[str, Set[str]] = field(default_factory=dict)
    followups: List[Event] = field(default_factory=list)

    def history_log(self) -> EventLog:
        """Return the processed events as a log."""
        return EventLog.from_events((e for evts in self.history.values() for e in evts), 'checkpoint', case_attributes=self.case_attributes)

    def copy(self) -> 'EngineCheckpoint':
        """Return a copy whose containers can be changed independently."""
        return EngineCheckpoint(dict(self.watermarks), set(self.emitted_keys), self.clock_of_last_run,
                                {c: list(e) for (c, e) in self.history.items()}, {c: dict(a) for (c, a) in self.case_attributes.items()},
                                list(self.violations), list(self.pending), {k: set(v) for (k, v) in self.actions.items()}, list(self.followups))


def violation_activity(rule_id: str, /) -> str:
    """Return the activity label of a violation event."""
    return VIOLATION_ACTIVITY.substitute(rule_id=rule_id)


def _completion_index(events: Sequence[Event], completion: FrozenSet[str], /) -> Optional[int]:
    return next((i for (i, e) in enumerate(events) if e.activity in completion), None)


def _record(trace: Trace, rule: ComplianceRule, violation_ts: datetime, clock: datetime, evidence: Iterable[Event], /, *, provisional: bool = False) -> ViolationRecord:
    refs = tuple(EvidenceRef.of(e) for e in evidence)
    return ViolationRecord(trace.case_id, rule.rule_id, violation_ts, clock, refs, refs[0].ordinal, provisional)


def _check_precedence(trace: Trace, rule: ComplianceRule, pattern: Precedence, clock: datetime, completed_at: Optional[int], /) -> List[ViolationRecord]:
    events = trace.events
    lifetime_end = len(events) if completed_at is None else completed_at + 1
    violations = []
    for (index, event) in enumerate(events):
        if event.activity == pattern.guard:
            break
        if event.activity != pattern.target:
            continue
        late_guard = next((e for e in events[index + 1:lifetime_end] if e.activity == pattern.guard), None)
        if late_guard is not None:
            violations.append(_record(trace, rule, late_guard.timestamp, clock, (event, late_guard)))
        else:
            violations.append(_record(trace, rule, event.timestamp, clock, (event,), provisional=completed_at is None))
    return violations


def _check_absence(trace: Trace, rule: ComplianceRule, pattern: Absence, clock: datetime, /) -> List[ViolationRecord]:
    return [_record(trace, rule, e.timestamp, clock, (e,)) for e in trace if e.activity == pattern.activity]


def _check_existence(trace: Trace, rule: ComplianceRule, pattern: Existence, clock: datetime, completed_at: Optional[int], /) -> List[ViolationRecord]:
    if completed_at is None:
        return []
    if any(e.activity == pattern.activity for e in trace.events[:completed_at + 1]):
        return []
    completion = trace.events[completed_at]
    return [_record(trace, rule, completion.timestamp, clock, (completion,))]


def _check_response(trace: Trace, rule: ComplianceRule, pattern: Response, clock: datetime, completed_at: Optional[int], /) -> List[ViolationRecord]:
    events = trace.events[:None if completed_at is None else completed_at + 1]
    completion = None if completed_at is None else events[completed_at]
    violations = []
    for (index, trigger) in enumerate(events):
        if trigger.activity != pattern.trigger:
            continue
        response = next((e for e in events[index + 1:] if e.activity == pattern.response), None)
        if pattern.deadline is None:
            if (completion is not None) and (response is None):
                violations.append(_record(trace, rule, completion.timestamp, clock, (trigger, completion)))
            continue
        due = trigger.timestamp + pattern.deadline
        if (response is not None) and (response.timestamp <= due):
            continue
        evidence = (trigger,) if response is None else (trigger, response)
        if completion is not None:
            violations.append(_record(trace, rule, min(completion.timestamp, due), clock, evidence))
        elif clock > due:
            violations.append(_record(trace, rule, due, clock, evidence))
    return violations


def _attribute_passes(value: str, pattern: Content, allowed: FrozenSet[str], /) -> bool:
    value = normalize_value(value)
    match pattern.operator:
        case ContentOperator.member | ContentOperator.eq:
            return value in allowed
        case ContentOperator.not_member | ContentOperator.neq:
            return value not in allowed
    return True


def _check_content(trace: Trace, rule: ComplianceRule, pattern: Content, registry: RuleRegistry, clock: datetime, /) -> List[ViolationRecord]:
    allowed = registry.values_for(pattern)
    if pattern.scope == ContentScope.event:
        return [_record(trace, rule, e.timestamp, clock, (e,)) for e in trace
                if (pattern.attribute in e.attributes) and not _attribute_passes(e.attributes[pattern.attribute], pattern, allowed)]
    if not trace.events:
        return []
    first = trace.events[0]
    if (value := trace.case_attributes.get(pattern.attribute, first.attributes.get(pattern.attribute))) is None:
        return []
    return [] if _attribute_passes(value, pattern, allowed) else [_record(trace, rule, first.timestamp, clock, (first,))]


def evaluate_case(trace: Trace, registry: RuleRegistry, clock: datetime, /, *, completion: Iterable[str] = DEFAULT_COMPLETION) -> List[ViolationRecord]:
    """Evaluate every rule against one case.

    Args:
        trace: The case trace in canonical order.
        registry: The rules to evaluate.
        clock: The evaluation clock, recorded as the detection time.
        completion (optional, default=DEFAULT_COMPLETION): The activities which complete a case.

    Returns:
        The violations, provisional ones included, sorted by (violation_ts, rule_id, ordinal).

    Raises:
        EngineError.CLOCK_BEFORE_EVENTS: If the clock is earlier than an event in the trace.
        EngineError.UNSORTED_TRACE: If the trace is not in canonical order.
    """
    events = trace.events
    if any(a.sort_key > b.sort_key for (a, b) in zip(events, events[1:])):
        raise EngineError(EngineError.UNSORTED_TRACE, case_id=trace.case_id)
    if events and events[-1].timestamp > clock:
        raise EngineError(EngineError.CLOCK_BEFORE_EVENTS, clock=format_instant(clock), timestamp=format_instant(events[-1].timestamp), case_id=trace.case_id)
    completed_at = _completion_index(events, frozenset(completion))

    violations: List[ViolationRecord] = []
    for rule in registry:
        match rule.pattern:
            case Precedence():
                violations += _check_precedence(trace, rule, rule.pattern, clock, completed_at)
            case Absence():
                violations += _check_absence(trace, rule, rule.pattern, clock)
            case Existence():
                violations += _check_existence(trace, rule, rule.pattern, clock, completed_at)
            case Response():
                violations += _check_response(trace, rule, rule.pattern, clock, completed_at)
            case Content():
                violations += _check_content(trace, rule, rule.pattern, registry, clock)
    return sorted(violations, key=lambda v: v.sort_key)


def find_violations(event_log: EventLog, registry: RuleRegistry, clock: datetime, /, *, completion: Iterable[str] = DEFAULT_COMPLETION) -> List[ViolationRecord]:
    """Evaluate every rule against every case of a log.

    Returns:
        The violations of all cases in case order.
    """
    completion = frozenset(completion)
    return [v for t in event_log.traces.values() for v in evaluate_case(t, registry, clock, completion=completion)]


def violation_layer(violations: Iterable[ViolationRecord], /, source_descriptor: str = 'violations') -> EventLog:
    """Build the violation layer log from violation records.

    Args:
        violations: The violation records.
        source_descriptor (optional, default='violations'): The provenance of the log.

    Returns:
        A log with one violation layer event per record.
    """
    ordered = chronological(violations)
    return EventLog.from_events((Event(v.case_id, violation_activity(v.rule_id), v.violation_ts, Layer.violation, n,
                                       {'rule_id': v.rule_id, 'detection_ts': format_instant(v.detection_ts),
                                        'evidence': v.evidence_summary, 'dedup_key': v.dedup_key})
                                 for (n, v) in enumerate(ordered)), source_descriptor)


def evaluate_log(event_log: EventLog, registry: RuleRegistry, clock: datetime, /, *, completion: Iterable[str] = DEFAULT_COMPLETION) -> EventLog:
    """Generate the violation layer for a log.

    Args:
        event_log: The log to evaluate.
        registry: The rules to evaluate.
        clock: The evaluation clock.
        completion (optional, default=DEFAULT_COMPLETION): The activities which complete a case.

    Returns:
        The violation layer with activity "Continuous Audit finding; <rule_id> violation" per violation.
    """
    return violation_layer(find_violations(event_log, registry, clock, completion=completion))


def _check_late_event(event: Event, checkpoint: EngineCheckpoint, violations: Iterable[ViolationRecord], /) -> None:
    settled = {v.dedup_key: v.violation_ts for v in violations if not v.provisional}
    for previous in (v for v in checkpoint.violations if v.case_id == event.case_id):
        if settled.get(previous.dedup_key) != previous.violation_ts:
            raise EngineError(EngineError.LATE_EVENT, activity=event.activity, timestamp=format_instant(event.timestamp), case_id=event.case_id,
                              last=format_instant(checkpoint.clock_of_last_run), dedup_key=previous.dedup_key)


def evaluate_incremental(new_events: EventLog, registry: RuleRegistry, checkpoint: EngineCheckpoint, clock: datetime, /, *,
                         completion: Iterable[str] = DEFAULT_COMPLETION) -> Tuple[List[ViolationRecord], EngineCheckpoint]:
    """Evaluate newly arrived events against the state of previous runs.

    Events already in the checkpoint history are skipped so whole source files may be passed on every run.
    Only settled violations are emitted; provisional ones are kept in the pending set until settled.
    An event dated before the previous run may still arrive above its case watermark, but not if it changes a violation
    that run already emitted.

    Args:
        new_events: The events to add.
        registry: The rules to evaluate.
        checkpoint: The state of previous runs, which is not changed.
        clock: The evaluation clock.
        completion (optional, default=DEFAULT_COMPLETION): The activities which complete a case.

    Returns:
        The newly settled violations and the updated checkpoint.

    Raises:
        EngineError.CLOCK_REGRESSION: If the clock is earlier than the previous run.
        EngineError.LATE_EVENT: If an event dated before the previous run removes or moves an emitted violation.
        EngineError.STALE_INPUT: If an unseen event is at or below its case watermark.
    """
    if checkpoint.clock_of_last_run and clock < checkpoint.clock_of_last_run:
        raise EngineError(EngineError.CLOCK_REGRESSION, clock=format_instant(clock), last=format_instant(checkpoint.clock_of_last_run))
    updated = checkpoint.copy()
    known = {e.key: e for evts in checkpoint.history.values() for e in evts}
    added = 0
    late: Dict[str, Event] = {}
    for event in new_events.events():
        if known.get(event.key) == event:
            continue
        if (event.key in known) or ((watermark := checkpoint.watermarks.get(event.case_id)) and event.sort_key <= watermark):
            raise EngineError(EngineError.STALE_INPUT, activity=event.activity, timestamp=format_instant(event.timestamp), case_id=event.case_id)
        updated.history.setdefault(event.case_id, []).append(event)
        if checkpoint.clock_of_last_run and (event.timestamp < checkpoint.clock_of_last_run):
            late.setdefault(event.case_id, event)
        added += 1
    for (case_id, trace) in new_events.traces.items():
        if trace.case_attributes:
            updated.case_attributes[case_id] = updated.case_attributes.get(case_id, {}) | dict(trace.case_attributes)

    completion = frozenset(completion)
    emitted: List[ViolationRecord] = []
    pending: List[ViolationRecord] = []
    for (case_id, events) in sorted(updated.history.items()):
        events.sort(key=lambda e: e.sort_key)
        updated.watermarks[case_id] = events[-1].sort_key
        trace = Trace(case_id, tuple(events), updated.case_attributes.get(case_id, {}))
        violations = evaluate_case(trace, registry, clock, completion=completion)
        if case_id in late:
            _check_late_event(late[case_id], checkpoint, violations)
        for violation in violations:
            if violation.provisional:
                pending.append(violation)
            elif violation.dedup_key not in updated.emitted_keys:
                emitted.append(violation)
                updated.emitted_keys.add(violation.dedup_key)
    emitted = chronological(emitted)
    updated.violations += emitted
    updated.pending = pending
    updated.clock_of_last_run = clock
    log.info('Processed %d new events: %d new violations, %d pending', added, len(emitted), len(pending))
    return (emitted, updated)


def _event_to_dict(event: Event, /) -> Dict[str, Any]:
    return {'case_id': event.case_id, 'activity': event.activity, 'timestamp': format_instant(event.timestamp),
            'layer': event.layer.name, 'ordinal': event.ordinal, 'attributes': dict(event.attributes)}


def _event_from_dict(data: Mapping[str, Any], /) -> Event:
    return Event(str(data['case_id']), str(data['activity']), parse_instant(str(data['timestamp'])), Layer[data['layer']],
                 int(data['ordinal']), {str(k): str(v) for (k, v) in (data.get('attributes') or {}).items()})


def _violation_to_dict(violation: ViolationRecord, /) -> Dict[str, Any]:
    return {'case_id': violation.case_id, 'rule_id': violation.rule_id, 'violation_ts': format_instant(violation.violation_ts),
            'detection_ts': format_instant(violation.detection_ts), 'ordinal': violation.ordinal, 'provisional': violation.provisional,
            'evidence': [{'activity': e.activity, 'timestamp': format_instant(e.timestamp), 'ordinal': e.ordinal} for e in violation.evidence]}


def _violation_from_dict(data: Mapping[str, Any], /) -> ViolationRecord:
    return ViolationRecord(str(data['case_id']), str(data['rule_id']), parse_instant(str(data['violation_ts'])), parse_instant(str(data['detection_ts'])),
                           tuple(EvidenceRef(str(e['activity']), parse_instant(str(e['timestamp'])), int(e['ordinal'])) for e in data['evidence']),
                           int(data['ordinal']), bool(data.get('provisional', False)))


def checkpoint_to_yaml(checkpoint: EngineCheckpoint, /) -> str:
    """Serialize a checkpoint as a schema-tagged YAML document."""
    return dotmap_to_yaml({
        'schema': CHECKPOINT_SCHEMA,
        'clock_of_last_run': format_instant(checkpoint.clock_of_last_run) if checkpoint.clock_of_last_run else None,
        'watermarks': {c: {'timestamp': format_instant(w[0]), 'layer': w[1], 'ordinal': w[2]} for (c, w) in sorted(checkpoint.watermarks.items())},
        'emitted_keys': sorted(checkpoint.emitted_keys),
        'violations': [_violation_to_dict(v) for v in checkpoint.violations],
        'pending': [_violation_to_dict(v) for v in checkpoint.pending],
        'actions': {k: sorted(v) for (k, v) in sorted(checkpoint.actions.items())},
        'case_attributes': {c: dict(a) for (c, a) in sorted(checkpoint.case_attributes.items())},
        'history': {c: [_event_to_dict(e) for e in evts] for (c, evts) in sorted(checkpoint.history.items())},
        'followups': [_event_to_dict(e) for e in checkpoint.followups]})


def checkpoint_from_yaml(text: str, /, source: str = '<string>') -> EngineCheckpoint:
    """Deserialize a checkpoint document.

    Raises:
        EngineError.CHECKPOINT_SCHEMA: If the schema tag is not supported.
        EngineError.BAD_CHECKPOINT: If the document cannot be interpreted.
    """
    try:
        data = yaml_to_dotmap(text).toDict()
    except (YAMLError, ValueError) as err:
        raise EngineError(EngineError.BAD_CHECKPOINT, path=source, err=err) from err
    if data.get('schema') != CHECKPOINT_SCHEMA:
        raise EngineError(EngineError.CHECKPOINT_SCHEMA, schema=data.get('schema'), path=source)
    try:
        return EngineCheckpoint(
            {str(c): (parse_instant(str(w['timestamp'])), int(w['layer']), int(w['ordinal'])) for (c, w) in (data.get('watermarks') or {}).items()},
            set(data.get('emitted_keys') or ()),
            parse_instant(str(clock)) if (clock := data.get('clock_of_last_run')) else None,
            {str(c): [_event_from_dict(e) for e in evts] for (c, evts) in (data.get('history') or {}).items()},
            {str(c): {str(k): str(v) for (k, v) in a.items()} for (c, a) in (data.get('case_attributes') or {}).items()},
            [_violation_from_dict(v) for v in data.get('violations') or ()],
            [_violation_from_dict(v) for v in data.get('pending') or ()],
            {str(k): set(v) for (k, v) in (data.get('actions') or {}).items()},
            [_event_from_dict(e) for e in data.get('followups') or ()])
    except (KeyError, TypeError, ValueError, AttributeError, TimeError) as err:
        raise EngineError(EngineError.BAD_CHECKPOINT, path=source, err=err) from err


def save_checkpoint(checkpoint: EngineCheckpoint, filename: PathName, /) -> Path:
    """Write a checkpoint file atomically."""
    return write_text_atomic(filename, checkpoint_to_yaml(checkpoint))


def load_checkpoint(filename: PathName, /, *, missing_ok: bool = True) -> EngineCheckpoint:
    """Read a checkpoint file.

    Args:
        filename: The checkpoint file.
        missing_ok (optional, default=True): If True, a missing file yields an empty checkpoint.

    Returns:
        The checkpoint.

    Raises:
        FileNotFoundError: If the file is missing and missing_ok is False.
        EngineError: If the file cannot be interpreted.
    """
    path = Path(filename)
    if missing_ok and not path.exists():
        log.debug('No checkpoint at %s, starting fresh', path)
        return EngineCheckpoint()
    try:
        text = path.read_text(encoding=DEFAULT_ENCODING)
    except UnicodeDecodeError as err:
        raise EngineError(EngineError.BAD_CHECKPOINT, path=path, err=err) from err
    return checkpoint_from_yaml(text, str(path))


def chronological(violations: Iterable[ViolationRecord], /) -> List[ViolationRecord]:
    """Sort violations across cases by (violation_ts, case_id, rule_id, ordinal)."""
    return sorted(violations, key=lambda v: (v.violation_ts, v.case_id, v.rule_id, v.ordinal))

# cSpell:ignore dedup
