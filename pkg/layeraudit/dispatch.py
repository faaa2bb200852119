"""This module provides follow-up actions for detected violations.

Every completed action is recorded as an event in the follow-up layer. The engine checkpoint keeps a ledger of
the action kinds sent per violation so an action is sent at most once, however often dispatch runs.

Attributes:
    ActionKind (Enum): The kinds of follow-up action.
    ActionStatus (Enum): The states of a follow-up action.
    REPORT_SENT: The activity of a report follow-up event.
    INCIDENT_CREATED: The activity of a ticket follow-up event.
    INCIDENT_RESOLVED: The activity of a resolution follow-up event.
"""

# Import standard modules
from concurrent.futures import ThreadPoolExecutor
from csv import DictReader, Error as CSVError
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from io import StringIO
from logging import getLogger
from pathlib import Path
from string import Template
from typing import Any, BinaryIO, Dict, Iterable, List, Optional, Sequence, Tuple

# Import internal modules
from .analytics import PeriodSummary, RULE_SEPARATOR, summarize
from .crl import RuleRegistry, format_rule
from .engine import EngineCheckpoint, ViolationRecord, chronological
from .event_model import Event, Layer
from .fileutil import ensure_dir, write_text_atomic
from .lang import LayerAuditError, LayerAuditException, PathName
from .netutil import DeliveryStatus, WebhookClient, validate_endpoint
from .reporter import OutputFormat, Report, Section, Table
from .time import TimeError, format_instant, format_stamp, parse_instant

ActionKind = Enum('ActionKind', ('report', 'ticket', 'rpa_trigger'))
ActionStatus = Enum('ActionStatus', ('planned', 'sent', 'failed'))

REPORT_SENT = 'Compliance report sent'
INCIDENT_CREATED = 'Compliance Incident created'
INCIDENT_RESOLVED = 'Compliance Incident resolved'
RESOLUTION_COLUMNS = ('case_id', 'rule_id', 'resolved_at')
RPA_ACTION_HINT = 'remediate'
DRY_RUN_MARKER = 'dry_run'

DEFAULT_WORKERS = 4

log = getLogger(__name__)


class DispatchError(LayerAuditException):
    """Follow-up dispatch Exceptions.

    Attributes:
        ALREADY_RESOLVED: The incident has already been resolved.
        BAD_RESOLUTION_FILE: The resolution file could not be read.
        BAD_TRANSITION: An action was completed twice.
        NO_OPEN_INCIDENT: No incident was created for the case and rule.
        OUTBOX_ERROR: The report could not be written to the outbox.
    """
    ALREADY_RESOLVED = LayerAuditError(1, Template('The incident for rule $rule_id in case $case_id is already resolved'))
    BAD_RESOLUTION_FILE = LayerAuditError(2, Template('$source, line $line: $err'))
    BAD_TRANSITION = LayerAuditError(3, Template('Unable to change $kind action for $dedup_key from $current to $new'))
    NO_OPEN_INCIDENT = LayerAuditError(4, Template('No incident was created for rule $rule_id in case $case_id'))
    OUTBOX_ERROR = LayerAuditError(5, Template('Unable to write report to outbox $outbox: $err'))


@dataclass
class FollowUpAction:
    """A follow-up action for one violation.

        Attributes:
            kind: The kind of action.
            target: The outbox path or webhook URL.
            case_id: The case of the violation.
            rule_id: The rule of the violation.
            dedup_key: The dedup key of the violation.
            status: The action state.
            attempts: The number of delivery attempts made.
    """
    kind: ActionKind
    target: str
    case_id: str
    rule_id: str
    dedup_key: str
    status: ActionStatus = ActionStatus.planned
    attempts: int = 0

    violation_ref = property(lambda s: (s.case_id, s.rule_id, s.dedup_key), doc='A read-only property which returns the violation reference.')

    @classmethod
    def plan(cls, kind: ActionKind, target: str, violation: ViolationRecord, /) -> 'FollowUpAction':
        """Create a planned action for a violation."""
        return cls(kind, target, violation.case_id, violation.rule_id, violation.dedup_key)

    def complete(self, status: ActionStatus, attempts: int = 0, /) -> 'FollowUpAction':
        """Move a planned action to its final state.

        Raises:
            DispatchError.BAD_TRANSITION: If the action is not planned or the new state is not final.
        """
        if (self.status != ActionStatus.planned) or (status == ActionStatus.planned):
            raise DispatchError(DispatchError.BAD_TRANSITION, kind=self.kind.name, dedup_key=self.dedup_key, current=self.status.name, new=status.name)
        self.status = status
        self.attempts = attempts
        return self


@dataclass(frozen=True)
class TicketPayload:
    """The JSON document posted to the ticket and RPA webhooks."""
    case_id: str
    rule_id: str
    rule_text: str
    violation_ts: datetime
    detection_ts: datetime
    evidence: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ('case_id', 'rule_id', 'rule_text'):
            if not getattr(self, name):
                raise ValueError(f'ticket payload field {name} is empty')

    @classmethod
    def of(cls, violation: ViolationRecord, rule_text: str = '', /) -> 'TicketPayload':
        """Create the payload of a violation, using the rule identifier when there is no rule text."""
        return cls(violation.case_id, violation.rule_id, rule_text or violation.rule_id, violation.violation_ts, violation.detection_ts,
                   tuple(str(e) for e in violation.evidence))

    def to_json(self, action: Optional[str] = None, /) -> Dict[str, Any]:
        """Return the payload as a JSON-ready dictionary, with an action hint if provided."""
        document: Dict[str, Any] = {'case_id': self.case_id, 'rule_id': self.rule_id, 'rule_text': self.rule_text,
                                    'violation_ts': self.violation_ts.isoformat(), 'detection_ts': self.detection_ts.isoformat(),
                                    'evidence': list(self.evidence)}
        if action:
            document['action'] = action
        return document


def followup_event(case_id: str, activity: str, clock: datetime, rule_ids: Iterable[str], /, **attributes: str) -> Event:
    """Create a follow-up layer event linked to one or more rules.

    The ordinal is assigned when the event is appended to the checkpoint.
    """
    return Event(case_id, activity, clock, Layer.follow_up, 0, {'rule_id': RULE_SEPARATOR.join(sorted(set(rule_ids))), **attributes})


def append_followups(checkpoint: EngineCheckpoint, events: Iterable[Event], /) -> List[Event]:
    """Append follow-up events to the checkpoint, numbering them in order.

    Returns:
        The appended events with their ordinals.
    """
    appended = [e.with_ordinal(len(checkpoint.followups) + i) for (i, e) in enumerate(events)]
    checkpoint.followups += appended
    return appended


def ledger_entry(kind: ActionKind, dry_run: bool = False, /) -> str:
    """Return the action ledger entry of a sent action; simulated actions are kept apart so a live run still sends them."""
    return f'{kind.name}:{DRY_RUN_MARKER}' if dry_run else kind.name


def report_filename(clock: datetime, /) -> str:
    """Return the outbox file name of the report for a clock."""
    return f'report_{format_stamp(clock)}.md'


def render_report(violations: Sequence[ViolationRecord], period: PeriodSummary, clock: datetime, outbox: PathName, /,
                  *, registry: Optional[RuleRegistry] = None) -> Tuple[Optional[Path], List[Event]]:
    """Write a compliance report to the outbox.

    Args:
        violations: The violations to report.
        period: The period counts to include.
        clock: The report time.
        outbox: The outbox directory.
        registry (optional, default=None): The rules, used to print the rule text.

    Returns:
        The report file, None if there was nothing to report, and one follow-up event per covered case.

    Raises:
        DispatchError.OUTBOX_ERROR: If the report could not be written.
    """
    if not violations:
        return (None, [])
    report = Report(f'Compliance report {format_instant(clock)}', footer=f'{len(violations)} violations', output=OutputFormat.markdown)
    by_rule: Dict[str, List[ViolationRecord]] = {}
    for violation in chronological(violations):
        by_rule.setdefault(violation.rule_id, []).append(violation)
    for (rule_id, rule_violations) in sorted(by_rule.items()):
        section = Section(f'Rule {rule_id}')
        if registry and (rule_id in registry.rule_ids):
            section.add_line(format_rule(registry.rule(rule_id)))
        section.add_table(Table(('case_id', 'violation_ts', 'detection_ts', 'evidence'),
                                [(v.case_id, format_instant(v.violation_ts), format_instant(v.detection_ts), v.evidence_summary) for v in rule_violations]))
        report.add_section(section)
    counts = Section('Violations per period')
    counts.add_table(Table(('period', 'rule_id', 'count'), [(p, r, n) for (p, rules) in sorted(period.counts.items()) for (r, n) in sorted(rules.items())]))
    report.add_section(counts)

    try:
        path = write_text_atomic(ensure_dir(outbox) / report_filename(clock), str(report))
    except OSError as err:
        raise DispatchError(DispatchError.OUTBOX_ERROR, outbox=outbox, err=err) from err
    log.info('Wrote compliance report %s', path)

    rules_per_case: Dict[str, List[str]] = {}
    for violation in violations:
        rules_per_case.setdefault(violation.case_id, []).append(violation.rule_id)
    return (path, [followup_event(c, REPORT_SENT, clock, r, report=path.name) for (c, r) in sorted(rules_per_case.items())])


def _post(kind: ActionKind, violation: ViolationRecord, endpoint: str, payload: Dict[str, Any], dry_run: bool, client: Optional[WebhookClient], /) -> FollowUpAction:
    action = FollowUpAction.plan(kind, validate_endpoint(endpoint), violation)
    if dry_run:
        log.info('Dry run: not sending %s for %s', kind.name, violation.dedup_key)
        return action.complete(ActionStatus.sent)
    result = (client or WebhookClient()).post_json(endpoint, payload)
    return action.complete(ActionStatus.sent if result.status == DeliveryStatus.delivered else ActionStatus.failed, result.attempts)


def create_ticket(violation: ViolationRecord, endpoint: str, clock: datetime, dry_run: bool = False, /, *,
                  rule_text: str = '', client: Optional[WebhookClient] = None) -> Tuple[FollowUpAction, Optional[Event]]:
    """Create an incident ticket through a webhook.

    Args:
        violation: The violation to report.
        endpoint: The ticket webhook URL.
        clock: The time of the follow-up event.
        dry_run (optional, default=False): If True, perform no network IO and treat the ticket as sent.
        rule_text (optional, default=''): The text of the violated rule.
        client (optional, default=None): The webhook client, a default one if None.

    Returns:
        The action and the follow-up event, None unless the ticket was created. A dry run event carries a dry_run attribute.

    Raises:
        WebhookError.BAD_ENDPOINT: If the endpoint is not a valid URL.
    """
    action = _post(ActionKind.ticket, violation, endpoint, TicketPayload.of(violation, rule_text).to_json(), dry_run, client)
    if action.status != ActionStatus.sent:
        return (action, None)
    simulated = {DRY_RUN_MARKER: 'true'} if dry_run else {}
    return (action, followup_event(violation.case_id, INCIDENT_CREATED, clock, [violation.rule_id], dedup_key=violation.dedup_key, **simulated))


def trigger_rpa(violation: ViolationRecord, endpoint: str, dry_run: bool = False, /, *,
                rule_text: str = '', client: Optional[WebhookClient] = None) -> FollowUpAction:
    """Trigger a robotic process automation bot through a webhook.

    The payload is the ticket payload with an action hint. No follow-up event is recorded.
    """
    return _post(ActionKind.rpa_trigger, violation, endpoint, TicketPayload.of(violation, rule_text).to_json(RPA_ACTION_HINT), dry_run, client)


def _links(event: Event, activity: str, case_id: str, rule_id: str, /) -> bool:
    return (event.activity == activity) and (event.case_id == case_id) and (rule_id in event.attributes.get('rule_id', '').split(RULE_SEPARATOR))


def record_resolution(case_id: str, rule_id: str, clock: datetime, followups: Iterable[Event], /) -> Event:
    """Record that the incident of a violation was resolved.

    Args:
        case_id: The case of the incident.
        rule_id: The rule of the incident.
        clock: The resolution time.
        followups: The follow-up events recorded so far.

    Returns:
        The resolution follow-up event.

    Raises:
        DispatchError.NO_OPEN_INCIDENT: If no incident was created for the case and rule.
        DispatchError.ALREADY_RESOLVED: If every incident for the case and rule is already resolved.
    """
    followups = list(followups)
    created = sum(1 for e in followups if _links(e, INCIDENT_CREATED, case_id, rule_id))
    if not created:
        raise DispatchError(DispatchError.NO_OPEN_INCIDENT, case_id=case_id, rule_id=rule_id)
    if sum(1 for e in followups if _links(e, INCIDENT_RESOLVED, case_id, rule_id)) >= created:
        raise DispatchError(DispatchError.ALREADY_RESOLVED, case_id=case_id, rule_id=rule_id)
    return followup_event(case_id, INCIDENT_RESOLVED, clock, [rule_id])


def import_resolutions(source: BinaryIO | bytes, followups: Iterable[Event], default_clock: datetime, /, *,
                       source_descriptor: str = '<stream>') -> List[Event]:
    """Record the resolutions of a case_id,rule_id,resolved_at table.

    Rows without a resolved_at value are resolved at the default clock.

    Returns:
        The resolution events in file order.

    Raises:
        DispatchError.BAD_RESOLUTION_FILE: If the file cannot be read.
        DispatchError.NO_OPEN_INCIDENT: If a row has no open incident.
        DispatchError.ALREADY_RESOLVED: If a row is already resolved.
    """
    raw = source if isinstance(source, bytes) else source.read()
    try:
        reader = DictReader(StringIO(raw.decode('utf-8-sig'), newline=''))
        if missing := [c for c in RESOLUTION_COLUMNS[:2] if c not in (reader.fieldnames or ())]:
            raise ValueError(f'missing column {missing[0]}')
    except (UnicodeDecodeError, CSVError, ValueError) as err:
        raise DispatchError(DispatchError.BAD_RESOLUTION_FILE, source=source_descriptor, line=1, err=err) from err

    known = list(followups)
    resolved: List[Event] = []
    for row in reader:
        try:
            (case_id, rule_id) = ((row.get('case_id') or '').strip(), (row.get('rule_id') or '').strip())
            if not (case_id and rule_id):
                raise ValueError('case_id and rule_id are required')
            clock = parse_instant(resolved_at) if (resolved_at := (row.get('resolved_at') or '').strip()) else default_clock
        except (ValueError, TimeError) as err:
            raise DispatchError(DispatchError.BAD_RESOLUTION_FILE, source=source_descriptor, line=reader.line_num, err=err) from err
        event = record_resolution(case_id, rule_id, clock, known)
        known.append(event)
        resolved.append(event)
    log.info('Imported %d resolutions from %s', len(resolved), source_descriptor)
    return resolved


@dataclass(frozen=True)
class DispatchResult:
    """The outcome of a dispatch run.

        Attributes:
            actions: Every action attempted, in violation order.
            events: The follow-up events appended to the checkpoint.
            report: The report written to the outbox, if any.
    """
    actions: Tuple[FollowUpAction, ...] = ()
    events: Tuple[Event, ...] = ()
    report: Optional[Path] = None

    failed = property(lambda s: tuple(a for a in s.actions if a.status == ActionStatus.failed), doc='A read-only property which returns the failed actions.')


@dataclass
class Dispatcher:
    """Class to run the follow-up actions of violations not yet followed up.

    Webhooks for distinct violations are posted concurrently. The resulting events are appended to the checkpoint by
    the calling thread in (violation_ts, case_id, rule_id) order, and only sent actions enter the checkpoint ledger. Simulated
    tickets and triggers of a dry run are recorded under their own ledger entry, so a later live run still sends them.

        Attributes:
            checkpoint: The engine checkpoint holding the action ledger and follow-up events, updated in place.
            registry: The rules, used for the rule text.
            outbox: The report outbox directory, no reports if None.
            ticket_endpoint: The ticket webhook URL, no tickets if None.
            rpa_endpoint: The RPA webhook URL, no triggers if None.
            dry_run: If True, no network IO is performed.
            client: The webhook client.
            max_workers: The size of the webhook thread pool.
    """
    checkpoint: EngineCheckpoint
    registry: RuleRegistry = field(default_factory=RuleRegistry)
    outbox: Optional[PathName] = None
    ticket_endpoint: Optional[str] = None
    rpa_endpoint: Optional[str] = None
    dry_run: bool = False
    client: Optional[WebhookClient] = None
    max_workers: int = DEFAULT_WORKERS

    def _pending(self, violations: Iterable[ViolationRecord], kind: ActionKind, /) -> List[ViolationRecord]:
        done = {kind.name, ledger_entry(kind, True)} if self.dry_run else {kind.name}
        return [v for v in violations if not done & self.checkpoint.actions.get(v.dedup_key, set())]

    def _rule_text(self, rule_id: str, /) -> str:
        return format_rule(self.registry.rule(rule_id)) if rule_id in self.registry.rule_ids else rule_id

    def _mark_sent(self, action: FollowUpAction, /) -> None:
        if action.status != ActionStatus.sent:
            return
        entries = self.checkpoint.actions.setdefault(action.dedup_key, set())
        simulated = self.dry_run and (action.kind != ActionKind.report)
        entries.discard(ledger_entry(action.kind, True))
        entries.add(ledger_entry(action.kind, simulated))

    def dispatch(self, violations: Iterable[ViolationRecord], clock: datetime, /, *, summary: Optional[PeriodSummary] = None) -> DispatchResult:
        """Run the follow-up actions.

        Args:
            violations: The violations to follow up; those already followed up are skipped.
            clock: The time of the follow-up events.
            summary (optional, default=None): The period counts for the report, computed from the reported violations if None.

        Returns:
            The dispatch result.

        Raises:
            DispatchError.OUTBOX_ERROR: If the report could not be written.
            WebhookError.BAD_ENDPOINT: If an endpoint is not a valid URL.
        """
        violations = chronological(violations)
        order = {v.dedup_key: i for (i, v) in enumerate(violations)}
        actions: List[FollowUpAction] = []
        events: List[Tuple[int, int, Event]] = []

        report_path = None
        if (self.outbox is not None) and (to_report := self._pending(violations, ActionKind.report)):
            (report_path, report_events) = render_report(to_report, summary or summarize(to_report), clock, self.outbox, registry=self.registry)
            first_in_case: Dict[str, int] = {}
            for violation in to_report:
                first_in_case.setdefault(violation.case_id, order[violation.dedup_key])
                action = FollowUpAction.plan(ActionKind.report, str(report_path), violation).complete(ActionStatus.sent)
                self._mark_sent(action)
                actions.append(action)
            events += [(first_in_case[e.case_id], ActionKind.report.value, e) for e in report_events]

        if self.ticket_endpoint and (to_ticket := self._pending(violations, ActionKind.ticket)):
            endpoint = self.ticket_endpoint
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                tickets = list(executor.map(lambda v: create_ticket(v, endpoint, clock, self.dry_run, rule_text=self._rule_text(v.rule_id), client=self.client),
                                            to_ticket))
            for (action, event) in tickets:
                self._mark_sent(action)
                actions.append(action)
                if event is not None:
                    events.append((order[action.dedup_key], ActionKind.ticket.value, event))

        if self.rpa_endpoint and (to_trigger := self._pending(violations, ActionKind.rpa_trigger)):
            endpoint = self.rpa_endpoint
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                triggers = list(executor.map(lambda v: trigger_rpa(v, endpoint, self.dry_run, rule_text=self._rule_text(v.rule_id), client=self.client),
                                             to_trigger))
            for action in triggers:
                self._mark_sent(action)
                actions.append(action)

        appended = append_followups(self.checkpoint, (e for (_unused_index, _unused_kind, e) in sorted(events, key=lambda t: (t[0], t[1]))))
        for action in actions:
            if action.status == ActionStatus.failed:
                log.error('Follow-up %s for %s failed after %d attempts', action.kind.name, action.dedup_key, action.attempts)
        return DispatchResult(tuple(sorted(actions, key=lambda a: (order[a.dedup_key], a.kind.value))), tuple(appended), report_path)

# cSpell:ignore dedup
