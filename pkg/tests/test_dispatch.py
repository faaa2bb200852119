"""Unit tests for the dispatch module."""

# pylint: disable=missing-class-docstring,missing-function-docstring,invalid-name
# flake8: noqa

from json import loads as json_loads
from pathlib import Path
from shutil import rmtree
from tempfile import mkdtemp
from threading import Lock
from unittest import main, TestCase

from layeraudit.crl import load_registry
from layeraudit.dispatch import INCIDENT_CREATED, INCIDENT_RESOLVED, REPORT_SENT, ActionKind, ActionStatus, DispatchError, Dispatcher, FollowUpAction, \
    TicketPayload, append_followups, create_ticket, followup_event, import_resolutions, record_resolution, render_report, trigger_rpa
from layeraudit.engine import EngineCheckpoint, find_violations
from layeraudit.event_model import Layer, attach_case_attributes, ingest_case_attributes, merge_logs, read_events
from layeraudit.netutil import WebhookClient, WebhookError
from layeraudit.analytics import summarize
from layeraudit.time import parse_instant

DATA_DIR = Path(__file__).parent / 'data'
CLOCK = parse_instant('2021-07-24')
TICKETS = 'https://tickets.example.com/api'
BOTS = 'https://rpa.example.com/run'


class FakeResponse:  # pylint: disable=too-few-public-methods
    def __init__(self, status_code):
        self.status_code = status_code


class RoutingSession:
    """A stand-in for requests.Session answering with a fixed status per URL."""

    def __init__(self, **statuses):
        self.statuses = {TICKETS: statuses.get('tickets', 201), BOTS: statuses.get('bots', 202)}
        self.posted = []
        self._lock = Lock()

    def post(self, url, data=None, headers=None, timeout=None):  # pylint: disable=unused-argument
        with self._lock:
            self.posted.append((url, json_loads(data)))
        return FakeResponse(self.statuses[url])


def client_for(session):
    return WebhookClient(session=session, sleeper=lambda _seconds: None)


def trade_violations():
    """Return the C02 violations of the trade rules: R05 on 2021-07-18 and R01 on 2021-07-21."""
    event_log = merge_logs([read_events(DATA_DIR / 'business.csv'), read_events(DATA_DIR / 'checks.csv', Layer.compliance_check)])
    event_log = attach_case_attributes(event_log, ingest_case_attributes((DATA_DIR / 'case_attributes.csv').read_bytes()))
    return find_violations(event_log, load_registry(DATA_DIR / 'trade_rules.crl'), CLOCK)


class TestActions(TestCase):
    def test_action_1_transitions(self):
        action = FollowUpAction.plan(ActionKind.ticket, TICKETS, trade_violations()[1])
        self.assertEqual(action.violation_ref, ('C02', 'R01', 'C02|R01|20'))
        self.assertEqual(action.complete(ActionStatus.failed, 4).attempts, 4)
        try:
            action.complete(ActionStatus.sent)
            self.fail('second completion accepted')
        except DispatchError as err:
            self.assertEqual(err.code, DispatchError.BAD_TRANSITION.code)

    def test_action_2_planned_is_not_final(self):
        with self.assertRaises(DispatchError):
            FollowUpAction.plan(ActionKind.report, 'outbox', trade_violations()[0]).complete(ActionStatus.planned)

    def test_payload_1(self):
        violation = trade_violations()[1]
        document = TicketPayload.of(violation).to_json()
        self.assertEqual(document, {'case_id': 'C02', 'rule_id': 'R01', 'rule_text': 'R01', 'violation_ts': '2021-07-21T00:00:00+00:00',
                                    'detection_ts': '2021-07-24T00:00:00+00:00', 'evidence': ['Shipment started@2021-07-20', 'Delivery created@2021-07-21']})
        self.assertEqual(TicketPayload.of(violation, 'rule R01: x').to_json('remediate')['action'], 'remediate')

    def test_payload_2_required_fields(self):
        with self.assertRaises(ValueError):
            TicketPayload('', 'R01', 'text', CLOCK, CLOCK)

    def test_followup_event_1(self):
        event = followup_event('C02', REPORT_SENT, CLOCK, ['R05', 'R01', 'R05'], report='r.md')
        self.assertEqual((event.layer, event.ordinal, event.timestamp), (Layer.follow_up, 0, CLOCK))
        self.assertEqual(event.attributes, {'rule_id': 'R01;R05', 'report': 'r.md'})

    def test_append_followups_1(self):
        checkpoint = EngineCheckpoint()
        append_followups(checkpoint, [followup_event('C1', REPORT_SENT, CLOCK, ['R1'])])
        appended = append_followups(checkpoint, [followup_event('C1', INCIDENT_CREATED, CLOCK, ['R1']), followup_event('C2', INCIDENT_CREATED, CLOCK, ['R1'])])
        self.assertEqual([e.ordinal for e in appended], [1, 2])
        self.assertEqual(len(checkpoint.followups), 3)


class TestReport(TestCase):
    def setUp(self):
        self._tempdir = Path(mkdtemp()).resolve()

    def tearDown(self):
        rmtree(self._tempdir)

    def test_report_1_outbox(self):
        violations = trade_violations()
        (path, events) = render_report(violations, summarize(violations), CLOCK, self._tempdir / 'outbox', registry=load_registry(DATA_DIR / 'trade_rules.crl'))
        self.assertEqual(path, self._tempdir / 'outbox' / 'report_20210724T000000Z.md')
        text = path.read_text(encoding='utf-8')
        self.assertTrue(text.startswith('# Compliance report 2021-07-24\n\n## Rule R01\n\nrule R01: "Shipment started" only after "Delivery created"\n\n'))
        self.assertIn('| C02 | 2021-07-21 | 2021-07-24 | Shipment started@2021-07-20; Delivery created@2021-07-21 |\n', text)
        self.assertIn('## Rule R05\n', text)
        self.assertIn('| 2021-W28 | R05 | 1 |\n| 2021-W29 | R01 | 1 |\n', text)
        self.assertTrue(text.endswith('2 violations\n\n'))
        (event,) = events
        self.assertEqual((event.case_id, event.activity, event.attributes['rule_id'], event.attributes['report']),
                         ('C02', REPORT_SENT, 'R01;R05', 'report_20210724T000000Z.md'))

    def test_report_2_nothing_to_report(self):
        self.assertEqual(render_report([], summarize([]), CLOCK, self._tempdir / 'outbox'), (None, []))
        self.assertFalse((self._tempdir / 'outbox').exists())

    def test_report_3_outbox_error(self):
        blocker = self._tempdir / 'outbox'
        blocker.write_text('not a directory', encoding='utf-8')
        try:
            render_report(trade_violations(), summarize([]), CLOCK, blocker)
            self.fail('unwritable outbox accepted')
        except DispatchError as err:
            self.assertEqual(err.code, DispatchError.OUTBOX_ERROR.code)


class TestWebhookActions(TestCase):
    def test_ticket_1_created(self):
        session = RoutingSession()
        (action, event) = create_ticket(trade_violations()[1], TICKETS, CLOCK, rule_text='rule R01: x', client=client_for(session))
        self.assertEqual((action.kind, action.status, action.attempts), (ActionKind.ticket, ActionStatus.sent, 1))
        self.assertEqual((event.activity, event.attributes['rule_id'], event.attributes['dedup_key']), (INCIDENT_CREATED, 'R01', 'C02|R01|20'))
        ((url, payload),) = session.posted
        self.assertEqual((url, payload['rule_text'], payload['case_id']), (TICKETS, 'rule R01: x', 'C02'))

    def test_ticket_2_dry_run(self):
        (action, event) = create_ticket(trade_violations()[1], TICKETS, CLOCK, True, client=client_for(RoutingSession(tickets=500)))
        self.assertEqual((action.status, action.attempts), (ActionStatus.sent, 0))
        self.assertEqual(event.activity, INCIDENT_CREATED)

    def test_ticket_3_failed(self):
        session = RoutingSession(tickets=503)
        with self.assertLogs('layeraudit.netutil', 'WARNING'):
            (action, event) = create_ticket(trade_violations()[1], TICKETS, CLOCK, client=client_for(session))
        self.assertEqual((action.status, action.attempts, event), (ActionStatus.failed, 4, None))
        self.assertEqual(len(session.posted), 4)

    def test_ticket_4_bad_endpoint(self):
        try:
            create_ticket(trade_violations()[1], 'tickets.example.com', CLOCK, True)
            self.fail('bad endpoint accepted')
        except WebhookError as err:
            self.assertEqual(err.code, WebhookError.BAD_ENDPOINT.code)

    def test_rpa_1(self):
        session = RoutingSession()
        action = trigger_rpa(trade_violations()[0], BOTS, rule_text='rule R05: x', client=client_for(session))
        self.assertEqual((action.kind, action.status), (ActionKind.rpa_trigger, ActionStatus.sent))
        self.assertEqual(session.posted[0][1]['action'], 'remediate')


class TestResolutions(TestCase):
    def _created(self):
        return [followup_event('C02', INCIDENT_CREATED, CLOCK, ['R01'])]

    def test_resolution_1(self):
        event = record_resolution('C02', 'R01', parse_instant('2021-07-25'), self._created())
        self.assertEqual((event.activity, event.attributes['rule_id'], event.timestamp), (INCIDENT_RESOLVED, 'R01', parse_instant('2021-07-25')))

    def test_resolution_2_no_incident(self):
        try:
            record_resolution('C02', 'R05', CLOCK, self._created())
            self.fail('resolution without incident accepted')
        except DispatchError as err:
            self.assertEqual(err.code, DispatchError.NO_OPEN_INCIDENT.code)

    def test_resolution_3_already_resolved(self):
        followups = self._created()
        followups.append(record_resolution('C02', 'R01', CLOCK, followups))
        try:
            record_resolution('C02', 'R01', CLOCK, followups)
            self.fail('second resolution accepted')
        except DispatchError as err:
            self.assertEqual(err.code, DispatchError.ALREADY_RESOLVED.code)

    def test_import_1_file(self):
        (event,) = import_resolutions((DATA_DIR / 'resolutions.csv').read_bytes(), self._created(), CLOCK)
        self.assertEqual((event.case_id, event.timestamp), ('C02', parse_instant('2021-07-22')))

    def test_import_2_default_clock(self):
        (event,) = import_resolutions(b'case_id,rule_id\nC02,R01\n', self._created(), CLOCK)
        self.assertEqual(event.timestamp, CLOCK)

    def test_import_3_duplicate_rows(self):
        with self.assertRaises(DispatchError) as context:
            import_resolutions(b'case_id,rule_id,resolved_at\nC02,R01,2021-07-22\nC02,R01,2021-07-23\n', self._created(), CLOCK)
        self.assertEqual(context.exception.code, DispatchError.ALREADY_RESOLVED.code)

    def test_import_4_bad_file(self):
        for (source, line) in ((b'case,rule\nC02,R01\n', 1), (b'case_id,rule_id,resolved_at\nC02,R01,someday\n', 2), (b'case_id,rule_id\n,R01\n', 2),
                               (b'\xff\xfe', 1)):
            with self.subTest(source=source):
                try:
                    import_resolutions(source, self._created(), CLOCK, source_descriptor='resolutions.csv')
                    self.fail('bad resolution file accepted')
                except DispatchError as err:
                    self.assertEqual(err.code, DispatchError.BAD_RESOLUTION_FILE.code)
                    self.assertEqual(err.vars['line'], line)


class TestDispatcher(TestCase):
    def setUp(self):
        self._tempdir = Path(mkdtemp()).resolve()

    def tearDown(self):
        rmtree(self._tempdir)

    def _dispatcher(self, checkpoint, session, **kwargs):
        return Dispatcher(checkpoint, load_registry(DATA_DIR / 'trade_rules.crl'), self._tempdir / 'outbox', TICKETS, BOTS,
                          client=client_for(session), **kwargs)

    def test_dispatch_1_all_actions(self):
        checkpoint = EngineCheckpoint()
        session = RoutingSession()
        result = self._dispatcher(checkpoint, session).dispatch(trade_violations(), CLOCK)
        self.assertEqual([(a.kind, a.rule_id) for a in result.actions],
                         [(ActionKind.report, 'R05'), (ActionKind.ticket, 'R05'), (ActionKind.rpa_trigger, 'R05'),
                          (ActionKind.report, 'R01'), (ActionKind.ticket, 'R01'), (ActionKind.rpa_trigger, 'R01')])
        self.assertEqual([(e.activity, e.attributes['rule_id'], e.ordinal) for e in result.events],
                         [(REPORT_SENT, 'R01;R05', 0), (INCIDENT_CREATED, 'R05', 1), (INCIDENT_CREATED, 'R01', 2)])
        self.assertEqual(result.report.name, 'report_20210724T000000Z.md')
        self.assertEqual(result.failed, ())
        self.assertEqual(checkpoint.actions, {'C02|R05|16': {'report', 'ticket', 'rpa_trigger'}, 'C02|R01|20': {'report', 'ticket', 'rpa_trigger'}})
        self.assertEqual(list(checkpoint.followups), list(result.events))
        self.assertEqual(sorted(url for (url, _payload) in session.posted), [BOTS, BOTS, TICKETS, TICKETS])
        self.assertEqual({p['rule_text'] for (_url, p) in session.posted}, {'rule R01: "Shipment started" only after "Delivery created"',
                                                                          'rule R05: case attribute country not_in sanctioned'})

    def test_dispatch_2_exactly_once(self):
        checkpoint = EngineCheckpoint()
        session = RoutingSession()
        self._dispatcher(checkpoint, session).dispatch(trade_violations(), CLOCK)
        again = self._dispatcher(checkpoint, session).dispatch(trade_violations(), parse_instant('2021-07-25'))
        self.assertEqual((again.actions, again.events, again.report), ((), (), None))
        self.assertEqual(len(session.posted), 4)
        self.assertEqual(len(checkpoint.followups), 3)

    def test_dispatch_3_failed_ticket_retried_later(self):
        checkpoint = EngineCheckpoint()
        with self.assertLogs('layeraudit.dispatch', 'ERROR'):
            first = self._dispatcher(checkpoint, RoutingSession(tickets=500)).dispatch(trade_violations(), CLOCK)
        self.assertEqual([(a.kind, a.rule_id) for a in first.failed], [(ActionKind.ticket, 'R05'), (ActionKind.ticket, 'R01')])
        self.assertEqual([e.activity for e in first.events], [REPORT_SENT])
        second = self._dispatcher(checkpoint, RoutingSession()).dispatch(trade_violations(), parse_instant('2021-07-25'))
        self.assertEqual([a.kind for a in second.actions], [ActionKind.ticket, ActionKind.ticket])
        self.assertEqual([(e.activity, e.ordinal) for e in second.events], [(INCIDENT_CREATED, 1), (INCIDENT_CREATED, 2)])

    def test_dispatch_4_dry_run(self):
        checkpoint = EngineCheckpoint()
        session = RoutingSession()
        result = self._dispatcher(checkpoint, session, dry_run=True).dispatch(trade_violations(), CLOCK)
        self.assertEqual(session.posted, [])
        self.assertEqual(len(result.events), 3)
        self.assertEqual(checkpoint.actions['C02|R01|20'], {'report', 'ticket:dry_run', 'rpa_trigger:dry_run'})
        self.assertEqual([e.attributes.get('dry_run') for e in result.events], [None, 'true', 'true'])
        again = self._dispatcher(checkpoint, session, dry_run=True).dispatch(trade_violations(), parse_instant('2021-07-25'))
        self.assertEqual((again.actions, again.events), ((), ()))

    def test_dispatch_6_live_after_dry_run(self):
        checkpoint = EngineCheckpoint()
        session = RoutingSession()
        self._dispatcher(checkpoint, session, dry_run=True).dispatch(trade_violations(), CLOCK)
        live = self._dispatcher(checkpoint, session).dispatch(trade_violations(), parse_instant('2021-07-25'))
        self.assertEqual([(a.kind, a.rule_id) for a in live.actions],
                         [(ActionKind.ticket, 'R05'), (ActionKind.rpa_trigger, 'R05'), (ActionKind.ticket, 'R01'), (ActionKind.rpa_trigger, 'R01')])
        self.assertEqual(sorted(url for (url, _payload) in session.posted), [BOTS, BOTS, TICKETS, TICKETS])
        self.assertEqual([(e.activity, e.ordinal, e.attributes.get('dry_run')) for e in live.events], [(INCIDENT_CREATED, 3, None), (INCIDENT_CREATED, 4, None)])
        self.assertEqual(checkpoint.actions['C02|R01|20'], {'report', 'ticket', 'rpa_trigger'})
        self.assertEqual(self._dispatcher(checkpoint, session).dispatch(trade_violations(), parse_instant('2021-07-26')).actions, ())

    def test_dispatch_5_report_only(self):
        checkpoint = EngineCheckpoint()
        result = Dispatcher(checkpoint, outbox=self._tempdir / 'outbox').dispatch(trade_violations(), CLOCK)
        self.assertEqual([a.kind for a in result.actions], [ActionKind.report, ActionKind.report])
        self.assertIn('## Rule R01\n\n| case_id |', result.report.read_text(encoding='utf-8'))


if __name__ == '__main__':
    main()

# cSpell:ignore layeraudit dedup
