"""Unit tests for the analytics module."""

# pylint: disable=missing-class-docstring,missing-function-docstring,invalid-name
# flake8: noqa

from datetime import timedelta
from pathlib import Path
from random import Random
from unittest import main, TestCase

from layeraudit.analytics import DELTA_NAMES, discover_dfg, export_dot, lead_times, lead_times_csv, render_dashboard, summarize, \
    summary_csv
from layeraudit.engine import ViolationRecord, violation_layer
from layeraudit.event_model import Event, EventLog, Layer, merge_logs, read_events
from layeraudit.layers import compose
from layeraudit.network import build_network, components
from layeraudit.time import Granularity, parse_instant

DATA_DIR = Path(__file__).parent / 'data'


def ts(text):
    return parse_instant(text)


def running_example():
    return merge_logs([read_events(DATA_DIR / 'business.csv'), read_events(DATA_DIR / 'checks.csv', Layer.compliance_check)])


def table4_violation(detection='2021-07-21'):
    return ViolationRecord('C02', 'R01', ts('2021-07-21'), ts(detection), (), 10)


def compliance_loop(*followups):
    """Compose the running example with a violation layer and the given follow-up (activity, date, rule_id) events."""
    business = read_events(DATA_DIR / 'business.csv')
    checks = read_events(DATA_DIR / 'checks.csv', Layer.compliance_check)
    events = [Event('C02', a, ts(d), Layer.follow_up, n, {'rule_id': r}) for (n, (a, d, r)) in enumerate(followups)]
    return compose(business, checks, violation_layer([table4_violation()]), EventLog.from_events(events))


class TestDfg(TestCase):
    def test_dfg_1_running_example_chain(self):
        merged = running_example()
        dfg = discover_dfg(EventLog({'C01': merged.traces['C01']}))
        chain = [('Sales order received', Layer.business_flow), ('Trade compliance screening', Layer.compliance_check),
                 ('Delivery created', Layer.business_flow), ('Shipment started', Layer.business_flow), ('Completed', Layer.business_flow)]
        self.assertEqual(dict(dfg.edges), {edge: 1 for edge in zip(chain, chain[1:])})
        self.assertEqual(dict(dfg.starts), {chain[0]: 1})
        self.assertEqual(dict(dfg.ends), {chain[-1]: 1})
        self.assertEqual(dfg.trace_count, 1)

    def test_dfg_2_layer_filter(self):
        dfg = discover_dfg(running_example(), [Layer.compliance_check])
        self.assertEqual(dict(dfg.nodes), {('Trade compliance screening', Layer.compliance_check): 2})
        self.assertEqual(sum(dfg.edges.values()), 0)
        self.assertEqual(discover_dfg(running_example(), [Layer.follow_up]).trace_count, 0)

    def test_dfg_3_edge_conservation(self):
        rng = Random(29)
        for instance in range(100):
            events = [Event(f'C{rng.randint(0, 5)}', rng.choice('ABCDE'), ts('2021-07-01') + timedelta(hours=rng.randint(0, 200)), rng.choice(list(Layer)), n)
                      for n in range(rng.randint(0, 40))]
            event_log = EventLog.from_events(events)
            layers = rng.sample(list(Layer), rng.randint(1, 4))
            dfg = discover_dfg(event_log, layers)
            lengths = [len([e for e in t if e.layer in layers]) for t in event_log.traces.values()]
            with self.subTest(instance=instance):
                self.assertEqual(sum(dfg.edges.values()), sum(n - 1 for n in lengths if n))
                self.assertEqual(sum(dfg.nodes.values()), sum(lengths))
                self.assertEqual(dfg.trace_count, len([n for n in lengths if n]))

    def test_dfg_4_add(self):
        merged = running_example()
        (first, second) = (discover_dfg(EventLog({c: merged.traces[c]})) for c in ('C01', 'C02'))
        self.assertEqual(first + second, discover_dfg(merged))

    def test_export_dot_1(self):
        merged = running_example()
        dot = export_dot(discover_dfg(EventLog({'C01': merged.traces['C01']})))
        self.assertTrue(dot.startswith('digraph dfg {\n'))
        self.assertIn('  n4 [label="Trade compliance screening (1)", fillcolor="green", fontcolor="white"];\n', dot)
        self.assertIn('  n2 -> n4 [label="1"];\n', dot)
        self.assertEqual(dot.count(' -> '), 4)
        self.assertNotIn('start [shape', dot)

    def test_export_dot_2_empty(self):
        dot = export_dot(discover_dfg(EventLog()))
        self.assertEqual(dot.splitlines()[0], 'digraph dfg {')
        self.assertEqual(dot.splitlines()[-1], '}')
        self.assertNotIn(' n0 ', dot)

    def test_export_dot_3_layer_colors(self):
        dot = export_dot(discover_dfg(compliance_loop(('Compliance Incident created', '2021-07-21', 'R01'))))
        self.assertIn('[label="Continuous Audit finding; R01 violation (1)", fillcolor="red", fontcolor="white"];', dot)
        self.assertIn('[label="Compliance Incident created (1)", fillcolor="orange", fontcolor="black"];', dot)

    def test_export_dot_4_markers(self):
        dot = export_dot(discover_dfg(running_example()), show_markers=True)
        self.assertIn('  start -> n', dot)
        self.assertIn(' -> end [label="2"];\n', dot)


class TestLeadTimes(TestCase):
    def test_lead_times_1_running_example(self):
        multilog = compliance_loop(('Compliance Incident created', '2021-07-21', 'R01'), ('Compliance Incident resolved', '2021-07-22', 'R01'))
        (row,) = lead_times(multilog, [table4_violation()]).rows
        self.assertEqual(row.violation_to_followup, timedelta(0))
        self.assertEqual(row.followup_to_resolution, timedelta(days=1))
        self.assertEqual(row.violation_to_detection, timedelta(0))
        self.assertFalse(row.is_open)

    def test_lead_times_2_open(self):
        (row,) = lead_times(compliance_loop(), [table4_violation('2021-07-24')]).rows
        self.assertTrue(row.is_open)
        self.assertEqual(row.violation_to_detection, timedelta(days=3))
        self.assertIsNone(row.detection_to_followup)
        self.assertIsNone(row.followup_to_resolution)

    def test_lead_times_3_multiple_rules(self):
        multilog = compliance_loop(('Compliance report sent', '2021-07-23', 'R05;R01'))
        (row,) = lead_times(multilog, [table4_violation()]).rows
        self.assertEqual(row.followup_start, ts('2021-07-23'))
        self.assertTrue(row.is_open)

    def test_lead_times_4_non_negative(self):
        multilog = compliance_loop(('Compliance report sent', '2021-07-22', 'R01'), ('Compliance Incident resolved', '2021-07-25', 'R01'))
        (row,) = lead_times(multilog, [table4_violation('2021-07-22')]).rows
        for name in DELTA_NAMES:
            self.assertGreaterEqual(row.delta(name), timedelta(0))

    def test_lead_times_5_recurring_violation(self):
        multilog = compliance_loop(('Compliance Incident created', '2021-07-02', 'R01'), ('Compliance Incident resolved', '2021-07-03', 'R01'))
        violations = [ViolationRecord('C02', 'R01', ts('2021-07-01'), ts('2021-07-01'), (), 4), ViolationRecord('C02', 'R01', ts('2021-07-10'), ts('2021-07-10'), (), 12)]
        (first, second) = lead_times(multilog, violations).rows
        self.assertEqual((first.dedup_key, first.followup_start, first.resolution), ('C02|R01|4', ts('2021-07-02'), ts('2021-07-03')))
        self.assertEqual((second.dedup_key, second.followup_start, second.resolution), ('C02|R01|12', None, None))
        self.assertTrue(second.is_open)
        for row in (first, second):
            for name in DELTA_NAMES:
                if row.delta(name) is not None:
                    self.assertGreaterEqual(row.delta(name), timedelta(0))

    def test_lead_times_6_keyed_followup(self):
        events = [Event('C02', 'Compliance Incident created', ts('2021-07-22'), Layer.follow_up, 0, {'rule_id': 'R01', 'dedup_key': 'C02|R01|4'})]
        multilog = compose(read_events(DATA_DIR / 'business.csv'), EventLog(), violation_layer([table4_violation()]), EventLog.from_events(events))
        (row,) = lead_times(multilog, [table4_violation()]).rows
        self.assertIsNone(row.followup_start)

    def test_aggregates_1(self):
        stats = lead_times(compliance_loop(('Compliance Incident created', '2021-07-21', 'R01'), ('Compliance Incident resolved', '2021-07-22', 'R01')),
                           [table4_violation()])
        aggregate = stats.aggregates['followup_to_resolution']
        self.assertEqual((aggregate.count, aggregate.mean, aggregate.median, aggregate.max), (1, timedelta(days=1), timedelta(days=1), timedelta(days=1)))
        self.assertEqual(lead_times(compliance_loop(), []).aggregates['violation_to_detection'].count, 0)

    def test_lead_times_csv_1(self):
        stats = lead_times(compliance_loop(('Compliance Incident created', '2021-07-21', 'R01'), ('Compliance Incident resolved', '2021-07-22', 'R01')),
                           [table4_violation()])
        lines = lead_times_csv(stats).splitlines()
        self.assertEqual(lines[0], 'case_id,rule_id,dedup_key,violation_ts,detection_ts,followup_start,resolution,'
                                   'violation_to_detection,detection_to_followup,followup_to_resolution,violation_to_followup,open')
        self.assertEqual(lines[1], 'C02,R01,C02|R01|10,2021-07-21,2021-07-21,2021-07-21,2021-07-22,0d,0d,1d,0d,no')

    def test_lead_times_csv_2_open(self):
        lines = lead_times_csv(lead_times(compliance_loop(), [table4_violation()])).splitlines()
        self.assertEqual(lines[1], 'C02,R01,C02|R01|10,2021-07-21,2021-07-21,,,0d,,,,yes')


class TestSummary(TestCase):
    def test_summarize_1_week(self):
        summary = summarize([table4_violation()])
        self.assertEqual(summary.counts, {'2021-W29': {'R01': 1}})
        self.assertEqual(summary.total, 1)

    def test_summarize_2_day(self):
        violations = [table4_violation(), ViolationRecord('C01', 'R05', ts('2021-07-18'), ts('2021-07-24'), (), 0),
                      ViolationRecord('C03', 'R01', ts('2021-07-21T23:00:00Z'), ts('2021-07-24'), (), 3)]
        summary = summarize(violations, Granularity.day)
        self.assertEqual(summary.counts, {'2021-07-18': {'R05': 1}, '2021-07-21': {'R01': 2}})
        self.assertEqual(summary.totals, {'2021-07-18': 1, '2021-07-21': 2})
        self.assertEqual(summary.rule_totals, {'R01': 2, 'R05': 1})
        self.assertEqual(summary_csv(summary), 'period,rule_id,count\n2021-07-18,R05,1\n2021-07-21,R01,2\n')

    def test_summarize_3_empty(self):
        self.assertEqual(summary_csv(summarize([])), 'period,rule_id,count\n')


class TestDashboard(TestCase):
    def test_dashboard_1(self):
        violation = table4_violation()
        stats = lead_times(compliance_loop(('Compliance Incident created', '2021-07-21', 'R01')), [violation])
        html = render_dashboard(stats, summarize([violation]), components(build_network([violation]), threshold=1))
        self.assertIn('<title>Compliance dashboard</title>', html)
        self.assertIn('<p>1 violations, 1 open</p>', html)
        self.assertIn('<h2>Violations per week</h2>', html)
        self.assertIn('<tr><td>2021-W29</td><td>1</td><td>1</td></tr>', html)
        self.assertIn('<tr style="color: red"><td>R01</td><td>C02</td><td>1</td><td>yes</td></tr>', html)
        self.assertNotIn('<script', html)

    def test_dashboard_2_empty(self):
        html = render_dashboard(lead_times(EventLog(), []), summarize([]), [], title='Nothing yet')
        self.assertIn('<p>0 violations, 0 open</p>', html)


if __name__ == '__main__':
    main()

# cSpell:ignore layeraudit dedup
