"""This module provides directly-follows process models, compliance loop lead times and period summaries.

Attributes:
    DELTA_NAMES: The lead time measures in reporting order.
    RESOLVED_MARKER: The text which identifies a resolution follow-up activity.
"""

# Import standard modules
from collections import Counter
from csv import writer as csv_writer
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from io import StringIO
from statistics import mean, median
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

# Import internal modules
from .engine import ViolationRecord
from .event_model import EventLog, Layer
from .layers import LAYER_COLORS, MultiLayerLog
from .network import Cluster
from .reporter import OutputFormat, Report, Section, Table
from .time import Granularity, format_duration, format_instant, period_key

DELTA_NAMES = ('violation_to_detection', 'detection_to_followup', 'followup_to_resolution', 'violation_to_followup')
RESOLVED_MARKER = 'resolved'
RULE_SEPARATOR = ';'

type Node = Tuple[str, Layer]
type Edge = Tuple[Node, Node]

_LIGHT_FILLS = ('orange',)


@dataclass
class DirectlyFollowsGraph:
    """A directly-follows process model.

        Attributes:
            nodes: The occurrence count of each (activity, layer) node.
            edges: The traversal count of each directly-follows pair.
            starts: The number of traces starting at each node.
            ends: The number of traces ending at each node.
    """
    nodes: Counter[Node] = field(default_factory=Counter)
    edges: Counter[Edge] = field(default_factory=Counter)
    starts: Counter[Node] = field(default_factory=Counter)
    ends: Counter[Node] = field(default_factory=Counter)

    def __add__(self, other: 'DirectlyFollowsGraph') -> 'DirectlyFollowsGraph':
        return DirectlyFollowsGraph(self.nodes + other.nodes, self.edges + other.edges, self.starts + other.starts, self.ends + other.ends)

    trace_count = property(lambda s: sum(s.starts.values()), doc='A read-only property which returns the number of traces in the model.')

    def edge_count(self, source: Node, target: Node, /) -> int:
        """Return the traversal count of an edge, zero if absent."""
        return self.edges.get((source, target), 0)


def discover_dfg(multilog: MultiLayerLog | EventLog, layer_filter: Optional[Iterable[Layer]] = None, /) -> DirectlyFollowsGraph:
    """Discover the directly-follows graph of a log.

    Args:
        multilog: The log to model.
        layer_filter (optional, default=None): The layers to include, all if None.

    Returns:
        The model. Traces left empty by the filter contribute nothing.
    """
    layers = set(layer_filter) if layer_filter is not None else set(Layer)
    dfg = DirectlyFollowsGraph()
    for trace in multilog.traces.values():
        if not (nodes := [(e.activity, e.layer) for e in trace if e.layer in layers]):
            continue
        dfg.nodes.update(nodes)
        dfg.edges.update(zip(nodes, nodes[1:]))
        dfg.starts[nodes[0]] += 1
        dfg.ends[nodes[-1]] += 1
    return dfg


def _dot_quote(text: str, /) -> str:
    return '"' + text.replace('\\', '\\\\').replace('"', '\\"') + '"'


def export_dot(dfg: DirectlyFollowsGraph, /, *, show_markers: bool = False) -> str:
    """Export a model in DOT format.

    Args:
        dfg: The model to export.
        show_markers (optional, default=False): If True, add the synthetic start and end nodes.

    Returns:
        The DOT text with nodes sorted by (activity, layer).
    """
    ordered = sorted(dfg.nodes, key=lambda n: (n[0], n[1].value))
    ids = {node: i for (i, node) in enumerate(ordered)}
    lines = ['digraph dfg {', '  rankdir=LR;', '  node [shape=box, style="rounded,filled", fontname="Helvetica"];']
    for node in ordered:
        color = LAYER_COLORS[node[1]]
        font = 'black' if color in _LIGHT_FILLS else 'white'
        lines.append(f'  n{ids[node]} [label={_dot_quote(f"{node[0]} ({dfg.nodes[node]})")}, fillcolor="{color}", fontcolor="{font}"];')
    for ((source, target), count) in sorted(dfg.edges.items(), key=lambda e: (ids[e[0][0]], ids[e[0][1]])):
        lines.append(f'  n{ids[source]} -> n{ids[target]} [label="{count}"];')
    if show_markers:
        lines += ['  start [shape=circle, label="", style=filled, fillcolor="black"];', '  end [shape=doublecircle, label="", style=filled, fillcolor="black"];']
        lines += [f'  start -> n{ids[n]} [label="{c}"];' for (n, c) in sorted(dfg.starts.items(), key=lambda e: ids[e[0]])]
        lines += [f'  n{ids[n]} -> end [label="{c}"];' for (n, c) in sorted(dfg.ends.items(), key=lambda e: ids[e[0]])]
    lines.append('}')
    return '\n'.join(lines) + '\n'


@dataclass(frozen=True)
class LeadTimeRow:
    """The compliance loop milestones of one violation."""
    case_id: str
    rule_id: str
    dedup_key: str
    violation_ts: datetime
    detection_ts: datetime
    followup_start: Optional[datetime] = None
    resolution: Optional[datetime] = None

    violation_to_detection = property(lambda s: s.detection_ts - s.violation_ts, doc='A read-only property which returns the detection delay.')
    detection_to_followup = property(lambda s: None if s.followup_start is None else s.followup_start - s.detection_ts,
                                     doc='A read-only property which returns the follow-up delay after detection, None if there is no follow-up.')
    followup_to_resolution = property(lambda s: None if (s.followup_start is None or s.resolution is None) else s.resolution - s.followup_start,
                                      doc='A read-only property which returns the resolution time, None while unresolved.')
    violation_to_followup = property(lambda s: None if s.followup_start is None else s.followup_start - s.violation_ts,
                                     doc='A read-only property which returns the follow-up delay after the violation, None if there is no follow-up.')
    is_open = property(lambda s: s.resolution is None, doc='A read-only property which returns True if the violation has no resolution.')

    def delta(self, name: str, /) -> Optional[timedelta]:
        """Return a lead time measure by name."""
        return getattr(self, name)


@dataclass(frozen=True)
class LeadTimeAggregate:
    """Aggregates of one lead time measure over the rows which have it."""
    count: int = 0
    mean: Optional[timedelta] = None
    median: Optional[timedelta] = None
    max: Optional[timedelta] = None

    @classmethod
    def of(cls, values: Sequence[timedelta], /) -> 'LeadTimeAggregate':
        """Aggregate a list of durations."""
        if not values:
            return cls()
        seconds = [v.total_seconds() for v in values]
        return cls(len(values), timedelta(seconds=mean(seconds)), timedelta(seconds=median(seconds)), max(values))


@dataclass(frozen=True)
class LeadTimeStats:
    """Lead times per violation.

        Attributes:
            rows: One row per violation in chronological order.
    """
    rows: Tuple[LeadTimeRow, ...] = ()

    @property
    def aggregates(self) -> Dict[str, LeadTimeAggregate]:
        """A read-only property which returns the aggregates of each measure, recomputed from the rows."""
        return {n: LeadTimeAggregate.of([d for r in self.rows if (d := r.delta(n)) is not None]) for n in DELTA_NAMES}


def lead_times(multilog: MultiLayerLog | EventLog, violations: Iterable[ViolationRecord], /) -> LeadTimeStats:
    """Compute the compliance loop lead times.

    Follow-up events link to a violation through the case and the rule_id attribute, which may list several
    rules separated by semicolons. A follow-up linked this way only counts for a violation detected at or before it,
    and one carrying a dedup_key attribute only counts for the violation with that key. The resolution is the first
    resolving follow-up at or after the follow-up start.

    Args:
        multilog: The log containing the follow-up layer.
        violations: The violations to measure.

    Returns:
        The lead time rows; violations without follow-up yield open rows.
    """
    followups: Dict[Tuple[str, str], List[Tuple[datetime, str, Optional[str]]]] = {}
    for event in (e for t in multilog.traces.values() for e in t if e.layer == Layer.follow_up):
        for rule_id in (r.strip() for r in event.attributes.get('rule_id', '').split(RULE_SEPARATOR) if r.strip()):
            followups.setdefault((event.case_id, rule_id), []).append((event.timestamp, event.activity, event.attributes.get('dedup_key')))
    rows = []
    for violation in sorted(violations, key=lambda v: (v.violation_ts, v.case_id, v.rule_id, v.ordinal)):
        linked = sorted((t, a) for (t, a, k) in followups.get((violation.case_id, violation.rule_id), [])
                        if (t >= violation.detection_ts) and (k in (None, violation.dedup_key)))
        start = linked[0][0] if linked else None
        resolution = next((t for (t, a) in linked if RESOLVED_MARKER in a.casefold()), None)
        rows.append(LeadTimeRow(violation.case_id, violation.rule_id, violation.dedup_key, violation.violation_ts, violation.detection_ts, start, resolution))
    return LeadTimeStats(tuple(rows))


@dataclass(frozen=True)
class PeriodSummary:
    """Violation counts per period and rule.

        Attributes:
            granularity: The period granularity.
            counts: The counts keyed by period key then rule_id, both sorted.
    """
    granularity: Granularity = Granularity.week
    counts: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    totals = property(lambda s: {p: sum(c.values()) for (p, c) in s.counts.items()}, doc='A read-only property which returns the total per period.')
    total = property(lambda s: sum(sum(c.values()) for c in s.counts.values()), doc='A read-only property which returns the total over all periods.')
    rule_totals = property(lambda s: dict(sorted(sum((Counter(c) for c in s.counts.values()), Counter()).items())),
                           doc='A read-only property which returns the total per rule.')


def summarize(violations: Iterable[ViolationRecord], granularity: Granularity = Granularity.week, /) -> PeriodSummary:
    """Count violations per period and rule.

    Args:
        violations: The violations to count.
        granularity (optional, default=week): The period granularity.

    Returns:
        The summary keyed by ISO week (e.g. 2021-W29) or date.
    """
    counts: Dict[str, Counter[str]] = {}
    for violation in violations:
        counts.setdefault(period_key(violation.violation_ts, granularity), Counter())[violation.rule_id] += 1
    return PeriodSummary(granularity, {p: dict(sorted(counts[p].items())) for p in sorted(counts)})


def _optional_instant(moment: Optional[datetime], /) -> str:
    return '' if moment is None else format_instant(moment)


def _optional_duration(delta: Optional[timedelta], /) -> str:
    return '' if delta is None else format_duration(delta)


def _to_csv(header: Sequence[str], rows: Iterable[Sequence[object]], /) -> str:
    output = StringIO(newline='')
    writer = csv_writer(output, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return output.getvalue()


def lead_times_csv(stats: LeadTimeStats, /) -> str:
    """Export lead time rows as CSV; missing measures are empty."""
    header = ('case_id', 'rule_id', 'dedup_key', 'violation_ts', 'detection_ts', 'followup_start', 'resolution', *DELTA_NAMES, 'open')
    return _to_csv(header, [(r.case_id, r.rule_id, r.dedup_key, format_instant(r.violation_ts), format_instant(r.detection_ts),
                             _optional_instant(r.followup_start), _optional_instant(r.resolution), *(_optional_duration(r.delta(n)) for n in DELTA_NAMES),
                             'yes' if r.is_open else 'no') for r in stats.rows])


def summary_csv(summary: PeriodSummary, /) -> str:
    """Export a period summary as CSV with one row per period and rule."""
    return _to_csv(('period', 'rule_id', 'count'), [(p, r, n) for (p, c) in summary.counts.items() for (r, n) in c.items()])


def render_dashboard(stats: LeadTimeStats, summary: PeriodSummary, clusters: Sequence[Cluster], /, *, title: str = 'Compliance dashboard') -> str:
    """Render the static monitoring dashboard.

    Args:
        stats: The lead times.
        summary: The period summary.
        clusters: The violation network clusters.
        title (optional, default='Compliance dashboard'): The page title.

    Returns:
        The html document.
    """
    report = Report(title, output=OutputFormat.html)
    report.add_line(f'{summary.total} violations, {sum(1 for r in stats.rows if r.is_open)} open')

    counts = Section('Violations per rule')
    counts.add_table(Table(('rule_id', 'count'), list(summary.rule_totals.items())))
    report.add_section(counts)

    periods = Section(f'Violations per {summary.granularity.name}')
    rules = list(summary.rule_totals)
    periods.add_table(Table(('period', *rules, 'total'), [(p, *(c.get(r, 0) for r in rules), summary.totals[p]) for (p, c) in summary.counts.items()]))
    report.add_section(periods)

    aggregates = Section('Lead times')
    aggregates.add_table(Table(('measure', 'count', 'mean', 'median', 'max'),
                               [(n, a.count, _optional_duration(a.mean), _optional_duration(a.median), _optional_duration(a.max))
                                for (n, a) in stats.aggregates.items()]))
    report.add_section(aggregates)

    systemic = Section('Violation clusters')
    systemic.add_table(Table(('rules', 'cases', 'case count', 'systemic candidate'),
                             [(', '.join(c.rule_ids), ', '.join(c.case_ids), c.case_count, 'yes' if c.systemic_candidate else 'no') for c in clusters],
                             colors=['red' if c.systemic_candidate else 'black' for c in clusters]))
    report.add_section(systemic)
    return str(report)

# cSpell:ignore casefold fillcolor fontcolor fontname rankdir doublecircle
