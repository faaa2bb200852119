"""This module provides the layeraudit command line.

Exit codes:
    0: Success.
    1: New violations were found and --fail-on-violation was given.
    2: Configuration, rule, input format or engine errors.
    3: File system errors.

Attributes:
    OUTPUT_FILES: The output file names written by the run command.
"""

# Import standard modules
from argparse import Namespace
from datetime import datetime, timedelta
from logging import DEBUG, INFO, basicConfig, getLogger
from pathlib import Path
from sys import stderr
from time import sleep
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

# Import internal modules
from . import __title__, __version__
from .analytics import discover_dfg, export_dot, lead_times, lead_times_csv, render_dashboard, summarize, summary_csv
from .commander import Argument, Commander, SubParser
from .configmgr import DEFAULT_CONFIG_FILE, ConfigurationError, RunConfig, TimelineScope, load_config
from .crl import load_registry, validate_registry
from .dispatch import DispatchError, Dispatcher, append_followups, import_resolutions
from .engine import EngineCheckpoint, VIOLATION_COLUMNS, evaluate_incremental, load_checkpoint, save_checkpoint, violation_layer
from .event_model import Event, EventLog, Layer, attach_case_attributes, format_for, ingest_case_attributes, merge_logs, read_events, write_events
from .fileutil import ensure_dir, write_text_atomic
from .lang import LayerAuditException, is_debug
from .layers import MultiLayerLog, compose, filter_event_types, render_timeline, split_layers, write_timeline
from .network import NetworkFormat, build_network, components, export_network, layout
from .time import parse_duration, parse_instant, utc_now

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_ERROR = 2
EXIT_IO = 3

VIOLATIONS_FILE = 'violations.csv'
COMPOSED_FILE = 'composed_log.csv'
MODEL_FILE = 'model.dot'
NETWORK_FILE = 'network'
LEAD_TIMES_FILE = 'lead_times.csv'
SUMMARY_FILE = 'summary_{granularity}.csv'
DASHBOARD_FILE = 'dashboard.html'
OUTPUT_FILES = (VIOLATIONS_FILE, COMPOSED_FILE, MODEL_FILE, f'{NETWORK_FILE}.json', f'{NETWORK_FILE}.graphml', LEAD_TIMES_FILE, SUMMARY_FILE, DASHBOARD_FILE)

MIN_WATCH_INTERVAL = timedelta(seconds=1)

type Sleeper = Callable[[float], Any]

log = getLogger(__name__)


def run_clock(config: RunConfig, /) -> datetime:
    """Return the evaluation clock: the configured override or the wall clock."""
    return config.clock if config.clock is not None else utc_now()


def load_inputs(config: RunConfig, /) -> EventLog:
    """Read and merge the business flow and compliance check events."""
    logs = [read_events(config.business_flow, Layer.business_flow)]
    if config.compliance_check is not None:
        logs.append(read_events(config.compliance_check, Layer.compliance_check))
    event_log = merge_logs(logs)
    if config.case_attributes is not None:
        event_log = attach_case_attributes(event_log, ingest_case_attributes(config.case_attributes.read_bytes(), format_for(config.case_attributes),
                                                                              source_descriptor=str(config.case_attributes)))
    return event_log


def followup_log(config: RunConfig, checkpoint: EngineCheckpoint, /) -> EventLog:
    """Return the recorded follow-up events followed by those of the external follow-up file, if any."""
    events: List[Event] = list(checkpoint.followups)
    if config.follow_up is not None:
        external = read_events(config.follow_up, Layer.follow_up).events()
        events += [e.with_ordinal(len(checkpoint.followups) + i) for (i, e) in enumerate(external)]
    return EventLog.from_events(events, 'follow-ups')


def compose_layers(config: RunConfig, event_log: EventLog, checkpoint: EngineCheckpoint, /) -> MultiLayerLog:
    """Compose the input layers with the violation and follow-up layers of the checkpoint."""
    layers = split_layers(event_log)
    return compose(layers[Layer.business_flow], layers[Layer.compliance_check], violation_layer(checkpoint.violations), followup_log(config, checkpoint))


def write_network(config: RunConfig, checkpoint: EngineCheckpoint, formats: Iterable[NetworkFormat] = tuple(NetworkFormat), /) -> List[Path]:
    """Write the violation network in the given formats, laid out when it has nodes."""
    network = build_network(checkpoint.violations)
    if not network.is_empty:
        network = layout(network, config.layout)
    return [write_text_atomic(config.output / f'{NETWORK_FILE}.{f.name}', export_network(network, f)) for f in formats]


def write_reports(config: RunConfig, multilog: MultiLayerLog, checkpoint: EngineCheckpoint, /) -> List[Path]:
    """Write the lead times, period summary and dashboard."""
    stats = lead_times(multilog, checkpoint.violations)
    summary = summarize(checkpoint.violations, config.granularity)
    clusters = components(build_network(checkpoint.violations), config.systemic_threshold)
    return [write_text_atomic(config.output / LEAD_TIMES_FILE, lead_times_csv(stats)),
            write_text_atomic(config.output / SUMMARY_FILE.format(granularity=config.granularity.name), summary_csv(summary)),
            write_text_atomic(config.output / DASHBOARD_FILE, render_dashboard(stats, summary, clusters))]


def write_timelines(config: RunConfig, multilog: MultiLayerLog, checkpoint: EngineCheckpoint, /, cases: Optional[Iterable[str]] = None) -> List[Path]:
    """Write the timeline files of the violating cases, every case, or the cases given."""
    if cases is None:
        cases = multilog.traces if (config.timelines == TimelineScope.all) else {v.case_id for v in checkpoint.violations}
    return [p for c in sorted(cases) for p in write_timeline(render_timeline(multilog, c), config.output)]


def write_outputs(config: RunConfig, event_log: EventLog, checkpoint: EngineCheckpoint, /) -> List[Path]:
    """Write every output file of a run."""
    ensure_dir(config.output)
    multilog = compose_layers(config, event_log, checkpoint)
    written = [write_events(config.output / VIOLATIONS_FILE, violation_layer(checkpoint.violations).events(), extra_columns=VIOLATION_COLUMNS),
               write_events(config.output / COMPOSED_FILE, multilog.events()),
               write_text_atomic(config.output / MODEL_FILE, export_dot(discover_dfg(multilog)))]
    written += write_network(config, checkpoint)
    written += write_reports(config, multilog, checkpoint)
    written += write_timelines(config, multilog, checkpoint)
    log.debug('Wrote %d output files to %s', len(written), config.output)
    return written


def run_pipeline(config: RunConfig, clock: datetime, /) -> int:
    """Run one evaluation cycle.

    Ingests the inputs, evaluates them against the checkpoint, dispatches follow-ups for violations not yet followed up,
    saves the checkpoint and writes the outputs.

    Returns:
        The number of new violations.
    """
    registry = load_registry(config.registry)
    event_log = load_inputs(config)
    (emitted, checkpoint) = evaluate_incremental(event_log, registry, load_checkpoint(config.checkpoint), clock, completion=config.completion_activities)
    result = Dispatcher(checkpoint, registry, outbox=config.outbox, ticket_endpoint=config.ticket_webhook, rpa_endpoint=config.rpa_webhook,
                        dry_run=config.dry_run).dispatch(checkpoint.violations, clock)
    save_checkpoint(checkpoint, config.checkpoint)
    write_outputs(config, event_log, checkpoint)
    log.info('%d new violations, %d follow-up events, %d failed actions', len(emitted), len(result.events), len(result.failed))
    return len(emitted)


def cmd_validate(config: RunConfig, /) -> int:
    """Parse the rule registry and warn about activities not seen in the events."""
    registry = load_registry(config.registry)
    warnings = validate_registry(registry, load_inputs(config).activities)
    for warning in warnings:
        print(f'warning: {warning}')
    print(f'{len(registry)} rules, {len(registry.value_lists)} lists, {len(warnings)} warnings')
    return EXIT_OK


def cmd_run(config: RunConfig, /) -> int:
    """Run one evaluation cycle."""
    new_violations = run_pipeline(config, run_clock(config))
    print(f'{new_violations} new violations')
    return EXIT_VIOLATIONS if (new_violations and config.fail_on_violation) else EXIT_OK


def cmd_watch(config: RunConfig, interval: timedelta, /, *, cycles: int = 0, sleeper: Sleeper = sleep) -> int:
    """Run evaluation cycles at a fixed interval until interrupted.

    Args:
        config: The run configuration.
        interval: The wait between cycles.
        cycles (optional, default=0): The number of cycles to run, 0 for no limit.
        sleeper (optional, default=time.sleep): The function used to wait between cycles.

    Returns:
        The exit code.

    Raises:
        ConfigurationError.BAD_VALUE: If the interval is shorter than one second.
    """
    if interval < MIN_WATCH_INTERVAL:
        raise ConfigurationError(ConfigurationError.BAD_VALUE, item='interval', file=config.source, value=interval)
    cycle = 0
    try:
        while True:
            cycle += 1
            try:
                log.info('Watch cycle %d: %d new violations', cycle, run_pipeline(config, run_clock(config)))
            except (LayerAuditException, OSError) as err:
                log.error('Watch cycle %d failed: %s', cycle, err)
            if cycles and (cycle >= cycles):
                break
            sleeper(interval.total_seconds())
    except KeyboardInterrupt:
        log.info('Watch interrupted after %d cycles', cycle)
    return EXIT_OK


def cmd_dfg(config: RunConfig, /, *, layers: Optional[Sequence[Layer]] = None, show_markers: bool = False) -> int:
    """Write the directly-follows model of the composed log."""
    multilog = compose_layers(config, load_inputs(config), load_checkpoint(config.checkpoint))
    print(write_text_atomic(ensure_dir(config.output) / MODEL_FILE, export_dot(discover_dfg(multilog, layers), show_markers=show_markers)))
    return EXIT_OK


def cmd_network(config: RunConfig, /, *, network_format: Optional[NetworkFormat] = None) -> int:
    """Write the violation network."""
    ensure_dir(config.output)
    for path in write_network(config, load_checkpoint(config.checkpoint), [network_format] if network_format else tuple(NetworkFormat)):
        print(path)
    return EXIT_OK


def cmd_report(config: RunConfig, /, *, cases: Optional[Sequence[str]] = None) -> int:
    """Write the lead times, period summary, dashboard and timelines."""
    ensure_dir(config.output)
    checkpoint = load_checkpoint(config.checkpoint)
    multilog = compose_layers(config, load_inputs(config), checkpoint)
    for path in write_reports(config, multilog, checkpoint) + write_timelines(config, multilog, checkpoint, cases or None):
        print(path)
    return EXIT_OK


def cmd_compose(config: RunConfig, /, *, keep: Optional[Sequence[str]] = None) -> int:
    """Write the composed multi-layer log, optionally keeping only some activities."""
    multilog = compose_layers(config, load_inputs(config), load_checkpoint(config.checkpoint))
    if keep:
        multilog = filter_event_types(multilog, keep)
    print(write_events(ensure_dir(config.output) / COMPOSED_FILE, multilog.events()))
    return EXIT_OK


def cmd_resolve(config: RunConfig, resolutions: Path, /) -> int:
    """Record the incident resolutions of a case_id,rule_id,resolved_at file."""
    checkpoint = load_checkpoint(config.checkpoint)
    events = import_resolutions(resolutions.read_bytes(), checkpoint.followups, run_clock(config), source_descriptor=str(resolutions))
    append_followups(checkpoint, events)
    save_checkpoint(checkpoint, config.checkpoint)
    print(f'{len(events)} resolutions recorded')
    return EXIT_OK


def _config(args: Namespace, /) -> RunConfig:
    config = load_config(args.config).with_overrides(clock=parse_instant(args.clock) if args.clock else None,
                                                     dry_run=args.dry_run, fail_on_violation=args.fail_on_violation)
    config.check_inputs()
    return config


def _csv_list(value: str, /) -> List[str]:
    return [v.strip() for v in value.split(',') if v.strip()]


def _layers(value: str, /) -> List[Layer]:
    try:
        return [Layer[v] for v in _csv_list(value)]
    except KeyError as err:
        raise ValueError(f'unknown layer {err}') from err


_SUBCOMMANDS = (
    SubParser('validate', lambda a: cmd_validate(_config(a)), help='check the rule registry against the events'),
    SubParser('run', lambda a: cmd_run(_config(a)), help='evaluate, dispatch follow-ups and write every output'),
    SubParser('watch', lambda a: cmd_watch(_config(a), parse_duration(a.interval), cycles=a.cycles),
              [Argument('--interval', default='7d', help='the time between cycles, e.g. 30s, 15m, 1h, 7d'),
               Argument('--cycles', type=int, default=0, help='the number of cycles to run, 0 for no limit')],
              help='run repeatedly at an interval'),
    SubParser('dfg', lambda a: cmd_dfg(_config(a), layers=a.layers, show_markers=a.show_markers),
              [Argument('--layers', type=_layers, help='a comma-separated list of layers to include'),
               Argument('--show-markers', action='store_true', help='draw the start and end markers')],
              help='write the directly-follows model'),
    SubParser('network', lambda a: cmd_network(_config(a), network_format=NetworkFormat[a.format] if a.format else None),
              [Argument('--format', choices=[f.name for f in NetworkFormat], help='a single export format')],
              help='write the violation network'),
    SubParser('report', lambda a: cmd_report(_config(a), cases=a.case),
              [Argument('--case', action='append', help='write the timeline of this case; may be repeated')],
              help='write lead times, period summary, dashboard and timelines'),
    SubParser('compose', lambda a: cmd_compose(_config(a), keep=a.keep),
              [Argument('--keep', type=_csv_list, help='a comma-separated list of activities to keep')],
              help='write the composed multi-layer log'),
    SubParser('resolve', lambda a: cmd_resolve(_config(a), Path(a.resolutions)),
              [Argument('resolutions', help='the case_id,rule_id,resolved_at file')],
              help='record incident resolutions'))

_GLOBAL_ARGUMENTS = (
    Argument('--config', default=DEFAULT_CONFIG_FILE, help='the run configuration file'),
    Argument('--clock', help='the evaluation clock as an ISO-8601 instant, the wall clock if omitted'),
    Argument('--dry-run', action='store_true', help='perform no webhook calls'),
    Argument('--fail-on-violation', action='store_true', help='exit with 1 when new violations are found'),
    Argument('--verbose', action='store_true', help='log debug messages'))

_IO_ERRORS: Dict[type, Sequence[int]] = {ConfigurationError: (ConfigurationError.MISSING_PATH.code,), DispatchError: (DispatchError.OUTBOX_ERROR.code,)}


def exit_code(err: BaseException, /) -> int:
    """Return the exit code for an error."""
    if isinstance(err, OSError):
        return EXIT_IO
    for (error_type, codes) in _IO_ERRORS.items():
        if isinstance(err, error_type) and (err.code in codes):
            return EXIT_IO
    return EXIT_ERROR


def main(argv: Optional[Sequence[str]] = None, /) -> int:
    """Run the command line.

    Args:
        argv (optional, default=None): The arguments, otherwise sys.argv will be used.

    Returns:
        The exit code.
    """
    commander = Commander(f'{__title__} continuous compliance', arguments=_GLOBAL_ARGUMENTS, subparsers=_SUBCOMMANDS,
                          version=f'{__title__} {__version__}', prog='layeraudit')
    args = commander.parse_args(argv)
    basicConfig(level=DEBUG if (args.verbose or is_debug()) else INFO, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.command_runner(args)
    except (LayerAuditException, OSError) as err:
        print(f'layeraudit: error: {err}', file=stderr)
        return exit_code(err)

# cSpell:ignore dfg graphml
