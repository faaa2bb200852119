"""This module provides instant and duration support.

All instants handled by this package are timezone-aware UTC datetimes. Date-only inputs normalize to midnight UTC
and instants which fall on midnight are printed back as dates so that date-only sources round-trip unchanged.

Attributes:
    DURATION_UNITS: The duration unit suffixes and their length in seconds.
    Granularity (Enum): The period granularities used for summaries.
"""

# Import standard modules
from datetime import datetime, timedelta, timezone
from enum import Enum
from re import compile as re_compile
from string import Template

# Import third-party modules
from dateutil.parser import isoparse

# Import internal modules
from .lang import LayerAuditError, LayerAuditException

DURATION_UNITS = {'s': 1, 'm': 60, 'h': 3600, 'd': 86400}
Granularity = Enum('Granularity', ('week', 'day'))

_DATE_ONLY_FORMAT = '%Y-%m-%d'
_DURATION_REGEX = re_compile(r'^\s*(\d+)\s*([a-z])\s*$')
_INSTANT_FORMAT = '%Y-%m-%dT%H:%M:%SZ'
_INSTANT_FRACTION_FORMAT = '%Y-%m-%dT%H:%M:%S.%fZ'
_STAMP_FORMAT = '%Y%m%dT%H%M%SZ'


class TimeError(LayerAuditException):
    """Instant and duration Exceptions.

    Attributes:
        BAD_DURATION: The duration could not be parsed.
        BAD_INSTANT: The instant could not be parsed.
    """
    BAD_DURATION = LayerAuditError(1, Template('Invalid duration "$value": expected an integer followed by one of $units'))
    BAD_INSTANT = LayerAuditError(2, Template('Invalid timestamp "$value": expected YYYY-MM-DD or YYYY-MM-DDTHH:MM:SSZ'))


def to_utc(moment: datetime, /) -> datetime:
    """Convert a datetime to an aware UTC datetime, treating naive values as UTC."""
    if moment.tzinfo is None:
        return moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc)


def utc_now() -> datetime:
    """Return the current wall clock as an aware UTC datetime truncated to whole seconds."""
    return datetime.now(timezone.utc).replace(microsecond=0)


def parse_instant(value: str | datetime, /) -> datetime:
    """Parse an ISO-8601 instant.

    Args:
        value: The text to parse. A datetime is accepted and normalized.

    Returns:
        The aware UTC instant. Date-only values yield midnight UTC.

    Raises:
        TimeError.BAD_INSTANT: If the value is not a valid ISO-8601 date or date-time.
    """
    if isinstance(value, datetime):
        return to_utc(value)
    text = str(value).strip()
    try:
        return to_utc(isoparse(text))
    except (ValueError, OverflowError) as err:
        raise TimeError(TimeError.BAD_INSTANT, value=value) from err


def is_date_only(moment: datetime, /) -> bool:
    """Determine if an instant carries no time-of-day information (midnight UTC)."""
    utc = to_utc(moment)
    return (utc.hour, utc.minute, utc.second, utc.microsecond) == (0, 0, 0, 0)


def format_instant(moment: datetime, /) -> str:
    """Format an instant for files and reports.

    Args:
        moment: The instant to format.

    Returns:
        YYYY-MM-DD for midnight instants, otherwise YYYY-MM-DDTHH:MM:SS[.ffffff]Z.
    """
    utc = to_utc(moment)
    if is_date_only(utc):
        return utc.strftime(_DATE_ONLY_FORMAT)
    return utc.strftime(_INSTANT_FRACTION_FORMAT if utc.microsecond else _INSTANT_FORMAT)


def format_stamp(moment: datetime, /) -> str:
    """Format an instant for use in a file name, e.g. 20210721T000000Z."""
    return to_utc(moment).strftime(_STAMP_FORMAT)


def period_key(moment: datetime, granularity: Granularity = Granularity.week, /) -> str:
    """Get the reporting period containing an instant.

    Args:
        moment: The instant.
        granularity (optional, default=week): The period granularity.

    Returns:
        The ISO-8601 week key (e.g. 2021-W29) or the date key (e.g. 2021-07-21).
    """
    utc = to_utc(moment)
    if granularity == Granularity.day:
        return utc.strftime(_DATE_ONLY_FORMAT)
    (year, week, _unused_day) = utc.isocalendar()
    return f'{year}-W{week:02d}'


def parse_duration(value: str, /, *, units: str = 'smhd') -> timedelta:
    """Parse a duration of the form <integer><unit>.

    Args:
        value: The text to parse, e.g. 3d.
        units (optional, default='smhd'): The unit suffixes accepted.

    Returns:
        The duration.

    Raises:
        TimeError.BAD_DURATION: If the value does not match the expected form.
    """
    if not (match := _DURATION_REGEX.match(value)) or (match.group(2) not in units):
        raise TimeError(TimeError.BAD_DURATION, value=value, units=', '.join(units))
    return timedelta(seconds=int(match.group(1)) * DURATION_UNITS[match.group(2)])


def format_deadline(duration: timedelta, /) -> str:
    """Format a duration with the largest of the units d, h, m which divides it evenly."""
    seconds = int(duration.total_seconds())
    for unit in 'dhm':
        if seconds % DURATION_UNITS[unit] == 0:
            return f'{seconds // DURATION_UNITS[unit]}{unit}'
    return f'{seconds}s'


def format_duration(duration: timedelta, /) -> str:
    """Format a signed duration in whole seconds.

    Args:
        duration: The duration to format.

    Returns:
        Whole days as Nd, otherwise [Nd ]HH:MM:SS, prefixed with - when negative.
    """
    seconds = int(duration.total_seconds())
    sign = '-' if seconds < 0 else ''
    (days, remainder) = divmod(abs(seconds), DURATION_UNITS['d'])
    if not remainder:
        return f'{sign}{days}d'
    (hours, remainder) = divmod(remainder, DURATION_UNITS['h'])
    (minutes, secs) = divmod(remainder, DURATION_UNITS['m'])
    day_part = f'{days}d ' if days else ''
    return f'{sign}{day_part}{hours:02d}:{minutes:02d}:{secs:02d}'

# cSpell:ignore isoparse isocalendar dateutil ffffff
