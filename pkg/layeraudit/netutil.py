"""This module provides utilities for delivering JSON webhooks.

Attributes:
    DeliveryStatus (Enum): The outcome of a webhook delivery.
    DEFAULT_RETRIES: The number of retries after the first attempt.
    DEFAULT_BACKOFF: The delay before the first retry in seconds, doubled for each further retry.
"""

# Import standard modules
from dataclasses import dataclass
from enum import Enum
from json import dumps as json_dumps
from logging import getLogger
from string import Template
from time import sleep
from typing import Any, Callable, Mapping, Optional
from urllib.parse import urlsplit

# Import third-party modules
from requests import RequestException, Session

# Import internal modules
from .lang import LayerAuditError, LayerAuditException, is_debug

DeliveryStatus = Enum('DeliveryStatus', ('delivered', 'rejected', 'failed'))

DEFAULT_BACKOFF = 1.0
DEFAULT_RETRIES = 3
DEFAULT_TIMEOUT = 10.0
JSON_HEADERS = {'Content-Type': 'application/json'}

type Sleeper = Callable[[float], Any]

log = getLogger(__name__)


class WebhookError(LayerAuditException):
    """Webhook Exceptions.

    Attributes:
        BAD_ENDPOINT: The endpoint is not an http or https URL.
    """
    BAD_ENDPOINT = LayerAuditError(1, Template('Invalid webhook endpoint "$url": expected an http or https URL'))


def validate_endpoint(url: str, /) -> str:
    """Check that a webhook endpoint is a syntactically valid http(s) URL.

    Returns:
        The URL.

    Raises:
        WebhookError.BAD_ENDPOINT: If the URL is not valid.
    """
    try:
        parts = urlsplit(url)
    except ValueError as err:
        raise WebhookError(WebhookError.BAD_ENDPOINT, url=url) from err
    if (parts.scheme not in ('http', 'https')) or not parts.netloc:
        raise WebhookError(WebhookError.BAD_ENDPOINT, url=url)
    return url


@dataclass(frozen=True)
class DeliveryResult:
    """The outcome of a webhook delivery.

        Attributes:
            status: The delivery status.
            attempts: The number of POST attempts made.
            status_code: The last HTTP status code, None if no response was received.
            detail: A description of the last failure.
    """
    status: DeliveryStatus
    attempts: int
    status_code: Optional[int] = None
    detail: str = ''

    delivered = property(lambda s: s.status == DeliveryStatus.delivered, doc='A read-only property which returns True if the webhook was delivered.')


class WebhookClient:
    """Class to POST JSON documents with retry and exponential backoff.

    Server errors (5xx), timeouts and connection errors are retried. Client errors (4xx) are permanent.
    """

    def __init__(self, /, *, session: Optional[Session] = None, sleeper: Sleeper = sleep,
                 retries: int = DEFAULT_RETRIES, backoff: float = DEFAULT_BACKOFF, timeout: float = DEFAULT_TIMEOUT):
        """
        Args:
            session (optional, default=None): The requests session, a new one if None.
            sleeper (optional, default=time.sleep): The function used to wait between attempts.
            retries (optional, default=DEFAULT_RETRIES): The number of retries after the first attempt.
            backoff (optional, default=DEFAULT_BACKOFF): The delay before the first retry in seconds.
            timeout (optional, default=DEFAULT_TIMEOUT): The request timeout in seconds.

        Attributes:
            backoff: The value of the backoff argument.
            retries: The value of the retries argument.
            timeout: The value of the timeout argument.
            _session: The value of the session argument.
            _sleeper: The value of the sleeper argument.
        """
        self._session = session
        self._sleeper = sleeper
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout

    @property
    def session(self) -> Session:
        """A read-only property which returns the requests session, created on first use."""
        if self._session is None:
            self._session = Session()
        return self._session

    def delays(self) -> list[float]:
        """Return the waits before each retry, e.g. [1, 2, 4]."""
        return [self.backoff * (2 ** n) for n in range(self.retries)]

    def post_json(self, url: str, payload: Mapping[str, Any], /) -> DeliveryResult:
        """POST a JSON document.

        Args:
            url: The endpoint.
            payload: The document to send.

        Returns:
            The delivery result.

        Raises:
            WebhookError.BAD_ENDPOINT: If the endpoint is not a valid URL.
        """
        validate_endpoint(url)
        body = json_dumps(payload, sort_keys=True)
        if is_debug('WEBHOOK'):
            log.debug('POST %s %s', url, body)
        delays = self.delays()
        (status_code, detail) = (None, '')
        for attempt in range(1, len(delays) + 2):
            try:
                response = self.session.post(url, data=body.encode('utf-8'), headers=JSON_HEADERS, timeout=self.timeout)
                status_code = response.status_code
                if 200 <= status_code < 300:
                    log.info('Delivered webhook to %s on attempt %d', url, attempt)
                    return DeliveryResult(DeliveryStatus.delivered, attempt, status_code)
                detail = f'HTTP {status_code}'
                if 400 <= status_code < 500:
                    log.error('Webhook to %s rejected with %s', url, detail)
                    return DeliveryResult(DeliveryStatus.rejected, attempt, status_code, detail)
            except RequestException as err:
                (status_code, detail) = (None, str(err))
            log.warning('Webhook attempt %d to %s failed: %s', attempt, url, detail)
            if attempt <= len(delays):
                self._sleeper(delays[attempt - 1])
        log.error('Giving up on webhook to %s after %d attempts', url, len(delays) + 1)
        return DeliveryResult(DeliveryStatus.failed, len(delays) + 1, status_code, detail)

# cSpell:ignore netloc
