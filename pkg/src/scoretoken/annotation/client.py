"""Dispatching rendered prompts to a remote model endpoint.

A transport is anything with ``send(endpoint, prompt, image_ref, timeout)``
returning the reply text. Two ship here: :class:`HttpTransport` posts JSON
with httpx, and :class:`MockTransport` answers in-process from a script.
``mock://`` endpoints select the mock.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence
from urllib.parse import urlparse

import httpx

from ..errors import MalformedResponse, Timeout, TransportError
from .prompts import get_template

log = logging.getLogger(__name__)

API_KEY_ENV = "SCORETOKEN_API_KEY"
ENDPOINT_SCHEMES = ("http", "https", "mock")

_INTEGER = re.compile(r"\+?\d+")


@dataclass(frozen=True)
class AnnotationRequest:
    request_id: str
    image_ref: str
    prompt: str
    template_id: str
    model_endpoint: str
    attribute: str | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be nonempty")
        url = urlparse(self.model_endpoint)
        if url.scheme not in ENDPOINT_SCHEMES or not url.netloc:
            raise ValueError(f"malformed endpoint {self.model_endpoint!r}")

    @property
    def prompt_sha256(self) -> str:
        return hashlib.sha256(self.prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AnnotationResponse:
    request_id: str
    text: str
    parsed_score: int | None = None
    attribute_texts: dict[str, str] | None = None
    attempts: int = 1


class Transport(Protocol):
    def send(self, endpoint: str, prompt: str, image_ref: str, timeout: float) -> str: ...


def default_mock_reply(endpoint: str, prompt: str, image_ref: str) -> str:
    """A deterministic integer 0..100 derived from the request content."""
    digest = hashlib.sha256(f"{endpoint}\n{image_ref}\n{prompt}".encode("utf-8")).digest()
    return str(int.from_bytes(digest[:8], "big") % 101)


class MockTransport:
    """In-process transport replaying a script.

    Each script item is a reply string or an exception to raise; once the
    script runs out, ``reply_fn`` answers. Calls are recorded in ``calls``.
    """

    def __init__(
        self,
        script: Iterable[str | BaseException] = (),
        reply_fn: Callable[[str, str, str], str] = default_mock_reply,
    ):
        self._script = list(script)
        self._reply_fn = reply_fn
        self._lock = threading.Lock()
        self.calls: list[tuple[str, str, str]] = []

    def send(self, endpoint: str, prompt: str, image_ref: str, timeout: float) -> str:
        with self._lock:
            self.calls.append((endpoint, prompt, image_ref))
            item = self._script.pop(0) if self._script else None
        if isinstance(item, BaseException):
            raise item
        if item is not None:
            return item
        return self._reply_fn(endpoint, prompt, image_ref)


class HttpTransport:
    """POSTs ``{"prompt", "image"}`` as JSON; reads ``text`` from a JSON reply or the raw body.

    The bearer token is taken from ``$SCORETOKEN_API_KEY`` when set.
    """

    def __init__(self, client: httpx.Client | None = None, api_key: str | None = None):
        self._client = client or httpx.Client()
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)

    def send(self, endpoint: str, prompt: str, image_ref: str, timeout: float) -> str:
        headers = {"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}
        try:
            resp = self._client.post(
                endpoint, json={"prompt": prompt, "image": image_ref}, headers=headers, timeout=timeout
            )
        except httpx.TimeoutException as exc:
            raise Timeout(f"no reply from {endpoint} within {timeout}s") from exc
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code >= 400:
            retryable = resp.status_code >= 500 or resp.status_code == 429
            raise TransportError(f"HTTP {resp.status_code} from {endpoint}", resp.status_code, retryable)
        if resp.headers.get("content-type", "").startswith("application/json"):
            body = resp.json()
            if isinstance(body, dict) and "text" in body:
                return str(body["text"])
        return resp.text

    def close(self) -> None:
        self._client.close()


def transport_for_endpoint(endpoint: str) -> Transport:
    return MockTransport() if urlparse(endpoint).scheme == "mock" else HttpTransport()


def parse_integer_score(text: str) -> int:
    """A reply consisting of one integer in 0..100, surrounding whitespace allowed."""
    s = text.strip()
    if not _INTEGER.fullmatch(s):
        raise MalformedResponse(f"expected a lone integer score, got {text!r}")
    value = int(s)
    if not 0 <= value <= 100:
        raise MalformedResponse(f"score {value} outside 0..100")
    return value


def dispatch(
    request: AnnotationRequest,
    transport: Transport,
    *,
    timeout: float = 30.0,
    max_attempts: int = 3,
    backoff: float = 0.5,
    backoff_cap: float = 8.0,
    sleep: Callable[[float], None] = time.sleep,
) -> AnnotationResponse:
    """Send one request, retrying transport failures with capped exponential backoff.

    ``max_attempts`` counts the first try. Malformed replies are not retried.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    numeric = get_template(request.template_id).numeric_reply
    attempt = 0
    while True:
        attempt += 1
        log.info("request %s attempt %d/%d -> %s", request.request_id, attempt, max_attempts, request.model_endpoint)
        try:
            text = transport.send(request.model_endpoint, request.prompt, request.image_ref, timeout)
        except TransportError as exc:
            log.warning("request %s attempt %d failed: %s", request.request_id, attempt, exc)
            if not exc.retryable or attempt >= max_attempts:
                raise
            sleep(min(backoff_cap, backoff * 2 ** (attempt - 1)))
            continue
        break
    log.info("request %s answered after %d attempt(s)", request.request_id, attempt)
    parsed = parse_integer_score(text) if numeric else None
    attrs = {request.attribute: text} if request.attribute and not numeric else None
    return AnnotationResponse(request.request_id, text, parsed, attrs, attempt)


@dataclass(frozen=True)
class DispatchResult:
    request: AnnotationRequest
    response: AnnotationResponse | None = None
    error: BaseException | None = field(default=None, compare=False)

    def to_record(self) -> dict:
        """One line of annotation output."""
        r = self.request
        rec = {
            "request_id": r.request_id,
            "template_id": r.template_id,
            "image_ref": r.image_ref,
            "prompt_sha256": r.prompt_sha256,
        }
        if r.attribute is not None:
            rec["attribute"] = r.attribute
        if self.response is not None:
            rec.update(reply=self.response.text, parsed_score=self.response.parsed_score, attempts=self.response.attempts)
        else:
            rec.update(reply=None, parsed_score=None, error=f"{type(self.error).__name__}: {self.error}")
        return rec


def dispatch_many(
    requests: Sequence[AnnotationRequest], transport: Transport, concurrency: int = 4, **kwargs
) -> list[DispatchResult]:
    """Dispatch with at most ``concurrency`` requests in flight.

    Results come back in request order, joined by request id; a failed
    request yields a result carrying its error instead of aborting the batch.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    ids = [r.request_id for r in requests]
    if len(set(ids)) != len(ids):
        raise ValueError("request ids must be unique")
    by_id: dict[str, DispatchResult] = {}
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        futures = {pool.submit(dispatch, r, transport, **kwargs): r for r in requests}
        for fut in as_completed(futures):
            req = futures[fut]
            try:
                by_id[req.request_id] = DispatchResult(req, fut.result())
            except Exception as exc:  # recorded per request
                by_id[req.request_id] = DispatchResult(req, None, exc)
    return [by_id[i] for i in ids]
