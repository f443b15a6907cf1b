"""Gateway to text-completion backends behind versioned prompt templates.

The gateway owns three responsibilities:

* **Templates** — five prompt templates ship as plain-text assets, one
  ``.system.txt`` / ``.user.txt`` pair per template id.  Rendering uses a
  closed placeholder vocabulary, so unknown ``{...}`` sequences in a
  template (for example literal citation markers) pass through verbatim.
* **Backends** — a deterministic in-process mock (the default, used for
  offline runs and tests) and a remote chat-completions backend speaking
  the common ``/chat/completions`` JSON shape, with exponential-backoff
  retries and a token-bucket rate limiter.
* **Operations** — topic expansion and search-query generation, the two
  gateway calls whose outputs feed the search stage directly.

All gateway behavior is deterministic under the mock backend: the same
template and bindings always produce the same text.
"""

from __future__ import annotations

import hashlib
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Mapping, Protocol

from .errors import (
    AuthError,
    BackendUnavailable,
    EmptyCompletion,
    EmptyTopic,
    MalformedQuery,
    RateLimited,
    UnboundPlaceholder,
    UnexpectedBinding,
    UnknownTemplate,
)

__all__ = [
    "TEMPLATE_IDS",
    "TOPIC_EXPANSION",
    "QUERY_GENERATION",
    "TOPIC_TITLE",
    "POST_EDIT",
    "FRAMING",
    "KNOWN_PLACEHOLDERS",
    "MODEL_PRESETS",
    "PromptTemplate",
    "CompletionRequest",
    "CompletionResult",
    "load_template",
    "render_prompt",
    "load_related_terms",
    "expand_with_related_terms",
    "MockBackend",
    "RemoteBackend",
    "RateLimiter",
    "LlmGateway",
]

TOPIC_EXPANSION = "topic_expansion"
QUERY_GENERATION = "query_generation"
TOPIC_TITLE = "topic_title"
POST_EDIT = "post_edit"
FRAMING = "framing"

TEMPLATE_IDS: tuple[str, ...] = (
    TOPIC_EXPANSION,
    QUERY_GENERATION,
    TOPIC_TITLE,
    POST_EDIT,
    FRAMING,
)

#: The only ``{name}`` sequences ever treated as placeholders.  Anything
#: else inside braces is literal template text and is never substituted.
KNOWN_PLACEHOLDERS: frozenset[str] = frozenset(
    {"title", "expanded_title", "topic_keywords", "section_name", "summary", "section_titles"}
)

#: Friendly preset names accepted by the CLI, mapped to backend model ids.
MODEL_PRESETS: dict[str, str] = {
    "gpt-3.5-like": "gpt-3.5-turbo",
    "gpt-4o-like": "gpt-4o",
}


# --------------------------------------------------------------------------
# Templates
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PromptTemplate:
    """A system/user prompt pair with its detected placeholder set."""

    template_id: str
    system_text: str
    user_text: str
    placeholders: frozenset[str]


def _read_asset_text(relative: str) -> str:
    path = resources.files("slrpipe") / "_assets" / relative
    text = path.read_text(encoding="utf-8")
    if text.endswith("\n"):
        text = text[:-1]
    return text


def _detect_placeholders(*texts: str) -> frozenset[str]:
    present: set[str] = set()
    for name in KNOWN_PLACEHOLDERS:
        marker = "{" + name + "}"
        if any(marker in t for t in texts):
            present.add(name)
    return frozenset(present)


_TEMPLATE_CACHE: dict[str, PromptTemplate] = {}


def load_template(template_id: str) -> PromptTemplate:
    """Load a bundled template by id, caching parsed results."""
    if template_id not in TEMPLATE_IDS:
        raise UnknownTemplate(f"unknown template id: {template_id!r}")
    cached = _TEMPLATE_CACHE.get(template_id)
    if cached is not None:
        return cached
    system_text = _read_asset_text(f"prompts/{template_id}.system.txt")
    user_text = _read_asset_text(f"prompts/{template_id}.user.txt")
    template = PromptTemplate(
        template_id=template_id,
        system_text=system_text,
        user_text=user_text,
        placeholders=_detect_placeholders(system_text, user_text),
    )
    _TEMPLATE_CACHE[template_id] = template
    return template


def render_prompt(template_id: str, bindings: Mapping[str, object]) -> tuple[str, str]:
    """Render a template into a ``(system_text, user_text)`` pair.

    ``bindings`` must bind exactly the placeholders the template uses:
    a missing binding raises :class:`UnboundPlaceholder`, an extra one
    raises :class:`UnexpectedBinding`.  Substitution is a single pass,
    so braces inside binding values are never re-expanded.
    """
    template = load_template(template_id)
    required = template.placeholders
    provided = set(bindings)
    missing = required - provided
    if missing:
        raise UnboundPlaceholder(
            f"template {template_id!r} is missing bindings for: {sorted(missing)}"
        )
    extra = provided - required
    if extra:
        raise UnexpectedBinding(
            f"template {template_id!r} does not use bindings: {sorted(extra)}"
        )
    if not required:
        return template.system_text, template.user_text
    pattern = re.compile("|".join(r"\{" + re.escape(name) + r"\}" for name in sorted(required)))

    def _sub(match: re.Match[str]) -> str:
        return str(bindings[match.group(0)[1:-1]])

    return pattern.sub(_sub, template.system_text), pattern.sub(_sub, template.user_text)


# --------------------------------------------------------------------------
# Requests and results
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CompletionRequest:
    """One completion call: a template id plus bindings and decoding knobs."""

    template_id: str
    bindings: Mapping[str, object]
    model_id: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.template_id not in TEMPLATE_IDS:
            raise UnknownTemplate(f"unknown template id: {self.template_id!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass(frozen=True)
class CompletionResult:
    """Completion text plus provenance: backend tag, latency, token counts."""

    text: str
    backend: str
    model_id: str
    latency_ms: int
    token_counts: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")


class CompletionBackend(Protocol):
    """Anything that can turn a rendered prompt pair into completion text."""

    name: str

    def complete(self, request: CompletionRequest, system_text: str, user_text: str) -> str:
        ...


# --------------------------------------------------------------------------
# Deterministic expansion helper (shared by the mock backend and tests)
# --------------------------------------------------------------------------

def load_related_terms() -> list[str]:
    """Load the bundled table of generic research-related phrases."""
    text = _read_asset_text("related_terms.txt")
    terms = [line for line in text.split("\n") if line]
    return terms


def expand_with_related_terms(title: str, related_terms: list[str]) -> str:
    """Deterministically append two related phrases to a topic title.

    The two phrases are picked from ``related_terms`` by hashing the
    normalized title, so the same topic always expands the same way and
    distinct topics usually draw different phrases.  The two indices are
    always distinct.
    """
    n = len(related_terms)
    if n < 2:
        raise ValueError("related_terms must contain at least two phrases")
    digest = hashlib.sha256(title.strip().lower().encode("utf-8")).digest()
    first = int.from_bytes(digest[:4], "big") % n
    second = (first + 1 + int.from_bytes(digest[4:8], "big") % (n - 1)) % n
    return f"{title}, {related_terms[first]}, {related_terms[second]}"


# --------------------------------------------------------------------------
# Backends
# --------------------------------------------------------------------------

class MockBackend:
    """Offline deterministic backend.

    Every template id maps to a pure function of its bindings, so full
    pipeline runs are reproducible byte-for-byte without any network.
    The ``seed`` field of requests is accepted but has no effect: the
    output is already fully determined by the bindings.
    """

    name = "mock"

    def __init__(self, related_terms: list[str] | None = None):
        self._related_terms = related_terms if related_terms is not None else load_related_terms()

    def complete(self, request: CompletionRequest, system_text: str, user_text: str) -> str:
        bindings = request.bindings
        if request.template_id == TOPIC_EXPANSION:
            return expand_with_related_terms(str(bindings["title"]), self._related_terms)
        if request.template_id == QUERY_GENERATION:
            phrase = str(bindings["expanded_title"]).replace('"', "").strip()
            return f'(ti:"{phrase}" OR abs:"{phrase}")'
        if request.template_id == TOPIC_TITLE:
            keywords = [k.strip() for k in str(bindings["topic_keywords"]).split(",") if k.strip()]
            if not keywords:
                return "Untitled Topic"
            return " ".join(keywords[:3]).title()
        if request.template_id == POST_EDIT:
            summary = str(bindings["summary"])
            return " ".join(summary.split())
        if request.template_id == FRAMING:
            section = str(bindings["section_name"])
            title = str(bindings["title"])
            sections = str(bindings["section_titles"])
            return (
                f"This {section.lower()} frames the literature review \"{title}\". "
                f"The synthesis is organized into the following topic sections: {sections}. "
                "Each topic section aggregates and refines summaries of the papers assigned to it."
            )
        raise UnknownTemplate(f"mock backend has no rule for template {request.template_id!r}")


class RemoteBackend:
    """Remote chat-completions backend over HTTP.

    Speaks the widely used ``POST <base_url>/chat/completions`` JSON shape.
    Transient failures (connection errors, HTTP 5xx, HTTP 429) are retried
    with exponential backoff for at most ``max_attempts`` total attempts;
    credential rejections (401/403) raise :class:`AuthError` immediately.
    """

    name = "remote"

    def __init__(
        self,
        base_url: str = "https://api.openai.com/v1",
        api_key: str = "",
        timeout_s: float = 60.0,
        max_attempts: int = 3,
        backoff_base_s: float = 1.0,
        session=None,
        sleep_fn: Callable[[float], None] = time.sleep,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.max_attempts = max_attempts
        self.backoff_base_s = backoff_base_s
        self._sleep = sleep_fn
        if session is None:
            import requests

            session = requests.Session()
        self._session = session
        self.last_token_counts: tuple[int, int] | None = None

    def complete(self, request: CompletionRequest, system_text: str, user_text: str) -> str:
        import requests

        payload: dict[str, object] = {
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        headers = {"Authorization": f"Bearer {self.api_key}"}
        url = f"{self.base_url}/chat/completions"

        self.last_token_counts = None
        last_error: Exception | None = None
        last_was_rate_limit = False
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._session.post(
                    url, json=payload, headers=headers, timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last_error = exc
                last_was_rate_limit = False
            else:
                status = response.status_code
                if status in (401, 403):
                    raise AuthError(f"backend rejected credentials (HTTP {status})")
                if status == 429:
                    last_error = BackendUnavailable("HTTP 429")
                    last_was_rate_limit = True
                elif status >= 500:
                    last_error = BackendUnavailable(f"HTTP {status}")
                    last_was_rate_limit = False
                elif status >= 400:
                    raise BackendUnavailable(f"backend rejected request (HTTP {status})")
                else:
                    return self._parse_body(response)
            if attempt < self.max_attempts:
                self._sleep(self.backoff_base_s * (2 ** (attempt - 1)))
        if last_was_rate_limit:
            raise RateLimited(
                f"backend still rate-limiting after {self.max_attempts} attempts"
            ) from last_error
        raise BackendUnavailable(
            f"backend unavailable after {self.max_attempts} attempts: {last_error}"
        ) from last_error

    def _parse_body(self, response) -> str:
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed backend response: {exc}") from exc
        usage = body.get("usage")
        if isinstance(usage, dict):
            prompt = usage.get("prompt_tokens")
            completion = usage.get("completion_tokens")
            if isinstance(prompt, int) and isinstance(completion, int):
                self.last_token_counts = (prompt, completion)
        if not isinstance(text, str):
            raise BackendUnavailable("malformed backend response: content is not text")
        return text


class RateLimiter:
    """Thread-safe token bucket: at most ``rate_per_minute`` acquisitions per minute."""

    def __init__(
        self,
        rate_per_minute: float,
        clock: Callable[[], float] = time.monotonic,
        sleep_fn: Callable[[float], None] = time.sleep,
    ):
        if rate_per_minute <= 0:
            raise ValueError("rate_per_minute must be positive")
        self.rate_per_second = rate_per_minute / 60.0
        self.capacity = max(1.0, float(rate_per_minute))
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep_fn
        self._last = clock()
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self._clock()
        elapsed = max(0.0, now - self._last)
        self._last = now
        self._tokens = min(self.capacity, self._tokens + elapsed * self.rate_per_second)

    def acquire(self) -> float:
        """Take one token, sleeping until one is available.  Returns seconds waited."""
        waited = 0.0
        with self._lock:
            while True:
                self._refill()
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return waited
                need = (1.0 - self._tokens) / self.rate_per_second
                self._sleep(need)
                waited += need


# --------------------------------------------------------------------------
# Gateway
# --------------------------------------------------------------------------

class LlmGateway:
    """Front door for all completion calls made by the pipeline.

    ``backend`` may be ``"mock"``, ``"remote"``, or any object satisfying
    the backend protocol (used by tests to inject failures).  ``model``
    accepts a preset name from :data:`MODEL_PRESETS` or a raw model id.
    """

    def __init__(
        self,
        backend: str | CompletionBackend = "mock",
        model: str = "gpt-3.5-like",
        temperature: float = 0.0,
        max_output_tokens: int = 1024,
        seed: int | None = None,
        rate_limit_per_minute: float = 60.0,
        base_url: str = "https://api.openai.com/v1",
        api_key: str = "",
        sleep_fn: Callable[[float], None] = time.sleep,
    ):
        if isinstance(backend, str):
            if backend == "mock":
                backend_obj: CompletionBackend = MockBackend()
            elif backend == "remote":
                backend_obj = RemoteBackend(
                    base_url=base_url, api_key=api_key, sleep_fn=sleep_fn
                )
            else:
                raise ValueError(f"unknown backend name: {backend!r}")
        else:
            backend_obj = backend
        self.backend = backend_obj
        self.model_id = MODEL_PRESETS.get(model, model)
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.seed = seed
        # The mock backend is pure and local; only remote-style backends
        # are throttled.
        self._limiter: RateLimiter | None = None
        if getattr(backend_obj, "name", "") != "mock":
            self._limiter = RateLimiter(rate_limit_per_minute, sleep_fn=sleep_fn)

    # -- core call ---------------------------------------------------------

    def complete(
        self,
        template_id: str,
        bindings: Mapping[str, object],
        user_suffix: str = "",
    ) -> CompletionResult:
        """Render a template, dispatch it to the backend, and wrap the result.

        ``user_suffix`` is appended to the rendered user text; it carries
        corrective instructions on validation retries.
        """
        request = CompletionRequest(
            template_id=template_id,
            bindings=dict(bindings),
            model_id=self.model_id,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            seed=self.seed,
        )
        system_text, user_text = render_prompt(template_id, request.bindings)
        if user_suffix:
            user_text = user_text + user_suffix
        if self._limiter is not None:
            self._limiter.acquire()
        started = time.perf_counter()
        text = self.backend.complete(request, system_text, user_text)
        latency_ms = max(0, round((time.perf_counter() - started) * 1000))
        if not text or not text.strip():
            raise EmptyCompletion(
                f"backend returned empty text for template {template_id!r}"
            )
        token_counts = getattr(self.backend, "last_token_counts", None)
        return CompletionResult(
            text=text,
            backend=self.backend.name,
            model_id=self.model_id,
            latency_ms=latency_ms,
            token_counts=token_counts,
        )

    # -- operations ----------------------------------------------------------

    def expand_topic(self, title: str) -> str:
        """Expand a raw topic title into a semantically richer single line."""
        if not title or not title.strip():
            raise EmptyTopic("topic title is empty or whitespace-only")
        result = self.complete(TOPIC_EXPANSION, {"title": title.strip()})
        expanded = " ".join(result.text.split())
        if not expanded:
            raise EmptyCompletion("topic expansion produced no text")
        return expanded

    def generate_search_query(self, expanded_title: str) -> str:
        """Generate a fielded search query for the expanded topic.

        The raw completion is parsed under the query grammar and re-emitted
        in canonical form.  On a parse failure the call is retried up to
        two times with a corrective instruction appended to the prompt;
        a third failure propagates :class:`MalformedQuery`.
        """
        from .search import parse_arxiv_query, serialize_query

        if not expanded_title or not expanded_title.strip():
            raise EmptyTopic("expanded title is empty or whitespace-only")
        bindings = {"expanded_title": expanded_title.strip()}
        suffix = ""
        last_error: MalformedQuery | None = None
        for _attempt in range(3):
            result = self.complete(QUERY_GENERATION, bindings, user_suffix=suffix)
            candidate = result.text.strip()
            try:
                node = parse_arxiv_query(candidate)
            except MalformedQuery as exc:
                last_error = exc
                suffix = (
                    "\n\nThe previous query was rejected by the query parser"
                    f" ({exc}). Return a corrected query using only ti:, abs:,"
                    " or all: fields, quoted phrases, AND/OR/ANDNOT, and"
                    " balanced parentheses."
                )
                continue
            return serialize_query(node)
        raise MalformedQuery(
            f"query generation failed after 3 attempts: {last_error}"
        ) from last_error
