"""Knowledge augmentation: query a configurable HTML search provider for each
name, keep the spelling suggestion, the first result URL, and the landing
page's visible text. Everything fetched lands in an append-only JSONL cache
keyed by the exact query string, so pipeline runs are reproducible offline.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass
from html.parser import HTMLParser
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional
from urllib.parse import urljoin, urlparse

from .errors import ConfigError, InputError, ProviderError
from .parse import CommonWordList, normalize_tokens

log = logging.getLogger(__name__)

MAX_TEXT_CHARS = 10_000

DEFAULT_SUGGESTION_SELECTOR = "a.spelling-suggestion"
DEFAULT_RESULT_SELECTOR = "a.result-link"


@dataclass(frozen=True)
class AugmentationResult:
    """What one provider round-trip produced for one query name."""

    query_name: str
    corrected_name: Optional[str] = None
    first_url: Optional[str] = None
    first_text: Optional[str] = None
    fetched_at: float = 0.0
    provider_id: str = ""

    def __post_init__(self):
        if not self.query_name:
            raise InputError("query_name must be non-empty")
        if self.corrected_name is not None and not self.corrected_name.strip():
            raise InputError(f"{self.query_name!r}: corrected_name present but empty")
        if self.first_text is not None and self.first_url is None:
            raise InputError(f"{self.query_name!r}: first_text without first_url")

    def to_json(self) -> str:
        return json.dumps(
            {
                "query_name": self.query_name,
                "corrected_name": self.corrected_name,
                "first_url": self.first_url,
                "first_text": self.first_text,
                "fetched_at": self.fetched_at,
                "provider_id": self.provider_id,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "AugmentationResult":
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"bad cache line: {exc}") from exc
        unknown = set(payload) - {
            "query_name", "corrected_name", "first_url", "first_text", "fetched_at", "provider_id",
        }
        if unknown:
            raise InputError(f"bad cache line: unknown keys {sorted(unknown)}")
        return cls(**payload)


class AugmentationCache:
    """JSONL-backed store keyed by the exact query name. Later lines win, so
    appending a fresh fetch overwrites without rewriting the file. Writes are
    serialized behind a lock; reads are plain dict lookups."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._store: dict[str, AugmentationResult] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load(self.path)

    def _load(self, path: Path) -> None:
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    result = AugmentationResult.from_json(line)
                except InputError as exc:
                    raise InputError(f"{path} line {line_no}: {exc}") from exc
                self._store[result.query_name] = result

    def get(self, query_name: str) -> Optional[AugmentationResult]:
        return self._store.get(query_name)

    def put(self, result: AugmentationResult) -> None:
        with self._lock:
            self._store[result.query_name] = result
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(result.to_json() + "\n")

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, query_name: str) -> bool:
        return query_name in self._store

    def results(self) -> list[AugmentationResult]:
        return [self._store[k] for k in sorted(self._store)]


# --- HTML extraction --------------------------------------------------------

_VOID_TAGS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)

_SELECTOR_RE = re.compile(r"^([a-zA-Z][\w-]*)?(?:\.([\w-]+))?(?:#([\w-]+))?$")


def _parse_selector(selector: str) -> tuple[Optional[str], Optional[str], Optional[str]]:
    match = _SELECTOR_RE.match(selector.strip())
    if not match or not any(match.groups()):
        raise ConfigError(f"unsupported selector {selector!r} (use tag, .class, tag.class, tag#id)")
    tag, cls, elem_id = match.groups()
    return (tag.lower() if tag else None, cls, elem_id)


class _SelectorFinder(HTMLParser):
    """Collect (attrs, text) of elements matching a simple selector."""

    def __init__(self, selector: str):
        super().__init__(convert_charrefs=True)
        self._tag, self._cls, self._id = _parse_selector(selector)
        self.matches: list[tuple[dict, str]] = []
        self._depth = 0
        self._active: list[tuple[int, dict, list[str]]] = []

    def _selector_hit(self, tag: str, attrs: dict) -> bool:
        if self._tag is not None and tag != self._tag:
            return False
        if self._cls is not None and self._cls not in (attrs.get("class") or "").split():
            return False
        if self._id is not None and attrs.get("id") != self._id:
            return False
        return True

    def handle_starttag(self, tag, attrs):
        attrs_map = {k: (v or "") for k, v in attrs}
        void = tag in _VOID_TAGS
        if self._selector_hit(tag, attrs_map):
            if void:
                self.matches.append((attrs_map, ""))
            else:
                self._active.append((self._depth, attrs_map, []))
        if not void:
            self._depth += 1

    def handle_startendtag(self, tag, attrs):
        attrs_map = {k: (v or "") for k, v in attrs}
        if self._selector_hit(tag, attrs_map):
            self.matches.append((attrs_map, ""))

    def handle_endtag(self, tag):
        if tag in _VOID_TAGS:
            return
        self._depth = max(0, self._depth - 1)
        while self._active and self._active[-1][0] >= self._depth:
            _, attrs_map, parts = self._active.pop()
            self.matches.append((attrs_map, " ".join(" ".join(parts).split())))

    def handle_data(self, data):
        for frame in self._active:
            frame[2].append(data)

    def close(self):
        super().close()
        while self._active:
            _, attrs_map, parts = self._active.pop()
            self.matches.append((attrs_map, " ".join(" ".join(parts).split())))


def _find_all(html: str, selector: str) -> list[tuple[dict, str]]:
    finder = _SelectorFinder(selector)
    finder.feed(html)
    finder.close()
    return finder.matches


def extract_did_u_mean(result_page: str, selector: str = DEFAULT_SUGGESTION_SELECTOR) -> Optional[str]:
    """Text of the provider's spelling-suggestion element, or None.

    Nested markup is flattened and whitespace collapsed, so
    ``philips <b>healthcare</b>`` comes back as ``philips healthcare``.
    """
    for _, text in _find_all(result_page, selector):
        if text:
            return text
    return None


def extract_first_result_url(result_page: str, selector: str = DEFAULT_RESULT_SELECTOR) -> Optional[str]:
    """href of the first organic result link, or None."""
    for attrs, _ in _find_all(result_page, selector):
        href = attrs.get("href")
        if href:
            return href
    return None


class _TextExtractor(HTMLParser):
    _SKIP = frozenset({"script", "style", "noscript", "template"})

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth > 0:
            self._skip_depth -= 1

    def handle_data(self, data):
        if self._skip_depth == 0 and data.strip():
            self.parts.append(data)


def extract_visible_text(page: str, limit: int = MAX_TEXT_CHARS) -> str:
    """Visible text of a page, whitespace-collapsed, truncated to ``limit``."""
    extractor = _TextExtractor()
    extractor.feed(page)
    extractor.close()
    text = " ".join(" ".join(extractor.parts).split())
    return text[:limit]


# --- domains ----------------------------------------------------------------

_suffix_cache: Optional[frozenset[str]] = None


def load_public_suffixes(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        text = resources.files("harmonizer.data").joinpath("public_suffixes.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    suffixes = set()
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            suffixes.add(line)
    return frozenset(suffixes)


def _default_suffixes() -> frozenset[str]:
    global _suffix_cache
    if _suffix_cache is None:
        _suffix_cache = load_public_suffixes()
    return _suffix_cache


_IP_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}$")


def extract_domain(url: str, suffixes: Optional[frozenset[str]] = None) -> str:
    """Registrable domain of a URL: one label plus the public suffix.

    ``http://patents.example.co.uk/x`` -> ``example.co.uk``. Hosts whose tail
    matches no snapshot entry treat the last label as the suffix. Raises
    InputError when no host can be found.
    """
    if suffixes is None:
        suffixes = _default_suffixes()
    if not url or not url.strip():
        raise InputError("empty URL")
    parsed = urlparse(url.strip())
    host = parsed.netloc or (urlparse("//" + url.strip()).netloc if "://" not in url else "")
    if not host:
        raise InputError(f"cannot find a host in URL {url!r}")
    host = host.rsplit("@", 1)[-1].split(":")[0].strip().lower().rstrip(".")
    if not host or re.search(r"\s", host):
        raise InputError(f"cannot find a host in URL {url!r}")
    if _IP_RE.match(host):
        return host
    labels = host.split(".")
    if any(not label for label in labels):
        raise InputError(f"malformed host in URL {url!r}")
    if labels and labels[0] == "www":
        labels = labels[1:]
    if not labels:
        raise InputError(f"malformed host in URL {url!r}")
    if len(labels) == 1:
        return labels[0]
    # Longest matching suffix wins; unknown tails fall back to the final label.
    suffix_len = 1
    for take in range(min(len(labels) - 1, 4), 1, -1):
        if ".".join(labels[-take:]) in suffixes:
            suffix_len = take
            break
    return ".".join(labels[-(suffix_len + 1):])


def build_frequent_domain_blocklist(
    results: Iterable[AugmentationResult],
    k: int,
    suffixes: Optional[frozenset[str]] = None,
) -> set[str]:
    """The k most frequent registrable domains across results (ties lexicographic).

    Directory-style hosts (encyclopedias, listings) dominate first-result URLs;
    blocking them keeps the domain condition meaningful.
    """
    if k < 0:
        raise InputError(f"blocklist size must be >= 0, got {k}")
    counts: Counter[str] = Counter()
    for result in results:
        if not result.first_url:
            continue
        try:
            counts[extract_domain(result.first_url, suffixes)] += 1
        except InputError:
            continue
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return {domain for domain, _ in ranked[:k]}


def preprocess_url_text(text: Optional[str], common_words: CommonWordList) -> frozenset[str]:
    """Token set of a landing page: normalized like names, common words dropped."""
    if not text:
        return frozenset()
    return frozenset(t for t in normalize_tokens(text) if t not in common_words)


@dataclass(frozen=True)
class DomainInfo:
    """Per-record slice of augmentation used by the matcher."""

    record_id: str
    domain: Optional[str]
    url_tokens: frozenset[str]


def build_domain_info(
    record_id: str,
    result: Optional[AugmentationResult],
    blocklist: set[str] | frozenset[str],
    common_words: CommonWordList,
    suffixes: Optional[frozenset[str]] = None,
) -> DomainInfo:
    """Resolve one record's domain (None when absent or blocklisted) and url tokens."""
    domain = None
    url_tokens: frozenset[str] = frozenset()
    if result is not None:
        if result.first_url:
            try:
                candidate = extract_domain(result.first_url, suffixes)
            except InputError:
                candidate = None
            if candidate is not None and candidate not in blocklist:
                domain = candidate
        url_tokens = preprocess_url_text(result.first_text, common_words)
    return DomainInfo(record_id=record_id, domain=domain, url_tokens=url_tokens)


# --- provider ---------------------------------------------------------------

class SearchProvider:
    """Interface the augmentation stage talks to. Concrete adapters do their
    own rate limiting and retries; callers only see ProviderError."""

    provider_id: str = "abstract"
    suggestion_selector: str = DEFAULT_SUGGESTION_SELECTOR
    result_selector: str = DEFAULT_RESULT_SELECTOR
    base_url: Optional[str] = None

    def search_page(self, query: str) -> str:
        raise NotImplementedError

    def fetch_url(self, url: str) -> str:
        raise NotImplementedError


class HtmlSearchProvider(SearchProvider):
    """requests-backed adapter for any engine with an HTML results page."""

    RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        endpoint: str,
        query_param: str = "q",
        suggestion_selector: str = DEFAULT_SUGGESTION_SELECTOR,
        result_selector: str = DEFAULT_RESULT_SELECTOR,
        rate_limit_per_s: float = 1.0,
        timeout_s: float = 10.0,
        retries: int = 3,
        backoff_s: float = 0.5,
        session=None,
        sleep=time.sleep,
        clock=time.monotonic,
    ):
        if not endpoint:
            raise ConfigError("provider.endpoint must be configured for live augmentation")
        if rate_limit_per_s <= 0:
            raise ConfigError("provider.rate_limit_per_s must be > 0")
        import requests  # deferred: offline paths never need it

        self._requests = requests
        self.endpoint = endpoint
        self.query_param = query_param
        self.suggestion_selector = suggestion_selector
        self.result_selector = result_selector
        self.base_url = endpoint
        self.provider_id = f"html:{urlparse(endpoint).netloc or endpoint}"
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s
        self._session = session or requests.Session()
        self._sleep = sleep
        self._clock = clock
        self._min_interval = 1.0 / rate_limit_per_s
        self._last_request: dict[str, float] = {}
        self._lock = threading.Lock()

    def _throttle(self, host: str) -> None:
        while True:
            with self._lock:
                now = self._clock()
                last = self._last_request.get(host)
                wait = 0.0 if last is None else self._min_interval - (now - last)
                if wait <= 0:
                    self._last_request[host] = now
                    return
            self._sleep(wait)

    def _get(self, url: str, params: Optional[Mapping[str, str]] = None) -> str:
        host = urlparse(url).netloc
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff_s * (2 ** (attempt - 1)))
            self._throttle(host)
            try:
                response = self._session.get(url, params=params, timeout=self.timeout_s)
            except self._requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code == 200:
                return response.text
            last_error = ProviderError(f"HTTP {response.status_code} from {url}")
            if response.status_code not in self.RETRYABLE_STATUS:
                raise ProviderError(f"HTTP {response.status_code} from {url}")
        raise ProviderError(f"giving up on {url} after {self.retries + 1} attempts: {last_error}")

    def search_page(self, query: str) -> str:
        return self._get(self.endpoint, params={self.query_param: query})

    def fetch_url(self, url: str) -> str:
        return self._get(url)


def fetch_augmentation(
    name: str,
    provider: Optional[SearchProvider],
    cache: AugmentationCache,
    *,
    refresh: bool = False,
    now=time.time,
) -> Optional[AugmentationResult]:
    """Augment one name. Cache hits cost zero requests; misses go through the
    provider and are appended to the cache. With no provider (offline) a miss
    simply returns None and the name stays un-augmented. Transient provider
    failure raises ProviderError for the caller to log and move past."""
    if not refresh:
        hit = cache.get(name)
        if hit is not None:
            return hit
    if provider is None:
        return None
    page = provider.search_page(name)
    corrected = extract_did_u_mean(page, provider.suggestion_selector)
    first_url = extract_first_result_url(page, provider.result_selector)
    if first_url and provider.base_url and not urlparse(first_url).scheme:
        first_url = urljoin(provider.base_url, first_url)
    first_text: Optional[str] = None
    if first_url:
        try:
            first_text = extract_visible_text(provider.fetch_url(first_url)) or None
        except ProviderError as exc:
            log.warning("landing page for %r failed (%s); keeping URL only", name, exc)
    result = AugmentationResult(
        query_name=name,
        corrected_name=corrected,
        first_url=first_url,
        first_text=first_text,
        fetched_at=now(),
        provider_id=provider.provider_id,
    )
    cache.put(result)
    return result
