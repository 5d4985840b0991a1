"""Forum-dump ingestion: parsing, text normalization, cleaning, deduplication.

Dumps are parsed from bundled files (HTML with selector config, or JSONL);
an optional polite fetcher exists for allowlisted hosts.  Cleaning rejects
incomplete, non-English, and spammy posts; near-duplicate removal reuses the
MinHash index.  Survivors come out as unlabeled real posts at stage "cleaned",
ready for manual annotation.
"""

from __future__ import annotations

import hashlib
import html
import json
import logging
import re
import time
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from html.parser import HTMLParser
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from urllib.parse import urlparse

from .classifier import normalize_and_tokenize
from .corpus import Post, format_rfc3339, parse_rfc3339
from .errors import IngestError
from .screening import _URL_RE, load_stopwords
from .synthgen import minhash_near_duplicates

log = logging.getLogger(__name__)

DUMP_FORMATS = ("html", "json_lines")
REJECT_REASONS = ("incomplete", "non_english", "spam", "duplicate")

# inline markup vanishes flush with its text; other tags become a word boundary
_INLINE_TAG_RE = re.compile(
    r"</?(?:a|abbr|b|cite|code|em|i|mark|q|s|small|span|strong|sub|sup|time|u)"
    r"(?:\s[^<>]*)?/?>",
    re.IGNORECASE,
)
_TAG_RE = re.compile(r"<[^<>]+>")
_DEFAULT_FETCHED_AT = "2024-01-01T00:00:00Z"


def hash_author(author: str) -> str:
    """Irreversible opaque author id; raw usernames never leave the parser."""
    digest = hashlib.sha256(f"author|{author}".encode("utf-8")).hexdigest()
    return f"a-{digest[:16]}"


@dataclass(frozen=True)
class RawForumPost:
    origin_url: str
    author_hash: str
    raw_html_or_text: str
    fetched_at: str

    def __post_init__(self):
        if not self.origin_url:
            raise ValueError("origin_url must be non-empty")
        parse_rfc3339(self.fetched_at)


@dataclass(frozen=True)
class CleanReport:
    """Bookkeeping for one cleaning pass: kept + all rejections = input."""

    input_count: int
    kept_count: int
    rejected: Mapping[str, int]

    def __post_init__(self):
        counts = dict(self.rejected)
        for reason in counts:
            if reason not in REJECT_REASONS:
                raise ValueError(f"unknown rejection reason {reason!r}")
        for reason in REJECT_REASONS:
            counts.setdefault(reason, 0)
        object.__setattr__(self, "rejected", counts)
        if self.input_count < 0 or self.kept_count < 0 or any(v < 0 for v in counts.values()):
            raise ValueError("counts must be non-negative")
        if self.kept_count + sum(counts.values()) != self.input_count:
            raise ValueError(
                f"kept ({self.kept_count}) plus rejected ({sum(counts.values())}) "
                f"must total the input count ({self.input_count})"
            )

    def chain(self, later: "CleanReport") -> "CleanReport":
        """Combine with a pass that consumed this pass's survivors."""
        if later.input_count != self.kept_count:
            raise ValueError(
                f"cannot chain: second pass saw {later.input_count} posts, "
                f"first pass kept {self.kept_count}"
            )
        rejected = {
            reason: self.rejected[reason] + later.rejected[reason]
            for reason in REJECT_REASONS
        }
        return CleanReport(self.input_count, later.kept_count, rejected)

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "kept_count": self.kept_count,
            "rejected": {reason: self.rejected[reason] for reason in REJECT_REASONS},
        }


# -- dump parsing ---------------------------------------------------------------


class _Node:
    __slots__ = ("tag", "attrs", "children")

    def __init__(self, tag: str, attrs=()):
        self.tag = tag
        self.attrs = dict(attrs)
        self.children: list = []

    def classes(self) -> set[str]:
        return set(self.attrs.get("class", "").split())


_VOID_TAGS = {"area", "base", "br", "col", "embed", "hr", "img", "input",
              "link", "meta", "source", "track", "wbr"}


class _TreeBuilder(HTMLParser):
    """Tolerant tree builder; mis-nested end tags close back to the match."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = _Node("__root__")
        self._stack = [self.root]

    def handle_starttag(self, tag, attrs):
        node = _Node(tag, attrs)
        self._stack[-1].children.append(node)
        if tag not in _VOID_TAGS:
            self._stack.append(node)

    def handle_startendtag(self, tag, attrs):
        self._stack[-1].children.append(_Node(tag, attrs))

    def handle_endtag(self, tag):
        for index in range(len(self._stack) - 1, 0, -1):
            if self._stack[index].tag == tag:
                del self._stack[index:]
                return

    def handle_data(self, data):
        self._stack[-1].children.append(data)


def _parse_selector(selector: str) -> tuple[str | None, str | None]:
    tag, _, cls = selector.partition(".")
    return (tag or None, cls or None)


def _select(node: _Node, selector: str) -> list[_Node]:
    """Depth-first matches for a `tag.class`, `tag`, or `.class` selector."""
    tag, cls = _parse_selector(selector)
    found = []

    def walk(current: _Node):
        for child in current.children:
            if isinstance(child, _Node):
                if (tag is None or child.tag == tag) and (cls is None or cls in child.classes()):
                    found.append(child)
                walk(child)

    walk(node)
    return found


_INLINE_TAGS = {"a", "abbr", "b", "cite", "code", "em", "i", "mark", "q", "s",
                "small", "span", "strong", "sub", "sup", "time", "u"}


def _node_text(node: _Node) -> str:
    # inline children join flush; block boundaries become whitespace
    parts = []
    for child in node.children:
        if isinstance(child, str):
            parts.append(child)
        elif child.tag in _INLINE_TAGS:
            parts.append(_node_text(child))
        else:
            parts.append(f" {_node_text(child)} ")
    return "".join(parts)


@dataclass(frozen=True)
class SelectorConfig:
    """CSS-style (tag.class) selectors locating posts inside an HTML dump."""

    post: str = "article.post"
    body: str = "div.post-body"
    permalink: str = "a.permalink"
    author: str = "span.author"


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IngestError(f"cannot read dump {path}: {exc}") from exc


def _decode(data: bytes, path) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestError(f"unparseable dump {path} at byte {exc.start}: not valid UTF-8") from exc


def parse_forum_dump(
    path,
    format: str = "json_lines",
    selectors: SelectorConfig | None = None,
    default_fetched_at: str = _DEFAULT_FETCHED_AT,
) -> list[RawForumPost]:
    if format == "jsonl":
        format = "json_lines"
    if format not in DUMP_FORMATS:
        raise IngestError(f"unknown dump format {format!r}; expected one of {DUMP_FORMATS}")
    data = _read_bytes(path)
    if format == "json_lines":
        posts = _parse_jsonl_dump(data, path, default_fetched_at)
    else:
        posts = _parse_html_dump(_decode(data, path), path, selectors or SelectorConfig(),
                                 default_fetched_at)
    if not posts:
        log.warning("no posts extracted from %s", path)
    return posts


def _parse_jsonl_dump(data: bytes, path, default_fetched_at: str) -> list[RawForumPost]:
    posts = []
    offset = 0
    for raw_line in data.split(b"\n"):
        line = raw_line.strip()
        if line:
            try:
                record = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise IngestError(f"unparseable dump {path} at byte {offset}") from None
            if not isinstance(record, dict):
                raise IngestError(f"unparseable dump {path} at byte {offset}: expected an object")
            try:
                url, author, body = record["url"], record["author"], record["body"]
            except KeyError as exc:
                raise IngestError(
                    f"unparseable dump {path} at byte {offset}: missing field {exc.args[0]!r}"
                ) from None
            posts.append(RawForumPost(
                origin_url=url,
                author_hash=hash_author(author),
                raw_html_or_text=body,
                fetched_at=record.get("fetched_at", default_fetched_at),
            ))
        offset += len(raw_line) + 1
    return posts


def _parse_html_dump(text: str, path, selectors: SelectorConfig,
                     default_fetched_at: str) -> list[RawForumPost]:
    builder = _TreeBuilder()
    builder.feed(text)
    builder.close()
    stem = Path(path).stem
    posts = []
    for index, node in enumerate(_select(builder.root, selectors.post)):
        bodies = _select(node, selectors.body)
        body_text = " ".join(_node_text(body) for body in bodies)
        links = _select(node, selectors.permalink)
        origin_url = next((n.attrs["href"] for n in links if n.attrs.get("href")), "")
        if not origin_url:
            origin_url = f"dump:{stem}#post-{index}"
        authors = _select(node, selectors.author)
        author = " ".join(_node_text(authors[0]).split()) if authors else ""
        posts.append(RawForumPost(
            origin_url=origin_url,
            author_hash=hash_author(author),
            raw_html_or_text=body_text,
            fetched_at=default_fetched_at,
        ))
    return posts


# -- normalization and cleaning ----------------------------------------------------


def normalize_text(text: str) -> str:
    """Decode entities, strip markup, NFC-compose, drop controls, collapse spaces.

    Applied to its own output it is a no-op; casing is left alone because
    lowercasing belongs to featurization.
    """
    previous = None
    for _ in range(20):
        if text == previous:
            break
        previous = text
        text = html.unescape(text)
        text = _INLINE_TAG_RE.sub("", text)
        text = _TAG_RE.sub(" ", text)
    text = unicodedata.normalize("NFC", text)
    text = "".join(
        ch for ch in text
        if ch.isspace() or unicodedata.category(ch) not in ("Cc", "Cf")
    )
    return " ".join(text.split())


def load_spam_phrases() -> tuple[str, ...]:
    raw = resources.files("augloop.data").joinpath("spam_phrases.txt").read_text("utf-8")
    return tuple(line.strip().lower() for line in raw.splitlines() if line.strip())


@dataclass(frozen=True)
class CleanRules:
    min_tokens: int = 3
    language_check_min_tokens: int = 8
    stopword_fraction_min: float = 0.05
    url_density_max: float = 0.3
    blocklist: tuple[str, ...] = field(default_factory=load_spam_phrases)


@dataclass(frozen=True)
class CleanResult:
    """Either a kept post at stage cleaned or a rejection reason, never both."""

    post: Post | None
    reason: str | None

    def __post_init__(self):
        if (self.post is None) == (self.reason is None):
            raise ValueError("exactly one of post or reason must be set")
        if self.reason is not None and self.reason not in REJECT_REASONS:
            raise ValueError(f"unknown rejection reason {self.reason!r}")

    @property
    def kept(self) -> bool:
        return self.post is not None


def _url_density(text: str) -> float:
    parts = text.split()
    if not parts:
        return 0.0
    urls = sum(1 for part in parts if _URL_RE.search(part))
    return urls / len(parts)


def clean(raw: RawForumPost, rules: CleanRules | None = None,
          stopwords: frozenset[str] | None = None) -> CleanResult:
    """Normalize one scraped post and keep it or name the rejection reason.

    Off-topic filtering is deliberately absent here: relevance judgments are
    the manual annotation stage's job.
    """
    rules = rules if rules is not None else CleanRules()
    stopwords = stopwords if stopwords is not None else load_stopwords()
    text = normalize_text(raw.raw_html_or_text)
    tokens = normalize_and_tokenize(text)
    if len(tokens) < rules.min_tokens:
        return CleanResult(post=None, reason="incomplete")
    if len(tokens) >= rules.language_check_min_tokens:
        stop_share = sum(1 for token in tokens if token in stopwords) / len(tokens)
        if stop_share < rules.stopword_fraction_min:
            return CleanResult(post=None, reason="non_english")
    lowered = text.lower()
    if _url_density(text) > rules.url_density_max:
        return CleanResult(post=None, reason="spam")
    if any(phrase in lowered for phrase in rules.blocklist):
        return CleanResult(post=None, reason="spam")
    digest = hashlib.sha256(f"{raw.origin_url}\n{text}".encode("utf-8")).hexdigest()
    post = Post(
        id=f"real-{digest[:16]}",
        text=text,
        source="real",
        stage="cleaned",
        origin_url=raw.origin_url,
        created_at=raw.fetched_at,
    )
    return CleanResult(post=post, reason=None)


def clean_batch(raws: Iterable[RawForumPost], rules: CleanRules | None = None) -> tuple[list[Post], CleanReport]:
    rules = rules if rules is not None else CleanRules()
    stopwords = load_stopwords()
    kept: list[Post] = []
    seen_ids: set[str] = set()
    rejected = {reason: 0 for reason in REJECT_REASONS}
    total = 0
    for raw in raws:
        total += 1
        result = clean(raw, rules, stopwords)
        if not result.kept:
            rejected[result.reason] += 1
        elif result.post.id in seen_ids:
            # same url and same text hash to the same id: an exact re-scrape
            rejected["duplicate"] += 1
        else:
            seen_ids.add(result.post.id)
            kept.append(result.post)
    return kept, CleanReport(total, len(kept), rejected)


def dedup(posts: Sequence[Post], jaccard_threshold: float = 0.9,
          permutations: int = 128, seed: int = 0) -> tuple[tuple[Post, ...], CleanReport]:
    """Drop exact then near-duplicate texts, keeping the earliest id in each group."""
    ordered = sorted(posts, key=lambda post: post.id)
    if len(ordered) != len({post.id for post in ordered}):
        raise ValueError("duplicate post ids in dedup input")

    survivors_by_text: dict[str, int] = {}
    exact_kept: list[Post] = []
    for post in ordered:
        if post.text not in survivors_by_text:
            survivors_by_text[post.text] = len(exact_kept)
            exact_kept.append(post)

    pairs = minhash_near_duplicates(
        [post.text for post in exact_kept],
        jaccard_threshold=jaccard_threshold,
        permutations=permutations,
        seed=seed,
    )
    parent = list(range(len(exact_kept)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    kept = tuple(post for index, post in enumerate(exact_kept) if find(index) == index)
    removed = len(ordered) - len(kept)
    report = CleanReport(len(ordered), len(kept), {"duplicate": removed})
    return kept, report


def ingest_dump(path, format: str = "json_lines",
                selectors: SelectorConfig | None = None,
                rules: CleanRules | None = None,
                jaccard_threshold: float = 0.9) -> tuple[tuple[Post, ...], CleanReport]:
    """Parse, clean, and dedup a dump in one pass; posts come out unlabeled."""
    raws = parse_forum_dump(path, format=format, selectors=selectors)
    cleaned, clean_report = clean_batch(raws, rules)
    unique, dedup_report = dedup(cleaned, jaccard_threshold=jaccard_threshold)
    return unique, clean_report.chain(dedup_report)


# -- optional polite fetcher ---------------------------------------------------------


class Fetcher:
    """Sequential allowlisted HTTP fetcher, at most one request per second."""

    def __init__(self, allowlist: Iterable[str], min_interval: float = 1.0,
                 session=None, sleeper=time.sleep, monotonic=time.monotonic,
                 timestamp=None, timeout: float = 30.0):
        self._allowlist = frozenset(host.lower() for host in allowlist)
        if not self._allowlist:
            raise ValueError("fetcher needs a non-empty host allowlist")
        self._min_interval = min_interval
        if session is None:
            import requests

            session = requests.Session()
        self._session = session
        self._sleep = sleeper
        self._monotonic = monotonic
        self._timestamp = timestamp or (lambda: format_rfc3339(datetime.now(timezone.utc)))
        self._timeout = timeout
        self._last_request: float | None = None

    def fetch(self, url: str) -> RawForumPost:
        host = (urlparse(url).hostname or "").lower()
        if host not in self._allowlist:
            raise IngestError(f"host {host!r} is not on the fetch allowlist")
        now = self._monotonic()
        if self._last_request is not None:
            wait = self._min_interval - (now - self._last_request)
            if wait > 0:
                self._sleep(wait)
                now += wait
        self._last_request = now
        response = self._session.get(url, timeout=self._timeout)
        if response.status_code != 200:
            raise IngestError(f"{url} returned status {response.status_code}")
        return RawForumPost(
            origin_url=url,
            author_hash=hash_author(""),
            raw_html_or_text=response.text,
            fetched_at=self._timestamp(),
        )
