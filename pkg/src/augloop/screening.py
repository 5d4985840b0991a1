"""Quality screening of original posts before they seed prompts.

Automated pre-filters knock out mechanical noise (links, hashtags,
fragments); everything else waits in a per-intent queue for an expert's
three-way verdict on relevance, contextual completeness, and clarity.
Only posts passing all three become prompt seeds. Every decision is
appended to a JSONL log that replays to identical state.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .classifier import normalize_and_tokenize
from .corpus import LogicalClock, Post
from .errors import NotFoundError, StateError

AUTO_FLAGS = ("has_url", "has_hashtag", "too_short", "non_english_suspect")
TRI_STATES = ("pass", "fail", "unset")
FINALS = ("accepted", "rejected", "pending")
CRITERIA = ("relevance", "completeness", "clarity")

_URL_RE = re.compile(r"https?://\S+|\bwww\.\S+", re.IGNORECASE)
_HASHTAG_RE = re.compile(r"#\w+")


def load_stopwords() -> frozenset[str]:
    raw = resources.files("augloop.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(word.strip() for word in raw.splitlines() if word.strip())


@dataclass(frozen=True)
class PrefilterRules:
    min_tokens: int = 3
    reject_urls: bool = True
    reject_hashtags: bool = True
    # below this stopword share a post looks non-English; flag only
    stopword_fraction_min: float = 0.05
    language_check_min_tokens: int = 8


def auto_prefilter(
    post: Post, rules: PrefilterRules = PrefilterRules(), stopwords: Optional[frozenset[str]] = None
) -> tuple[frozenset[str], bool]:
    """Mechanical noise flags plus whether they force a rejection.

    non_english_suspect never auto-rejects on its own; the heuristic is
    too coarse to trust without a human look.
    """
    stopwords = stopwords if stopwords is not None else load_stopwords()
    flags = set()
    if _URL_RE.search(post.text):
        flags.add("has_url")
    if _HASHTAG_RE.search(post.text):
        flags.add("has_hashtag")
    tokens = normalize_and_tokenize(post.text)
    if len(tokens) < rules.min_tokens:
        flags.add("too_short")
    if len(tokens) >= rules.language_check_min_tokens:
        stop_share = sum(1 for token in tokens if token in stopwords) / len(tokens)
        if stop_share < rules.stopword_fraction_min:
            flags.add("non_english_suspect")
    auto_reject = (
        ("has_url" in flags and rules.reject_urls)
        or ("has_hashtag" in flags and rules.reject_hashtags)
        or "too_short" in flags
    )
    return frozenset(flags), auto_reject


@dataclass(frozen=True)
class ScreenDecision:
    """One post's screening outcome; immutable once final is not pending."""

    post_id: str
    auto_flags: frozenset[str]
    relevance: str = "unset"
    completeness: str = "unset"
    clarity: str = "unset"
    final: str = "pending"
    reviewer_id: Optional[str] = None
    decided_at: Optional[str] = None

    def __post_init__(self) -> None:
        for name in CRITERIA:
            if getattr(self, name) not in TRI_STATES:
                raise ValueError(f"{name} must be one of {TRI_STATES}")
        if self.final not in FINALS:
            raise ValueError(f"final must be one of {FINALS}")
        unknown = self.auto_flags - set(AUTO_FLAGS)
        if unknown:
            raise ValueError(f"unknown auto flag {sorted(unknown)[0]!r}")
        verdicts = [getattr(self, name) for name in CRITERIA]
        if self.final == "accepted" and verdicts != ["pass"] * 3:
            raise ValueError("accepted requires all three criteria to pass")
        if self.final == "rejected" and "fail" not in verdicts and not self.auto_rejectable:
            raise ValueError("rejected requires a failed criterion or an auto-reject flag")
        if self.final != "pending" and self.decided_at is None:
            raise ValueError("decided posts need a decided_at timestamp")

    @property
    def auto_rejectable(self) -> bool:
        return bool(self.auto_flags & {"has_url", "has_hashtag", "too_short"})

    @property
    def reason(self) -> Optional[str]:
        """Human-readable rejection reason, derived from the record."""
        if self.final != "rejected":
            return None
        failed = [name for name in CRITERIA if getattr(self, name) == "fail"]
        if failed:
            return "failed " + ", ".join(failed)
        return "auto-rejected: " + ", ".join(sorted(self.auto_flags & {"has_url", "has_hashtag", "too_short"}))

    def to_record(self) -> dict:
        return {
            "post_id": self.post_id,
            "auto_flags": sorted(self.auto_flags),
            "relevance": self.relevance,
            "completeness": self.completeness,
            "clarity": self.clarity,
            "final": self.final,
            "reviewer_id": self.reviewer_id,
            "decided_at": self.decided_at,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "ScreenDecision":
        return cls(
            post_id=record["post_id"],
            auto_flags=frozenset(record["auto_flags"]),
            relevance=record["relevance"],
            completeness=record["completeness"],
            clarity=record["clarity"],
            final=record["final"],
            reviewer_id=record.get("reviewer_id"),
            decided_at=record.get("decided_at"),
        )


class ScreeningService:
    """Per-intent screening queues over a pool of candidate posts.

    Posts auto-rejected by the pre-filter never reach a queue; manual
    decisions advance post stages and append to the decision log.
    """

    def __init__(
        self,
        posts: Iterable[Post],
        selected_intents: Sequence[str],
        rules: PrefilterRules = PrefilterRules(),
        log_path: Optional[Path | str] = None,
        clock: Optional[Callable[[], str]] = None,
    ):
        self.selected = tuple(selected_intents)
        self.rules = rules
        self.log_path = Path(log_path) if log_path else None
        self._clock = clock or LogicalClock().now
        self._lock = threading.Lock()
        self._stopwords = load_stopwords()
        self._posts: dict[str, Post] = {}
        self._decisions: dict[str, ScreenDecision] = {}
        for post in posts:
            if post.id in self._posts:
                raise ValueError(f"duplicate post id {post.id!r}")
            if post.stage != "raw":
                raise StateError(f"post {post.id} enters screening from stage raw, not {post.stage}")
            flags, auto_reject = auto_prefilter(post, rules, self._stopwords)
            if auto_reject:
                decision = ScreenDecision(
                    post_id=post.id,
                    auto_flags=flags,
                    final="rejected",
                    reviewer_id="auto-prefilter",
                    decided_at=self._clock(),
                )
                self._posts[post.id] = post.with_stage("screened_reject")
                self._append_log(decision)
            else:
                decision = ScreenDecision(post_id=post.id, auto_flags=flags)
                self._posts[post.id] = post
            self._decisions[post.id] = decision

    def _append_log(self, decision: ScreenDecision) -> None:
        if self.log_path is None:
            return
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(decision.to_record(), ensure_ascii=False) + "\n")

    def post(self, post_id: str) -> Post:
        if post_id not in self._posts:
            raise NotFoundError(f"unknown post {post_id!r}")
        return self._posts[post_id]

    def decision(self, post_id: str) -> ScreenDecision:
        if post_id not in self._decisions:
            raise NotFoundError(f"unknown post {post_id!r}")
        return self._decisions[post_id]

    def screen_queue(self, intent: str, offset: int = 0, limit: Optional[int] = None) -> list[Post]:
        """Pending posts for one selected intent, in stable id order."""
        if intent not in self.selected:
            raise StateError(f"intent {intent!r} is not selected for augmentation")
        pending = sorted(
            (
                post
                for post in self._posts.values()
                if post.label == intent and self._decisions[post.id].final == "pending"
            ),
            key=lambda post: post.id,
        )
        window = pending[offset:]
        return window[:limit] if limit is not None else window

    def record_screen_decision(self, post_id: str, verdicts: Mapping[str, str], reviewer_id: str) -> ScreenDecision:
        """Apply the expert's three verdicts; all-pass accepts, else rejects."""
        missing = [name for name in CRITERIA if name not in verdicts]
        if missing:
            raise ValueError(f"missing verdict for {missing[0]}")
        unknown = [name for name in verdicts if name not in CRITERIA]
        if unknown:
            raise ValueError(f"unknown criterion {unknown[0]!r}")
        for name in CRITERIA:
            if verdicts[name] not in ("pass", "fail"):
                raise ValueError(f"{name} verdict must be pass or fail, got {verdicts[name]!r}")

        with self._lock:
            current = self.decision(post_id)
            if current.final != "pending":
                raise StateError(f"post {post_id} already screened ({current.final})")
            accepted = all(verdicts[name] == "pass" for name in CRITERIA)
            decision = replace(
                current,
                relevance=verdicts["relevance"],
                completeness=verdicts["completeness"],
                clarity=verdicts["clarity"],
                final="accepted" if accepted else "rejected",
                reviewer_id=reviewer_id,
                decided_at=self._clock(),
            )
            self._posts[post_id] = self._posts[post_id].with_stage(
                "screened_accept" if accepted else "screened_reject"
            )
            self._decisions[post_id] = decision
            self._append_log(decision)
            return decision

    def accepted_posts(self) -> list[Post]:
        return sorted(
            (post for post in self._posts.values() if post.stage == "screened_accept"),
            key=lambda post: post.id,
        )

    def decisions(self) -> dict[str, ScreenDecision]:
        return dict(self._decisions)

    def pending_count(self, intent: str) -> int:
        return len(self.screen_queue(intent))

    @classmethod
    def replay(
        cls,
        posts: Iterable[Post],
        selected_intents: Sequence[str],
        log_path: Path | str,
        rules: PrefilterRules = PrefilterRules(),
    ) -> "ScreeningService":
        """Rebuild service state by re-applying the decision log."""
        service = cls(posts, selected_intents, rules=rules, log_path=None)
        with open(log_path, "r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                record = ScreenDecision.from_record(json.loads(line))
                if record.reviewer_id == "auto-prefilter":
                    # recomputed deterministically at intake; check agreement
                    current = service.decision(record.post_id)
                    if current.final != "rejected" or current.auto_flags != record.auto_flags:
                        raise StateError(f"auto decision for {record.post_id} does not replay")
                    continue
                service._decisions[record.post_id] = record
                service._posts[record.post_id] = service._posts[record.post_id].with_stage(
                    "screened_accept" if record.final == "accepted" else "screened_reject"
                )
        return service
