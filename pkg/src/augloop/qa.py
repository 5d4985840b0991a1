"""Dual-annotator quality assurance with discussion, adjudication, and agreement stats.

Synthetic posts get a three-criterion quality verdict; real posts get an intent
label (or NONE).  Every post is assigned to exactly two annotators.  Agreement
finalizes the post; disagreement allows a single discussion round and, failing
that, expert adjudication.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import NONE_LABEL, IntentVocabulary, LogicalClock, Post
from .errors import ConflictError, MetricsError, NotFoundError, StateError

AGREEMENT_STATES = ("pending_one", "pending_two", "agreed", "disagreed", "adjudicated")

_SYNTH_KEYS = frozenset({"fits_intent", "fluent", "non_repetitive"})


@dataclass(frozen=True)
class SyntheticVerdict:
    """Quality verdict for a generated post; accept is the conjunction."""

    fits_intent: bool
    fluent: bool
    non_repetitive: bool

    @property
    def accept(self) -> bool:
        return self.fits_intent and self.fluent and self.non_repetitive

    @property
    def category(self) -> str:
        return "accept" if self.accept else "reject"

    def to_dict(self) -> dict:
        return {
            "fits_intent": self.fits_intent,
            "fluent": self.fluent,
            "non_repetitive": self.non_repetitive,
        }


@dataclass(frozen=True)
class LabelVerdict:
    """Intent choice for a scraped post; NONE means no focal intent fits."""

    label: str

    @property
    def category(self) -> str:
        return self.label

    def to_dict(self) -> dict:
        return {"label": self.label}


Verdict = SyntheticVerdict | LabelVerdict


def verdict_from_dict(payload: Mapping) -> Verdict:
    keys = set(payload)
    if keys == {"label"}:
        return LabelVerdict(label=payload["label"])
    if keys == _SYNTH_KEYS:
        values = {key: payload[key] for key in sorted(_SYNTH_KEYS)}
        for key, value in values.items():
            if not isinstance(value, bool):
                raise ValueError(f"verdict field {key} must be a boolean")
        return SyntheticVerdict(**values)
    raise ValueError(f"unrecognized verdict shape: {sorted(keys)}")


@dataclass(frozen=True)
class AnnotationRecord:
    post_id: str
    annotator_id: str
    verdict: Verdict
    submitted_at: str
    revision: int

    def __post_init__(self):
        if self.revision < 1:
            raise ValueError("revision starts at 1")

    def to_record(self) -> dict:
        return {
            "post_id": self.post_id,
            "annotator_id": self.annotator_id,
            "verdict": self.verdict.to_dict(),
            "submitted_at": self.submitted_at,
            "revision": self.revision,
        }


@dataclass(frozen=True)
class AdjudicationRecord:
    post_id: str
    judge_id: str
    final_verdict: Verdict
    rationale: str
    adjudicated_at: str

    def to_record(self) -> dict:
        return {
            "post_id": self.post_id,
            "judge_id": self.judge_id,
            "final_verdict": self.final_verdict.to_dict(),
            "rationale": self.rationale,
            "adjudicated_at": self.adjudicated_at,
        }


@dataclass
class DiscussionRound:
    post_id: str
    opened_at: str
    resolved: bool = False
    revised_by: set = field(default_factory=set)


def kappa_value(p_observed: float, p_expected: float) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    Perfect observed agreement is 1.0 by definition; otherwise a chance
    agreement of 1 leaves the statistic undefined and yields NaN.
    """
    if p_observed == 1.0:
        return 1.0
    if p_expected >= 1.0:
        return float("nan")
    return (p_observed - p_expected) / (1.0 - p_expected)


def cohens_kappa(pairs: Iterable[tuple[str, str]]) -> float:
    """Cohen's kappa over paired categorical verdicts (first annotator, second)."""
    pairs = list(pairs)
    if not pairs:
        raise MetricsError("kappa requires at least one fully double-annotated post")
    n = len(pairs)
    observed = sum(1 for a, b in pairs if a == b) / n
    first_counts: dict[str, int] = {}
    second_counts: dict[str, int] = {}
    for a, b in pairs:
        first_counts[a] = first_counts.get(a, 0) + 1
        second_counts[b] = second_counts.get(b, 0) + 1
    expected = sum(
        (first_counts.get(cat, 0) / n) * (second_counts.get(cat, 0) / n)
        for cat in set(first_counts) | set(second_counts)
    )
    return kappa_value(observed, expected)


class QAService:
    """State machine driving double annotation from qa_pending to qa_good/qa_rejected."""

    def __init__(
        self,
        posts: Iterable[Post],
        annotators: Sequence[str],
        vocabulary: IntentVocabulary | None = None,
        log_path=None,
        clock=None,
    ):
        roster = tuple(annotators)
        if len(roster) < 2:
            raise ValueError("need at least two annotators")
        if len(set(roster)) != len(roster):
            raise ValueError("duplicate annotator ids in roster")
        self._roster = roster
        self._vocabulary = vocabulary if vocabulary is not None else IntentVocabulary.default()
        self._clock = clock if clock is not None else LogicalClock().now
        self._log_path = log_path
        self._lock = threading.Lock()

        self._posts: dict[str, Post] = {}
        self._order: list[str] = []
        self._assignments: dict[str, tuple[str, str]] = {}
        self._records: dict[str, dict[str, list[AnnotationRecord]]] = {}
        self._discussions: dict[str, DiscussionRound] = {}
        self._adjudications: dict[str, AdjudicationRecord] = {}
        self._versions: dict[str, int] = {}

        for index, post in enumerate(posts):
            if post.id in self._posts:
                raise ValueError(f"duplicate post id {post.id!r}")
            if post.stage != "qa_pending":
                raise StateError(f"post {post.id!r} must be in stage qa_pending, got {post.stage!r}")
            if post.source not in ("synthetic", "real"):
                raise StateError(f"post {post.id!r} has source {post.source!r}; QA covers synthetic and real posts")
            pair = (self._roster[(2 * index) % len(roster)], self._roster[(2 * index + 1) % len(roster)])
            self._posts[post.id] = post
            self._order.append(post.id)
            self._assignments[post.id] = pair
            self._records[post.id] = {}
            self._versions[post.id] = 0

    # -- lookups ------------------------------------------------------------

    def post(self, post_id: str) -> Post:
        try:
            return self._posts[post_id]
        except KeyError:
            raise NotFoundError(f"unknown post {post_id!r}") from None

    def assignment(self, post_id: str) -> tuple[str, str]:
        self.post(post_id)
        return self._assignments[post_id]

    def post_version(self, post_id: str) -> int:
        self.post(post_id)
        return self._versions[post_id]

    def annotations(self, post_id: str) -> tuple[AnnotationRecord, ...]:
        """Full revision history, unrestricted; API views go through visible_annotations."""
        self.post(post_id)
        out = []
        for annotator in self._assignments[post_id]:
            out.extend(self._records[post_id].get(annotator, []))
        return tuple(sorted(out, key=lambda r: (r.revision, self._assignments[post_id].index(r.annotator_id))))

    def visible_annotations(self, post_id: str, viewer_id: str) -> tuple[AnnotationRecord, ...]:
        """Records the viewer may see: always their own; peers' only once both submitted."""
        records = self.annotations(post_id)
        both_in = all(self._records[post_id].get(a) for a in self._assignments[post_id])
        if both_in:
            return records
        return tuple(r for r in records if r.annotator_id == viewer_id)

    def _live(self, post_id: str) -> dict[str, AnnotationRecord]:
        return {
            annotator: history[-1]
            for annotator, history in self._records[post_id].items()
            if history
        }

    def agreement_status(self, post_id: str) -> str:
        self.post(post_id)
        if post_id in self._adjudications:
            return "adjudicated"
        live = self._live(post_id)
        if len(live) == 0:
            return "pending_one"
        if len(live) == 1:
            return "pending_two"
        first, second = (live[a] for a in self._assignments[post_id])
        return "agreed" if first.verdict.category == second.verdict.category else "disagreed"

    def annotation_queue(self, annotator_id: str) -> tuple[Post, ...]:
        """Posts awaiting this annotator: unseen ones, or open discussions to revise."""
        if annotator_id not in self._roster:
            raise NotFoundError(f"unknown annotator {annotator_id!r}")
        due = []
        for post_id in sorted(self._order):
            post = self._posts[post_id]
            if post.stage != "qa_pending" or annotator_id not in self._assignments[post_id]:
                continue
            history = self._records[post_id].get(annotator_id, [])
            if not history:
                due.append(post)
                continue
            discussion = self._discussions.get(post_id)
            if discussion and not discussion.resolved and annotator_id not in discussion.revised_by:
                due.append(post)
        return tuple(due)

    def adjudication_queue(self) -> tuple[Post, ...]:
        """Posts still disagreed after their discussion round."""
        due = []
        for post_id in sorted(self._order):
            if self._posts[post_id].stage != "qa_pending":
                continue
            if post_id in self._discussions and self.agreement_status(post_id) == "disagreed":
                due.append(self._posts[post_id])
        return tuple(due)

    def final_stages(self) -> dict[str, str]:
        return {post_id: self._posts[post_id].stage for post_id in sorted(self._order)}

    def finalized_posts(self) -> tuple[Post, ...]:
        return tuple(
            self._posts[post_id]
            for post_id in sorted(self._order)
            if self._posts[post_id].stage in ("qa_good", "qa_rejected")
        )

    def good_posts(self) -> tuple[Post, ...]:
        return tuple(p for p in self.finalized_posts() if p.stage == "qa_good")

    def adjudication(self, post_id: str) -> AdjudicationRecord | None:
        self.post(post_id)
        return self._adjudications.get(post_id)

    def discussion(self, post_id: str) -> DiscussionRound | None:
        self.post(post_id)
        return self._discussions.get(post_id)

    # -- verdict handling ----------------------------------------------------

    def _coerce_verdict(self, post: Post, verdict) -> Verdict:
        if isinstance(verdict, Mapping):
            verdict = verdict_from_dict(verdict)
        if post.source == "synthetic":
            if not isinstance(verdict, SyntheticVerdict):
                raise ValueError(f"synthetic post {post.id!r} takes a three-criterion quality verdict")
        else:
            if not isinstance(verdict, LabelVerdict):
                raise ValueError(f"real post {post.id!r} takes an intent label verdict")
            if verdict.label not in self._vocabulary.all_labels:
                raise ValueError(f"unknown intent label {verdict.label!r}")
        return verdict

    def _check_version(self, post_id: str, expected_version) -> None:
        if expected_version is not None and expected_version != self._versions[post_id]:
            raise ConflictError(
                f"post {post_id!r} is at version {self._versions[post_id]}, "
                f"write expected {expected_version}"
            )

    def _require_pending(self, post: Post) -> None:
        if post.stage != "qa_pending":
            raise StateError(f"post {post.id!r} is already finalized as {post.stage}")

    def _maybe_finalize(self, post_id: str) -> None:
        live = self._live(post_id)
        pair = self._assignments[post_id]
        if len(live) < 2:
            return
        first, second = live[pair[0]], live[pair[1]]
        if first.verdict.category != second.verdict.category:
            return
        self._finalize(post_id, first.verdict)
        discussion = self._discussions.get(post_id)
        if discussion:
            discussion.resolved = True

    def _finalize(self, post_id: str, verdict: Verdict) -> None:
        post = self._posts[post_id]
        if isinstance(verdict, SyntheticVerdict):
            stage = "qa_good" if verdict.accept else "qa_rejected"
        else:
            stage = "qa_good" if self._vocabulary.is_focal(verdict.label) else "qa_rejected"
            post = post.with_label(verdict.label)
        self._posts[post_id] = post.with_stage(stage)

    # -- write operations ----------------------------------------------------

    def submit_annotation(self, post_id, annotator_id, verdict, expected_version=None, _at=None) -> AnnotationRecord:
        with self._lock:
            post = self.post(post_id)
            self._require_pending(post)
            self._check_version(post_id, expected_version)
            if annotator_id not in self._assignments[post_id]:
                raise StateError(
                    f"annotator {annotator_id!r} is not assigned to post {post_id!r}; "
                    f"assigned: {', '.join(self._assignments[post_id])}"
                )
            if self._records[post_id].get(annotator_id):
                raise StateError(
                    f"annotator {annotator_id!r} already annotated post {post_id!r}; "
                    "revisions require an open discussion round"
                )
            verdict = self._coerce_verdict(post, verdict)
            record = AnnotationRecord(post_id, annotator_id, verdict, _at or self._clock(), revision=1)
            self._records[post_id].setdefault(annotator_id, []).append(record)
            self._versions[post_id] += 1
            self._log({"event": "annotation", **record.to_record()})
            self._maybe_finalize(post_id)
            return record

    def open_discussion(self, post_id, expected_version=None, _at=None) -> DiscussionRound:
        with self._lock:
            post = self.post(post_id)
            self._require_pending(post)
            self._check_version(post_id, expected_version)
            if post_id in self._discussions:
                raise StateError(f"post {post_id!r} already had its discussion round")
            if self.agreement_status(post_id) != "disagreed":
                raise StateError(f"post {post_id!r} is not in disagreement")
            discussion = DiscussionRound(post_id=post_id, opened_at=_at or self._clock())
            self._discussions[post_id] = discussion
            self._versions[post_id] += 1
            self._log({"event": "discussion_open", "post_id": post_id, "opened_at": discussion.opened_at})
            return discussion

    def revise_annotation(self, post_id, annotator_id, verdict, expected_version=None, _at=None) -> AnnotationRecord:
        with self._lock:
            post = self.post(post_id)
            self._require_pending(post)
            self._check_version(post_id, expected_version)
            discussion = self._discussions.get(post_id)
            if discussion is None or discussion.resolved:
                raise StateError(f"post {post_id!r} has no open discussion round")
            if annotator_id not in self._assignments[post_id]:
                raise StateError(f"annotator {annotator_id!r} is not assigned to post {post_id!r}")
            if annotator_id in discussion.revised_by:
                raise StateError(f"annotator {annotator_id!r} already revised in this discussion round")
            verdict = self._coerce_verdict(post, verdict)
            previous = self._records[post_id][annotator_id][-1]
            record = AnnotationRecord(post_id, annotator_id, verdict, _at or self._clock(), revision=previous.revision + 1)
            self._records[post_id][annotator_id].append(record)
            discussion.revised_by.add(annotator_id)
            self._versions[post_id] += 1
            self._log({"event": "annotation", **record.to_record()})
            self._maybe_finalize(post_id)
            return record

    def adjudicate(self, post_id, judge_id, final_verdict, rationale, expected_version=None, _at=None) -> AdjudicationRecord:
        with self._lock:
            post = self.post(post_id)
            self._require_pending(post)
            self._check_version(post_id, expected_version)
            if judge_id in self._assignments[post_id]:
                raise ValueError(f"judge {judge_id!r} annotated post {post_id!r}; the judge must be independent")
            if post_id not in self._discussions:
                raise StateError(f"post {post_id!r} needs a discussion round before adjudication")
            if self.agreement_status(post_id) != "disagreed":
                raise StateError(f"post {post_id!r} is not in disagreement")
            final_verdict = self._coerce_verdict(post, final_verdict)
            record = AdjudicationRecord(post_id, judge_id, final_verdict, rationale, _at or self._clock())
            self._adjudications[post_id] = record
            self._discussions[post_id].resolved = True
            self._versions[post_id] += 1
            self._log({"event": "adjudication", **record.to_record()})
            self._finalize(post_id, final_verdict)
            return record

    # -- agreement statistics --------------------------------------------------

    def first_pass_pairs(self) -> list[tuple[str, str]]:
        """Initial (revision 1) verdict categories for fully double-annotated posts."""
        pairs = []
        for post_id in sorted(self._order):
            rec = self._records[post_id]
            pair = self._assignments[post_id]
            if all(rec.get(a) for a in pair):
                pairs.append((rec[pair[0]][0].verdict.category, rec[pair[1]][0].verdict.category))
        return pairs

    def cohens_kappa(self) -> float:
        return cohens_kappa(self.first_pass_pairs())

    # -- persistence -----------------------------------------------------------

    def _log(self, record: dict) -> None:
        if self._log_path is None:
            return
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    def attach_log(self, log_path) -> None:
        """Append subsequent events to log_path; used to resume a logged session."""
        self._log_path = log_path

    @classmethod
    def replay(cls, posts, annotators, log_path, vocabulary=None, out_log_path=None) -> "QAService":
        """Rebuild a service by re-applying a JSONL event log; timestamps come from the log."""
        service = cls(posts, annotators, vocabulary=vocabulary, log_path=out_log_path)
        with open(log_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError:
                    raise StateError(f"line {line_no}: malformed JSON in annotation log") from None
                kind = event.get("event")
                if kind == "annotation":
                    if event["revision"] == 1:
                        service.submit_annotation(
                            event["post_id"], event["annotator_id"],
                            event["verdict"], _at=event["submitted_at"],
                        )
                    else:
                        service.revise_annotation(
                            event["post_id"], event["annotator_id"],
                            event["verdict"], _at=event["submitted_at"],
                        )
                elif kind == "discussion_open":
                    service.open_discussion(event["post_id"], _at=event["opened_at"])
                elif kind == "adjudication":
                    service.adjudicate(
                        event["post_id"], event["judge_id"], event["final_verdict"],
                        event["rationale"], _at=event["adjudicated_at"],
                    )
                else:
                    raise StateError(f"line {line_no}: unknown event kind {kind!r}")
        return service
