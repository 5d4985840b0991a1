"""Domain types, JSONL dataset persistence, and stratified splitting.

A Post is one support-group message moving through the augmentation
pipeline; a LabeledDataset is a set of labeled posts with an optional
train/test split. Datasets persist as JSONL, one post per line, with a
closed schema (unknown fields are rejected so format drift is caught at
load time).
"""

from __future__ import annotations

import json
import os
import random
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import DatasetFormatError, SplitError

NONE_LABEL = "NONE"

SOURCES = ("original", "synthetic", "real")

STAGES = (
    "raw",
    "screened_accept",
    "screened_reject",
    "qa_pending",
    "qa_good",
    "qa_rejected",
    "cleaned",
    "clean_rejected",
)

# Stages whose posts may carry empty text (rejects may have been gutted
# by normalization).
REJECT_STAGES = frozenset({"screened_reject", "qa_rejected", "clean_rejected"})

# Forward edges of the pipeline; anything not listed (in particular any
# edge back to "raw") is an illegal transition.
STAGE_TRANSITIONS = {
    "raw": {"screened_accept", "screened_reject", "qa_pending", "cleaned", "clean_rejected"},
    "cleaned": {"qa_pending"},
    "qa_pending": {"qa_good", "qa_rejected"},
    "screened_accept": set(),
    "screened_reject": set(),
    "qa_good": set(),
    "qa_rejected": set(),
    "clean_rejected": set(),
}

# Canonical JSONL field order; serialization emits exactly these keys.
POST_FIELDS = (
    "id",
    "text",
    "source",
    "stage",
    "label",
    "seed_post_id",
    "prompt_id",
    "origin_url",
    "created_at",
)

EPOCH_RFC3339 = "1970-01-01T00:00:00Z"


def parse_rfc3339(value: str) -> datetime:
    """Parse an RFC 3339 timestamp; raises ValueError on malformed input."""
    if not isinstance(value, str) or not value:
        raise ValueError(f"not an RFC 3339 timestamp: {value!r}")
    text = value[:-1] + "+00:00" if value.endswith("Z") else value
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        raise ValueError(f"timestamp missing UTC offset: {value!r}")
    return parsed


def format_rfc3339(moment: datetime) -> str:
    return moment.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class LogicalClock:
    """Deterministic timestamp source: fixed base, one second per tick.

    Pipeline runs use this instead of wall time so re-running a config
    yields byte-identical artifacts.
    """

    def __init__(self, base: str = "2024-01-01T00:00:00Z"):
        self._base = parse_rfc3339(base)
        self._ticks = 0

    def now(self) -> str:
        stamp = format_rfc3339(self._base + timedelta(seconds=self._ticks))
        self._ticks += 1
        return stamp


@dataclass(frozen=True)
class Post:
    """One support-group message with provenance.

    Provenance fields are source-specific: synthetic posts must carry the
    seed post and prompt that produced them, real posts the URL they were
    scraped from, and original posts none of the three.
    """

    id: str
    text: str
    source: str
    stage: str
    label: Optional[str] = None
    seed_post_id: Optional[str] = None
    prompt_id: Optional[str] = None
    origin_url: Optional[str] = None
    created_at: str = EPOCH_RFC3339

    def __post_init__(self) -> None:
        if not self.id or not isinstance(self.id, str):
            raise ValueError("post id must be a non-empty string")
        if self.source not in SOURCES:
            raise ValueError(f"post {self.id}: unknown source {self.source!r}")
        if self.stage not in STAGES:
            raise ValueError(f"post {self.id}: unknown stage {self.stage!r}")
        if not self.text.strip() and self.stage not in REJECT_STAGES:
            raise ValueError(f"post {self.id}: empty text outside a reject stage")
        if self.source == "synthetic":
            if not self.seed_post_id or not self.prompt_id:
                raise ValueError(f"post {self.id}: synthetic posts need seed_post_id and prompt_id")
            if self.origin_url:
                raise ValueError(f"post {self.id}: synthetic posts must not carry origin_url")
        elif self.source == "real":
            if not self.origin_url:
                raise ValueError(f"post {self.id}: real posts need origin_url")
            if self.seed_post_id or self.prompt_id:
                raise ValueError(f"post {self.id}: real posts must not carry seed/prompt provenance")
        else:
            if self.seed_post_id or self.prompt_id or self.origin_url:
                raise ValueError(f"post {self.id}: original posts carry no provenance links")
        parse_rfc3339(self.created_at)

    def with_stage(self, stage: str) -> "Post":
        """Advance the post along the pipeline; backward moves are illegal."""
        allowed = STAGE_TRANSITIONS.get(self.stage, set())
        if stage not in allowed:
            raise ValueError(f"post {self.id}: illegal stage transition {self.stage} -> {stage}")
        return replace(self, stage=stage)

    def with_label(self, label: Optional[str]) -> "Post":
        return replace(self, label=label)

    def to_record(self) -> dict:
        return {name: getattr(self, name) for name in POST_FIELDS}

    @classmethod
    def from_record(cls, record: Mapping) -> "Post":
        missing = [name for name in POST_FIELDS if name not in record]
        if missing:
            raise DatasetFormatError(f"missing field {missing[0]}")
        unknown = [key for key in record if key not in POST_FIELDS]
        if unknown:
            raise DatasetFormatError(f"unknown field {unknown[0]}")
        try:
            return cls(**{name: record[name] for name in POST_FIELDS})
        except ValueError as exc:
            raise DatasetFormatError(str(exc)) from exc


@dataclass(frozen=True)
class IntentSpec:
    """One focal intent: its name plus prompt/description metadata."""

    name: str
    description: str
    keywords: tuple[str, ...] = ()


@dataclass(frozen=True)
class IntentVocabulary:
    """Closed set of focal intents plus the NONE sentinel.

    Loaded from configuration once per run; immutable afterwards.
    """

    focal: tuple[IntentSpec, ...]
    none_label: str = NONE_LABEL

    def __post_init__(self) -> None:
        seen = set()
        for spec in self.focal:
            if not spec.name or spec.name != spec.name.lower():
                raise ValueError(f"intent name must be non-empty lowercase: {spec.name!r}")
            if spec.name in seen:
                raise ValueError(f"duplicate intent name {spec.name!r}")
            seen.add(spec.name)
        if self.none_label in seen:
            raise ValueError("the NONE sentinel cannot also be a focal intent")

    @property
    def focal_names(self) -> tuple[str, ...]:
        return tuple(spec.name for spec in self.focal)

    @property
    def all_labels(self) -> tuple[str, ...]:
        return self.focal_names + (self.none_label,)

    def is_focal(self, name: str) -> bool:
        return name in set(self.focal_names)

    def __contains__(self, name: str) -> bool:
        return name == self.none_label or self.is_focal(name)

    def spec(self, name: str) -> IntentSpec:
        for candidate in self.focal:
            if candidate.name == name:
                return candidate
        raise KeyError(name)

    def description(self, name: str) -> str:
        if name == self.none_label:
            return "does not fit any focal intent"
        return self.spec(name).description

    @classmethod
    def from_config(cls, config: Mapping) -> "IntentVocabulary":
        focal = tuple(
            IntentSpec(
                name=entry["name"],
                description=entry.get("description", ""),
                keywords=tuple(entry.get("keywords", ())),
            )
            for entry in config["intents"]
        )
        return cls(focal=focal, none_label=config.get("none_label", NONE_LABEL))

    @classmethod
    def load(cls, path: Path | str) -> "IntentVocabulary":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_config(json.load(handle))

    @classmethod
    def default(cls) -> "IntentVocabulary":
        raw = resources.files("augloop.data").joinpath("intents.json").read_text("utf-8")
        return cls.from_config(json.loads(raw))


@dataclass
class LabeledDataset:
    """Labeled posts with an optional train/test split.

    The split, when present, maps every post id (and only post ids) to
    "train" or "test".
    """

    posts: tuple[Post, ...]
    split: Optional[dict[str, str]] = None

    def __init__(self, posts: Iterable[Post], split: Optional[Mapping[str, str]] = None):
        self.posts = tuple(posts)
        ids = [post.id for post in self.posts]
        id_set = set(ids)
        if len(id_set) != len(ids):
            dupes = sorted({pid for pid in ids if ids.count(pid) > 1})
            raise ValueError(f"duplicate post id {dupes[0]!r}")
        for post in self.posts:
            if post.label is None:
                raise ValueError(f"post {post.id} has no label; labeled datasets require one")
        if split is not None:
            split = dict(split)
            if set(split) != id_set:
                raise ValueError("split must cover exactly the post-id set")
            bad = [value for value in split.values() if value not in ("train", "test")]
            if bad:
                raise ValueError(f"split values must be 'train' or 'test', got {bad[0]!r}")
        self.split = split

    def __len__(self) -> int:
        return len(self.posts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return self.posts == other.posts and self.split == other.split

    def by_intent(self) -> dict[str, list[Post]]:
        grouped: dict[str, list[Post]] = {}
        for post in self.posts:
            grouped.setdefault(post.label, []).append(post)
        return grouped

    def subset(self, part: str) -> tuple[Post, ...]:
        if self.split is None:
            raise ValueError("dataset has no split")
        return tuple(post for post in self.posts if self.split[post.id] == part)

    @property
    def train_posts(self) -> tuple[Post, ...]:
        return self.subset("train")

    @property
    def test_posts(self) -> tuple[Post, ...]:
        return self.subset("test")

    def validate_labels(self, vocabulary: IntentVocabulary) -> None:
        for post in self.posts:
            if post.label not in vocabulary:
                raise ValueError(f"post {post.id}: label {post.label!r} not in the intent vocabulary")


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=path.parent, prefix=path.name + ".", suffix=".tmp", delete=False
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, path)
    except BaseException:
        os.unlink(handle.name)
        raise


def _split_sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".split.json")


def save_dataset(dataset: LabeledDataset, path: Path | str) -> None:
    """Write one JSON post record per line; the split goes to a sidecar file."""
    path = Path(path)
    lines = [json.dumps(post.to_record(), ensure_ascii=False) for post in dataset.posts]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    sidecar = _split_sidecar(path)
    if dataset.split is not None:
        atomic_write_text(sidecar, json.dumps({"split": dataset.split}, sort_keys=True, indent=1))
    elif sidecar.exists():
        sidecar.unlink()


def load_dataset(path: Path | str) -> LabeledDataset:
    path = Path(path)
    posts: list[Post] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {number}: malformed JSON ({exc.msg})") from exc
            try:
                post = Post.from_record(record)
            except DatasetFormatError as exc:
                raise DatasetFormatError(f"line {number}: {exc}") from exc
            if post.id in seen:
                raise DatasetFormatError(f"line {number}: duplicate id {post.id!r}")
            seen.add(post.id)
            posts.append(post)
    split = None
    sidecar = _split_sidecar(path)
    if sidecar.exists():
        with open(sidecar, "r", encoding="utf-8") as handle:
            split = json.load(handle)["split"]
    return LabeledDataset(posts, split=split)


def _round_half_up(value: float) -> int:
    return int(value + 0.5)


def stratified_split(dataset: LabeledDataset, test_fraction: float, seed: int) -> LabeledDataset:
    """Assign train/test per intent: round(test_fraction * n) test posts, min 1.

    When the dataset mixes sources, only original posts are eligible for
    the test side (evaluation must reflect the real distribution);
    augmented posts always land in train. Deterministic given the seed
    regardless of input order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test_fraction must be in (0,1), got {test_fraction}")
    mixed = any(post.source != "original" for post in dataset.posts)
    assignment: dict[str, str] = {}
    for intent in sorted(dataset.by_intent()):
        posts = dataset.by_intent()[intent]
        if mixed:
            eligible = sorted(post.id for post in posts if post.source == "original")
            for post in posts:
                if post.source != "original":
                    assignment[post.id] = "train"
        else:
            eligible = sorted(post.id for post in posts)
        if len(eligible) < 2:
            raise SplitError(f"intent {intent!r} has fewer than 2 splittable posts")
        n_test = max(1, _round_half_up(test_fraction * len(eligible)))
        n_test = min(n_test, len(eligible) - 1)
        rng = random.Random(f"{seed}:{intent}")
        shuffled = list(eligible)
        rng.shuffle(shuffled)
        for pid in shuffled[:n_test]:
            assignment[pid] = "test"
        for pid in shuffled[n_test:]:
            assignment[pid] = "train"
    return LabeledDataset(dataset.posts, split=assignment)
