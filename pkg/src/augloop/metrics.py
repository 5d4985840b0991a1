"""Per-intent evaluation metrics and the reports built from them.

Covers confusion counting, precision/recall/F1 in percent, the strict
80% low-F1 selection rule, the four-condition comparison table, and the
per-intent augmentation summary. All arithmetic stays full precision;
rounding to one decimal happens only when a report is rendered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .corpus import NONE_LABEL, IntentVocabulary, LabeledDataset, Post
from .errors import MetricsError

CONDITIONS = ("Orig", "Real", "Synth", "All")


def round1(value: float) -> float:
    """Round half-up to one decimal (display only; 0.25 -> 0.3 style)."""
    return math.floor(value * 10 + 0.5) / 10


def ratio_percent(numerator: float, denominator: float) -> tuple[float, bool]:
    """100 * numerator/denominator; zero denominator yields (0.0, flagged)."""
    if denominator == 0:
        return 0.0, True
    return 100.0 * numerator / denominator, False


def precision(tp: int, fp: int) -> tuple[float, bool]:
    """Percent of positive predictions that were correct, plus a
    degenerate-denominator flag when nothing was predicted positive."""
    if tp < 0 or fp < 0:
        raise MetricsError("confusion counts must be non-negative")
    return ratio_percent(tp, tp + fp)


def recall(tp: int, fn: int) -> tuple[float, bool]:
    """Percent of actual positives that were found, plus a flag when the
    intent has no positive examples at all."""
    if tp < 0 or fn < 0:
        raise MetricsError("confusion counts must be non-negative")
    return ratio_percent(tp, tp + fn)


def f1(precision_pct: float, recall_pct: float) -> float:
    """Harmonic mean of precision and recall, both in percent."""
    if not (0.0 <= precision_pct <= 100.0 and 0.0 <= recall_pct <= 100.0):
        raise MetricsError(f"precision/recall must be percentages, got ({precision_pct}, {recall_pct})")
    total = precision_pct + recall_pct
    if total == 0:
        return 0.0
    return 2.0 * precision_pct * recall_pct / total


@dataclass(frozen=True)
class ConfusionCounts:
    """One-vs-rest counts for a single intent."""

    tp: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise MetricsError(f"confusion counts must be non-negative: {self}")


@dataclass(frozen=True)
class IntentMetrics:
    precision: float
    recall: float
    f1: float
    precision_degenerate: bool = False
    recall_degenerate: bool = False

    def __post_init__(self) -> None:
        for value in (self.precision, self.recall, self.f1):
            if not 0.0 <= value <= 100.0:
                raise MetricsError(f"metric out of [0,100]: {value}")
        lo, hi = sorted((self.precision, self.recall))
        if not (lo - 1e-9 <= self.f1 <= hi + 1e-9):
            raise MetricsError(f"f1 {self.f1} outside [{lo}, {hi}]")

    @classmethod
    def from_counts(cls, counts: ConfusionCounts) -> "IntentMetrics":
        p, p_flag = precision(counts.tp, counts.fp)
        r, r_flag = recall(counts.tp, counts.fn)
        return cls(p, r, f1(p, r), p_flag, r_flag)

    @classmethod
    def from_values(cls, precision_pct: float, recall_pct: float) -> "IntentMetrics":
        return cls(precision_pct, recall_pct, f1(precision_pct, recall_pct))


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


@dataclass
class MetricsReport:
    """Per-intent metrics for one training condition.

    Macro values are unweighted means over the intents present (the NONE
    sentinel is never a row); degenerate rows still contribute their
    zeros so the macro stays a total function.
    """

    condition: str
    rows: dict[str, IntentMetrics]

    def __post_init__(self) -> None:
        if self.condition not in CONDITIONS:
            raise MetricsError(f"unknown condition {self.condition!r}; expected one of {CONDITIONS}")
        if not self.rows:
            raise MetricsError("a metrics report needs at least one intent row")
        if NONE_LABEL in self.rows:
            raise MetricsError("the NONE sentinel is not a report row")

    @property
    def intents(self) -> tuple[str, ...]:
        return tuple(sorted(self.rows))

    @property
    def macro_precision(self) -> float:
        return _mean([self.rows[name].precision for name in self.rows])

    @property
    def macro_recall(self) -> float:
        return _mean([self.rows[name].recall for name in self.rows])

    @property
    def macro_f1(self) -> float:
        return _mean([self.rows[name].f1 for name in self.rows])

    @classmethod
    def from_counts(cls, condition: str, counts: Mapping[str, ConfusionCounts]) -> "MetricsReport":
        return cls(condition, {name: IntentMetrics.from_counts(c) for name, c in counts.items()})

    @classmethod
    def from_values(cls, condition: str, values: Mapping[str, tuple[float, float]]) -> "MetricsReport":
        """Build from per-intent (precision, recall) percent pairs; F1 is
        recomputed via the harmonic mean rather than trusted from input."""
        return cls(condition, {name: IntentMetrics.from_values(p, r) for name, (p, r) in values.items()})

    def to_csv(self) -> str:
        lines = ["intent,condition,precision,recall,f1"]
        for name in self.intents:
            row = self.rows[name]
            lines.append(
                f"{name},{self.condition},{round1(row.precision)},{round1(row.recall)},{round1(row.f1)}"
            )
        lines.append(
            f"AVE,{self.condition},{round1(self.macro_precision)},"
            f"{round1(self.macro_recall)},{round1(self.macro_f1)}"
        )
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        width = max(len("intent"), *(len(name) for name in self.intents), len("AVE"))
        header = f"{'intent':<{width}}  {'prec':>7}  {'recall':>7}  {'f1':>7}"
        lines = [f"condition: {self.condition}", header, "-" * len(header)]
        flagged = False

        def cell(value: float, degenerate: bool = False) -> str:
            nonlocal flagged
            flagged = flagged or degenerate
            return f"{round1(value):>6.1f}{'*' if degenerate else ' '}"

        for name in self.intents:
            row = self.rows[name]
            lines.append(
                f"{name:<{width}}  {cell(row.precision, row.precision_degenerate)}  "
                f"{cell(row.recall, row.recall_degenerate)}  {cell(row.f1)}"
            )
        lines.append(
            f"{'AVE':<{width}}  {cell(self.macro_precision)}  "
            f"{cell(self.macro_recall)}  {cell(self.macro_f1)}"
        )
        if flagged:
            lines.append("* degenerate denominator (no predictions or no examples)")
        return "\n".join(lines) + "\n"


def evaluate(model, test_set, condition: str, vocabulary: Optional[IntentVocabulary] = None) -> MetricsReport:
    """Score a classifier on a labeled test set under one condition.

    One-vs-rest counting over predicted-vs-true labels. Report rows are
    the focal intents that occur as a true or predicted label; NONE
    participates in the counting but never gets a row.
    """
    posts: Sequence[Post] = test_set.posts if isinstance(test_set, LabeledDataset) else tuple(test_set)
    if not posts:
        raise MetricsError("cannot evaluate on an empty test set")
    none_label = vocabulary.none_label if vocabulary else NONE_LABEL
    if vocabulary is not None:
        for post in posts:
            if post.label not in vocabulary:
                raise MetricsError(f"post {post.id}: label {post.label!r} not in vocabulary")

    pairs = [(post.label, model.predict(post.text)[0]) for post in posts]
    intents = sorted({label for pair in pairs for label in pair} - {none_label})
    counts = {}
    for intent in intents:
        tp = sum(1 for true, pred in pairs if true == intent and pred == intent)
        fp = sum(1 for true, pred in pairs if true != intent and pred == intent)
        fn = sum(1 for true, pred in pairs if true == intent and pred != intent)
        counts[intent] = ConfusionCounts(tp, fp, fn)
    return MetricsReport.from_counts(condition, counts)


def select_low_f1(report, threshold_percent: float = 80.0) -> list[str]:
    """Intents whose F1 falls strictly below the threshold, sorted by name.

    Takes a MetricsReport or a bare {intent: f1_percent} mapping; the
    latter lets a pinned F1 column drive selection even when it is not
    perfectly consistent with its own precision/recall columns.
    """
    if isinstance(report, MetricsReport):
        scores = {name: row.f1 for name, row in report.rows.items()}
    else:
        scores = dict(report)
    return sorted(name for name, value in scores.items() if value < threshold_percent)


@dataclass
class ConditionComparison:
    """The four condition reports side by side, Table-1 style."""

    reports: dict[str, MetricsReport]

    def __post_init__(self) -> None:
        if sorted(self.reports) != sorted(CONDITIONS):
            raise MetricsError(f"need exactly the conditions {CONDITIONS}, got {sorted(self.reports)}")
        intent_sets = {condition: set(report.rows) for condition, report in self.reports.items()}
        first = intent_sets[CONDITIONS[0]]
        for condition, intents in intent_sets.items():
            if intents != first:
                raise MetricsError(
                    f"condition {condition} covers {sorted(intents)} but {CONDITIONS[0]} covers {sorted(first)}"
                )

    @property
    def intents(self) -> tuple[str, ...]:
        return self.reports[CONDITIONS[0]].intents

    def macro_row(self) -> dict[str, tuple[float, float, float]]:
        return {
            condition: (report.macro_precision, report.macro_recall, report.macro_f1)
            for condition, report in self.reports.items()
        }

    def to_csv(self) -> str:
        lines = ["intent,condition,precision,recall,f1"]
        for name in self.intents:
            for condition in CONDITIONS:
                row = self.reports[condition].rows[name]
                lines.append(
                    f"{name},{condition},{round1(row.precision)},{round1(row.recall)},{round1(row.f1)}"
                )
        for condition in CONDITIONS:
            report = self.reports[condition]
            lines.append(
                f"AVE,{condition},{round1(report.macro_precision)},"
                f"{round1(report.macro_recall)},{round1(report.macro_f1)}"
            )
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        """Aligned table grouped metric-major: Precision, then Recall,
        then F1, each under the four condition columns."""
        width = max(len("intent"), *(len(name) for name in self.intents), len("AVE"))
        groups = [("precision", "Precision"), ("recall", "Recall"), ("f1", "F1")]
        band = "  ".join(f"{title:^27}" for _, title in groups)
        subhead = "  ".join("  ".join(f"{c:>5}" for c in CONDITIONS) for _ in groups)
        lines = [f"{'':<{width}}  {band}", f"{'intent':<{width}}  {subhead}"]
        lines.append("-" * len(lines[1]))

        def row_cells(values: dict[str, IntentMetrics] | dict[str, tuple[float, float, float]], is_macro: bool) -> str:
            parts = []
            for index, (attr, _) in enumerate(groups):
                for condition in CONDITIONS:
                    if is_macro:
                        value = values[condition][index]
                    else:
                        value = getattr(values[condition], attr)
                    parts.append(f"{round1(value):>5.1f}")
            return "  ".join(parts)

        for name in self.intents:
            per_condition = {c: self.reports[c].rows[name] for c in CONDITIONS}
            lines.append(f"{name:<{width}}  {row_cells(per_condition, False)}")
        lines.append(f"{'AVE':<{width}}  {row_cells(self.macro_row(), True)}")
        return "\n".join(lines) + "\n"


def compare_conditions(reports: Iterable[MetricsReport]) -> ConditionComparison:
    by_condition: dict[str, MetricsReport] = {}
    for report in reports:
        if report.condition in by_condition:
            raise MetricsError(f"duplicate condition {report.condition}")
        by_condition[report.condition] = report
    return ConditionComparison(by_condition)


SUMMARY_COLUMNS = ("orig_posts", "screened", "raw_synth", "good_synth", "orig_real", "good_real")

RATIO_NAMES = ("screened_over_orig", "raw_over_screened", "good_synth_over_raw", "good_real_over_orig_real")


@dataclass(frozen=True)
class SummaryRow:
    """Stage counts for one intent across both augmentation phases."""

    orig_posts: int
    screened: int
    raw_synth: int
    good_synth: int
    orig_real: int
    good_real: int

    def __post_init__(self) -> None:
        for name in SUMMARY_COLUMNS:
            if getattr(self, name) < 0:
                raise MetricsError(f"{name} must be non-negative")
        if self.screened > self.orig_posts:
            raise MetricsError(f"screened {self.screened} exceeds orig_posts {self.orig_posts}")
        if self.good_synth > self.raw_synth:
            raise MetricsError(f"good_synth {self.good_synth} exceeds raw_synth {self.raw_synth}")
        if self.good_real > self.orig_real:
            raise MetricsError(f"good_real {self.good_real} exceeds orig_real {self.orig_real}")

    def ratios(self) -> dict[str, tuple[float, bool]]:
        return {
            "screened_over_orig": ratio_percent(self.screened, self.orig_posts),
            "raw_over_screened": ratio_percent(self.raw_synth, self.screened),
            "good_synth_over_raw": ratio_percent(self.good_synth, self.raw_synth),
            "good_real_over_orig_real": ratio_percent(self.good_real, self.orig_real),
        }


@dataclass
class AugmentationSummary:
    """Per-intent stage counts plus the AVERAGE row and its ratios."""

    rows: dict[str, SummaryRow]

    def __post_init__(self) -> None:
        if not self.rows:
            raise MetricsError("an augmentation summary needs at least one intent")

    @property
    def intents(self) -> tuple[str, ...]:
        return tuple(sorted(self.rows))

    def average_counts(self) -> dict[str, float]:
        return {
            name: _mean([getattr(row, name) for row in self.rows.values()])
            for name in SUMMARY_COLUMNS
        }

    def average_ratios(self) -> dict[str, tuple[float, bool]]:
        means = self.average_counts()
        return {
            "screened_over_orig": ratio_percent(means["screened"], means["orig_posts"]),
            "raw_over_screened": ratio_percent(means["raw_synth"], means["screened"]),
            "good_synth_over_raw": ratio_percent(means["good_synth"], means["raw_synth"]),
            "good_real_over_orig_real": ratio_percent(means["good_real"], means["orig_real"]),
        }

    def to_csv(self) -> str:
        lines = ["intent," + ",".join(SUMMARY_COLUMNS)]
        for name in self.intents:
            row = self.rows[name]
            lines.append(name + "," + ",".join(str(getattr(row, col)) for col in SUMMARY_COLUMNS))
        means = self.average_counts()
        lines.append("AVERAGE," + ",".join(str(round1(means[col])) for col in SUMMARY_COLUMNS))
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        width = max(len("intent"), *(len(name) for name in self.intents), len("AVERAGE"))
        header = f"{'intent':<{width}}  " + "  ".join(f"{col:>10}" for col in SUMMARY_COLUMNS)
        lines = [header, "-" * len(header)]
        for name in self.intents:
            row = self.rows[name]
            lines.append(
                f"{name:<{width}}  " + "  ".join(f"{getattr(row, col):>10}" for col in SUMMARY_COLUMNS)
            )
        means = self.average_counts()
        lines.append(
            f"{'AVERAGE':<{width}}  " + "  ".join(f"{round1(means[col]):>10.1f}" for col in SUMMARY_COLUMNS)
        )
        ratios = self.average_ratios()
        rendered = []
        for name in RATIO_NAMES:
            value, degenerate = ratios[name]
            rendered.append(f"{name}={round1(value)}%{'*' if degenerate else ''}")
        lines.append("ratios: " + "  ".join(rendered))
        return "\n".join(lines) + "\n"


def augmentation_summary(stage_counts) -> AugmentationSummary:
    """Build the per-intent summary from manifest stage counts.

    Accepts either a mapping {intent: {column: count}} or any object
    exposing one as .stage_counts (a run manifest does).
    """
    if hasattr(stage_counts, "stage_counts"):
        stage_counts = stage_counts.stage_counts
    rows = {}
    for intent, counts in stage_counts.items():
        unknown = sorted(set(counts) - set(SUMMARY_COLUMNS))
        if unknown:
            raise MetricsError(f"intent {intent}: unknown summary column {unknown[0]!r}")
        rows[intent] = SummaryRow(**{name: counts.get(name, 0) for name in SUMMARY_COLUMNS})
    return AugmentationSummary(rows)
