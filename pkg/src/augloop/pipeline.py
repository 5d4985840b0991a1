"""Run orchestration: baseline training, low-F1 intent selection, both
augmentation phases, condition assembly, retraining, and reporting.

A run is an immutable directory under ``<workspace>/runs/<run_id>`` holding
the manifest, the four condition datasets, rendered reports, and the
screening/annotation logs.  The run id is derived from the behavioral config
plus content hashes of the input files, and all timestamps come from a
logical clock, so running the same config over the same inputs twice
produces byte-identical artifacts.

Unattended runs need stand-ins for the humans in the loop.  The ``hooks``
argument of :func:`run_pipeline` supplies them (screener, two annotators,
judge); by default the deterministic rule-based stand-ins from
:mod:`augloop.fixtures` are used.  Live annotation instead goes through the
CLI or the HTTP service, one stage at a time.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .classifier import TrainConfig, train
from .corpus import (
    IntentVocabulary,
    LabeledDataset,
    LogicalClock,
    Post,
    atomic_write_text,
    load_dataset,
    save_dataset,
    stratified_split,
)
from .errors import ConfigError, NotFoundError, PipelineError, StateError
from .fixtures import FixtureHooks, match_selected_intent
from .ingest import ingest_dump
from .metrics import (
    CONDITIONS,
    SUMMARY_COLUMNS,
    augmentation_summary,
    compare_conditions,
    evaluate,
    select_low_f1,
)
from .qa import QAService
from .screening import ScreeningService
from .synthgen import (
    GenParams,
    StopThresholds,
    candidate_posts,
    craft_prompt,
    drift_score,
    generate,
    make_generator_client,
    redundancy_ratio,
    should_stop,
)

DUMP_FORMATS = ("json_lines", "html")
REPORT_FORMATS = ("text", "csv", "json")

STAGES = (
    "load", "train", "evaluate", "select", "screen", "generate",
    "qa_synthetic", "ingest", "qa_real", "assemble", "retrain", "compare",
)


# -- configuration ---------------------------------------------------------------------


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs: input paths, thresholds, seeds, and the roster.

    Validation errors always name the offending field.
    """

    dataset_path: str
    workspace: str
    dump_path: Optional[str] = None
    dump_format: str = "json_lines"
    intents_path: Optional[str] = None
    f1_threshold_percent: float = 80.0
    test_fraction: float = 0.2
    split_seed: int = 42
    train: TrainConfig = field(default_factory=TrainConfig)
    generator: Mapping[str, object] = field(default_factory=lambda: {"kind": "stub", "seed": 42})
    gen_params: GenParams = field(default_factory=GenParams)
    templates: tuple[str, ...] = ("seed_question_v1", "paraphrase_v1")
    thresholds: StopThresholds = field(default_factory=StopThresholds)
    max_batches_per_intent: int = 25
    annotators: tuple[str, ...] = ("ann-a", "ann-b")
    judge: str = "judge-1"

    def __post_init__(self) -> None:
        _require(isinstance(self.dataset_path, str) and bool(self.dataset_path),
                 "dataset_path must be a non-empty string")
        _require(isinstance(self.workspace, str) and bool(self.workspace),
                 "workspace must be a non-empty string")
        _require(self.dump_path is None or (isinstance(self.dump_path, str) and bool(self.dump_path)),
                 "dump_path must be null or a non-empty string")
        _require(self.dump_format in DUMP_FORMATS,
                 f"dump_format must be one of {DUMP_FORMATS}, got {self.dump_format!r}")
        _require(self.intents_path is None or (isinstance(self.intents_path, str) and bool(self.intents_path)),
                 "intents_path must be null or a non-empty string")
        _require(0.0 <= self.f1_threshold_percent <= 100.0,
                 f"f1_threshold_percent must be in [0, 100], got {self.f1_threshold_percent}")
        _require(0.0 < self.test_fraction < 1.0,
                 f"test_fraction must be in (0, 1), got {self.test_fraction}")
        _require(isinstance(self.split_seed, int),
                 f"split_seed must be an integer, got {self.split_seed!r}")

        if isinstance(self.train, Mapping):
            object.__setattr__(self, "train", _coerce_section("train", TrainConfig.from_dict, self.train))
        _require(isinstance(self.train, TrainConfig), "train must be a classifier config")

        object.__setattr__(self, "generator", dict(self.generator))
        _require(self.generator.get("kind", "stub") in ("stub", "http"),
                 f"generator.kind must be stub or http, got {self.generator.get('kind')!r}")

        if isinstance(self.gen_params, Mapping):
            object.__setattr__(self, "gen_params",
                               _coerce_section("gen_params", lambda d: GenParams(**d), self.gen_params))
        _require(isinstance(self.gen_params, GenParams), "gen_params must be generation parameters")
        _require(self.gen_params.n_responses >= 1, "gen_params.n_responses must be at least 1")

        object.__setattr__(self, "templates", tuple(self.templates))
        _require(len(self.templates) >= 1 and all(isinstance(t, str) and t for t in self.templates),
                 "templates must be a non-empty list of template ids")

        if isinstance(self.thresholds, Mapping):
            object.__setattr__(self, "thresholds",
                               _coerce_section("thresholds", lambda d: StopThresholds(**d), self.thresholds))
        _require(isinstance(self.thresholds, StopThresholds), "thresholds must be stop thresholds")
        _require(0.0 <= self.thresholds.drift_min <= 1.0,
                 f"thresholds.drift_min must be in [0, 1], got {self.thresholds.drift_min}")
        _require(0.0 <= self.thresholds.redundancy_max <= 1.0,
                 f"thresholds.redundancy_max must be in [0, 1], got {self.thresholds.redundancy_max}")
        _require(self.thresholds.quota >= 1,
                 f"thresholds.quota must be at least 1, got {self.thresholds.quota}")

        _require(isinstance(self.max_batches_per_intent, int) and self.max_batches_per_intent >= 1,
                 f"max_batches_per_intent must be a positive integer, got {self.max_batches_per_intent!r}")

        object.__setattr__(self, "annotators", tuple(self.annotators))
        _require(len(self.annotators) >= 2, "annotators must list at least two ids")
        _require(len(set(self.annotators)) == len(self.annotators), "annotators must not repeat")
        _require(all(isinstance(a, str) and a for a in self.annotators),
                 "annotators must be non-empty strings")
        _require(isinstance(self.judge, str) and bool(self.judge), "judge must be a non-empty string")
        _require(self.judge not in self.annotators, "judge must not double as an annotator")

    def to_dict(self) -> dict:
        return {
            "dataset_path": self.dataset_path,
            "workspace": self.workspace,
            "dump_path": self.dump_path,
            "dump_format": self.dump_format,
            "intents_path": self.intents_path,
            **self.manifest_config(),
        }

    def manifest_config(self) -> dict:
        """The behavioral snapshot stored in manifests: no local paths, so
        the same experiment hashes identically on any machine."""
        return {
            "f1_threshold_percent": self.f1_threshold_percent,
            "test_fraction": self.test_fraction,
            "split_seed": self.split_seed,
            "train": self.train.to_dict(),
            "generator": dict(self.generator),
            "gen_params": {
                "n_responses": self.gen_params.n_responses,
                "temperature": self.gen_params.temperature,
                "max_tokens": self.gen_params.max_tokens,
            },
            "templates": list(self.templates),
            "thresholds": {
                "drift_min": self.thresholds.drift_min,
                "redundancy_max": self.thresholds.redundancy_max,
                "quota": self.thresholds.quota,
            },
            "max_batches_per_intent": self.max_batches_per_intent,
            "annotators": list(self.annotators),
            "judge": self.judge,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        known = {
            "dataset_path", "workspace", "dump_path", "dump_format", "intents_path",
            "f1_threshold_percent", "test_fraction", "split_seed", "train", "generator",
            "gen_params", "templates", "thresholds", "max_batches_per_intent",
            "annotators", "judge",
        }
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field {unknown[0]!r}")
        for required in ("dataset_path", "workspace"):
            if required not in data:
                raise ConfigError(f"missing config field {required!r}")
        return cls(**dict(data))

    @classmethod
    def from_json(cls, path: Path | str) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(data)


def _coerce_section(name: str, builder, data: Mapping):
    try:
        return builder(dict(data))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


# -- run manifest ----------------------------------------------------------------------


@dataclass
class RunManifest:
    """The immutable record of one run: config snapshot, input hashes,
    per-intent stage counts, and where every artifact lives."""

    run_id: str
    created_at: str
    config: dict
    inputs: dict
    focal_intents: list[str]
    selected_intents: list[str] = field(default_factory=list)
    stage_counts: dict[str, dict[str, int]] = field(default_factory=dict)
    clean_report: Optional[dict] = None
    kappa: dict[str, Optional[float]] = field(default_factory=dict)
    condition_datasets: dict[str, str] = field(default_factory=dict)
    reports: dict[str, dict[str, str]] = field(default_factory=dict)
    timestamps: dict[str, str] = field(default_factory=dict)
    failed_stage: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "config": self.config,
            "inputs": self.inputs,
            "focal_intents": list(self.focal_intents),
            "selected_intents": list(self.selected_intents),
            "stage_counts": self.stage_counts,
            "clean_report": self.clean_report,
            "kappa": self.kappa,
            "condition_datasets": self.condition_datasets,
            "reports": self.reports,
            "timestamps": self.timestamps,
            "failed_stage": self.failed_stage,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path: Path | str) -> None:
        atomic_write_text(path, self.to_json())

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunManifest":
        return cls(**{key: data[key] for key in (
            "run_id", "created_at", "config", "inputs", "focal_intents",
            "selected_intents", "stage_counts", "clean_report", "kappa",
            "condition_datasets", "reports", "timestamps", "failed_stage",
        )})

    @classmethod
    def load(cls, path: Path | str) -> "RunManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _file_sha256(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def input_hashes(config: PipelineConfig) -> dict:
    return {
        "dataset_sha256": _file_sha256(config.dataset_path),
        "dump_sha256": _file_sha256(config.dump_path) if config.dump_path else None,
        "intents_sha256": _file_sha256(config.intents_path) if config.intents_path else "bundled",
    }


def derive_run_id(config: PipelineConfig, inputs: Mapping) -> str:
    payload = json.dumps({"config": config.manifest_config(), "inputs": dict(inputs)}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


# -- condition assembly ------------------------------------------------------------------


def assemble_condition(
    original: LabeledDataset,
    good_synth: Sequence[Post],
    good_real: Sequence[Post],
    condition: str,
) -> LabeledDataset:
    """Combine the original split with reviewed augmented posts.

    Augmented posts always join the train side; the test side stays pure
    original.  A post whose text exactly duplicates an earlier one (original
    first, then real, then synthetic, each sorted by id) is dropped.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")
    if original.split is None:
        raise StateError("the original dataset needs a train/test split before assembly")

    real = sorted(good_real, key=lambda post: post.id)
    synth = sorted(good_synth, key=lambda post: post.id)
    chosen: tuple[Post, ...]
    if condition == "Orig":
        chosen = ()
    elif condition == "Real":
        chosen = tuple(real)
    elif condition == "Synth":
        chosen = tuple(synth)
    else:
        chosen = tuple(real) + tuple(synth)

    for post in chosen:
        if post.stage != "qa_good":
            raise StateError(f"augmented post {post.id} has stage {post.stage!r}, not qa_good")
        if post.label is None:
            raise StateError(f"augmented post {post.id} has no label")

    seen_texts = {post.text for post in original.posts}
    kept = []
    for post in chosen:
        if post.text in seen_texts:
            continue
        seen_texts.add(post.text)
        kept.append(post)

    split = dict(original.split)
    for post in kept:
        split[post.id] = "train"
    return LabeledDataset(posts=tuple(original.posts) + tuple(kept), split=split)


# -- stage drivers -----------------------------------------------------------------------


def _drive_screening(service: ScreeningService, intents: Sequence[str], screener, reviewer_id: str) -> None:
    for intent in intents:
        for post in service.screen_queue(intent):
            service.record_screen_decision(post.id, screener(post), reviewer_id)


def _drive_qa(service: QAService, first_bot, second_bot, judge_fn, judge_id: str) -> None:
    """Run dual annotation to completion: two verdicts, at most one
    discussion round with one revision each, then adjudication."""
    for post in service.annotation_queue(first_bot.annotator_id):
        first_verdict = first_bot.verdict(post)
        service.submit_annotation(post.id, first_bot.annotator_id, first_verdict)
        second_verdict = second_bot.verdict(post)
        service.submit_annotation(post.id, second_bot.annotator_id, second_verdict)
        if service.agreement_status(post.id) != "disagreed":
            continue
        service.open_discussion(post.id)
        first_verdict = first_bot.revise(post, first_verdict, second_verdict)
        service.revise_annotation(post.id, first_bot.annotator_id, first_verdict)
        if service.agreement_status(post.id) != "disagreed":
            continue
        second_verdict = second_bot.revise(post, second_verdict, first_verdict)
        service.revise_annotation(post.id, second_bot.annotator_id, second_verdict)
        if service.agreement_status(post.id) != "disagreed":
            continue
        final_verdict, rationale = judge_fn(post, first_verdict, second_verdict)
        service.adjudicate(post.id, judge_id, final_verdict, rationale)


def generate_for_intent(
    intent: str,
    seeds: Sequence[Post],
    vocabulary: IntentVocabulary,
    config: PipelineConfig,
    client,
    clock: LogicalClock,
    log_rows: list,
) -> list[Post]:
    """Prompt-generate candidates for one intent under the stop controller.

    Seeds cycle in id order (distinct texts only), templates alternate per
    batch, and the focus phrase walks the intent's keyword list so batches
    cover the topic instead of one phrasing.  A batch that trips the drift
    or redundancy rule is discarded whole; the quota rule keeps the batch
    that crossed the line and then stops.
    """
    distinct_seeds: list[Post] = []
    seed_texts: list[str] = []
    for seed in seeds:
        if seed.text not in seed_texts:
            distinct_seeds.append(seed)
            seed_texts.append(seed.text)
    if not distinct_seeds:
        return []

    keywords = vocabulary.spec(intent).keywords
    accepted: list[Post] = []
    accepted_texts: list[str] = []
    seen_texts = set(seed_texts)
    for batch_index in range(config.max_batches_per_intent):
        seed = distinct_seeds[batch_index % len(distinct_seeds)]
        template_id = config.templates[batch_index % len(config.templates)]
        focus = keywords[batch_index % len(keywords)] if keywords else None
        prompt = craft_prompt(seed, intent, template_id, config.gen_params,
                              vocabulary=vocabulary, focus=focus)
        batch = generate(prompt, client, batch_index=batch_index)
        if not batch.responses:
            log_rows.append({"intent": intent, "batch_id": batch.batch_id, "decision": "empty",
                             "batch_size": 0, "kept": 0})
            continue
        drift = drift_score(batch.responses, seed_texts)
        redundancy = redundancy_ratio(batch.responses, accepted_texts)
        batch = batch.with_scores(drift, redundancy)
        created_at = clock.now()
        survivors = []
        for post in candidate_posts(prompt, batch, created_at=created_at):
            if post.text in seen_texts:
                continue
            seen_texts.add(post.text)
            survivors.append(post)
        decision = should_stop(batch, config.thresholds, len(accepted) + len(survivors))
        discard = decision in ("stop_drift", "stop_redundancy")
        log_rows.append({
            "intent": intent,
            "batch_id": batch.batch_id,
            "drift_score": drift,
            "redundancy_ratio": redundancy,
            "decision": decision,
            "batch_size": len(batch.responses),
            "kept": 0 if discard else len(survivors),
        })
        if discard:
            break
        accepted.extend(survivors)
        accepted_texts.extend(post.text for post in survivors)
        if decision == "stop_quota":
            break
    return accepted


# -- report rendering ---------------------------------------------------------------------


def _coerce_cell(cell: str):
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def _csv_table_payload(csv_text: str) -> dict:
    """Parse a rendered csv table into typed columns and rows, so the json
    export carries exactly the values the csv export carries."""
    lines = [line for line in csv_text.strip().splitlines() if line]
    return {
        "columns": lines[0].split(","),
        "rows": [[_coerce_cell(cell) for cell in line.split(",")] for line in lines[1:]],
    }


def _write_report_files(run_dir: Path, manifest: RunManifest, name: str,
                        text: str, csv_text: str, payload: dict) -> None:
    base = f"reports/{name}"
    atomic_write_text(run_dir / f"{base}.txt", text)
    atomic_write_text(run_dir / f"{base}.csv", csv_text)
    atomic_write_text(run_dir / f"{base}.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")
    manifest.reports[name] = {"text": f"{base}.txt", "csv": f"{base}.csv", "json": f"{base}.json"}


def _service_kappa(service: QAService) -> Optional[float]:
    if not service.first_pass_pairs():
        return None
    value = service.cohens_kappa()
    return None if math.isnan(value) else value


# -- the pipeline -------------------------------------------------------------------------


def run_pipeline(config: PipelineConfig, hooks=None, clock: Optional[LogicalClock] = None) -> RunManifest:
    """Execute the full two-phase augmentation loop and persist the run.

    Stages run in a fixed order; the manifest is rewritten after each one,
    so an aborted run leaves a partial manifest naming the failed stage.
    """
    clock = clock if clock is not None else LogicalClock()
    vocabulary = (IntentVocabulary.load(config.intents_path)
                  if config.intents_path else IntentVocabulary.default())
    if hooks is None:
        hooks = FixtureHooks(vocabulary, config.annotators)

    inputs = input_hashes(config)
    run_id = derive_run_id(config, inputs)
    run_dir = Path(config.workspace) / "runs" / run_id
    if run_dir.exists():
        raise StateError(f"run {run_id} already exists under {run_dir.parent}; runs are immutable")
    for sub in ("datasets", "reports", "logs"):
        (run_dir / sub).mkdir(parents=True)

    manifest = RunManifest(
        run_id=run_id,
        created_at=clock.now(),
        config=config.manifest_config(),
        inputs=inputs,
        focal_intents=list(vocabulary.focal_names),
    )
    manifest_path = run_dir / "manifest.json"

    def checkpoint(stage_name: str) -> None:
        manifest.timestamps[stage_name] = clock.now()
        manifest.save(manifest_path)

    stage = "load"
    try:
        dataset = load_dataset(config.dataset_path)
        dataset.validate_labels(vocabulary)
        split_ds = (dataset if dataset.split is not None
                    else stratified_split(dataset, config.test_fraction, config.split_seed))
        checkpoint("load")

        stage = "train"
        baseline = train(LabeledDataset(posts=split_ds.subset("train")), config.train)
        checkpoint("train")

        stage = "evaluate"
        test_posts = split_ds.subset("test")
        test_ds = LabeledDataset(posts=test_posts, split={post.id: "test" for post in test_posts})
        baseline_report = evaluate(baseline, test_ds, "Orig", vocabulary)
        checkpoint("evaluate")

        stage = "select"
        selected = select_low_f1(baseline_report, config.f1_threshold_percent)
        manifest.selected_intents = list(selected)
        orig_counts = Counter(post.label for post in split_ds.posts)
        manifest.stage_counts = {
            intent: {column: 0 for column in SUMMARY_COLUMNS} for intent in selected
        }
        for intent in selected:
            manifest.stage_counts[intent]["orig_posts"] = orig_counts[intent]
        checkpoint("select")

        stage = "screen"
        seeds_by_intent: dict[str, list[Post]] = {intent: [] for intent in selected}
        if selected:
            pool = [post for post in split_ds.subset("train") if post.label in seeds_by_intent]
            screening = ScreeningService(pool, selected,
                                         log_path=run_dir / "logs" / "screening.jsonl",
                                         clock=clock.now)
            _drive_screening(screening, selected, hooks.screener(), config.judge)
            for post in screening.accepted_posts():
                seeds_by_intent[post.label].append(post)
            for intent in selected:
                manifest.stage_counts[intent]["screened"] = len(seeds_by_intent[intent])
        checkpoint("screen")

        stage = "generate"
        raw_by_intent: dict[str, list[Post]] = {intent: [] for intent in selected}
        if selected:
            client = make_generator_client(dict(config.generator), vocabulary)
            gen_log: list[dict] = []
            for intent in selected:
                raw_by_intent[intent] = generate_for_intent(
                    intent, seeds_by_intent[intent], vocabulary, config, client, clock, gen_log)
                manifest.stage_counts[intent]["raw_synth"] = len(raw_by_intent[intent])
            atomic_write_text(run_dir / "logs" / "generation.jsonl",
                              "".join(json.dumps(row, sort_keys=True) + "\n" for row in gen_log))
        checkpoint("generate")

        stage = "qa_synthetic"
        good_synth_posts: list[Post] = []
        pending_synth = [post.with_stage("qa_pending")
                         for intent in selected for post in raw_by_intent[intent]]
        if pending_synth:
            synth_qa = QAService(pending_synth, config.annotators, vocabulary,
                                 log_path=run_dir / "logs" / "qa-synthetic.jsonl",
                                 clock=clock.now)
            first_bot, second_bot = hooks.synth_bots()
            _drive_qa(synth_qa, first_bot, second_bot, hooks.judge(), config.judge)
            good_synth_posts = list(synth_qa.good_posts())
            for post in good_synth_posts:
                manifest.stage_counts[post.label]["good_synth"] += 1
            manifest.kappa["synthetic"] = _service_kappa(synth_qa)
        checkpoint("qa_synthetic")

        stage = "ingest"
        routed: dict[str, list[Post]] = {intent: [] for intent in selected}
        if config.dump_path and selected:
            cleaned, clean_report = ingest_dump(config.dump_path, config.dump_format)
            manifest.clean_report = {
                "input_count": clean_report.input_count,
                "kept_count": clean_report.kept_count,
                "rejected": dict(clean_report.rejected),
            }
            for post in sorted(cleaned, key=lambda p: p.id):
                target = match_selected_intent(post.text, selected, vocabulary)
                if target is not None:
                    routed[target].append(post)
            for intent in selected:
                manifest.stage_counts[intent]["orig_real"] = len(routed[intent])
        checkpoint("ingest")

        stage = "qa_real"
        good_real_posts: list[Post] = []
        pending_real = [post.with_stage("qa_pending")
                        for intent in selected for post in routed[intent]]
        if pending_real:
            real_qa = QAService(pending_real, config.annotators, vocabulary,
                                log_path=run_dir / "logs" / "qa-real.jsonl",
                                clock=clock.now)
            first_bot, second_bot = hooks.real_bots(selected)
            _drive_qa(real_qa, first_bot, second_bot, hooks.judge(), config.judge)
            good_real_posts = list(real_qa.good_posts())
            for post in good_real_posts:
                manifest.stage_counts[post.label]["good_real"] += 1
            manifest.kappa["real"] = _service_kappa(real_qa)
        checkpoint("qa_real")

        stage = "assemble"
        assembled: dict[str, LabeledDataset] = {}
        for condition in CONDITIONS:
            condition_ds = assemble_condition(split_ds, good_synth_posts, good_real_posts, condition)
            relative = f"datasets/{condition.lower()}.jsonl"
            save_dataset(condition_ds, run_dir / relative)
            manifest.condition_datasets[condition] = relative
            assembled[condition] = condition_ds
        checkpoint("assemble")

        stage = "retrain"
        condition_reports = {}
        for condition in CONDITIONS:
            model = train(LabeledDataset(posts=assembled[condition].subset("train")), config.train)
            condition_reports[condition] = evaluate(model, test_ds, condition, vocabulary)
        checkpoint("retrain")

        stage = "compare"
        comparison = compare_conditions([condition_reports[c] for c in CONDITIONS])
        for condition in CONDITIONS:
            rep = condition_reports[condition]
            _write_report_files(run_dir, manifest, f"metrics-{condition.lower()}",
                                rep.render_text(), rep.to_csv(),
                                _csv_table_payload(rep.to_csv()))
        comparison_payload = _csv_table_payload(comparison.to_csv())
        _write_report_files(run_dir, manifest, "comparison",
                            comparison.render_text(), comparison.to_csv(), comparison_payload)
        summary_payload = None
        combined_text = comparison.render_text()
        combined_csv = comparison.to_csv()
        if manifest.stage_counts:
            summary = augmentation_summary(manifest)
            summary_payload = _csv_table_payload(summary.to_csv())
            _write_report_files(run_dir, manifest, "summary",
                                summary.render_text(), summary.to_csv(), summary_payload)
            combined_text = combined_text + "\n" + summary.render_text()
            combined_csv = combined_csv + "\n" + summary.to_csv()
        _write_report_files(run_dir, manifest, "combined", combined_text, combined_csv,
                            {"comparison": comparison_payload, "summary": summary_payload})
        checkpoint("compare")
    except PipelineError:
        raise
    except Exception as exc:
        manifest.failed_stage = stage
        manifest.save(manifest_path)
        raise PipelineError(stage, str(exc)) from exc

    manifest.save(manifest_path)
    return manifest


# -- reading a finished run ----------------------------------------------------------------


def run_directory(workspace: Path | str, run_id: str) -> Path:
    return Path(workspace) / "runs" / run_id


def load_manifest(workspace: Path | str, run_id: str) -> RunManifest:
    path = run_directory(workspace, run_id) / "manifest.json"
    if not path.exists():
        raise NotFoundError(f"unknown run {run_id!r}")
    return RunManifest.load(path)


def list_runs(workspace: Path | str) -> list[str]:
    root = Path(workspace) / "runs"
    if not root.is_dir():
        return []
    return sorted(entry.name for entry in root.iterdir()
                  if (entry / "manifest.json").exists())


def report(workspace: Path | str, run_id: str, format: str = "text") -> str:
    """Return the run's rendered comparison and summary tables."""
    if format not in REPORT_FORMATS:
        raise ConfigError(f"format must be one of {REPORT_FORMATS}, got {format!r}")
    manifest = load_manifest(workspace, run_id)
    entry = manifest.reports.get("combined")
    if not entry:
        raise StateError(f"run {run_id!r} has no reports; it may have aborted before comparison")
    return (run_directory(workspace, run_id) / entry[format]).read_text("utf-8")
