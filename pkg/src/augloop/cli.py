"""Command line front door for the augmentation workbench.

Each subcommand wraps a single stage so a run can be driven by hand and
inspected between steps; `run` executes the whole loop unattended,
`annotate` is the interactive fallback when no browser UI is around, and
`serve` exposes live review sessions plus finished runs over HTTP.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .classifier import ClassifierModel, train
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
from .errors import AugloopError, ConfigError, NotFoundError, StateError
from .fixtures import FixtureHooks, KeywordScreener
from .ingest import ingest_dump
from .metrics import CONDITIONS, evaluate, select_low_f1
from .pipeline import (
    DUMP_FORMATS,
    REPORT_FORMATS,
    PipelineConfig,
    _csv_table_payload,
    _drive_qa,
    _drive_screening,
    _service_kappa,
    assemble_condition,
    generate_for_intent,
    list_runs,
    report,
    run_pipeline,
)
from .qa import QAService
from .screening import ScreeningService
from .server import WorkbenchState, read_posts, serve
from .synthgen import make_generator_client

# CLI spelling for dump formats; "jsonl" matches the file extension people type
_DUMP_CHOICES = {"jsonl": "json_lines", "json_lines": "json_lines", "html": "html"}


# -- small shared helpers --------------------------------------------------------------


def _config_from_args(args) -> PipelineConfig:
    return PipelineConfig.from_json(args.config)


def _optional_config(args) -> PipelineConfig | None:
    return PipelineConfig.from_json(args.config) if args.config else None


def _vocabulary(config: PipelineConfig | None, intents_path=None) -> IntentVocabulary:
    path = intents_path or (config.intents_path if config else None)
    return IntentVocabulary.load(path) if path else IntentVocabulary.default()


def _split_dataset(config: PipelineConfig, dataset_path=None) -> LabeledDataset:
    dataset = load_dataset(dataset_path or config.dataset_path)
    if dataset.split is not None:
        return dataset
    return stratified_split(dataset, config.test_fraction, config.split_seed)


def _test_set(split_ds: LabeledDataset) -> LabeledDataset:
    posts = split_ds.subset("test")
    return LabeledDataset(posts=posts, split={post.id: "test" for post in posts})


def _write_posts(path, posts) -> None:
    atomic_write_text(path, "".join(
        json.dumps(post.to_record(), sort_keys=True) + "\n" for post in posts))


def _parse_names(raw: str) -> list[str]:
    names = [part.strip() for part in raw.split(",") if part.strip()]
    if not names:
        raise ConfigError(f"no names found in {raw!r}")
    return names


def _qa_pending(posts) -> list[Post]:
    return [post if post.stage == "qa_pending" else post.with_stage("qa_pending")
            for post in posts]


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _render_metrics(metrics_report, fmt: str) -> str:
    if fmt == "text":
        return metrics_report.render_text()
    if fmt == "csv":
        return metrics_report.to_csv()
    return json.dumps(_csv_table_payload(metrics_report.to_csv()), sort_keys=True, indent=2)


def _baseline_selection(config: PipelineConfig, vocabulary: IntentVocabulary,
                        split_ds: LabeledDataset) -> list[str]:
    model = train(LabeledDataset(posts=split_ds.subset("train")), config.train)
    baseline = evaluate(model, _test_set(split_ds), "Orig", vocabulary)
    return select_low_f1(baseline, config.f1_threshold_percent)


# -- per-stage commands ----------------------------------------------------------------


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    split_ds = _split_dataset(config, args.dataset)
    train_posts = split_ds.subset("train")
    model = train(LabeledDataset(posts=train_posts), config.train)
    model.save(args.out)
    print(f"trained on {len(train_posts)} posts, wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    config = _config_from_args(args)
    vocabulary = _vocabulary(config)
    split_ds = _split_dataset(config, args.dataset)
    model = ClassifierModel.load(args.model)
    metrics_report = evaluate(model, _test_set(split_ds), args.condition, vocabulary)
    _emit(_render_metrics(metrics_report, args.format))
    return 0


def _cmd_select(args) -> int:
    config = _config_from_args(args)
    vocabulary = _vocabulary(config)
    split_ds = _split_dataset(config, args.dataset)
    if args.model:
        model = ClassifierModel.load(args.model)
    else:
        model = train(LabeledDataset(posts=split_ds.subset("train")), config.train)
    baseline = evaluate(model, _test_set(split_ds), "Orig", vocabulary)
    selected = select_low_f1(baseline, config.f1_threshold_percent)
    for name in selected:
        print(name)
    if not selected:
        print("no intents below the threshold", file=sys.stderr)
    return 0


def _cmd_screen(args) -> int:
    config = _config_from_args(args)
    vocabulary = _vocabulary(config)
    split_ds = None
    if args.intents:
        intents = _parse_names(args.intents)
    else:
        split_ds = _split_dataset(config)
        intents = _baseline_selection(config, vocabulary, split_ds)
    if not intents:
        print("nothing to screen: no intents below the threshold")
        return 0
    if args.pool:
        pool = read_posts(args.pool)
    else:
        split_ds = split_ds if split_ds is not None else _split_dataset(config)
        wanted = set(intents)
        pool = [post for post in split_ds.subset("train") if post.label in wanted]
    service = ScreeningService(pool, intents, log_path=args.log)
    _drive_screening(service, intents, KeywordScreener(vocabulary), config.judge)
    accepted = service.accepted_posts()
    _write_posts(args.out, accepted)
    print(f"accepted {len(accepted)} of {len(pool)} posts, wrote {args.out}")
    return 0


def _cmd_gen(args) -> int:
    config = _config_from_args(args)
    vocabulary = _vocabulary(config)
    by_intent: dict[str, list[Post]] = {}
    for post in read_posts(args.seeds):
        if post.label is None:
            raise StateError(f"seed post {post.id} has no label")
        by_intent.setdefault(post.label, []).append(post)
    intents = _parse_names(args.intent) if args.intent else sorted(by_intent)
    client = make_generator_client(dict(config.generator), vocabulary)
    clock = LogicalClock()
    log_rows: list[dict] = []
    produced: list[Post] = []
    for intent in intents:
        kept = generate_for_intent(intent, by_intent.get(intent, []), vocabulary,
                                   config, client, clock, log_rows)
        produced.extend(kept)
        print(f"{intent}: kept {len(kept)} candidates")
    _write_posts(args.out, produced)
    if args.log:
        atomic_write_text(args.log, "".join(
            json.dumps(row, sort_keys=True) + "\n" for row in log_rows))
    print(f"wrote {len(produced)} posts to {args.out}")
    return 0


def _cmd_qa(args) -> int:
    config = _config_from_args(args)
    vocabulary = _vocabulary(config)
    pool = _qa_pending(read_posts(args.pool))
    if not pool:
        print("nothing to review")
        return 0
    sources = {post.source for post in pool}
    if len(sources) > 1:
        raise StateError("pool mixes synthetic and real posts; review them separately")
    kind = args.kind or next(iter(sources))
    hooks = FixtureHooks(vocabulary, config.annotators)
    if kind == "real":
        if args.selected:
            selected = _parse_names(args.selected)
        else:
            selected = sorted({post.label for post in pool if post.label})
            if not selected:
                raise ConfigError("real-post review needs target intents; pass --selected")
        first_bot, second_bot = hooks.real_bots(selected)
    else:
        first_bot, second_bot = hooks.synth_bots()
    service = QAService(pool, config.annotators, vocabulary, log_path=args.log)
    _drive_qa(service, first_bot, second_bot, hooks.judge(), config.judge)
    good = service.good_posts()
    _write_posts(args.out, good)
    kappa = _service_kappa(service)
    kappa_text = "n/a" if kappa is None else f"{kappa:.3f}"
    print(f"kind={kind} good={len(good)} of {len(pool)} kappa={kappa_text}, wrote {args.out}")
    return 0


def _cmd_ingest(args) -> int:
    config = _optional_config(args)
    dump = args.dump or (config.dump_path if config else None)
    if not dump:
        raise ConfigError("a dump path is required (pass --dump or set dump_path in the config)")
    if args.format:
        fmt = _DUMP_CHOICES[args.format]
    else:
        fmt = config.dump_format if config else "json_lines"
    cleaned, clean_report = ingest_dump(dump, fmt)
    if args.out:
        _write_posts(args.out, cleaned)
        print(f"wrote {len(cleaned)} cleaned posts to {args.out}", file=sys.stderr)
    _emit(json.dumps(clean_report.to_dict(), sort_keys=True, indent=2))
    return 0


# -- interactive annotation -------------------------------------------------------------


def _ask_yes_no(ask, say, question: str) -> bool:
    while True:
        answer = ask(f"{question} [y/n] ").strip().lower()
        if answer in ("y", "yes"):
            return True
        if answer in ("n", "no"):
            return False
        say("please answer y or n")


def _ask_verdict(post: Post, vocabulary: IntentVocabulary, ask, say) -> dict:
    if post.source == "synthetic":
        return {
            "fits_intent": _ask_yes_no(ask, say, "fits the target intent?"),
            "fluent": _ask_yes_no(ask, say, "reads fluently?"),
            "non_repetitive": _ask_yes_no(ask, say, "adds something new (not repetitive)?"),
        }
    labels = list(vocabulary.focal_names) + [vocabulary.none_label]
    say("labels: " + ", ".join(labels))
    while True:
        answer = ask("label? ").strip()
        if answer in labels:
            return {"label": answer}
        say(f"unknown label {answer!r}; pick one of the listed names")


def annotate_loop(service: QAService, annotator_id: str,
                  vocabulary: IntentVocabulary, ask=None, say=None) -> int:
    """Walk the annotator's queue until it drains; returns verdicts recorded.

    Mirrors the HTTP API's write policy: a second look at a post during its
    open discussion round is a revision, and a fresh disagreement opens that
    round immediately so the peer sees it.
    """
    ask = ask if ask is not None else input
    say = say if say is not None else print
    recorded = 0
    while True:
        queue = service.annotation_queue(annotator_id)
        if not queue:
            break
        for post in queue:
            say("")
            say(f"post {post.id} ({post.source})")
            if post.label:
                say(f"target intent: {post.label} - {vocabulary.description(post.label)}")
            say(f"text: {post.text}")
            for record in service.visible_annotations(post.id, annotator_id):
                if record.annotator_id != annotator_id:
                    say(f"peer {record.annotator_id} says: "
                        f"{json.dumps(record.verdict.to_dict(), sort_keys=True)}")
            verdict = _ask_verdict(post, vocabulary, ask, say)
            already = any(record.annotator_id == annotator_id
                          for record in service.annotations(post.id))
            discussion = service.discussion(post.id)
            revising = (already and discussion is not None and not discussion.resolved
                        and annotator_id not in discussion.revised_by)
            if revising:
                service.revise_annotation(post.id, annotator_id, verdict)
            else:
                service.submit_annotation(post.id, annotator_id, verdict)
            if service.agreement_status(post.id) == "disagreed" and service.discussion(post.id) is None:
                service.open_discussion(post.id)
            recorded += 1
    return recorded


def _cmd_annotate(args) -> int:
    config = _config_from_args(args)
    vocabulary = _vocabulary(config)
    posts = _qa_pending(read_posts(args.pool))
    log = Path(args.log)
    if log.exists():
        service = QAService.replay(posts, config.annotators, log, vocabulary)
        service.attach_log(log)
    else:
        service = QAService(posts, config.annotators, vocabulary, log_path=log)
    try:
        recorded = annotate_loop(service, args.annotator, vocabulary)
    except (EOFError, KeyboardInterrupt):
        print(f"\nstopped; progress is saved, resume with the same --log {args.log}")
        return 0
    print(f"\nrecorded {recorded} verdicts; queue for {args.annotator} is empty")
    return 0


# -- assembly, full runs, reporting, serving --------------------------------------------


def _cmd_assemble(args) -> int:
    config = _optional_config(args)
    dataset_path = args.orig or (config.dataset_path if config else None)
    if not dataset_path:
        raise ConfigError("an original dataset is required (pass --orig or --config)")
    original = load_dataset(dataset_path)
    if original.split is None:
        if config is None:
            raise StateError("the original dataset has no split; pass --config so one can be derived")
        original = stratified_split(original, config.test_fraction, config.split_seed)
    good_synth = read_posts(args.good_synth) if args.good_synth else []
    good_real = read_posts(args.good_real) if args.good_real else []
    condition_ds = assemble_condition(original, good_synth, good_real, args.condition)
    save_dataset(condition_ds, args.out)
    print(f"{args.condition}: {len(condition_ds)} posts "
          f"({len(condition_ds.train_posts)} train), wrote {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    manifest = run_pipeline(config)
    print(f"run {manifest.run_id} complete")
    if manifest.selected_intents:
        print("augmented intents: " + ", ".join(manifest.selected_intents))
    else:
        print("no intents fell below the threshold; nothing augmented")
    print("")
    _emit(report(config.workspace, manifest.run_id, "text"))
    return 0


def _cmd_report(args) -> int:
    config = _optional_config(args)
    workspace = args.workspace or (config.workspace if config else None)
    if not workspace:
        raise ConfigError("a workspace is required (pass --workspace or --config)")
    if args.list:
        for run_id in list_runs(workspace):
            print(run_id)
        return 0
    run_id = args.run
    if not run_id:
        runs = list_runs(workspace)
        if not runs:
            raise NotFoundError(f"no runs under {workspace}")
        if len(runs) > 1:
            raise ConfigError("several runs exist; pick one with --run (see --list)")
        run_id = runs[0]
    _emit(report(workspace, run_id, args.format))
    return 0


def build_state(args) -> WorkbenchState:
    """Assemble the server state a `serve` invocation asks for."""
    config = _optional_config(args)
    workspace = args.workspace or (config.workspace if config else None)
    if not workspace:
        raise ConfigError("a workspace is required (pass --workspace or --config)")
    vocabulary = _vocabulary(config, args.intents)
    if args.annotators:
        annotators = tuple(_parse_names(args.annotators))
    else:
        annotators = tuple(config.annotators) if config else ("ann-a", "ann-b")

    screening = None
    if args.screen_pool:
        pool = read_posts(args.screen_pool)
        if args.screen_intents:
            intents = _parse_names(args.screen_intents)
        else:
            intents = sorted({post.label for post in pool if post.label})
        screening = ScreeningService(pool, intents, log_path=args.screen_log)

    qa = None
    if args.qa_pool:
        posts = _qa_pending(read_posts(args.qa_pool))
        log = Path(args.qa_log) if args.qa_log else None
        if log is not None and log.exists():
            qa = QAService.replay(posts, annotators, log, vocabulary)
            qa.attach_log(log)
        else:
            qa = QAService(posts, annotators, vocabulary, log_path=log)

    return WorkbenchState(workspace, screening=screening, qa=qa,
                          token=args.token, static_dir=args.static)


def _cmd_serve(args) -> int:
    state = build_state(args)
    sessions = [name for name, live in
                (("screening", state.screening), ("annotation", state.qa)) if live]
    suffix = f" with live {' and '.join(sessions)}" if sessions else ""
    print(f"serving workspace {state.workspace} on http://{args.host}:{args.port}{suffix}")
    serve(state, args.host, args.port)
    return 0


# -- argument parsing --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augloop",
        description="two-phase data augmentation workbench for intent classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name: str, func, help_text: str, config_required: bool = True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=config_required, metavar="PATH",
                       help="pipeline config JSON file")
        p.set_defaults(func=func)
        return p

    p = command("train", _cmd_train, "train the baseline classifier on the train split")
    p.add_argument("--dataset", metavar="PATH", help="labeled corpus JSONL (default: config dataset_path)")
    p.add_argument("--out", default="model.json", metavar="PATH", help="where to save the model")

    p = command("eval", _cmd_eval, "evaluate a saved model on the test split")
    p.add_argument("--model", required=True, metavar="PATH", help="saved model JSON")
    p.add_argument("--dataset", metavar="PATH", help="labeled corpus JSONL (default: config dataset_path)")
    p.add_argument("--condition", default="Orig", help="condition name for the report header")
    p.add_argument("--format", default="text", choices=REPORT_FORMATS, help="output format")

    p = command("select", _cmd_select, "list intents whose baseline F1 falls below the threshold")
    p.add_argument("--model", metavar="PATH", help="saved model JSON (default: train in memory)")
    p.add_argument("--dataset", metavar="PATH", help="labeled corpus JSONL (default: config dataset_path)")

    p = command("screen", _cmd_screen, "run expert screening over seed candidates for the selected intents")
    p.add_argument("--pool", metavar="PATH", help="posts JSONL to screen (default: train posts of the selected intents)")
    p.add_argument("--intents", metavar="NAMES", help="comma-separated intents (default: recompute the baseline selection)")
    p.add_argument("--out", default="accepted.jsonl", metavar="PATH", help="accepted seeds output")
    p.add_argument("--log", metavar="PATH", help="screening decision log JSONL")

    p = command("gen", _cmd_gen, "generate synthetic candidates from accepted seeds")
    p.add_argument("--seeds", required=True, metavar="PATH", help="accepted seed posts JSONL")
    p.add_argument("--intent", metavar="NAMES", help="comma-separated intents (default: every label in the seeds)")
    p.add_argument("--out", default="raw-synthetic.jsonl", metavar="PATH", help="kept candidates output")
    p.add_argument("--log", metavar="PATH", help="per-batch generation log JSONL")

    p = command("qa", _cmd_qa, "run unattended dual review over a candidate pool")
    p.add_argument("--pool", required=True, metavar="PATH", help="posts JSONL to review")
    p.add_argument("--kind", choices=("synthetic", "real"), help="review style (default: from post source)")
    p.add_argument("--selected", metavar="NAMES", help="target intents for real-post labeling")
    p.add_argument("--out", default="good.jsonl", metavar="PATH", help="accepted posts output")
    p.add_argument("--log", metavar="PATH", help="annotation event log JSONL")

    p = command("ingest", _cmd_ingest, "parse, clean, and dedup a forum dump", config_required=False)
    p.add_argument("--dump", metavar="PATH", help="dump file (default: config dump_path)")
    p.add_argument("--format", choices=sorted(_DUMP_CHOICES), help="dump format (default: config dump_format)")
    p.add_argument("--out", metavar="PATH", help="write cleaned posts JSONL here")

    p = command("annotate", _cmd_annotate, "review a candidate pool interactively as one annotator")
    p.add_argument("--annotator", required=True, metavar="ID", help="annotator id from the config roster")
    p.add_argument("--pool", required=True, metavar="PATH", help="posts JSONL under review")
    p.add_argument("--log", required=True, metavar="PATH",
                   help="shared annotation log; an existing log resumes the session")

    p = command("assemble", _cmd_assemble, "assemble a training condition dataset", config_required=False)
    p.add_argument("--orig", metavar="PATH", help="original labeled corpus (default: config dataset_path)")
    p.add_argument("--good-synth", metavar="PATH", help="reviewed synthetic posts JSONL")
    p.add_argument("--good-real", metavar="PATH", help="reviewed real posts JSONL")
    p.add_argument("--condition", default="All", choices=CONDITIONS, help="condition to assemble")
    p.add_argument("--out", default="condition.jsonl", metavar="PATH", help="assembled dataset output")

    command("run", _cmd_run, "execute the full pipeline and print the run report")

    p = command("report", _cmd_report, "render the report of a finished run", config_required=False)
    p.add_argument("--workspace", metavar="PATH", help="workspace root (default: config workspace)")
    p.add_argument("--run", metavar="ID", help="run id (default: the only run in the workspace)")
    p.add_argument("--format", default="text", choices=REPORT_FORMATS, help="output format")
    p.add_argument("--list", action="store_true", help="list run ids instead of rendering")

    p = command("serve", _cmd_serve, "serve the review queues and finished runs over HTTP", config_required=False)
    p.add_argument("--workspace", metavar="PATH", help="workspace root (default: config workspace)")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", default=8000, type=int, help="bind port")
    p.add_argument("--token", metavar="TOKEN", help="require this bearer token on API calls")
    p.add_argument("--static", metavar="DIR", help="serve this directory at / (the annotation UI build)")
    p.add_argument("--intents", metavar="PATH", help="intent vocabulary JSON (default: config intents_path)")
    p.add_argument("--annotators", metavar="IDS", help="comma-separated roster (default: config annotators)")
    p.add_argument("--screen-pool", metavar="PATH", help="posts JSONL to open a screening session over")
    p.add_argument("--screen-intents", metavar="NAMES", help="intents for the screening session")
    p.add_argument("--screen-log", metavar="PATH", help="screening decision log JSONL")
    p.add_argument("--qa-pool", metavar="PATH", help="posts JSONL to open an annotation session over")
    p.add_argument("--qa-log", metavar="PATH", help="annotation event log; an existing log resumes the session")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("", file=sys.stderr)
        return 130
    except (AugloopError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
