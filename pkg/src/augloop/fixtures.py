"""Deterministic desk-scale fixtures: a ~2000-post corpus, a scraped-forum
dump, and rule-based screener/annotator/judge stand-ins.

Ten intents ship in the fixture vocabulary.  Six are well-represented with
distinctive wording; four are sparse and noisy on purpose (few posts, shared
vocabulary with off-topic chatter), so a classifier trained on the originals
scores poorly on them and the augmentation loop has real work to do.
Everything is seeded: same seed, same corpus, same dump, same verdicts.
"""

from __future__ import annotations

import json
import random
import zlib
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .classifier import normalize_and_tokenize
from .corpus import (
    NONE_LABEL,
    IntentVocabulary,
    LabeledDataset,
    LogicalClock,
    Post,
    save_dataset,
)

FIXTURE_STRONG = ("cravings", "health", "quitdate", "smokefree", "stress", "support")
FIXTURE_WEAK = ("costs", "nrt_od", "tiredness", "weightgain")
FIXTURE_INTENTS = FIXTURE_STRONG + FIXTURE_WEAK

STRONG_POSTS_EACH = 220
WEAK_POSTS_EACH = 60
WEAK_KEYWORDED_EACH = 48
NONE_POSTS = 440
NONE_NOISE_POSTS = 180


def fixture_vocabulary() -> IntentVocabulary:
    full = IntentVocabulary.default()
    focal = tuple(full.spec(name) for name in FIXTURE_INTENTS)
    return IntentVocabulary(focal=focal, none_label=full.none_label)


_TIMES = (
    "this morning", "after dinner", "at work", "on the bus", "last night",
    "over the weekend", "before bed", "during lunch", "on my break", "around noon",
)

_STRONG_BANK = {
    "cravings": (
        "the craving hit me hard {t} but i rode it out",
        "big urge {t} so i took a walk around the block to distract myself",
        "cravings come in waves {t} and deep breaths carry me through",
        "a craving usually hits right {t} i just ride it out now",
        "kept my hands busy {t} to distract from the urge",
        "walked off another craving {t} the walk really helps",
        "urge surfing {t} worked again the craving faded in minutes",
        "deep breaths {t} until the craving let go of me",
        "that after coffee urge {t} is the worst but i can distract myself",
        "craving count is down this week only two {t}",
        "the urge passed {t} before i even finished my walk",
        "still get cravings {t} but they pass quicker when i ride them out",
    ),
    "health": (
        "my breathing is noticeably easier {t}",
        "the morning cough is nearly gone {t} lungs feel clearer",
        "doctor was pleased at my checkup {t} lungs sound better",
        "food has taste again {t} and my sense of smell is coming back",
        "climbed the stairs {t} without wheezing my lungs thank me",
        "checkup numbers looked good {t} the doctor smiled for once",
        "breathing through a cold {t} is so much easier than last year",
        "barely any cough left {t} my chest feels open",
        "taste buds woke up {t} oranges are incredible now",
        "lungs feel bigger on my runs {t} breathing deep and easy",
        "doctor says the numbers are down {t} since i stopped",
        "deep clean feeling in my lungs {t} week after week",
    ),
    "smokefree": (
        "one week smoke free {t} the counter keeps me honest",
        "hit the one month milestone {t} still smoke free",
        "my counter says {n} days clean {t}",
        "smoke free for {n} days now {t}",
        "small milestone {t} a full week smoke free",
        "the app counter rolled past {n} days {t}",
        "one month in {t} and the streak holds",
        "days clean {n} and counting {t}",
        "celebrated a quiet milestone {t} smoke free morning routine",
        "another week smoke free {t} adding it to the counter",
        "one week down again {t} the counter climbs",
        "{n} days smoke free {t} never thought i would say that",
    ),
    "support": (
        "so proud of you all {t} keep it up",
        "you can do this {t} we are all rooting for you",
        "congrats on the big news {t} cheering loudly over here",
        "thank you all for the kind words {t}",
        "hang in there {t} the hard part passes",
        "rooting for everyone checking in {t}",
        "proud of you friend {t} you earned it",
        "cheering you on {t} you can do this",
        "this thread carried me {t} thank you all",
        "sending strength {t} hang in there everyone",
        "congrats to the newcomers {t} proud of you already",
        "we are rooting for you {t} one hour at a time",
    ),
    "quitdate": (
        "picked my quit date {t} it is monday",
        "circled the first of the month on the calendar {t}",
        "counting down to my quit date {t} three days left",
        "ready to commit {t} quit date goes on the calendar tonight",
        "monday is the day {t} i picked it for a fresh start",
        "my quit date lands on the first of the month {t}",
        "calendar reminder set {t} counting down now",
        "i commit to my date {t} monday morning no excuses",
        "picked a realistic quit date {t} and told the family",
        "the countdown started {t} quit date in one week",
        "first of the month felt right {t} so that is my quit date",
        "wrote the quit date on the calendar in pen {t}",
    ),
    "stress": (
        "work stress {t} nearly got me but i breathed through it",
        "deadline pressure {t} and i still did not light up",
        "felt overwhelmed {t} stepped outside to calm down",
        "stressed about the move {t} tea instead of smoke",
        "the pressure at work {t} is my biggest trigger",
        "needed to unwind {t} so i stretched instead",
        "calm down playlist {t} beats the stress most days",
        "overwhelmed by emails {t} but no cigarette required",
        "deadline week {t} and my stress plan held",
        "unwind routine {t} bath book and bed",
        "stress spiked {t} i called a friend to calm down",
        "big deadline passed {t} less pressure already",
    ),
}

# One-line symptom posts for the sparse intents.  The same lines also appear
# in off-topic chatter, but there they are glued together across two topics,
# so their evidence splits between two intents and the background class wins.
# A member post states a single topic, and a handful of originals cannot
# outweigh the chatter; the augmented posts can.
_WEAK_FRAGMENTS = {
    "tiredness": (
        "so tired again lately",
        "completely drained by evening",
        "no energy this week",
        "feeling foggy all day",
        "could use a long nap",
        "sleepy by mid afternoon",
        "exhausted before dinner even",
        "the fatigue just lingers",
    ),
    "costs": (
        "watching the money closely",
        "the cost adds up",
        "the price went up again",
        "the budget is tight",
        "saved a little this week",
        "counting the dollars saved",
        "expensive week all around",
        "piggy bank duty again",
    ),
    "weightgain": (
        "the snacking continues daily",
        "my appetite is huge",
        "the scale says up",
        "gained a little more",
        "hungry again already",
        "weight on my mind",
        "carrots for lunch again",
        "the pounds keep creeping",
    ),
    "nrt_od": (
        "felt dizzy earlier today",
        "heart racing a bit",
        "too much buzz today",
        "a little shaky still",
        "lightheaded this afternoon",
        "racing pulse for a minute",
        "the dizzy spell passed",
        "still feeling shaky now",
    ),
}

_OPENERS = (
    "honestly", "quick note", "checking in", "small update", "hey folks",
    "morning all", "well", "so", "anyway", "not much today",
)

_MIDS = (
    "the week rolls on", "nothing else new", "same old routine",
    "the house is quiet", "weather was decent", "chores are done",
    "coffee in hand", "radio on in the background", "slow evening here",
    "made soup for later", "errands all morning", "garden needs attention",
)

_CLOSERS = (
    "that is all", "more later", "thanks for reading", "see you around",
    "take care all", "onward", "keeping at it", "back tomorrow",
)


def _render(rng: random.Random, template: str) -> str:
    return template.format(t=rng.choice(_TIMES), n=rng.randint(2, 95))


def _chatter(rng: random.Random) -> str:
    parts = [rng.choice(_OPENERS), rng.choice(_MIDS)]
    if rng.random() < 0.5:
        parts.append(rng.choice(_MIDS))
    parts.append(rng.choice(_CLOSERS))
    return " ".join(parts)


def make_fixture_corpus(seed: int = 42) -> LabeledDataset:
    """Original support-group corpus: 2000 posts across 10 intents plus NONE."""
    rng = random.Random(f"fixture-corpus:{seed}")
    clock = LogicalClock()
    counters: dict[str, int] = {}
    posts = []

    def add(label: str, text: str):
        index = counters.get(label, 0)
        counters[label] = index + 1
        posts.append(Post(
            id=f"orig-{label}-{index:04d}",
            text=text,
            source="original",
            stage="raw",
            label=label,
            created_at=clock.now(),
        ))

    for intent in FIXTURE_STRONG:
        bank = _STRONG_BANK[intent]
        for _ in range(STRONG_POSTS_EACH):
            add(intent, _render(rng, rng.choice(bank)))
    for intent in FIXTURE_WEAK:
        fragments = _WEAK_FRAGMENTS[intent]
        for index in range(WEAK_POSTS_EACH):
            if index < WEAK_KEYWORDED_EACH:
                add(intent, fragments[index % len(fragments)])
            else:
                add(intent, _chatter(rng))
    for index in range(NONE_POSTS):
        if index < NONE_NOISE_POSTS:
            first = FIXTURE_WEAK[index % len(FIXTURE_WEAK)]
            second = FIXTURE_WEAK[(index + 1) % len(FIXTURE_WEAK)]
            add(NONE_LABEL, f"{rng.choice(_WEAK_FRAGMENTS[first])} "
                            f"{rng.choice(_WEAK_FRAGMENTS[second])}")
        else:
            add(NONE_LABEL, _chatter(rng))

    return LabeledDataset(posts=tuple(posts))


# -- scraped forum dump ---------------------------------------------------------------

# Quit-context tails appended to the shared symptom lines.  Scraped posts
# about a sparse topic phrase the symptom the same way members do, which is
# what lets the retrained model reclaim those posts from the NONE pile.
_REAL_TAILS = (
    "since my quit day and it is not letting up",
    "ever since stopping smoking is this normal",
    "in week two of the quit anyone else",
    "after quitting does it get better",
    "since i stopped the packs how long does this last",
)

REAL_LONG_PER_INTENT = 60
REAL_SHORT_PER_INTENT = 6


def _real_long_body(intent: str, index: int, rng: random.Random) -> str:
    fragments = _WEAK_FRAGMENTS[intent]
    body = f"{fragments[index % len(fragments)]} {_REAL_TAILS[index % len(_REAL_TAILS)]}"
    if index >= 40:
        body = f"{body} week {rng.randint(2, 9)}"
    elif index >= 20:
        body = f"{body} day {rng.randint(2, 60)}"
    return body

_REAL_SHORT_BANK = {
    "tiredness": ("so tired since quitting", "quit and exhausted daily", "week {n} fatigue wall"),
    "costs": ("saved money since quitting", "quit and saved dollars", "pack price motivated me"),
    "weightgain": ("gained weight since quitting", "quit and always hungry", "snacking instead of smoking"),
    "nrt_od": ("dizzy from the gum", "too much nicotine today", "shaky after double gum"),
}

_REAL_STRONG_BANK = (
    "the urge hit during the commute but i rode it out",
    "cravings fade faster every week keep walking friends",
    "lungs feel clearer on the stairs already",
    "coughing less every morning since the quit",
    "picked my quit date for monday wish me luck",
    "counter says forty days smoke free today",
    "work deadline nearly broke me but i stayed calm",
    "thank you all for the cheering yesterday it helped",
    "one month milestone reached quietly proud",
    "doctor checkup went great breathing easy now",
    "calendar marked for the first of the month quit day",
    "deep breaths got me through the meeting urge",
    "proud of you all for the week one check ins",
    "stress at home is high but the plan holds",
    "taste came back pasta night was amazing",
    "you can do this newcomers the first week is the worst",
    "smoke free counter hit double digits today",
    "my quit date is circled and i am committed",
    "unwound with a long bath instead of a smoke",
    "walked off the big craving after dinner again",
)

_REAL_NONE_BANK = (
    "new to the forum just saying hello from the coast",
    "the weather turned cold fast this year",
    "anyone have a good slow cooker recipe for the weekend",
    "my commute got longer with the bridge closed",
    "watched that space documentary last night stunning",
    "the forum search works better on the new layout",
    "our dog learned to open the fridge somehow",
    "picked up woodworking again on weekends",
    "local team finally won a close one",
    "spreadsheet hobbyists check in what are you tracking",
    "planted tulips before the frost fingers crossed",
    "the library extended evening hours great news",
    "kids start school again monday the house will be quiet",
    "found a decent coffee place near the office",
    "podcast recommendations for long drives please",
    "repainted the fence a bold green no regrets",
    "crossword streak alive at thirty days",
    "neighborhood cleanup this saturday bring gloves",
    "my sourdough starter survived the vacation",
    "board game night rotates to our place this week",
)

_SPAM_BODIES = (
    "cheap cigarettes online best price click here https://deals.example/{n}",
    "crypto giveaway for forum members https://coins.example/{n} https://win.example/{n}",
    "miracle cure drops stop any habit https://drops.example/{n} buy now",
    "work from home and earn big https://jobs.example/{n} limited offer",
)

_NON_ENGLISH_BODIES = (
    "hoy tampoco fume nada y estoy muy contento de verdad amigos",
    "dejar el tabaco fue dificil pero cada dia estoy mejor",
    "heute keine zigarette geraucht und ich bin sehr stolz darauf",
    "der erste monat ohne rauchen war schwer aber es geht",
    "ayer camine mucho para olvidar las ganas de fumar",
    "mein kopf ist klarer ohne die zigaretten jeden morgen",
)

_INCOMPLETE_BODIES = ("thanks", "bump", "same here", "this", "congrats", "following")


def write_fixture_dump(path, seed: int = 42) -> int:
    """Write the scraped-forum JSONL dump; returns the number of rows."""
    rng = random.Random(f"fixture-dump:{seed}")
    clock = LogicalClock()
    rows = []

    def add(body: str):
        rows.append({
            "url": f"https://ex-community.example/t/{len(rows) + 1}",
            "author": f"member{rng.randint(1, 60):02d}",
            "body": body,
            "fetched_at": clock.now(),
        })

    dup_pool = []
    for intent in FIXTURE_WEAK:
        for index in range(REAL_LONG_PER_INTENT):
            body = _real_long_body(intent, index, rng)
            add(body)
            if index >= 20:  # the longer bodies, used for planted re-posts below
                dup_pool.append(body)
        for index in range(REAL_SHORT_PER_INTENT):
            template = _REAL_SHORT_BANK[intent][index % 3]
            add(template.format(n=rng.randint(2, 9)))
    for body in _REAL_STRONG_BANK:
        add(body)
    for body in _REAL_NONE_BANK:
        add(body)
        add(f"{body} by the way")
    for index in range(12):
        add(_INCOMPLETE_BODIES[index % len(_INCOMPLETE_BODIES)])
    for index in range(8):
        add(_SPAM_BODIES[index % len(_SPAM_BODIES)].format(n=index))
    for body in _NON_ENGLISH_BODIES:
        add(body)
    for index in range(10):  # exact re-posts under fresh urls
        add(dup_pool[(index * 7) % len(dup_pool)])
    for index in range(8):  # near re-posts, one token appended
        add(f"{dup_pool[(index * 11) % len(dup_pool)]} edit")

    lines = [json.dumps(row, ensure_ascii=False) for row in rows]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(rows)


def write_fixture_intents(path) -> None:
    """Write the trimmed ten-intent vocabulary as a loadable config file."""
    vocabulary = fixture_vocabulary()
    payload = {
        "none_label": vocabulary.none_label,
        "intents": [
            {"name": spec.name, "description": spec.description, "keywords": list(spec.keywords)}
            for spec in vocabulary.focal
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def write_fixture_workspace(root, corpus_seed: int = 42, dump_seed: int = 42) -> dict[str, str]:
    """Materialize corpus, dump, and intent files for a self-contained run.

    Returns the three paths keyed the way PipelineConfig names them.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    dataset_path = root / "corpus.jsonl"
    dump_path = root / "dump.jsonl"
    intents_path = root / "intents.json"
    save_dataset(make_fixture_corpus(corpus_seed), dataset_path)
    write_fixture_dump(dump_path, dump_seed)
    write_fixture_intents(intents_path)
    return {
        "dataset_path": str(dataset_path),
        "dump_path": str(dump_path),
        "intents_path": str(intents_path),
    }


# -- rule-based humans -----------------------------------------------------------------


def _stable_residue(post_id: str, modulus: int) -> int:
    return zlib.crc32(post_id.encode("utf-8")) % modulus


def keyword_hits(text: str, keywords: Iterable[str]) -> int:
    lowered = text.lower()
    return sum(1 for keyword in keywords if keyword in lowered)


def match_selected_intent(text: str, selected: Iterable[str],
                          vocabulary: IntentVocabulary) -> Optional[str]:
    """Best keyword match among the selected intents; ties go alphabetically."""
    best_name, best_hits = None, 0
    for name in sorted(selected):
        hits = keyword_hits(text, vocabulary.spec(name).keywords)
        if hits > best_hits:
            best_name, best_hits = name, hits
    return best_name


class KeywordScreener:
    """Deterministic stand-in for the expert screener."""

    def __init__(self, vocabulary: IntentVocabulary):
        self.vocabulary = vocabulary

    def __call__(self, post: Post) -> dict:
        tokens = normalize_and_tokenize(post.text)
        on_topic = keyword_hits(post.text, self.vocabulary.spec(post.label).keywords) > 0
        return {
            "relevance": "pass" if on_topic else "fail",
            "completeness": "pass" if len(tokens) >= 4 else "fail",
            "clarity": "pass" if len(tokens) <= 60 else "fail",
        }


class SyntheticAnnotator:
    """Checks generated posts for intent fit, fluency, and repetition.

    flip_modulus > 0 makes the annotator contrarian on a stable slice of
    post ids (flipping accepts), and concede during discussion on half of
    that slice, so disagreement paths get exercised deterministically.
    """

    def __init__(self, annotator_id: str, vocabulary: IntentVocabulary, flip_modulus: int = 0):
        self.annotator_id = annotator_id
        self.vocabulary = vocabulary
        self.flip_modulus = flip_modulus
        self._seen_texts: set[str] = set()

    def _base(self, post: Post) -> dict:
        tokens = normalize_and_tokenize(post.text)
        fits = keyword_hits(post.text, self.vocabulary.spec(post.label).keywords) > 0
        repeat = post.text in self._seen_texts
        self._seen_texts.add(post.text)
        return {
            "fits_intent": fits,
            "fluent": len(tokens) >= 4,
            "non_repetitive": not repeat,
        }

    def verdict(self, post: Post) -> dict:
        base = self._base(post)
        accepted = all(base.values())
        if self.flip_modulus and accepted and _stable_residue(post.id, self.flip_modulus) == 0:
            return dict(base, fits_intent=False)
        return base

    def revise(self, post: Post, own: dict, peer: dict) -> dict:
        if self.flip_modulus and _stable_residue(post.id, 2 * self.flip_modulus) == 0:
            return dict(peer)
        return dict(own)


class RealAnnotator:
    """Labels scraped posts with a selected intent or NONE, by keyword vote."""

    def __init__(self, annotator_id: str, vocabulary: IntentVocabulary,
                 selected: Iterable[str], flip_modulus: int = 0,
                 min_tokens: int = 6):
        self.annotator_id = annotator_id
        self.vocabulary = vocabulary
        self.selected = tuple(sorted(selected))
        self.flip_modulus = flip_modulus
        self.min_tokens = min_tokens

    def _base(self, post: Post) -> dict:
        tokens = normalize_and_tokenize(post.text)
        if len(tokens) < self.min_tokens:
            return {"label": self.vocabulary.none_label}
        label = match_selected_intent(post.text, self.selected, self.vocabulary)
        return {"label": label or self.vocabulary.none_label}

    def verdict(self, post: Post) -> dict:
        base = self._base(post)
        focal = base["label"] != self.vocabulary.none_label
        if self.flip_modulus and focal and _stable_residue(post.id, self.flip_modulus) == 0:
            return {"label": self.vocabulary.none_label}
        return base

    def revise(self, post: Post, own: dict, peer: dict) -> dict:
        if self.flip_modulus and _stable_residue(post.id, 2 * self.flip_modulus) == 0:
            return dict(peer)
        return dict(own)


def first_annotator_judge(post: Post, first: dict, second: dict) -> tuple[dict, str]:
    """Expert judge stand-in: re-applies the primary annotator's criteria."""
    return dict(first), "re-checked against the intent definition and earlier batches"


class FixtureHooks:
    """Bundle of rule-based humans wired to a roster of two annotator ids."""

    def __init__(self, vocabulary: IntentVocabulary, annotators=("ann-a", "ann-b"),
                 synth_flip_modulus: int = 19, real_flip_modulus: int = 17):
        self.vocabulary = vocabulary
        self.annotators = tuple(annotators)
        self.synth_flip_modulus = synth_flip_modulus
        self.real_flip_modulus = real_flip_modulus

    def screener(self) -> KeywordScreener:
        return KeywordScreener(self.vocabulary)

    def synth_bots(self) -> tuple[SyntheticAnnotator, SyntheticAnnotator]:
        return (
            SyntheticAnnotator(self.annotators[0], self.vocabulary),
            SyntheticAnnotator(self.annotators[1], self.vocabulary,
                               flip_modulus=self.synth_flip_modulus),
        )

    def real_bots(self, selected) -> tuple[RealAnnotator, RealAnnotator]:
        return (
            RealAnnotator(self.annotators[0], self.vocabulary, selected),
            RealAnnotator(self.annotators[1], self.vocabulary, selected,
                          flip_modulus=self.real_flip_modulus),
        )

    def judge(self):
        return first_annotator_judge
