"""Synthetic post generation: prompts, generator clients, stop rules.

Screened posts seed prompt templates; a generator client (an
OpenAI-compatible HTTP endpoint, or the deterministic stub used by the
test suite) turns each prompt into candidate posts. A stop controller
watches each batch for semantic drift (centroid cosine against the
seeds) and redundancy (shingle-Jaccard near-duplicates) and routes bad
prompts back for human revision instead of silently generating on.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import random
import string
import threading
import time
from dataclasses import dataclass, field, replace
from hashlib import blake2b
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import requests

from .classifier import normalize_and_tokenize
from .corpus import IntentVocabulary, Post
from .errors import GenerationError, StateError, TemplateError

log = logging.getLogger(__name__)

STOP_DECISIONS = ("continue", "stop_drift", "stop_redundancy", "stop_quota")

GENERATOR_API_KEY_VAR = "AUGLOOP_GENERATOR_API_KEY"


def load_templates(path: Optional[Path | str] = None) -> dict[str, str]:
    """Prompt templates keyed by id; the bundled file when no path given."""
    if path is None:
        raw = resources.files("augloop.data").joinpath("templates.json").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    templates = json.loads(raw)
    if not isinstance(templates, dict) or not all(isinstance(v, str) for v in templates.values()):
        raise TemplateError("template file must map template ids to strings")
    return templates


@dataclass(frozen=True)
class GenParams:
    n_responses: int = 10
    temperature: float = 0.9
    max_tokens: int = 120

    def __post_init__(self) -> None:
        if self.n_responses < 0 or self.max_tokens < 1 or self.temperature < 0:
            raise ValueError(f"bad generation parameters: {self}")


@dataclass(frozen=True)
class PromptSpec:
    prompt_id: str
    intent: str
    seed_post_ids: tuple[str, ...]
    template_id: str
    rendered_prompt: str
    gen_params: GenParams = GenParams()

    def __post_init__(self) -> None:
        if not self.rendered_prompt.strip():
            raise TemplateError("rendered prompt is empty")
        if not self.seed_post_ids:
            raise ValueError("a prompt needs at least one seed post")


_VOWELS = set("aeiou")


def _gerund(word: str) -> str:
    if word.endswith("ing"):
        return word
    if word.endswith("e") and not word.endswith("ee"):
        return word[:-1] + "ing"
    return word + "ing"


def extract_focus(seed_text: str, vocabulary: IntentVocabulary, intent: str) -> str:
    """Pick the seed's coping-activity phrase for the {focus} template slot.

    First intent keyword found in the seed that is not already part of
    the intent description; single words are rendered as gerunds ("walk"
    -> "walking"), multi-word keywords pass through. Falls back to the
    first keyword, then to the intent name.
    """
    spec = vocabulary.spec(intent)
    tokens = normalize_and_tokenize(seed_text)
    description_words = set(normalize_and_tokenize(spec.description))
    keyword_tokens = [(keyword, normalize_and_tokenize(keyword)) for keyword in spec.keywords]

    best: Optional[tuple[int, str, list[str]]] = None
    for keyword, parts in keyword_tokens:
        if not parts or any(part in description_words for part in parts):
            continue
        for start in range(len(tokens) - len(parts) + 1):
            if tokens[start : start + len(parts)] == parts:
                if best is None or start < best[0]:
                    best = (start, keyword, parts)
                break
    if best is not None:
        _, keyword, parts = best
        return _gerund(parts[0]) if len(parts) == 1 else keyword
    if spec.keywords:
        return spec.keywords[0]
    return intent


def craft_prompt(
    seed_post: Post,
    intent: str,
    template_id: str,
    gen_params: GenParams = GenParams(),
    vocabulary: Optional[IntentVocabulary] = None,
    templates: Optional[Mapping[str, str]] = None,
    focus: Optional[str] = None,
) -> PromptSpec:
    """Render a generation prompt from one screened seed post.

    The focus phrase is auto-extracted from the seed unless given
    explicitly (prompt crafting is an expert activity; the extraction is
    just its mechanical default).
    """
    vocabulary = vocabulary or IntentVocabulary.default()
    templates = templates if templates is not None else load_templates()
    if seed_post.stage != "screened_accept":
        raise StateError(f"seed post {seed_post.id} has stage {seed_post.stage}, not screened_accept")
    if seed_post.label != intent:
        raise StateError(f"seed post {seed_post.id} is labeled {seed_post.label!r}, not {intent!r}")
    if template_id not in templates:
        raise TemplateError(f"unknown template {template_id!r}")
    if not vocabulary.is_focal(intent):
        raise StateError(f"{intent!r} is not a focal intent")

    template = templates[template_id]
    used = {name for _, name, _, _ in string.Formatter().parse(template) if name}
    variables = {
        "seed_text": seed_post.text,
        "intent": intent,
        "intent_description": vocabulary.description(intent),
        "focus": focus if focus is not None else extract_focus(seed_post.text, vocabulary, intent),
    }
    unknown = used - set(variables)
    if unknown:
        raise TemplateError(f"template {template_id!r} references unknown variable {sorted(unknown)[0]!r}")
    for name in sorted(used):
        if not str(variables[name]).strip():
            raise TemplateError(f"template variable {name!r} is empty")
    rendered = template.format_map(variables)
    return PromptSpec(
        prompt_id=f"pr-{intent}-{seed_post.id}-{template_id}",
        intent=intent,
        seed_post_ids=(seed_post.id,),
        template_id=template_id,
        rendered_prompt=rendered,
        gen_params=gen_params,
    )


@dataclass(frozen=True)
class GenerationBatch:
    """One generator call's worth of responses plus its stop-rule state."""

    batch_id: str
    prompt_id: str
    responses: tuple[str, ...]
    drift_score: Optional[float] = None
    redundancy_ratio: Optional[float] = None
    stop_decision: Optional[str] = None
    dropped: int = 0  # empty completions discarded during cleanup

    def __post_init__(self) -> None:
        for text in self.responses:
            if not text.strip():
                raise GenerationError("batch responses must be non-empty")
        for score in (self.drift_score, self.redundancy_ratio):
            if score is not None and not 0.0 <= score <= 1.0 + 1e-12:
                raise GenerationError(f"score out of [0,1]: {score}")
        if self.stop_decision is not None:
            if self.stop_decision not in STOP_DECISIONS:
                raise GenerationError(f"unknown stop decision {self.stop_decision!r}")
            if self.drift_score is None or self.redundancy_ratio is None:
                raise GenerationError("stop decision recorded before scores were computed")

    def with_scores(self, drift: float, redundancy: float) -> "GenerationBatch":
        return replace(self, drift_score=drift, redundancy_ratio=redundancy)

    def with_decision(self, decision: str) -> "GenerationBatch":
        if self.drift_score is None or self.redundancy_ratio is None:
            raise GenerationError("compute scores before deciding whether to stop")
        return replace(self, stop_decision=decision)


_QUOTE_PAIRS = [('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’")]


def clean_response(text: str) -> str:
    """Strip leading list numbering/bullets and surrounding quote pairs."""
    cleaned = text.strip()
    changed = True
    while changed and cleaned:
        changed = False
        head = cleaned.split(" ", 1)[0] if " " in cleaned else cleaned
        if head and (head.rstrip(".):]").isdigit() and head != head.rstrip(".):]") or head in ("-", "*", "•")):
            cleaned = cleaned[len(head):].lstrip()
            changed = True
            continue
        for open_q, close_q in _QUOTE_PAIRS:
            if len(cleaned) >= 2 and cleaned.startswith(open_q) and cleaned.endswith(close_q):
                cleaned = cleaned[1:-1].strip()
                changed = True
                break
    return cleaned


def generate(prompt: PromptSpec, client, batch_index: int = 0) -> GenerationBatch:
    """Run one generation call and clean up the raw completions."""
    params = prompt.gen_params
    if params.n_responses < 1:
        raise GenerationError("n_responses must be at least 1")
    raw = client.complete(
        prompt.rendered_prompt, params.n_responses, params.temperature, params.max_tokens
    )
    responses = []
    dropped = 0
    for completion in raw:
        cleaned = clean_response(completion)
        if cleaned:
            responses.append(cleaned)
        else:
            dropped += 1
    if dropped:
        log.warning("prompt %s: dropped %d empty completion(s)", prompt.prompt_id, dropped)
    return GenerationBatch(
        batch_id=f"{prompt.prompt_id}-b{batch_index}",
        prompt_id=prompt.prompt_id,
        responses=tuple(responses),
        dropped=dropped,
    )


def candidate_posts(prompt: PromptSpec, batch: GenerationBatch, created_at: str = "1970-01-01T00:00:00Z") -> list[Post]:
    """Wrap batch responses as raw synthetic posts with full provenance."""
    return [
        Post(
            id=f"{batch.batch_id}-r{index}",
            text=text,
            source="synthetic",
            stage="raw",
            label=prompt.intent,
            seed_post_id=prompt.seed_post_ids[0],
            prompt_id=prompt.prompt_id,
            created_at=created_at,
        )
        for index, text in enumerate(batch.responses)
    ]


# --- drift and redundancy scoring -------------------------------------------


def _normalized_tf_vectors(texts: Sequence[str]) -> list[dict[str, float]]:
    vectors = []
    for text in texts:
        tokens = normalize_and_tokenize(text)
        if not tokens:
            continue
        counts: dict[str, float] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0.0) + 1.0
        norm = sum(value * value for value in counts.values()) ** 0.5
        vectors.append({token: value / norm for token, value in counts.items()})
    return vectors


def _centroid(vectors: Sequence[dict[str, float]]) -> dict[str, float]:
    centroid: dict[str, float] = {}
    for vector in vectors:
        for token, value in vector.items():
            centroid[token] = centroid.get(token, 0.0) + value
    return {token: value / len(vectors) for token, value in centroid.items()}


def drift_score(batch_texts: Sequence[str], seed_texts: Sequence[str]) -> float:
    """Cosine similarity between the batch centroid and the seed centroid.

    Term-frequency vectors are L2-normalized per text before averaging;
    all components are non-negative, so the score lives in [0,1] and 1.0
    means no drift at all.
    """
    if not batch_texts or not seed_texts:
        raise GenerationError("drift_score needs non-empty batch and seed lists")
    batch_vectors = _normalized_tf_vectors(batch_texts)
    seed_vectors = _normalized_tf_vectors(seed_texts)
    if not batch_vectors or not seed_vectors:
        raise GenerationError("drift_score: no tokens on one side")
    a = _centroid(batch_vectors)
    b = _centroid(seed_vectors)
    dot = sum(value * b.get(token, 0.0) for token, value in a.items())
    norm_a = sum(value * value for value in a.values()) ** 0.5
    norm_b = sum(value * value for value in b.values()) ** 0.5
    return min(1.0, dot / (norm_a * norm_b))


def token_shingles(text: str, size: int = 3) -> frozenset[tuple[str, ...]]:
    """Token shingles of the given size; shorter texts collapse to a
    single sentinel shingle so they only ever match exact duplicates."""
    tokens = normalize_and_tokenize(text)
    if len(tokens) < size:
        return frozenset({("__short__", *tokens)})
    return frozenset(tuple(tokens[i : i + size]) for i in range(len(tokens) - size + 1))


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def redundancy_ratio(
    batch_texts: Sequence[str],
    accepted_texts_for_intent: Sequence[str] = (),
    jaccard_threshold: float = 0.8,
) -> float:
    """Share of batch items that near-duplicate another batch item or a
    previously accepted post of the same intent."""
    if not batch_texts:
        raise GenerationError("redundancy_ratio needs a non-empty batch")
    batch = [token_shingles(text) for text in batch_texts]
    accepted = [token_shingles(text) for text in accepted_texts_for_intent]
    redundant = 0
    for index, shingles in enumerate(batch):
        others = itertools.chain(
            (other for position, other in enumerate(batch) if position != index), accepted
        )
        if any(jaccard(shingles, other) >= jaccard_threshold for other in others):
            redundant += 1
    return redundant / len(batch)


@dataclass(frozen=True)
class StopThresholds:
    drift_min: float = 0.5
    redundancy_max: float = 0.3
    quota: int = 50


def should_stop(batch: GenerationBatch, thresholds: StopThresholds, accepted_count: int) -> str:
    """Stop-rule priority is fixed: drift, then redundancy, then quota."""
    if batch.drift_score is None or batch.redundancy_ratio is None:
        raise GenerationError("compute scores before applying stop rules")
    if batch.drift_score < thresholds.drift_min:
        return "stop_drift"
    if batch.redundancy_ratio > thresholds.redundancy_max:
        return "stop_redundancy"
    if accepted_count >= thresholds.quota:
        return "stop_quota"
    return "continue"


# --- MinHash near-duplicate detection ----------------------------------------

# 31-bit hashes keep a*x+b below 2^63, so the permutation arithmetic
# vectorizes in plain uint64 with no overflow.
_MERSENNE_31 = (1 << 31) - 1


def _shingle_hash(shingle: tuple[str, ...]) -> int:
    digest = blake2b("␟".join(shingle).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big") % _MERSENNE_31


def minhash_near_duplicates(
    texts: Sequence[str],
    jaccard_threshold: float = 0.8,
    permutations: int = 128,
    seed: int = 0,
    shingle_size: int = 3,
) -> set[tuple[int, int]]:
    """Index pairs (i < j) whose shingle-set Jaccard is >= the threshold.

    MinHash signatures plus LSH banding (4-row bands, so recall at the
    0.8 threshold is effectively 1) propose candidates; every candidate
    is verified against the exact Jaccard before being reported, so the
    result carries no false positives.
    """
    if permutations < 16:
        raise ValueError(f"need at least 16 permutations, got {permutations}")
    shingle_sets = [token_shingles(text, shingle_size) for text in texts]
    hashed = [np.array(sorted({_shingle_hash(s) for s in shingles}), dtype=np.uint64)
              for shingles in shingle_sets]

    rng = random.Random(seed)
    coeff_a = np.array([rng.randrange(1, _MERSENNE_31) for _ in range(permutations)], dtype=np.uint64)
    coeff_b = np.array([rng.randrange(0, _MERSENNE_31) for _ in range(permutations)], dtype=np.uint64)

    signatures = np.empty((len(texts), permutations), dtype=np.uint64)
    for index, values in enumerate(hashed):
        products = (values[None, :] * coeff_a[:, None] + coeff_b[:, None]) % _MERSENNE_31
        signatures[index] = products.min(axis=1)

    rows_per_band = 4
    bands = permutations // rows_per_band
    candidates: set[tuple[int, int]] = set()
    for band in range(bands):
        buckets: dict[bytes, list[int]] = {}
        lo = band * rows_per_band
        for index in range(len(texts)):
            key = signatures[index, lo : lo + rows_per_band].tobytes()
            buckets.setdefault(key, []).append(index)
        for members in buckets.values():
            for i, j in itertools.combinations(members, 2):
                candidates.add((i, j))

    return {
        (i, j)
        for i, j in candidates
        if jaccard(shingle_sets[i], shingle_sets[j]) >= jaccard_threshold
    }


def brute_force_near_duplicates(
    texts: Sequence[str], jaccard_threshold: float = 0.8, shingle_size: int = 3
) -> set[tuple[int, int]]:
    """Exact pairwise reference used as the oracle for the MinHash path."""
    shingle_sets = [token_shingles(text, shingle_size) for text in texts]
    return {
        (i, j)
        for i, j in itertools.combinations(range(len(texts)), 2)
        if jaccard(shingle_sets[i], shingle_sets[j]) >= jaccard_threshold
    }


# --- generator clients --------------------------------------------------------


class HttpGeneratorClient:
    """OpenAI-compatible chat-completions client with retries and a
    concurrency cap."""

    kind = "http"

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        timeout: float = 30.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        max_concurrency: int = 4,
        session: Optional[requests.Session] = None,
        sleeper=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(GENERATOR_API_KEY_VAR)
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.session = session or requests.Session()
        self._sleep = sleeper
        self._slots = threading.BoundedSemaphore(max_concurrency)

    def complete(self, prompt: str, n: int, temperature: float, max_tokens: int) -> list[str]:
        url = f"{self.base_url}/chat/completions"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "n": n,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_status: Optional[int] = None
        last_error: Optional[str] = None
        with self._slots:
            for attempt in range(self.max_attempts):
                if attempt:
                    self._sleep(self.backoff_base * 2 ** (attempt - 1))
                try:
                    response = self.session.post(url, json=body, headers=headers, timeout=self.timeout)
                except requests.RequestException as exc:
                    last_error = str(exc)
                    continue
                last_status = response.status_code
                if response.status_code == 200:
                    return self._parse(response, url)
                if response.status_code in (429,) or response.status_code >= 500:
                    continue
                raise GenerationError(f"{url} returned status {response.status_code}")
        detail = f"status {last_status}" if last_status is not None else f"error {last_error}"
        raise GenerationError(f"{url} failed after {self.max_attempts} attempts ({detail})")

    def _parse(self, response, url: str) -> list[str]:
        try:
            payload = response.json()
            return [choice["message"]["content"] for choice in payload["choices"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise GenerationError(f"{url} returned an unparseable completion payload: {exc}") from exc


_STUB_FRAMES = (
    "Whenever the urge shows up, {kw} keeps me steady.",
    "I lean on {kw} when quitting gets rough.",
    "Honestly {kw} has been my lifeline this week.",
    "Day by day {kw} makes it easier to stay off cigarettes.",
    "My counselor suggested {kw} and it actually works for me.",
    "Tried {kw} last night instead of lighting up.",
    "Nothing beats {kw} when I want a cigarette after dinner.",
    "Keeping busy with {kw} stops me reaching for the pack.",
    "I remind myself why I quit and focus on {kw} instead.",
    "Swapping smoke breaks for {kw} changed everything for me.",
    "Starting the morning with {kw} sets the tone for the day.",
    "When the pressure spikes I turn to {kw} and it passes.",
    "Three weeks in and {kw} still does the trick for me.",
    "My partner joins me for {kw} so I stay accountable.",
    "Every rough moment passes faster once I start {kw}.",
    "I write down each time {kw} gets me through a hard hour.",
    "Evenings are hardest but {kw} carries me through them.",
    "People here told me about {kw} and now I swear by it.",
    "One craving at a time, {kw} is how I hold the line.",
    "After meals I go straight to {kw} before the urge builds.",
)

_STUB_GENERIC_FILLERS = ("a quick walk", "deep breathing", "a glass of water", "sugar free gum")

_WORKED_EXAMPLE_MARKER = "manage cravings when trying to quit smoking like walking"

_WORKED_EXAMPLE_RESPONSES = (
    "Chewing gum helps distract me from cravings",
    "Going for a walk clears my mind when the urge to smoke hits.",
)


class StubGenerator:
    """Deterministic in-repo generator: paraphrase tables keyed by intent.

    Response text depends only on (seed, prompt), never on call order,
    so repeated runs are bit-identical. The canned pair of walking
    answers appears whenever the walking prompt does.
    """

    kind = "stub"

    def __init__(self, vocabulary: Optional[IntentVocabulary] = None, seed: int = 42):
        self.vocabulary = vocabulary or IntentVocabulary.default()
        self.seed = seed

    def _match_intent(self, prompt_lower: str) -> Optional[str]:
        for spec in self.vocabulary.focal:
            if spec.description and spec.description.lower() in prompt_lower:
                return spec.name
        best_name, best_hits = None, 0
        for spec in self.vocabulary.focal:
            hits = sum(1 for keyword in spec.keywords if keyword.lower() in prompt_lower)
            if hits > best_hits:
                best_name, best_hits = spec.name, hits
        return best_name

    def complete(self, prompt: str, n: int, temperature: float, max_tokens: int) -> list[str]:
        prompt_lower = prompt.lower()
        rng = random.Random(f"{self.seed}:{prompt}")
        intent = self._match_intent(prompt_lower)
        fillers = list(_STUB_GENERIC_FILLERS)
        if intent is not None:
            fillers = [k for k in self.vocabulary.spec(intent).keywords if len(k) > 3] + fillers

        texts: list[str] = []
        if _WORKED_EXAMPLE_MARKER in prompt_lower:
            texts.extend(_WORKED_EXAMPLE_RESPONSES[:n])
        frames = list(_STUB_FRAMES)
        rng.shuffle(frames)
        slot = 0
        while len(texts) < n:
            frame = frames[slot % len(frames)]
            filler = fillers[(slot * 7 + rng.randrange(len(fillers))) % len(fillers)]
            candidate = frame.format(kw=filler)
            if candidate not in texts:
                texts.append(candidate)
            else:
                # frame pool exhausted; vary wording instead of repeating
                texts.append(candidate + f" Day {slot + 2} proves it.")
            slot += 1
        # mimic a chatty model: numbered list, with stray quotes sometimes
        rendered = []
        for index, text in enumerate(texts):
            quoted = f'"{text}"' if index % 3 == 2 else text
            rendered.append(f"{index + 1}. {quoted}")
        return rendered


def make_generator_client(config: Mapping, vocabulary: Optional[IntentVocabulary] = None):
    """Build a client from config: kind "stub" or "http"."""
    kind = config.get("kind", "stub")
    if kind == "stub":
        return StubGenerator(vocabulary=vocabulary, seed=int(config.get("seed", 42)))
    if kind == "http":
        return HttpGeneratorClient(
            base_url=config["base_url"],
            model=config.get("model", "gpt-4"),
            api_key=config.get("api_key"),
            timeout=float(config.get("timeout", 30.0)),
            max_attempts=int(config.get("max_attempts", 3)),
            max_concurrency=int(config.get("max_concurrency", 4)),
        )
    raise GenerationError(f"unknown generator kind {kind!r}")
