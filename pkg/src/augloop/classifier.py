"""Reference intent classifier and the external-classifier adapter.

The built-in model is a deterministic softmax regression over unigram and
bigram counts, standing in for a fine-tuned LLM. Anything implementing
``predict(text) -> (label, scores)`` can replace it; the subprocess
adapter at the bottom of this module wraps an external classifier behind
the same interface via a JSON-lines protocol.
"""

from __future__ import annotations

import json
import re
import subprocess
import unicodedata
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import sparse

from .corpus import IntentVocabulary, LabeledDataset, Post, atomic_write_text
from .errors import AdapterProtocolError, TrainingError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def normalize_and_tokenize(text: str) -> list[str]:
    """NFC-normalize, lowercase, and split on non-alphanumeric runs."""
    normalized = unicodedata.normalize("NFC", text).lower()
    return _TOKEN_RE.findall(normalized)


def ngrams(tokens: Sequence[str], ngram_max: int) -> list[str]:
    """Unigrams through ngram_max-grams, multi-token grams space-joined."""
    grams = list(tokens)
    for size in range(2, ngram_max + 1):
        grams.extend(" ".join(tokens[i : i + size]) for i in range(len(tokens) - size + 1))
    return grams


def build_vocabulary(texts: Sequence[str], ngram_max: int = 2, min_freq: int = 2) -> dict[str, int]:
    """Index n-grams occurring at least min_freq times, alphabetically."""
    counts: dict[str, int] = {}
    for text in texts:
        for gram in ngrams(normalize_and_tokenize(text), ngram_max):
            counts[gram] = counts.get(gram, 0) + 1
    kept = sorted(gram for gram, count in counts.items() if count >= min_freq)
    return {gram: index for index, gram in enumerate(kept)}


def featurize(tokens: Sequence[str], vocabulary: Mapping[str, int], ngram_max: int = 2) -> dict[int, int]:
    """Sparse count vector of in-vocabulary n-grams; OOV grams are ignored."""
    vector: dict[int, int] = {}
    for gram in ngrams(tokens, ngram_max):
        index = vocabulary.get(gram)
        if index is not None:
            vector[index] = vector.get(index, 0) + 1
    return vector


@dataclass(frozen=True)
class TrainConfig:
    ngram_max: int = 2
    min_freq: int = 2
    epochs: int = 30
    learning_rate: float = 0.1
    l2: float = 1e-4
    batch_size: int = 32
    seed: int = 42

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        return cls(**dict(data))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_xent_loss_and_grad(weights, bias, features, targets, l2: float = 0.0):
    """Mean cross-entropy loss of softmax regression plus L2 on the weights.

    Returns (loss, grad_weights, grad_bias); the analytic gradients here
    are what the training loop applies, so they are checkable against
    finite differences.
    """
    features = features if sparse.issparse(features) else np.asarray(features, dtype=float)
    n = features.shape[0]
    logits = features @ weights.T + bias
    probs = _softmax(logits)
    log_probs = np.log(probs[np.arange(n), targets])
    loss = -log_probs.mean() + 0.5 * l2 * float((weights * weights).sum())
    delta = probs.copy()
    delta[np.arange(n), targets] -= 1.0
    delta /= n
    grad_weights = delta.T @ features + l2 * weights
    grad_weights = np.asarray(grad_weights)
    grad_bias = delta.sum(axis=0)
    return loss, grad_weights, grad_bias


@dataclass
class ClassifierModel:
    """Trained softmax-regression model; immutable once trained."""

    vocabulary: dict[str, int]
    classes: tuple[str, ...]
    weights: np.ndarray  # shape (n_classes, n_features)
    bias: np.ndarray  # shape (n_classes,)
    config: TrainConfig

    def predict(self, text: str) -> tuple[str, dict[str, float]]:
        """Label plus full probability distribution; ties break to the
        lexicographically smallest class name."""
        vector = featurize(normalize_and_tokenize(text), self.vocabulary, self.config.ngram_max)
        logits = self.bias.copy()
        for index, count in vector.items():
            logits += self.weights[:, index] * count
        probs = _softmax(logits)
        scores = {name: float(p) for name, p in zip(self.classes, probs)}
        label = min(scores, key=lambda name: (-scores[name], name))
        return label, scores

    def to_json(self) -> str:
        payload = {
            "bias": self.bias.tolist(),
            "classes": list(self.classes),
            "config": self.config.to_dict(),
            "vocabulary": self.vocabulary,
            "weights": self.weights.tolist(),
        }
        return json.dumps(payload, sort_keys=True, ensure_ascii=False)

    def save(self, path: Path | str) -> None:
        atomic_write_text(path, self.to_json() + "\n")

    @classmethod
    def from_json(cls, text: str) -> "ClassifierModel":
        payload = json.loads(text)
        return cls(
            vocabulary=payload["vocabulary"],
            classes=tuple(payload["classes"]),
            weights=np.array(payload["weights"], dtype=float),
            bias=np.array(payload["bias"], dtype=float),
            config=TrainConfig.from_dict(payload["config"]),
        )

    @classmethod
    def load(cls, path: Path | str) -> "ClassifierModel":
        return cls.from_json(Path(path).read_text("utf-8"))


def _feature_matrix(posts: Sequence[Post], vocabulary: Mapping[str, int], ngram_max: int) -> sparse.csr_matrix:
    data: list[int] = []
    indices: list[int] = []
    indptr = [0]
    for post in posts:
        vector = featurize(normalize_and_tokenize(post.text), vocabulary, ngram_max)
        for index in sorted(vector):
            indices.append(index)
            data.append(vector[index])
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
        shape=(len(posts), len(vocabulary)),
    )


def train(train_set: LabeledDataset, config: TrainConfig = TrainConfig()) -> ClassifierModel:
    """Fit softmax-regression weights by seeded mini-batch gradient descent.

    Deterministic: the shuffling order is fully derived from config.seed
    and training is single-threaded, so equal inputs give byte-identical
    serialized models.
    """
    posts = train_set.posts
    if not posts:
        raise TrainingError("cannot train on an empty dataset")
    classes = tuple(sorted({post.label for post in posts}))
    if len(classes) < 2:
        raise TrainingError(f"need at least 2 classes, got {classes}")
    class_index = {name: i for i, name in enumerate(classes)}
    vocabulary = build_vocabulary([post.text for post in posts], config.ngram_max, config.min_freq)

    features = _feature_matrix(posts, vocabulary, config.ngram_max)
    targets = np.array([class_index[post.label] for post in posts], dtype=np.int64)
    weights = np.zeros((len(classes), len(vocabulary)))
    bias = np.zeros(len(classes))

    rng = np.random.default_rng(config.seed)
    n = len(posts)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            _, grad_w, grad_b = softmax_xent_loss_and_grad(
                weights, bias, features[batch], targets[batch], config.l2
            )
            weights -= config.learning_rate * grad_w
            bias -= config.learning_rate * grad_b
    return ClassifierModel(vocabulary=vocabulary, classes=classes, weights=weights, bias=bias, config=config)


# --- external classifier adapter -------------------------------------------
#
# Wire protocol, one JSON object per line on the child's stdin/stdout:
#   -> {"op": "train", "data_path": "<jsonl path>"}
#   <- {"ok": true}
#   -> {"op": "predict", "text": "..."}
#   <- {"label": "...", "scores": {"...": 0.9, ...}}
# Any deviation (malformed line, unknown label, nonzero exit) is an error.


class ExternalClassifier:
    """Classifier interface delegating to a child process over JSON lines."""

    def __init__(self, command: Sequence[str], vocabulary: IntentVocabulary):
        self.command = list(command)
        self.vocabulary = vocabulary
        try:
            self._child = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise AdapterProtocolError(f"cannot launch {self.command}: {exc}") from exc

    def _roundtrip(self, request: dict) -> dict:
        child = self._child
        if child.poll() is not None:
            raise AdapterProtocolError(f"adapter exited early with code {child.returncode}")
        try:
            child.stdin.write(json.dumps(request, ensure_ascii=False) + "\n")
            child.stdin.flush()
            line = child.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise AdapterProtocolError(f"adapter pipe failed: {exc}") from exc
        if not line:
            code = child.poll()
            raise AdapterProtocolError(f"adapter closed its output (exit code {code})")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AdapterProtocolError(f"malformed adapter response line: {line!r}") from exc
        if not isinstance(response, dict):
            raise AdapterProtocolError(f"adapter response is not an object: {response!r}")
        if "error" in response:
            raise AdapterProtocolError(f"adapter reported: {response['error']}")
        return response

    def train(self, data_path: Path | str) -> None:
        response = self._roundtrip({"op": "train", "data_path": str(data_path)})
        if response.get("ok") is not True:
            raise AdapterProtocolError(f"train not acknowledged: {response!r}")

    def predict(self, text: str) -> tuple[str, dict[str, float]]:
        response = self._roundtrip({"op": "predict", "text": text})
        label = response.get("label")
        scores = response.get("scores", {})
        if label not in self.vocabulary:
            raise AdapterProtocolError(f"adapter returned unknown label {label!r}")
        if not isinstance(scores, dict):
            raise AdapterProtocolError("adapter scores must be an object")
        for name in scores:
            if name not in self.vocabulary:
                raise AdapterProtocolError(f"adapter scored unknown label {name!r}")
        return label, {name: float(value) for name, value in scores.items()}

    def close(self) -> None:
        child = self._child
        if child.poll() is None:
            child.stdin.close()
            try:
                child.wait(timeout=5)
            except subprocess.TimeoutExpired:
                child.kill()
                child.wait()
        if child.returncode not in (0, None):
            raise AdapterProtocolError(f"adapter exited with code {child.returncode}")

    def __enter__(self) -> "ExternalClassifier":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
