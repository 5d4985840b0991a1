import json
import sys
import textwrap

import numpy as np
import pytest

from augloop.classifier import (
    ClassifierModel,
    ExternalClassifier,
    TrainConfig,
    build_vocabulary,
    featurize,
    ngrams,
    normalize_and_tokenize,
    softmax_xent_loss_and_grad,
    train,
)
from augloop.corpus import IntentVocabulary, LabeledDataset, Post, save_dataset
from augloop.errors import AdapterProtocolError, TrainingError


def test_tokenizer_lowercases_and_strips_punctuation():
    assert normalize_and_tokenize("I QUIT smoking, day 3!") == ["i", "quit", "smoking", "day", "3"]
    assert normalize_and_tokenize("don't") == ["don", "t"]
    assert normalize_and_tokenize("") == []
    # NFC: decomposed accent equals the composed form
    assert normalize_and_tokenize("café") == normalize_and_tokenize("café")


def test_ngrams_unigrams_plus_bigrams():
    assert ngrams(["a", "b", "c"], 2) == ["a", "b", "c", "a b", "b c"]
    assert ngrams(["a"], 2) == ["a"]
    assert ngrams([], 2) == []


def test_build_vocabulary_applies_min_freq_and_sorts():
    texts = ["quit smoking now", "quit smoking today", "rare words"]
    vocab = build_vocabulary(texts, ngram_max=2, min_freq=2)
    assert set(vocab) == {"quit", "smoking", "quit smoking"}
    assert list(vocab) == sorted(vocab)
    assert list(vocab.values()) == list(range(len(vocab)))


def test_featurize_counts_and_ignores_oov():
    vocab = {"quit": 0, "quit smoking": 1}
    vector = featurize(["quit", "smoking", "quit", "smoking"], vocab, 2)
    assert vector == {0: 2, 1: 2}
    assert featurize(["unrelated"], vocab, 2) == {}


def test_gradient_matches_central_finite_differences():
    # random 3-class, 5-feature instances; relative error < 1e-4
    rng = np.random.default_rng(12345)
    for _ in range(3):
        weights = rng.normal(size=(3, 5))
        bias = rng.normal(size=3)
        features = rng.integers(0, 4, size=(8, 5)).astype(float)
        targets = rng.integers(0, 3, size=8)
        loss, grad_w, grad_b = softmax_xent_loss_and_grad(weights, bias, features, targets, l2=1e-3)
        h = 1e-6
        for index in np.ndindex(weights.shape):
            bumped = weights.copy()
            bumped[index] += h
            up, _, _ = softmax_xent_loss_and_grad(bumped, bias, features, targets, l2=1e-3)
            bumped[index] -= 2 * h
            down, _, _ = softmax_xent_loss_and_grad(bumped, bias, features, targets, l2=1e-3)
            numeric = (up - down) / (2 * h)
            assert abs(grad_w[index] - numeric) <= 1e-4 * max(1.0, abs(numeric))
        for j in range(3):
            bumped = bias.copy()
            bumped[j] += h
            up, _, _ = softmax_xent_loss_and_grad(weights, bumped, features, targets, l2=1e-3)
            bumped[j] -= 2 * h
            down, _, _ = softmax_xent_loss_and_grad(weights, bumped, features, targets, l2=1e-3)
            numeric = (up - down) / (2 * h)
            assert abs(grad_b[j] - numeric) <= 1e-4 * max(1.0, abs(numeric))


def test_sparse_and_dense_loss_agree():
    from scipy import sparse

    rng = np.random.default_rng(7)
    weights = rng.normal(size=(3, 6))
    bias = rng.normal(size=3)
    dense = rng.integers(0, 3, size=(5, 6)).astype(float)
    targets = rng.integers(0, 3, size=5)
    l_dense, gw_dense, gb_dense = softmax_xent_loss_and_grad(weights, bias, dense, targets, 1e-4)
    l_sparse, gw_sparse, gb_sparse = softmax_xent_loss_and_grad(
        weights, bias, sparse.csr_matrix(dense), targets, 1e-4
    )
    assert l_dense == pytest.approx(l_sparse, abs=1e-12)
    np.testing.assert_allclose(gw_dense, gw_sparse, atol=1e-12)
    np.testing.assert_allclose(gb_dense, gb_sparse, atol=1e-12)


def _toy_dataset():
    rows = [
        ("cravings", "the craving hits hard after meals"),
        ("cravings", "craving a smoke when i drink coffee"),
        ("cravings", "walking helps when a craving strikes"),
        ("cravings", "sugar free gum beats the craving"),
        ("stress", "work stress makes me want to light up"),
        ("stress", "so much stress since monday"),
        ("stress", "stress at home is my main trigger"),
        ("stress", "deep breathing lowers my stress"),
        ("smokefree", "three weeks smoke free today"),
        ("smokefree", "finally smoke free and proud"),
        ("smokefree", "day ten smoke free milestone"),
        ("smokefree", "smoke free since new year"),
    ]
    posts = [
        Post(id=f"t{i:02d}", text=text, source="original", stage="raw", label=label)
        for i, (label, text) in enumerate(rows)
    ]
    return LabeledDataset(posts)


def test_training_separates_the_toy_set():
    dataset = _toy_dataset()
    model = train(dataset, TrainConfig(min_freq=1, epochs=30))
    for post in dataset.posts:
        label, scores = model.predict(post.text)
        assert label == post.label
        assert sum(scores.values()) == pytest.approx(1.0, abs=1e-9)
        assert set(scores) == set(model.classes)


def test_training_is_deterministic_byte_for_byte(tmp_path):
    dataset = _toy_dataset()
    first = train(dataset, TrainConfig(min_freq=1))
    second = train(dataset, TrainConfig(min_freq=1))
    assert first.to_json() == second.to_json()
    # and a different seed actually changes the fit
    third = train(dataset, TrainConfig(min_freq=1, seed=43))
    assert third.to_json() != first.to_json()

    path = tmp_path / "model.json"
    first.save(path)
    loaded = ClassifierModel.load(path)
    assert loaded.to_json() == first.to_json()
    text = "craving after coffee"
    assert loaded.predict(text) == first.predict(text)


def test_prediction_ties_break_to_smaller_label():
    model = ClassifierModel(
        vocabulary={"quit": 0},
        classes=("b_intent", "a_intent"),
        weights=np.zeros((2, 1)),
        bias=np.zeros(2),
        config=TrainConfig(),
    )
    label, scores = model.predict("quit")
    assert label == "a_intent"
    assert scores["a_intent"] == scores["b_intent"] == pytest.approx(0.5)


def test_empty_text_predicts_from_bias_alone():
    model = ClassifierModel(
        vocabulary={"quit": 0},
        classes=("a", "b"),
        weights=np.array([[5.0], [-5.0]]),
        bias=np.array([0.0, 2.0]),
        config=TrainConfig(),
    )
    label, scores = model.predict("")
    assert label == "b"
    assert scores["b"] > scores["a"]


def test_train_rejects_empty_and_single_class_data():
    with pytest.raises(TrainingError):
        train(LabeledDataset([]))
    single = LabeledDataset(
        [Post(id="a", text="x y", source="original", stage="raw", label="cravings")]
    )
    with pytest.raises(TrainingError, match="classes"):
        train(single)


ADAPTER_OK = textwrap.dedent("""
    import json, sys
    trained = False
    for line in sys.stdin:
        req = json.loads(line)
        if req["op"] == "train":
            trained = True
            print(json.dumps({"ok": True}), flush=True)
        elif req["op"] == "predict":
            text = req["text"].lower()
            label = "cravings" if "craving" in text else "NONE"
            print(json.dumps({"label": label, "scores": {label: 1.0}}), flush=True)
""")


def _write_adapter(tmp_path, body):
    script = tmp_path / "adapter.py"
    script.write_text(body)
    return [sys.executable, str(script)]


def test_external_adapter_round_trip(tmp_path):
    vocab = IntentVocabulary.default()
    data_path = tmp_path / "train.jsonl"
    save_dataset(
        LabeledDataset(
            [Post(id="a", text="craving hits", source="original", stage="raw", label="cravings"),
             Post(id="b", text="hello world", source="original", stage="raw", label="NONE")]
        ),
        data_path,
    )
    with ExternalClassifier(_write_adapter(tmp_path, ADAPTER_OK), vocab) as clf:
        clf.train(data_path)
        label, scores = clf.predict("the craving is strong")
        assert label == "cravings"
        assert scores == {"cravings": 1.0}
        label, _ = clf.predict("nice weather")
        assert label == "NONE"


def test_external_adapter_rejects_unknown_label(tmp_path):
    body = textwrap.dedent("""
        import json, sys
        for line in sys.stdin:
            print(json.dumps({"label": "mystery", "scores": {}}), flush=True)
    """)
    clf = ExternalClassifier(_write_adapter(tmp_path, body), IntentVocabulary.default())
    try:
        with pytest.raises(AdapterProtocolError, match="unknown label"):
            clf.predict("anything")
        with pytest.raises(AdapterProtocolError, match="unknown label"):
            clf.predict("still wrong")  # session stays usable after a bad response
    finally:
        clf._child.kill()
        clf._child.wait()


def test_external_adapter_detects_garbage_and_early_exit(tmp_path):
    garbage = _write_adapter(tmp_path, "import sys\nprint('not json'); sys.stdout.flush()\nsys.stdin.readline()\n")
    clf = ExternalClassifier(garbage, IntentVocabulary.default())
    try:
        with pytest.raises(AdapterProtocolError, match="malformed"):
            clf.predict("x")
    finally:
        clf._child.kill()
        clf._child.wait()

    quitter = _write_adapter(tmp_path, "raise SystemExit(0)")
    clf = ExternalClassifier(quitter, IntentVocabulary.default())
    with pytest.raises(AdapterProtocolError):
        clf.predict("x")
