import json
import logging
import random
from pathlib import Path

import pytest

from augloop.corpus import Post
from augloop.errors import IngestError
from augloop.ingest import (
    CleanReport,
    CleanRules,
    Fetcher,
    RawForumPost,
    SelectorConfig,
    clean,
    clean_batch,
    dedup,
    hash_author,
    ingest_dump,
    load_spam_phrases,
    normalize_text,
    parse_forum_dump,
)
from augloop.synthgen import brute_force_near_duplicates, jaccard, token_shingles

DATA_DIR = Path(__file__).parent / "data"
FETCHED = "2024-03-01T12:00:00Z"


def raw(text, url="https://forum.example/p/1", author="someone"):
    return RawForumPost(origin_url=url, author_hash=hash_author(author),
                        raw_html_or_text=text, fetched_at=FETCHED)


# -- normalization ---------------------------------------------------------------


def test_normalize_entity_and_whitespace_rules():
    assert normalize_text("I&amp;nbsp;quit!!  ") == "I quit!!"
    assert normalize_text("I&nbsp;quit!!") == "I quit!!"


def test_normalize_strips_markup():
    assert normalize_text("<b>day 3</b> smoke free") == "day 3 smoke free"
    assert normalize_text("first<br/>second") == "first second"


def test_normalize_preserves_case_and_punctuation():
    assert normalize_text("Day 10 on the Patch!") == "Day 10 on the Patch!"


def test_normalize_drops_control_characters():
    assert normalize_text("quit\x00 day\x1b one​!") == "quit day one!"


def test_normalize_is_idempotent():
    cases = [
        "I&amp;nbsp;quit!!  ",
        "<b>day 3</b> smoke free",
        "already clean text",
        "&amp;amp;lt;b&amp;amp;gt;nested&amp;amp;lt;/b&amp;amp;gt;",
        "tabs\tand\nnewlines",
    ]
    rng = random.Random(99)
    pieces = ["&amp;", "<i>", "</i>", "word", "  ", "\x07", "day&nbsp;3", "<", ">"]
    cases += ["".join(rng.choice(pieces) for _ in range(12)) for _ in range(50)]
    for case in cases:
        once = normalize_text(case)
        assert normalize_text(once) == once


# -- cleaning -----------------------------------------------------------------------


def test_clean_rejects_short_posts():
    result = clean(raw("thanks"))
    assert not result.kept and result.reason == "incomplete"
    assert clean(raw("<p>thanks a lot!</p>")).kept  # 3 tokens after normalization


def test_clean_rejects_link_spam_by_density():
    text = ("https://sale.example/a https://sale.example/b https://sale.example/c "
            "great deals折")
    assert clean(raw(text)).reason == "spam"


def test_clean_rejects_blocklisted_phrases():
    assert "miracle cure" in load_spam_phrases()
    result = clean(raw("This Miracle Cure got me off cigarettes in one day, honest"))
    assert result.reason == "spam"


def test_clean_rejects_non_english():
    text = "dejar tabaco fumar ganas caminar respirar hondo agua chicle paciencia"
    assert clean(raw(text)).reason == "non_english"


def test_clean_keeps_good_post_unlabeled():
    result = clean(raw("Day 10 on the <b>patch</b>, cravings are fading"))
    assert result.kept
    post = result.post
    assert post.text == "Day 10 on the patch, cravings are fading"
    assert post.source == "real" and post.stage == "cleaned"
    assert post.label is None
    assert post.origin_url == "https://forum.example/p/1"
    assert post.created_at == FETCHED
    assert post.id.startswith("real-")
    # same content hashes to the same id, so ids are order-independent
    assert clean(raw("Day 10 on the <b>patch</b>, cravings are fading")).post.id == post.id


def test_clean_url_density_boundary():
    # 1 url over 4 tokens = 0.25 <= 0.3 passes; 2 over 4 = 0.5 rejects
    ok = "quitting resources here https://help.example"
    assert clean(raw(ok)).kept
    bad = "deals here https://a.example https://b.example"
    assert clean(raw(bad)).reason == "spam"


def test_clean_batch_report_totals():
    raws = [
        raw("Day 10 on the patch, cravings are fading", url="u1"),
        raw("thanks", url="u2"),
        raw("Buy now at https://a.example https://b.example https://c.example today", url="u3"),
        raw("Day 10 on the patch, cravings are fading", url="u1"),  # exact re-scrape
    ]
    posts, report = clean_batch(raws)
    assert [p.origin_url for p in posts] == ["u1"]
    assert report.input_count == 4 and report.kept_count == 1
    assert report.rejected == {"incomplete": 1, "non_english": 0, "spam": 1, "duplicate": 1}


def test_clean_report_invariants():
    with pytest.raises(ValueError, match="total the input"):
        CleanReport(3, 1, {"spam": 1})
    with pytest.raises(ValueError, match="unknown rejection reason"):
        CleanReport(1, 0, {"boring": 1})
    with pytest.raises(ValueError, match="non-negative"):
        CleanReport(1, 2, {"spam": -1})
    first = CleanReport(10, 6, {"incomplete": 3, "spam": 1})
    second = CleanReport(6, 5, {"duplicate": 1})
    chained = first.chain(second)
    assert chained.input_count == 10 and chained.kept_count == 5
    assert chained.rejected["duplicate"] == 1 and chained.rejected["incomplete"] == 3
    with pytest.raises(ValueError, match="cannot chain"):
        first.chain(CleanReport(4, 4, {}))
    assert chained.to_dict()["rejected"]["non_english"] == 0


def test_author_hashing_is_opaque_and_stable():
    assert hash_author("quitter_42") == hash_author("quitter_42")
    assert hash_author("quitter_42") != hash_author("night_owl")
    assert "quitter" not in hash_author("quitter_42")
    assert hash_author("quitter_42").startswith("a-")


# -- dedup -------------------------------------------------------------------------


def make_post(pid, text):
    return Post(id=pid, text=text, source="real", stage="cleaned",
                origin_url=f"https://forum.example/{pid}", created_at=FETCHED)


def test_dedup_exact_duplicates_keep_earliest_id():
    posts = [
        make_post("p2", "day one went fine for me"),
        make_post("p1", "day one went fine for me"),
        make_post("p3", "a completely different story about gum"),
    ]
    kept, report = dedup(posts)
    assert [p.id for p in kept] == ["p1", "p3"]
    assert report.rejected["duplicate"] == 1
    assert report.input_count == 3 and report.kept_count == 2


def test_dedup_all_distinct_keeps_everything():
    posts = [make_post(f"p{i}", f"unique story number {i} about quitting cold turkey") for i in range(10)]
    kept, report = dedup(posts)
    assert len(kept) == 10 and report.rejected["duplicate"] == 0


def _oracle_survivors(posts, threshold):
    ordered = sorted(posts, key=lambda p: p.id)
    alive = []
    for post in ordered:
        is_dup = any(
            jaccard(token_shingles(post.text), token_shingles(keeper.text)) >= threshold
            for keeper in alive
        )
        if not is_dup:
            alive.append(post)
    return {p.id for p in alive}


def test_dedup_matches_brute_force_oracle_and_ignores_order():
    rng = random.Random(4242)
    vocab = ("patch gum lozenge craving urge walk water coffee morning night "
             "email friend slip streak buddy diary milestone trigger calm proud").split()
    posts = []
    for i in range(185):
        words = rng.choices(vocab, k=rng.randint(8, 18))
        posts.append(make_post(f"b{i:03d}", " ".join(words)))
    for i in range(15):  # planted near-duplicates of existing posts
        victim = posts[rng.randrange(len(posts))]
        words = victim.text.split()
        words[-1] = "tweaked"
        posts.append(make_post(f"d{i:03d}", " ".join(words)))

    kept, report = dedup(posts, jaccard_threshold=0.9)
    kept_ids = {p.id for p in kept}
    assert kept_ids == _oracle_survivors(posts, 0.9)
    assert report.input_count == 200

    shuffled = posts[:]
    rng.shuffle(shuffled)
    kept_again, _ = dedup(shuffled, jaccard_threshold=0.9)
    assert {p.id for p in kept_again} == kept_ids
    assert [p.id for p in kept_again] == [p.id for p in kept]


def test_dedup_transitive_chains_keep_single_survivor():
    # a~b and b~c through shared shingles; survivor is the smallest id of the group
    base = [f"w{i}" for i in range(30)]
    variant_b = base[:]
    variant_b[0] = "changed"
    variant_c = base[:]
    variant_c[-1] = "changed"
    posts = [
        make_post("p1", " ".join(base)),
        make_post("p2", " ".join(variant_b)),
        make_post("p3", " ".join(variant_c)),
    ]
    kept, _ = dedup(posts, jaccard_threshold=0.85)
    assert [p.id for p in kept] == ["p1"]


# -- dump parsing -------------------------------------------------------------------


def test_parse_html_fixture_extracts_two_posts():
    posts = parse_forum_dump(DATA_DIR / "forum_dump.html", format="html",
                             selectors=SelectorConfig())
    assert len(posts) == 2
    assert normalize_text(posts[0].raw_html_or_text) == "Day 10 on the patch, cravings are fading."
    assert normalize_text(posts[1].raw_html_or_text) == (
        "Coffee without a cigarette still feels strange, but the urge passes quicker now."
    )
    assert posts[0].origin_url == "https://forum.example/threads/week-one/post/1"
    assert posts[0].author_hash == hash_author("quitter_42")
    assert posts[1].author_hash == hash_author("night_owl")


def test_parse_html_selector_matching_nothing_warns(caplog, tmp_path):
    page = tmp_path / "page.html"
    page.write_text("<html><body><div class='misc'>hello</div></body></html>")
    with caplog.at_level(logging.WARNING):
        posts = parse_forum_dump(page, format="html")
    assert posts == []
    assert any("no posts extracted" in rec.message for rec in caplog.records)


def test_parse_empty_file_warns(caplog, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with caplog.at_level(logging.WARNING):
        assert parse_forum_dump(empty, format="json_lines") == []
    assert any("no posts extracted" in rec.message for rec in caplog.records)


def test_parse_jsonl_dump(tmp_path):
    dump = tmp_path / "dump.jsonl"
    rows = [
        {"url": "https://forum.example/p/1", "author": "ann", "body": "Day 1 went ok for me"},
        {"url": "https://forum.example/p/2", "author": "bob", "body": "Day 2 was rough",
         "fetched_at": "2024-05-05T05:05:05Z"},
    ]
    dump.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    posts = parse_forum_dump(dump, format="jsonl")
    assert [p.origin_url for p in posts] == ["https://forum.example/p/1", "https://forum.example/p/2"]
    assert posts[0].author_hash == hash_author("ann")
    assert posts[1].fetched_at == "2024-05-05T05:05:05Z"


def test_parse_jsonl_error_reports_byte_offset(tmp_path):
    dump = tmp_path / "dump.jsonl"
    good = json.dumps({"url": "u", "author": "a", "body": "b"})
    dump.write_bytes((good + "\n{broken\n").encode())
    with pytest.raises(IngestError, match=f"byte {len(good) + 1}"):
        parse_forum_dump(dump, format="json_lines")
    dump.write_text(json.dumps({"url": "u", "author": "a"}) + "\n")
    with pytest.raises(IngestError, match="missing field 'body'"):
        parse_forum_dump(dump, format="json_lines")
    with pytest.raises(IngestError, match="unknown dump format"):
        parse_forum_dump(dump, format="csv")


def test_parse_rejects_non_utf8_with_offset(tmp_path):
    page = tmp_path / "latin.html"
    page.write_bytes(b"<html>caf\xe9</html>")
    with pytest.raises(IngestError, match="byte 9"):
        parse_forum_dump(page, format="html")


def test_ingest_dump_end_to_end(tmp_path):
    dump = tmp_path / "dump.jsonl"
    rows = [
        {"url": "https://forum.example/p/1", "author": "ann",
         "body": "Day 10 on the patch, cravings are fading"},
        {"url": "https://forum.example/p/2", "author": "bob",
         "body": "Day 10 on the patch, cravings are fading"},
        {"url": "https://forum.example/p/3", "author": "cal", "body": "ok"},
        {"url": "https://forum.example/p/4", "author": "dee",
         "body": "Coffee without a cigarette still feels strange to me"},
    ]
    dump.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    posts, report = ingest_dump(dump, format="jsonl")
    kept_urls = {p.origin_url for p in posts}
    # p/1 and p/2 carry the same text; the smaller content-hash id survives
    assert len(kept_urls & {"https://forum.example/p/1", "https://forum.example/p/2"}) == 1
    assert "https://forum.example/p/4" in kept_urls
    assert report.input_count == 4 and report.kept_count == 2
    assert report.rejected["incomplete"] == 1 and report.rejected["duplicate"] == 1
    assert all(p.label is None and p.stage == "cleaned" for p in posts)


def test_raw_forum_post_validation():
    with pytest.raises(ValueError, match="origin_url"):
        RawForumPost(origin_url="", author_hash="a-x", raw_html_or_text="t", fetched_at=FETCHED)
    with pytest.raises(ValueError):
        RawForumPost(origin_url="u", author_hash="a-x", raw_html_or_text="t", fetched_at="yesterday")


# -- fetcher ---------------------------------------------------------------------


class FakeResponse:
    def __init__(self, status_code=200, text="<html>ok</html>"):
        self.status_code = status_code
        self.text = text


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def get(self, url, timeout=None):
        self.calls.append(url)
        return self.responses.pop(0)


def test_fetcher_respects_allowlist():
    fetcher = Fetcher(["forum.example"], session=FakeSession([FakeResponse()]))
    with pytest.raises(IngestError, match="not on the fetch allowlist"):
        fetcher.fetch("https://evil.example/page")


def test_fetcher_rate_limits_sequential_requests():
    sleeps = []
    times = iter([0.0, 0.2])
    session = FakeSession([FakeResponse(), FakeResponse()])
    fetcher = Fetcher(
        ["forum.example"], min_interval=1.0, session=session,
        sleeper=sleeps.append, monotonic=lambda: next(times),
        timestamp=lambda: FETCHED,
    )
    first = fetcher.fetch("https://forum.example/a")
    second = fetcher.fetch("https://forum.example/b")
    assert sleeps == [pytest.approx(0.8)]
    assert first.fetched_at == FETCHED
    assert second.origin_url == "https://forum.example/b"
    assert session.calls == ["https://forum.example/a", "https://forum.example/b"]


def test_fetcher_rejects_error_status():
    fetcher = Fetcher(["forum.example"], session=FakeSession([FakeResponse(status_code=404)]),
                      timestamp=lambda: FETCHED)
    with pytest.raises(IngestError, match="returned status 404"):
        fetcher.fetch("https://forum.example/missing")
    with pytest.raises(ValueError, match="allowlist"):
        Fetcher([], session=FakeSession([]))
