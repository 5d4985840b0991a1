import json
import math

import pytest

from augloop.corpus import Post
from augloop.errors import ConflictError, MetricsError, NotFoundError, StateError
from augloop.qa import (
    AnnotationRecord,
    LabelVerdict,
    QAService,
    SyntheticVerdict,
    cohens_kappa,
    kappa_value,
    verdict_from_dict,
)

ACCEPT = {"fits_intent": True, "fluent": True, "non_repetitive": True}
REJECT = {"fits_intent": True, "fluent": False, "non_repetitive": True}
ROSTER = ("ann-a", "ann-b")


def make_synth(pid, label="cravings"):
    return Post(
        id=pid, text=f"synthetic text for {pid} about urges", source="synthetic",
        stage="qa_pending", label=label, seed_post_id="seed-1", prompt_id="pr-1",
    )


def make_real(pid):
    return Post(
        id=pid, text=f"real scraped text for {pid}", source="real",
        stage="qa_pending", origin_url="https://forum.example/t/1",
    )


def service_with(*posts, annotators=ROSTER, log_path=None):
    return QAService(posts, annotators, log_path=log_path)


def test_synthetic_verdict_is_conjunction():
    assert SyntheticVerdict(True, True, True).accept
    assert SyntheticVerdict(True, True, True).category == "accept"
    for idx in range(3):
        values = [True, True, True]
        values[idx] = False
        assert not SyntheticVerdict(*values).accept


def test_verdict_from_dict_dispatch():
    assert verdict_from_dict({"label": "cravings"}) == LabelVerdict("cravings")
    assert verdict_from_dict(ACCEPT) == SyntheticVerdict(True, True, True)
    with pytest.raises(ValueError, match="unrecognized verdict shape"):
        verdict_from_dict({"label": "cravings", "fluent": True})
    with pytest.raises(ValueError, match="must be a boolean"):
        verdict_from_dict({"fits_intent": 1, "fluent": True, "non_repetitive": True})


def test_two_accepts_finalize_qa_good():
    qa = service_with(make_synth("s1"))
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    assert qa.agreement_status("s1") == "pending_two"
    qa.submit_annotation("s1", "ann-b", ACCEPT)
    assert qa.agreement_status("s1") == "agreed"
    assert qa.post("s1").stage == "qa_good"
    assert qa.post("s1").label == "cravings"


def test_two_rejects_finalize_qa_rejected():
    qa = service_with(make_synth("s1"))
    qa.submit_annotation("s1", "ann-a", REJECT)
    qa.submit_annotation("s1", "ann-b", {"fits_intent": False, "fluent": True, "non_repetitive": True})
    # both reduce to reject, so the disagreement machinery never engages
    assert qa.agreement_status("s1") == "agreed"
    assert qa.post("s1").stage == "qa_rejected"


def test_label_mismatch_enters_disagreement():
    qa = service_with(make_real("r1"))
    assert qa.agreement_status("r1") == "pending_one"
    qa.submit_annotation("r1", "ann-a", {"label": "cravings"})
    qa.submit_annotation("r1", "ann-b", {"label": "health"})
    assert qa.agreement_status("r1") == "disagreed"
    assert qa.post("r1").stage == "qa_pending"


def test_real_post_agreement_sets_label():
    qa = service_with(make_real("r1"), make_real("r2"))
    qa.submit_annotation("r1", "ann-a", {"label": "cravings"})
    qa.submit_annotation("r1", "ann-b", {"label": "cravings"})
    assert qa.post("r1").stage == "qa_good"
    assert qa.post("r1").label == "cravings"
    # agreeing that no focal intent fits keeps the post out of augmentation
    qa.submit_annotation("r2", "ann-a", {"label": "NONE"})
    qa.submit_annotation("r2", "ann-b", {"label": "NONE"})
    assert qa.post("r2").stage == "qa_rejected"
    assert qa.post("r2").label == "NONE"


def test_submit_errors():
    qa = service_with(make_synth("s1"), annotators=("ann-a", "ann-b", "ann-c"))
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    with pytest.raises(StateError, match="not assigned"):
        qa.submit_annotation("s1", "ann-c", ACCEPT)
    with pytest.raises(StateError, match="open discussion"):
        qa.submit_annotation("s1", "ann-a", REJECT)
    with pytest.raises(NotFoundError):
        qa.submit_annotation("nope", "ann-a", ACCEPT)
    with pytest.raises(ValueError, match="three-criterion"):
        qa.submit_annotation("s1", "ann-b", {"label": "cravings"})
    qa.submit_annotation("s1", "ann-b", ACCEPT)
    with pytest.raises(StateError, match="finalized"):
        qa.submit_annotation("s1", "ann-b", ACCEPT)


def test_real_post_rejects_unknown_label_and_synthetic_verdict():
    qa = service_with(make_real("r1"))
    with pytest.raises(ValueError, match="unknown intent label"):
        qa.submit_annotation("r1", "ann-a", {"label": "vaping"})
    with pytest.raises(ValueError, match="intent label verdict"):
        qa.submit_annotation("r1", "ann-a", ACCEPT)


def test_discussion_round_reaching_agreement():
    qa = service_with(make_real("r1"))
    qa.submit_annotation("r1", "ann-a", {"label": "cravings"})
    qa.submit_annotation("r1", "ann-b", {"label": "health"})
    qa.open_discussion("r1")
    record = qa.revise_annotation("r1", "ann-b", {"label": "cravings"})
    assert record.revision == 2
    assert qa.agreement_status("r1") == "agreed"
    assert qa.post("r1").stage == "qa_good"
    assert qa.post("r1").label == "cravings"
    history = qa.annotations("r1")
    assert [r.revision for r in history] == [1, 1, 2]


def test_discussion_round_still_disagreeing_unlocks_adjudication():
    qa = service_with(make_synth("s1"))
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    qa.submit_annotation("s1", "ann-b", REJECT)
    qa.open_discussion("s1")
    qa.revise_annotation("s1", "ann-a", ACCEPT)  # sticks with the original call
    qa.revise_annotation("s1", "ann-b", REJECT)
    assert qa.agreement_status("s1") == "disagreed"
    assert [p.id for p in qa.adjudication_queue()] == ["s1"]
    record = qa.adjudicate("s1", "judge-1", ACCEPT, "fluent and on topic")
    assert record.rationale == "fluent and on topic"
    assert qa.agreement_status("s1") == "adjudicated"
    assert qa.post("s1").stage == "qa_good"


def test_adjudication_reject_path():
    qa = service_with(make_synth("s1"))
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    qa.submit_annotation("s1", "ann-b", REJECT)
    qa.open_discussion("s1")
    qa.adjudicate("s1", "judge-1", REJECT, "off-topic")
    assert qa.post("s1").stage == "qa_rejected"
    assert qa.adjudication("s1").rationale == "off-topic"


def test_discussion_errors():
    qa = service_with(make_synth("s1"), make_synth("s2"))
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    with pytest.raises(StateError, match="not in disagreement"):
        qa.open_discussion("s1")
    with pytest.raises(StateError, match="no open discussion"):
        qa.revise_annotation("s1", "ann-a", REJECT)
    qa.submit_annotation("s1", "ann-b", REJECT)
    qa.open_discussion("s1")
    with pytest.raises(StateError, match="already had its discussion round"):
        qa.open_discussion("s1")
    qa.revise_annotation("s1", "ann-a", ACCEPT)
    with pytest.raises(StateError, match="already revised"):
        qa.revise_annotation("s1", "ann-a", REJECT)
    # resolving the round closes revision access for the other annotator too
    qa.revise_annotation("s1", "ann-b", ACCEPT)
    assert qa.post("s1").stage == "qa_good"
    with pytest.raises(StateError, match="finalized"):
        qa.revise_annotation("s1", "ann-b", REJECT)


def test_adjudication_errors():
    qa = service_with(make_synth("s1"), make_synth("s2"))
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    qa.submit_annotation("s1", "ann-b", REJECT)
    with pytest.raises(StateError, match="discussion round before adjudication"):
        qa.adjudicate("s1", "judge-1", ACCEPT, "skip ahead")
    qa.open_discussion("s1")
    with pytest.raises(ValueError, match="must be independent"):
        qa.adjudicate("s1", "ann-a", ACCEPT, "self-serving")
    qa.adjudicate("s1", "judge-1", ACCEPT, "ok")
    with pytest.raises(StateError, match="finalized"):
        qa.adjudicate("s1", "judge-1", REJECT, "second thoughts")
    # an agreed post was finalized on the spot, so adjudication is impossible
    qa.submit_annotation("s2", "ann-a", ACCEPT)
    qa.submit_annotation("s2", "ann-b", ACCEPT)
    with pytest.raises(StateError, match="finalized"):
        qa.adjudicate("s2", "judge-1", REJECT, "never mind")


def test_annotator_blindness_before_both_submit():
    qa = service_with(make_synth("s1"))
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    assert [r.annotator_id for r in qa.visible_annotations("s1", "ann-a")] == ["ann-a"]
    assert qa.visible_annotations("s1", "ann-b") == ()
    qa.submit_annotation("s1", "ann-b", ACCEPT)
    assert {r.annotator_id for r in qa.visible_annotations("s1", "ann-b")} == {"ann-a", "ann-b"}


def test_round_robin_assignment_is_deterministic():
    posts = [make_synth(f"s{i}") for i in range(4)]
    qa = QAService(posts, ("a", "b", "c"))
    assert qa.assignment("s0") == ("a", "b")
    assert qa.assignment("s1") == ("c", "a")
    assert qa.assignment("s2") == ("b", "c")
    assert qa.assignment("s3") == ("a", "b")
    again = QAService(posts, ("a", "b", "c"))
    assert all(again.assignment(p.id) == qa.assignment(p.id) for p in posts)


def test_annotation_queue_tracks_work():
    qa = service_with(make_synth("s1"), make_synth("s2"))
    assert [p.id for p in qa.annotation_queue("ann-a")] == ["s1", "s2"]
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    assert [p.id for p in qa.annotation_queue("ann-a")] == ["s2"]
    assert [p.id for p in qa.annotation_queue("ann-b")] == ["s1", "s2"]
    qa.submit_annotation("s1", "ann-b", REJECT)
    qa.open_discussion("s1")
    # the open round puts the post back on both queues until each revises
    assert [p.id for p in qa.annotation_queue("ann-a")] == ["s1", "s2"]
    qa.revise_annotation("s1", "ann-a", ACCEPT)
    assert [p.id for p in qa.annotation_queue("ann-a")] == ["s2"]
    with pytest.raises(NotFoundError):
        qa.annotation_queue("ann-z")


def test_optimistic_versioning_conflicts():
    qa = service_with(make_synth("s1"))
    version = qa.post_version("s1")
    qa.submit_annotation("s1", "ann-a", ACCEPT, expected_version=version)
    with pytest.raises(ConflictError):
        qa.submit_annotation("s1", "ann-b", ACCEPT, expected_version=version)
    qa.submit_annotation("s1", "ann-b", REJECT, expected_version=qa.post_version("s1"))


def test_intake_validation():
    with pytest.raises(StateError, match="qa_pending"):
        service_with(make_synth("s1").with_stage("qa_good"))
    original = Post(id="o1", text="an original labeled post", source="original",
                    stage="qa_pending", label="cravings")
    with pytest.raises(StateError, match="synthetic and real"):
        service_with(original)
    with pytest.raises(ValueError, match="two annotators"):
        QAService([make_synth("s1")], ("solo",))
    with pytest.raises(ValueError, match="duplicate annotator"):
        QAService([make_synth("s1")], ("a", "a"))
    with pytest.raises(ValueError, match="duplicate post"):
        service_with(make_synth("s1"), make_synth("s1"))


def test_log_replay_reproduces_stages_and_bytes(tmp_path):
    posts = [make_synth("s1"), make_synth("s2"), make_real("r1"), make_real("r2")]
    log_a = tmp_path / "qa-a.jsonl"
    qa = QAService(posts, ROSTER, log_path=log_a)
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    qa.submit_annotation("s1", "ann-b", ACCEPT)
    qa.submit_annotation("s2", "ann-a", ACCEPT)
    qa.submit_annotation("s2", "ann-b", REJECT)
    qa.open_discussion("s2")
    qa.revise_annotation("s2", "ann-a", REJECT)
    qa.submit_annotation("r1", "ann-a", {"label": "cravings"})
    qa.submit_annotation("r1", "ann-b", {"label": "health"})
    qa.open_discussion("r1")
    qa.revise_annotation("r1", "ann-a", {"label": "cravings"})
    qa.revise_annotation("r1", "ann-b", {"label": "health"})
    qa.adjudicate("r1", "judge-1", {"label": "cravings"}, "clearly about urges")
    qa.submit_annotation("r2", "ann-a", {"label": "NONE"})

    log_b = tmp_path / "qa-b.jsonl"
    replayed = QAService.replay(posts, ROSTER, log_a, out_log_path=log_b)
    assert replayed.final_stages() == qa.final_stages()
    assert qa.final_stages() == {"r1": "qa_good", "r2": "qa_pending",
                                 "s1": "qa_good", "s2": "qa_rejected"}
    assert log_b.read_bytes() == log_a.read_bytes()
    assert replayed.adjudication("r1").rationale == "clearly about urges"
    assert [r.revision for r in replayed.annotations("r1")] == [1, 1, 2, 2]


def test_replay_rejects_bad_log(tmp_path):
    log = tmp_path / "qa.jsonl"
    log.write_text("not json\n")
    with pytest.raises(StateError, match="line 1: malformed"):
        QAService.replay([make_synth("s1")], ROSTER, log)
    log.write_text(json.dumps({"event": "mystery"}) + "\n")
    with pytest.raises(StateError, match="unknown event"):
        QAService.replay([make_synth("s1")], ROSTER, log)


def test_kappa_formula_values():
    assert kappa_value(0.8, 0.5) == pytest.approx(0.6)
    assert kappa_value(1.0, 1.0) == 1.0
    assert math.isnan(kappa_value(0.5, 1.0))
    assert cohens_kappa([("accept", "accept")] * 10) == 1.0
    with pytest.raises(MetricsError, match="at least one"):
        cohens_kappa([])


def test_kappa_contingency_golden():
    # hand-computed from the 2x2 table [[40, 10], [5, 45]] over 100 posts:
    # p_o = 0.85; marginals 0.5/0.5 and 0.45/0.55 give p_e = 0.5; kappa = 0.7
    pairs = (
        [("accept", "accept")] * 40
        + [("accept", "reject")] * 10
        + [("reject", "accept")] * 5
        + [("reject", "reject")] * 45
    )
    assert cohens_kappa(pairs) == pytest.approx(0.7)


def test_service_kappa_uses_first_pass_verdicts():
    qa = service_with(make_synth("s1"), make_synth("s2"))
    qa.submit_annotation("s1", "ann-a", ACCEPT)
    qa.submit_annotation("s1", "ann-b", ACCEPT)
    qa.submit_annotation("s2", "ann-a", ACCEPT)
    qa.submit_annotation("s2", "ann-b", REJECT)
    qa.open_discussion("s2")
    qa.revise_annotation("s2", "ann-a", REJECT)  # agreement after discussion
    assert qa.post("s2").stage == "qa_rejected"
    # revision 2 does not rewrite the independent first-pass statistics
    assert qa.first_pass_pairs() == [("accept", "accept"), ("accept", "reject")]
    p_o, p_e = 0.5, (1.0 * 0.5 + 0.0 * 0.5)
    assert qa.cohens_kappa() == pytest.approx((p_o - p_e) / (1 - p_e))


def test_annotation_record_validates_revision():
    with pytest.raises(ValueError, match="revision"):
        AnnotationRecord("p", "a", SyntheticVerdict(True, True, True), "2024-01-01T00:00:00Z", 0)
