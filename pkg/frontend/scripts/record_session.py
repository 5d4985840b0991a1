"""Record live HTTP sessions into tests/recorded_session.json.

Drives the real workbench server through realistic screening, annotation, and
adjudication sessions and captures every request/response pair. The UI tests
replay these exchanges through a fake fetch, so they exercise the exact wire
shapes the server produces, including a genuine 409 on a stale version and a
genuine 401 on a bad token.

Run from the frontend directory with the Python package installed:

    python3 scripts/record_session.py
"""

import json
import tempfile
import threading
from pathlib import Path

import requests

from augloop.corpus import Post
from augloop.qa import QAService
from augloop.screening import ScreeningService
from augloop.server import WorkbenchState, build_server

TOKEN = "demo-token"
BAD_TOKEN = "wrong-token"
OUT_PATH = Path(__file__).resolve().parent.parent / "tests" / "recorded_session.json"

ACCEPT = {"fits_intent": True, "fluent": True, "non_repetitive": True}
REJECT = {"fits_intent": False, "fluent": True, "non_repetitive": True}


def synthetic_post(number: int, text: str) -> Post:
    return Post(
        id=f"cand-{number:02d}",
        text=text,
        source="synthetic",
        stage="qa_pending",
        label="costs",
        seed_post_id=f"seed-{number:02d}",
        prompt_id="seed_question_v1",
        origin_url=None,
        created_at="2024-03-01T09:00:00Z",
    )


def raw_post(number: int, text: str) -> Post:
    return Post(
        id=f"pool-{number:02d}",
        text=text,
        source="original",
        stage="raw",
        label="costs",
        seed_post_id=None,
        prompt_id=None,
        origin_url=None,
        created_at="2024-03-01T08:00:00Z",
    )


QA_POSTS = [
    synthetic_post(1, "i added up what i spend on packs each month and the number scared me"),
    synthetic_post(2, "the money i save by not buying cigarettes goes into a jar for a trip"),
    synthetic_post(3, "prices went up again and that was the push i needed to quit for good"),
    synthetic_post(4, "quitting is great you should quit smoking because quitting is great"),
]

SCREEN_POSTS = [
    raw_post(1, "a pack costs more than my lunch now and i cannot keep paying for it"),
    raw_post(2, "i worked out the yearly cost of my habit and it is a whole vacation"),
    raw_post(3, "my partner showed me the bank statement and the smoking line item hurt"),
    raw_post(4, "the price rise this month made me count what i burn through in a week"),
    raw_post(5, "switching to the cheaper brand did not help my wallet at all in the end"),
    raw_post(6, "i keep a note of every pack i buy and the total this year is embarrassing"),
]


class Recorder:
    """requests wrapper that appends every exchange to the current section."""

    def __init__(self, base_url: str):
        self.base_url = base_url
        self.exchanges: list[dict] = []

    def call(self, method: str, path: str, body=None, token: str = TOKEN) -> dict:
        headers = {"Authorization": f"Bearer {token}"}
        response = requests.request(
            method, f"{self.base_url}{path}", json=body, headers=headers, timeout=10
        )
        payload = response.json()
        self.exchanges.append({
            "request": {"method": method, "path": path, "body": body},
            "response": {"status": response.status_code, "body": payload},
        })
        return payload

    def drain(self) -> list[dict]:
        taken, self.exchanges = self.exchanges, []
        return taken


def run_server(state: WorkbenchState):
    server = build_server(state, host="127.0.0.1", port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://127.0.0.1:{server.server_address[1]}"


def record_annotation_and_screen(workspace: Path) -> tuple[dict, dict, dict, dict]:
    qa = QAService(QA_POSTS, annotators=("ann-a", "ann-b"))
    screening = ScreeningService(SCREEN_POSTS, selected_intents=["costs"])
    state = WorkbenchState(workspace, screening=screening, qa=qa, token=TOKEN)
    server, base = run_server(state)
    recorder = Recorder(base)
    try:
        # ann-b rejected cand-04 before this session started
        qa.submit_annotation("cand-04", "ann-b", REJECT)

        queue_path = "/api/queues/annotation?annotator=ann-a"
        recorder.call("GET", queue_path)
        recorder.call("POST", "/api/annotations", {
            "post_id": "cand-01", "annotator_id": "ann-a",
            "verdict": ACCEPT, "expected_version": 0,
        })
        recorder.call("GET", queue_path)

        # ann-b gets to cand-02 first; ann-a's next write carries a stale version
        qa.submit_annotation("cand-02", "ann-b", ACCEPT)
        recorder.call("POST", "/api/annotations", {
            "post_id": "cand-02", "annotator_id": "ann-a",
            "verdict": ACCEPT, "expected_version": 0,
        })
        recorder.call("GET", queue_path)
        recorder.call("POST", "/api/annotations", {
            "post_id": "cand-02", "annotator_id": "ann-a",
            "verdict": ACCEPT, "expected_version": 1,
        })
        recorder.call("GET", queue_path)
        recorder.call("POST", "/api/annotations", {
            "post_id": "cand-03", "annotator_id": "ann-a",
            "verdict": ACCEPT, "expected_version": 0,
        })
        recorder.call("GET", queue_path)
        # disagreement with ann-b's early reject opens the discussion round
        recorder.call("POST", "/api/annotations", {
            "post_id": "cand-04", "annotator_id": "ann-a",
            "verdict": ACCEPT, "expected_version": 1,
        })
        recorder.call("GET", queue_path)
        # ann-a concedes in discussion; agreement finalizes the post
        recorder.call("POST", "/api/annotations", {
            "post_id": "cand-04", "annotator_id": "ann-a",
            "verdict": REJECT, "expected_version": 3,
        })
        recorder.call("GET", queue_path)
        annotation = {"identity": "ann-a", "exchanges": recorder.drain()}

        # every discussion above resolved, so the judge sees an empty queue
        recorder.call("GET", "/api/adjudication")
        adjudication_empty = {"identity": "judge-1", "exchanges": recorder.drain()}

        screen_query = "/api/queues/screen?intent=costs&offset={offset}&limit=50"
        recorder.call("GET", screen_query.format(offset=50))
        recorder.call("GET", screen_query.format(offset=0))
        recorder.call("POST", "/api/screen-decisions", {
            "post_id": "pool-01", "relevance": "pass", "completeness": "pass",
            "clarity": "pass", "reviewer_id": "rev-1",
        })
        recorder.call("GET", screen_query.format(offset=0))
        recorder.call("POST", "/api/screen-decisions", {
            "post_id": "pool-02", "relevance": "fail", "completeness": "pass",
            "clarity": "pass", "reviewer_id": "rev-1",
        })
        recorder.call("GET", screen_query.format(offset=0))
        screen = {"identity": "rev-1", "intent": "costs", "exchanges": recorder.drain()}

        recorder.call("GET", "/api/queues/annotation?annotator=ann-a", token=BAD_TOKEN)
        auth = {"identity": "ann-a", "exchanges": recorder.drain()}
    finally:
        server.shutdown()
    return annotation, adjudication_empty, screen, auth


def record_adjudication(workspace: Path) -> dict:
    post = synthetic_post(90, "the app says i saved three hundred dollars since my quit date")
    qa = QAService([post], annotators=("ann-a", "ann-b"))
    state = WorkbenchState(workspace, qa=qa, token=TOKEN)
    server, base = run_server(state)
    recorder = Recorder(base)
    try:
        # both verdicts in, discussion open, ann-a already revised without conceding
        qa.submit_annotation(post.id, "ann-a", ACCEPT)
        qa.submit_annotation(post.id, "ann-b", REJECT)
        qa.open_discussion(post.id)
        qa.revise_annotation(post.id, "ann-a", ACCEPT)

        recorder.call("GET", "/api/adjudication")
        # ann-b's closing revision lands while the judge is reading
        qa.revise_annotation(post.id, "ann-b", REJECT)
        recorder.call("POST", "/api/adjudications", {
            "post_id": post.id, "judge_id": "judge-1", "verdict": ACCEPT,
            "rationale": "seed clearly describes money saved; accept",
            "expected_version": 4,
        })
        recorder.call("GET", "/api/adjudication")
        recorder.call("POST", "/api/adjudications", {
            "post_id": post.id, "judge_id": "judge-1", "verdict": ACCEPT,
            "rationale": "seed clearly describes money saved; accept",
            "expected_version": 5,
        })
        recorder.call("GET", "/api/adjudication")
        return {"identity": "judge-1", "exchanges": recorder.drain()}
    finally:
        server.shutdown()


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        workspace = Path(tmp)
        annotation, adjudication_empty, screen, auth = record_annotation_and_screen(workspace)
        adjudication = record_adjudication(workspace)
    fixture = {
        "token": TOKEN,
        "sections": {
            "annotation": annotation,
            "adjudication_empty": adjudication_empty,
            "screen": screen,
            "auth": auth,
            "adjudication": adjudication,
        },
    }
    OUT_PATH.write_text(json.dumps(fixture, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    total = sum(len(section["exchanges"]) for section in fixture["sections"].values())
    print(f"recorded {total} exchanges into {OUT_PATH}")


if __name__ == "__main__":
    main()
