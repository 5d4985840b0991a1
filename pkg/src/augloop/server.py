"""HTTP JSON API over screening queues, annotation queues, and finished runs.

One server process serves a workspace of completed runs plus, optionally,
one live screening session and one live annotation session.  Queue and
verdict bodies reuse the services' JSONL record shapes, so a recorded API
session doubles as an event log.  Errors always arrive as
``{"error": {"code": ..., "message": ...}}``; optimistic-version conflicts
and state-machine violations map to 409 so clients know to refetch.

Multiple annotators can work concurrently: the underlying services are
locked internally, and per-post versions let clients detect lost updates.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .corpus import Post
from .errors import ConfigError, ConflictError, NotFoundError, StateError
from .pipeline import REPORT_FORMATS, load_manifest, report
from .qa import QAService
from .screening import ScreeningService


class ApiError(Exception):
    """An error with a fixed HTTP status and a machine-readable code."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


def read_posts(path: Path | str) -> list[Post]:
    """Read bare post records from a JSONL file (no split sidecar, labels optional)."""
    posts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                posts.append(Post.from_record(json.loads(line)))
    return posts


class WorkbenchState:
    """Everything the handler can reach: runs on disk plus live sessions."""

    def __init__(
        self,
        workspace: Path | str,
        screening: Optional[ScreeningService] = None,
        qa: Optional[QAService] = None,
        token: Optional[str] = None,
        static_dir: Optional[Path | str] = None,
    ):
        self.workspace = Path(workspace)
        self.screening = screening
        self.qa = qa
        self.token = token
        self.static_dir = Path(static_dir) if static_dir else None
        self._lock = threading.Lock()

    def require_screening(self) -> ScreeningService:
        if self.screening is None:
            raise ApiError(404, "not_found", "this server has no screening session")
        return self.screening

    def require_qa(self) -> QAService:
        if self.qa is None:
            raise ApiError(404, "not_found", "this server has no annotation session")
        return self.qa


def _single(params: dict, name: str, default: Optional[str] = None) -> Optional[str]:
    values = params.get(name)
    if not values:
        return default
    return values[0]


def _int_param(params: dict, name: str, default: int) -> int:
    raw = _single(params, name)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ApiError(400, "bad_request", f"{name} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ApiError(400, "bad_request", f"{name} must be non-negative")
    return value


def _require_field(body: dict, name: str):
    if name not in body:
        raise ApiError(400, "bad_request", f"missing field {name!r}")
    return body[name]


class WorkbenchHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    # the ThreadingHTTPServer instance carries .state (see build_server)
    @property
    def state(self) -> WorkbenchState:
        return self.server.state  # type: ignore[attr-defined]

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass  # keep test output quiet; access logs are not this tool's job

    # -- plumbing ------------------------------------------------------------

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_raw(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_payload(self, status: int, code: str, message: str) -> None:
        self._send_json(status, {"error": {"code": code, "message": message}})

    def _check_auth(self) -> None:
        token = self.state.token
        if token is None:
            return
        header = self.headers.get("Authorization", "")
        if header != f"Bearer {token}":
            raise ApiError(401, "unauthorized", "missing or invalid bearer token")

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise ApiError(400, "bad_request", "request body must be a JSON object")
        try:
            body = json.loads(raw)
        except json.JSONDecodeError:
            raise ApiError(400, "bad_request", "request body is not valid JSON") from None
        if not isinstance(body, dict):
            raise ApiError(400, "bad_request", "request body must be a JSON object")
        return body

    def _dispatch(self, method: str) -> None:
        url = urlparse(self.path)
        segments = [part for part in url.path.split("/") if part]
        params = parse_qs(url.query)
        try:
            if segments[:1] == ["api"]:
                self._check_auth()
                self._route_api(method, segments[1:], params)
            elif method == "GET":
                self._serve_static(url.path)
            else:
                raise ApiError(404, "not_found", f"unknown route {url.path!r}")
        except ApiError as exc:
            self._send_error_payload(exc.status, exc.code, str(exc))
        except ConflictError as exc:
            self._send_error_payload(409, "version_conflict", str(exc))
        except NotFoundError as exc:
            self._send_error_payload(404, "not_found", str(exc))
        except StateError as exc:
            self._send_error_payload(409, "state_conflict", str(exc))
        except (ConfigError, ValueError) as exc:
            self._send_error_payload(400, "bad_request", str(exc))

    def do_GET(self) -> None:  # noqa: N802 - stdlib naming
        self._dispatch("GET")

    def do_POST(self) -> None:  # noqa: N802 - stdlib naming
        self._dispatch("POST")

    # -- API routes ------------------------------------------------------------

    def _route_api(self, method: str, segments: list[str], params: dict) -> None:
        route = (method, tuple(segments[:2]))
        if route == ("GET", ("queues", "screen")):
            return self._get_screen_queue(params)
        if route == ("POST", ("screen-decisions",)):
            return self._post_screen_decision()
        if route == ("GET", ("queues", "annotation")):
            return self._get_annotation_queue(params)
        if route == ("POST", ("annotations",)):
            return self._post_annotation()
        if route == ("GET", ("adjudication",)):
            return self._get_adjudication_queue()
        if route == ("POST", ("adjudications",)):
            return self._post_adjudication()
        if method == "GET" and len(segments) == 3 and segments[0] == "runs":
            run_id, leaf = segments[1], segments[2]
            if leaf == "manifest":
                return self._get_manifest(run_id)
            if leaf == "report":
                return self._get_report(run_id, params)
        raise ApiError(404, "not_found", f"unknown route /{'/'.join(['api', *segments])!s}")

    def _get_screen_queue(self, params: dict) -> None:
        service = self.state.require_screening()
        intent = _single(params, "intent")
        if not intent:
            raise ApiError(400, "bad_request", "the intent query parameter is required")
        offset = _int_param(params, "offset", 0)
        limit = _int_param(params, "limit", 50)
        pending = service.pending_count(intent)
        posts = service.screen_queue(intent, offset=offset, limit=limit)
        self._send_json(200, {
            "intent": intent,
            "offset": offset,
            "pending": pending,
            "posts": [post.to_record() for post in posts],
        })

    def _post_screen_decision(self) -> None:
        service = self.state.require_screening()
        body = self._read_body()
        post_id = _require_field(body, "post_id")
        verdicts = {name: _require_field(body, name)
                    for name in ("relevance", "completeness", "clarity")}
        reviewer = _require_field(body, "reviewer_id")
        decision = service.record_screen_decision(post_id, verdicts, reviewer)
        self._send_json(200, decision.to_record())

    def _get_annotation_queue(self, params: dict) -> None:
        service = self.state.require_qa()
        annotator = _single(params, "annotator")
        if not annotator:
            raise ApiError(400, "bad_request", "the annotator query parameter is required")
        entries = []
        for post in service.annotation_queue(annotator):
            entries.append({
                "post": post.to_record(),
                "version": service.post_version(post.id),
                "status": service.agreement_status(post.id),
                "visible_annotations": [
                    record.to_record()
                    for record in service.visible_annotations(post.id, annotator)
                ],
            })
        self._send_json(200, {"annotator": annotator, "posts": entries})

    def _post_annotation(self) -> None:
        service = self.state.require_qa()
        body = self._read_body()
        post_id = _require_field(body, "post_id")
        annotator_id = _require_field(body, "annotator_id")
        verdict = _require_field(body, "verdict")
        expected_version = body.get("expected_version")

        already = any(record.annotator_id == annotator_id
                      for record in service.annotations(post_id))
        discussion = service.discussion(post_id)
        revising = (already and discussion is not None and not discussion.resolved
                    and annotator_id not in discussion.revised_by)
        if revising:
            record = service.revise_annotation(post_id, annotator_id, verdict,
                                               expected_version=expected_version)
        else:
            record = service.submit_annotation(post_id, annotator_id, verdict,
                                               expected_version=expected_version)
        # a fresh disagreement opens the single discussion round right away
        if service.agreement_status(post_id) == "disagreed" and service.discussion(post_id) is None:
            service.open_discussion(post_id)
        self._send_json(200, {
            "annotation": record.to_record(),
            "status": service.agreement_status(post_id),
            "version": service.post_version(post_id),
        })

    def _get_adjudication_queue(self) -> None:
        service = self.state.require_qa()
        entries = []
        for post in service.adjudication_queue():
            pair = service.assignment(post.id)
            latest = {}
            for record in service.annotations(post.id):
                latest[record.annotator_id] = record
            entries.append({
                "post": post.to_record(),
                "version": service.post_version(post.id),
                "assigned": list(pair),
                "annotations": [latest[annotator].to_record()
                                for annotator in pair if annotator in latest],
            })
        self._send_json(200, {"posts": entries})

    def _post_adjudication(self) -> None:
        service = self.state.require_qa()
        body = self._read_body()
        record = service.adjudicate(
            _require_field(body, "post_id"),
            _require_field(body, "judge_id"),
            _require_field(body, "verdict"),
            _require_field(body, "rationale"),
            expected_version=body.get("expected_version"),
        )
        final_stage = service.post(record.post_id).stage
        self._send_json(200, {"adjudication": record.to_record(), "final_stage": final_stage})

    def _get_manifest(self, run_id: str) -> None:
        manifest = load_manifest(self.state.workspace, run_id)
        self._send_json(200, manifest.to_dict())

    def _get_report(self, run_id: str, params: dict) -> None:
        format = _single(params, "format", "text")
        if format not in REPORT_FORMATS:
            raise ApiError(400, "bad_request",
                           f"format must be one of {REPORT_FORMATS}, got {format!r}")
        rendered = report(self.state.workspace, run_id, format)
        content_type = {
            "text": "text/plain; charset=utf-8",
            "csv": "text/csv; charset=utf-8",
            "json": "application/json",
        }[format]
        self._send_raw(200, rendered.encode("utf-8"), content_type)

    # -- static files (the annotation UI) ----------------------------------------

    def _serve_static(self, path: str) -> None:
        root = self.state.static_dir
        if root is None:
            raise ApiError(404, "not_found", f"unknown route {path!r}")
        relative = path.lstrip("/") or "index.html"
        target = (root / relative).resolve()
        if not target.is_relative_to(root.resolve()):
            raise ApiError(404, "not_found", "path escapes the static root")
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            raise ApiError(404, "not_found", f"no such file {path!r}")
        content_type = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        if content_type.startswith("text/") or content_type in ("application/javascript", "application/json"):
            content_type += "; charset=utf-8"
        self._send_raw(200, target.read_bytes(), content_type)


def build_server(state: WorkbenchState, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Create a ready-to-run server; port 0 picks a free port."""
    server = ThreadingHTTPServer((host, port), WorkbenchHandler)
    server.state = state  # type: ignore[attr-defined]
    return server


def serve(state: WorkbenchState, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Serve until interrupted."""
    server = build_server(state, host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
