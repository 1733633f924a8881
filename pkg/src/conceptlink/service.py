"""HTTP annotation service.

Wraps a model bundle in a small review workflow: projects hold documents,
annotators pull the next unreviewed document (with low-confidence mentions
flagged for attention), submit span-level verdicts, and export the
accumulated annotations in the interchange format the supervised trainer
consumes. Confirmed-correct feedback can update concept vectors online.

Projects and feedback live in sqlite; the model itself stays in memory
with explicit snapshot/rollback endpoints guarding online learning.
"""

from __future__ import annotations

import copy
import json
import logging
import sqlite3
import threading
from importlib import resources
from typing import Optional

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse

from .engine import ModelBundle, mention_record, text_hash
from .linker import EntityMention
from .trainer import NegativeSampler, TrainStats, _token_span_for, train_mention

log = logging.getLogger(__name__)

MAX_TEXT_BYTES = 1024 * 1024
AUTO_ACCEPT_CONFIDENCE = 0.9
EXPORT_SCHEMA_VERSION = 1

_SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS projects (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    name TEXT NOT NULL,
    concept_filter TEXT NOT NULL DEFAULT '[]',
    meta_tasks TEXT NOT NULL DEFAULT '[]',
    online_learning INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS documents (
    project_id INTEGER NOT NULL REFERENCES projects(id),
    doc_id TEXT NOT NULL,
    text TEXT NOT NULL,
    position INTEGER NOT NULL,
    PRIMARY KEY (project_id, doc_id)
);
CREATE TABLE IF NOT EXISTS feedback (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    project_id INTEGER NOT NULL,
    doc_id TEXT NOT NULL,
    annotator TEXT NOT NULL,
    start INTEGER NOT NULL,
    end INTEGER NOT NULL,
    cui TEXT NOT NULL,
    verdict TEXT NOT NULL,
    manually_added INTEGER NOT NULL DEFAULT 0,
    meta TEXT NOT NULL DEFAULT '{}',
    UNIQUE (project_id, doc_id, annotator, start, end)
);
"""

VALID_VERDICTS = ("correct", "incorrect", "killed")


def load_export_schema() -> dict:
    """The JSON Schema describing project exports."""
    text = (
        resources.files("conceptlink") / "schemas" / "annotation_export.schema.json"
    ).read_text()
    return json.loads(text)


class ServiceState:
    """Mutable service state: the model, its snapshot, and the database.

    A single lock serializes every model mutation and snapshot operation
    so concurrent feedback cannot interleave vector updates.
    """

    def __init__(self, bundle: Optional[ModelBundle], db_path: str = ":memory:",
                 seed: int = 0):
        self.bundle = bundle
        self.snapshot: Optional[ModelBundle] = None
        self.lock = threading.Lock()
        self.train_stats = TrainStats()
        self._sampler: Optional[NegativeSampler] = None
        self._sampler_seed = seed
        self.db = sqlite3.connect(db_path, check_same_thread=False)
        self.db.executescript(_SCHEMA_SQL)
        self.db.commit()

    @property
    def sampler(self) -> NegativeSampler:
        if self._sampler is None:
            self._sampler = NegativeSampler(self.bundle.vcb, seed=self._sampler_seed)
        return self._sampler

    def take_snapshot(self) -> None:
        with self.lock:
            self.snapshot = copy.deepcopy(self.bundle)

    def rollback(self) -> bool:
        with self.lock:
            if self.snapshot is None:
                return False
            self.bundle = copy.deepcopy(self.snapshot)
            self._sampler = None
            return True


def _service_mention(m: EntityMention) -> dict:
    rec = mention_record(m)
    if m.untrained or m.confidence < AUTO_ACCEPT_CONFIDENCE:
        rec["status"] = "needs_input"
    else:
        rec["status"] = "auto_accepted"
    rec["untrained"] = m.untrained
    return rec


def create_app(
    bundle: Optional[ModelBundle] = None,
    db_path: str = ":memory:",
    auth_tokens: Optional[set[str]] = None,
    seed: int = 0,
) -> FastAPI:
    """Build the service application around an in-memory model bundle.

    With ``auth_tokens`` set, every endpoint requires a matching static
    bearer token; otherwise the service is open (suitable for local use).
    """
    app = FastAPI(title="conceptlink annotation service")
    state = ServiceState(bundle, db_path=db_path, seed=seed)
    app.state.service = state

    def require_auth(request: Request) -> None:
        if not auth_tokens:
            return
        header = request.headers.get("authorization", "")
        token = header[7:] if header.lower().startswith("bearer ") else ""
        if token not in auth_tokens:
            raise HTTPException(status_code=401, detail="invalid or missing token")

    def require_model() -> ModelBundle:
        if state.bundle is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        return state.bundle

    def get_project(project_id: int) -> sqlite3.Row:
        row = state.db.execute(
            "SELECT id, name, concept_filter, meta_tasks, online_learning "
            "FROM projects WHERE id = ?",
            (project_id,),
        ).fetchone()
        if row is None:
            raise HTTPException(status_code=404, detail=f"no project {project_id}")
        return row

    @app.post("/api/annotate", dependencies=[Depends(require_auth)])
    async def annotate(request: Request):
        body = await request.body()
        if len(body) > MAX_TEXT_BYTES:
            raise HTTPException(status_code=413, detail="text too large")
        bundle_ = require_model()
        try:
            payload = json.loads(body)
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="body is not valid JSON")
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            raise HTTPException(status_code=400, detail="expected {'text': str}")
        text = payload["text"]
        doc_id = str(payload.get("doc_id", ""))
        with state.lock:
            mentions = bundle_.annotate(text, doc_id)
        return {
            "doc_id": doc_id,
            "text_hash": text_hash(text),
            "mentions": [mention_record(m) for m in mentions],
        }

    @app.post("/api/projects", status_code=201, dependencies=[Depends(require_auth)])
    async def create_project(request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="body is not valid JSON")
        name = payload.get("name")
        if not isinstance(name, str) or not name:
            raise HTTPException(status_code=422, detail="project name is required")
        cur = state.db.execute(
            "INSERT INTO projects (name, concept_filter, meta_tasks, online_learning) "
            "VALUES (?, ?, ?, ?)",
            (
                name,
                json.dumps(payload.get("concept_filter", [])),
                json.dumps(payload.get("meta_tasks", [])),
                1 if payload.get("online_learning") else 0,
            ),
        )
        project_id = cur.lastrowid
        for i, doc in enumerate(payload.get("documents", [])):
            state.db.execute(
                "INSERT INTO documents (project_id, doc_id, text, position) "
                "VALUES (?, ?, ?, ?)",
                (project_id, str(doc["doc_id"]), doc["text"], i),
            )
        state.db.commit()
        return {"id": project_id, "name": name}

    @app.get("/api/projects", dependencies=[Depends(require_auth)])
    def list_projects():
        rows = state.db.execute(
            "SELECT id, name, online_learning FROM projects ORDER BY id"
        ).fetchall()
        return [
            {"id": r[0], "name": r[1], "online_learning": bool(r[2])} for r in rows
        ]

    @app.post(
        "/api/projects/{project_id}/documents",
        status_code=201,
        dependencies=[Depends(require_auth)],
    )
    async def add_documents(project_id: int, request: Request):
        get_project(project_id)
        try:
            docs = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="body is not valid JSON")
        if not isinstance(docs, list):
            raise HTTPException(status_code=422, detail="expected a list of documents")
        (offset,) = state.db.execute(
            "SELECT COALESCE(MAX(position) + 1, 0) FROM documents WHERE project_id = ?",
            (project_id,),
        ).fetchone()
        added = 0
        for i, doc in enumerate(docs):
            if not isinstance(doc, dict) or "doc_id" not in doc or "text" not in doc:
                raise HTTPException(
                    status_code=422, detail="each document needs doc_id and text"
                )
            try:
                state.db.execute(
                    "INSERT INTO documents (project_id, doc_id, text, position) "
                    "VALUES (?, ?, ?, ?)",
                    (project_id, str(doc["doc_id"]), doc["text"], offset + i),
                )
            except sqlite3.IntegrityError:
                raise HTTPException(
                    status_code=409, detail=f"duplicate doc_id {doc['doc_id']}"
                )
            added += 1
        state.db.commit()
        return {"added": added}

    @app.get(
        "/api/projects/{project_id}/next_document",
        dependencies=[Depends(require_auth)],
    )
    def next_document(project_id: int, annotator: str):
        project = get_project(project_id)
        bundle_ = require_model()
        row = state.db.execute(
            "SELECT d.doc_id, d.text FROM documents d "
            "WHERE d.project_id = ? AND NOT EXISTS ("
            "  SELECT 1 FROM feedback f WHERE f.project_id = d.project_id "
            "  AND f.doc_id = d.doc_id AND f.annotator = ?"
            ") ORDER BY d.position LIMIT 1",
            (project_id, annotator),
        ).fetchone()
        if row is None:
            return Response(status_code=204)
        doc_id, text = row
        concept_filter = set(json.loads(project[2]))
        with state.lock:
            mentions = bundle_.annotate(text, doc_id)
        records = [
            _service_mention(m)
            for m in mentions
            if not concept_filter or m.linked_concept in concept_filter
        ]
        return {"doc_id": doc_id, "text": text, "mentions": records}

    @app.post(
        "/api/projects/{project_id}/feedback",
        dependencies=[Depends(require_auth)],
    )
    async def submit_feedback(project_id: int, request: Request):
        project = get_project(project_id)
        bundle_ = require_model()
        try:
            payload = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="body is not valid JSON")

        doc_row = state.db.execute(
            "SELECT text FROM documents WHERE project_id = ? AND doc_id = ?",
            (project_id, str(payload.get("doc_id"))),
        ).fetchone()
        if doc_row is None:
            raise HTTPException(
                status_code=404, detail=f"no document {payload.get('doc_id')}"
            )
        text = doc_row[0]

        verdict = payload.get("verdict")
        if verdict not in VALID_VERDICTS:
            raise HTTPException(
                status_code=422,
                detail=f"verdict must be one of {list(VALID_VERDICTS)}",
            )
        start, end = payload.get("start"), payload.get("end")
        if (
            not isinstance(start, int)
            or not isinstance(end, int)
            or start < 0
            or end <= start
            or end > len(text)
        ):
            raise HTTPException(status_code=422, detail="span out of bounds")
        cui = payload.get("cui")
        if not isinstance(cui, str) or not cui:
            raise HTTPException(status_code=422, detail="cui is required")
        meta = payload.get("meta", {})
        if not isinstance(meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
        ):
            raise HTTPException(status_code=422, detail="meta must map task to label")
        annotator = str(payload.get("annotator", ""))

        try:
            state.db.execute(
                "INSERT INTO feedback (project_id, doc_id, annotator, start, end, "
                "cui, verdict, manually_added, meta) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    project_id,
                    str(payload["doc_id"]),
                    annotator,
                    start,
                    end,
                    cui,
                    verdict,
                    1 if payload.get("manually_added") else 0,
                    json.dumps(meta, sort_keys=True),
                ),
            )
        except sqlite3.IntegrityError:
            raise HTTPException(
                status_code=409, detail="feedback for this span already recorded"
            )
        state.db.commit()

        trained = False
        online = bool(project[4])
        if online and verdict == "correct" and cui in bundle_.cdb.concepts:
            with state.lock:
                doc = bundle_.pipeline(text, str(payload["doc_id"]))
                span = _token_span_for(doc, start, end)
                if span is not None:
                    trained = train_mention(
                        cui, doc, span, bundle_.cdb, bundle_.vcb,
                        state.sampler, bundle_.config, state.train_stats,
                    )
        result = {"recorded": True, "trained": trained}
        if cui in (bundle_.cdb.concepts if bundle_ else {}):
            result["train_count"] = bundle_.cdb.concepts[cui].train_count
        return result

    @app.get(
        "/api/projects/{project_id}/export",
        dependencies=[Depends(require_auth)],
    )
    def export_project(project_id: int):
        project = get_project(project_id)
        documents = []
        doc_rows = state.db.execute(
            "SELECT doc_id, text FROM documents WHERE project_id = ? ORDER BY position",
            (project_id,),
        ).fetchall()
        for doc_id, text in doc_rows:
            rows = state.db.execute(
                "SELECT start, end, cui, verdict, manually_added, meta, annotator "
                "FROM feedback WHERE project_id = ? AND doc_id = ? "
                "ORDER BY start, end, cui",
                (project_id, doc_id),
            ).fetchall()
            annotations = [
                {
                    "start": r[0],
                    "end": r[1],
                    "cui": r[2],
                    "correct": r[3] == "correct",
                    "killed": r[3] == "killed",
                    "manually_added": bool(r[4]),
                    "meta": json.loads(r[5]),
                    "annotator": r[6],
                }
                for r in rows
            ]
            documents.append({"doc_id": doc_id, "text": text, "annotations": annotations})
        return {
            "schema_version": EXPORT_SCHEMA_VERSION,
            "projects": [
                {"id": project[0], "name": project[1], "documents": documents}
            ],
        }

    @app.get("/api/concepts", dependencies=[Depends(require_auth)])
    def search_concepts(q: str = "", limit: int = 20):
        bundle_ = require_model()
        needle = q.strip().lower()
        results = []
        for cui, record in bundle_.cdb.concepts.items():
            for name in record.names:
                if needle in name.raw.lower():
                    results.append({"cui": cui, "name": name.raw})
                    break
            if len(results) >= limit:
                break
        return results

    @app.post("/api/models/{action}", dependencies=[Depends(require_auth)])
    def model_action(action: str):
        bundle_ = require_model()
        if action == "snapshot":
            state.take_snapshot()
            return {"snapshot": True}
        if action == "rollback":
            if not state.rollback():
                raise HTTPException(status_code=409, detail="no snapshot to roll back to")
            return {"rolled_back": True}
        if action == "metrics":
            counts = {
                cui: rec.train_count
                for cui, rec in bundle_.cdb.concepts.items()
                if rec.train_count
            }
            return {
                "concepts": len(bundle_.cdb.concepts),
                "vocabulary_words": len(bundle_.vcb.entries),
                "trained_concepts": len(counts),
                "train_counts": counts,
                "online_mentions_trained": state.train_stats.mentions_trained,
                "has_snapshot": state.snapshot is not None,
            }
        raise HTTPException(status_code=404, detail=f"unknown action {action}")

    @app.exception_handler(Exception)
    async def unhandled(request: Request, exc: Exception):  # pragma: no cover
        log.exception("unhandled error on %s", request.url.path)
        return JSONResponse(status_code=500, content={"detail": "internal error"})

    return app
