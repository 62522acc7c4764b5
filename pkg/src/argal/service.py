"""HTTP/JSON annotation service: the human-oracle side of the loop.

A session wraps one seeded :class:`~argal.engine.ActiveLearningRun`.  The
service serves the pending query batch, collects token labels, and when the
batch is fully labeled retrains in a background thread and queries the next
batch.  Gold labels are never exposed.  Because the session drives the exact
same stepper as the gold-oracle harness, an annotator who submits the gold
labels reproduces the simulated run point for point.

Endpoints::

    POST /sessions                  {"config": {...}}      -> {id, status}
    GET  /sessions/{id}/batch                              -> pending items
    POST /sessions/{id}/labels      {"id": .., "labels": [..]}
    GET  /sessions/{id}/status
    GET  /sessions/{id}/curve

Errors are JSON ``{"error": msg, "field": optional}`` with 400/404/409/422.
Sessions persist to disk after every transition and can be resumed after a
crash.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from argal.config import ConfigError, RunConfig
from argal.corpus import LABELS
from argal.engine import ActiveLearningRun, CurvePoint

AWAITING = "awaiting_labels"
TRAINING = "training"
IDLE = "idle"
FINISHED = "finished"
FAILED = "failed"


class ApiError(Exception):
    def __init__(self, status: int, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.field = field


class Session:
    """One annotation session; mutations are serialized by a lock."""

    def __init__(self, session_id: str, config: RunConfig, store_dir: Path | None):
        if config.oracle != "human":
            raise ApiError(400, "session config must set oracle = human", field="oracle")
        if len(config.seeds) != 1:
            raise ApiError(400, "a session runs exactly one seed", field="seeds")
        self.id = session_id
        self.config = config
        self.store_dir = store_dir
        self.lock = threading.Lock()
        self.status = IDLE
        self.error: str | None = None
        self.submitted: dict[str, list[str]] = {}
        data = config.build_data()
        self.run = ActiveLearningRun(data, config.run_spec(), config.seeds[0])

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        with self.lock:
            batch = self.run.initial_query()
            self.status = AWAITING
            self.submitted = {}
            self._persist()
        _ = batch

    def pending_items(self) -> dict:
        with self.lock:
            if self.status != AWAITING:
                raise ApiError(409, f"no batch available while {self.status}")
            assert self.run._pending is not None
            items = []
            for sid in self.run._pending.ids:
                sentence = self.run.items_by_id[sid].sentence
                items.append(
                    {
                        "id": sid,
                        "tokens": list(sentence.tokens),
                        "topic": sentence.topic,
                        "submitted": sid in self.submitted,
                    }
                )
            return {
                "episode": self.run.episode,
                "items": items,
                "remaining": len(items) - len(self.submitted),
            }

    def submit(self, sentence_id: str, labels: list[str]) -> dict:
        with self.lock:
            if self.status != AWAITING:
                raise ApiError(409, f"cannot submit labels while {self.status}")
            pending = self.run._pending
            assert pending is not None
            if sentence_id not in pending.ids:
                raise ApiError(404, f"sentence {sentence_id!r} is not in the pending batch", field="id")
            if sentence_id in self.submitted:
                raise ApiError(409, f"sentence {sentence_id!r} already labeled", field="id")
            sentence = self.run.items_by_id[sentence_id].sentence
            if len(labels) != len(sentence):
                raise ApiError(
                    422,
                    f"sentence {sentence_id!r} has {len(sentence)} tokens, got {len(labels)} labels",
                    field="labels",
                )
            bad = [lab for lab in labels if lab not in LABELS]
            if bad:
                raise ApiError(422, f"unknown label {bad[0]!r}", field="labels")
            self.submitted[sentence_id] = list(labels)
            remaining = len(pending.ids) - len(self.submitted)
            if remaining == 0:
                self.status = TRAINING
                self._persist()
                worker = threading.Thread(target=self._train_and_advance, daemon=True)
                worker.start()
            else:
                self._persist()
            return {"ok": True, "remaining": remaining}

    def _train_and_advance(self) -> None:
        try:
            with self.lock:
                labels = {sid: tuple(labs) for sid, labs in self.submitted.items()}
                self.run.apply_labels(labels)
                self.submitted = {}
            self.run.train_and_evaluate()
            with self.lock:
                if self.run.finished:
                    self.status = FINISHED
                else:
                    self.run.next_query()
                    self.status = AWAITING
                self._persist()
        except Exception as exc:  # surfaced via /status
            with self.lock:
                self.status = FAILED
                self.error = f"{type(exc).__name__}: {exc}"
                self._persist()

    def snapshot(self) -> dict:
        with self.lock:
            return {
                "id": self.id,
                "status": self.status,
                "episode": self.run.episode,
                "labeled": len(self.run.labeled),
                "unlabeled": len(self.run.unlabeled),
                "error": self.error,
                "curve": [self._point_json(p) for p in self.run.curve],
            }

    def curve_json(self) -> list[dict]:
        with self.lock:
            return [self._point_json(p) for p in self.run.curve]

    @staticmethod
    def _point_json(point: CurvePoint) -> dict:
        return {
            "labeled_count": point.labeled_count,
            "dev_macro_f1": point.dev_macro_f1,
            "epoch_seconds_mean": point.epoch_seconds_mean,
        }

    # -- persistence -------------------------------------------------------

    def _persist(self) -> None:
        if self.store_dir is None:
            return
        self.store_dir.mkdir(parents=True, exist_ok=True)
        run = self.run
        state = {
            "id": self.id,
            "status": self.status,
            "error": self.error,
            "config": self.config.raw_text,
            "labeled": run.labeled,
            "labels": {sid: list(labs) for sid, labs in run.labels.items()},
            "unlabeled": run.unlabeled,
            "episode": run.episode,
            "curve": [
                [p.labeled_count, p.dev_macro_f1, p.epoch_seconds_mean, p.epochs_run]
                for p in run.curve
            ],
            "pending": list(run._pending.ids) if run._pending is not None else None,
            "pending_strategy": run._pending.strategy if run._pending is not None else None,
            "submitted": self.submitted,
            "started": run._started,
            "rng_state": _jsonable(run.rng.bit_generator.state),
        }
        path = self.store_dir / f"session-{self.id}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(state), encoding="utf-8")
        tmp.replace(path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    return obj


def _unjsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _unjsonable(v) for k, v in obj.items()}
    return obj


def load_session(path: Path, base_dir: Path) -> Session:
    """Rebuild a persisted session; an interrupted training step reruns."""
    from argal.config import parse_config_text
    from argal.strategies import QueryBatch

    state = json.loads(path.read_text(encoding="utf-8"))
    config = RunConfig.from_values(
        parse_config_text(state["config"]), raw_text=state["config"], base_dir=base_dir
    )
    session = Session(state["id"], config, path.parent)
    run = session.run
    run.labeled = list(state["labeled"])
    run.labels = {sid: tuple(labs) for sid, labs in state["labels"].items()}
    run.unlabeled = list(state["unlabeled"])
    run.episode = int(state["episode"])
    run.curve = [CurvePoint(int(a), float(b), float(c), int(d)) for a, b, c, d in state["curve"]]
    run._started = bool(state["started"])
    run.rng.bit_generator.state = _unjsonable(state["rng_state"])
    if state["pending"] is not None:
        run._pending = QueryBatch(
            ids=tuple(state["pending"]),
            strategy=state.get("pending_strategy") or config.strategy,
            episode=run.episode,
        )
    session.submitted = {sid: list(labs) for sid, labs in state.get("submitted", {}).items()}
    session.status = state["status"]
    session.error = state.get("error")
    if session.status == TRAINING:
        worker = threading.Thread(target=session._train_and_advance, daemon=True)
        worker.start()
    return session


def create_app(
    base_config: RunConfig | None = None,
    base_dir: Path | None = None,
    static_dir: Path | None = None,
) -> FastAPI:
    """Build the service app; ``base_config`` seeds per-session defaults."""
    app = FastAPI(title="argal annotation service")
    sessions: dict[str, Session] = {}
    resolved_base = base_dir or Path.cwd()

    store_dir = None
    if base_config is not None and base_config.output is not None:
        store_dir = base_config.output
        if store_dir.exists():
            for path in sorted(store_dir.glob("session-*.json")):
                try:
                    session = load_session(path, resolved_base)
                    sessions[session.id] = session
                except Exception:
                    continue  # unreadable snapshots are skipped, not fatal

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        body = {"error": exc.message}
        if exc.field:
            body["field"] = exc.field
        return JSONResponse(status_code=exc.status, content=body)

    def _get_session(session_id: str) -> Session:
        if session_id not in sessions:
            raise ApiError(404, f"unknown session {session_id!r}", field="session")
        return sessions[session_id]

    @app.post("/sessions")
    async def create_session(payload: dict):
        overrides = payload.get("config", {}) if isinstance(payload, dict) else {}
        if not isinstance(overrides, dict):
            raise ApiError(400, "config must be an object", field="config")
        values: dict[str, str] = {}
        if base_config is not None and base_config.raw_text:
            from argal.config import parse_config_text

            values.update(parse_config_text(base_config.raw_text))
        values.update({str(k): str(v) for k, v in overrides.items()})
        try:
            config = RunConfig.from_values(values, raw_text=_render_values(values), base_dir=resolved_base)
        except ConfigError as exc:
            raise ApiError(400, str(exc), field=exc.field)
        session_id = uuid.uuid4().hex[:12]
        session = Session(session_id, config, store_dir)
        session.start()
        sessions[session_id] = session
        return {"id": session_id, "status": session.status}

    @app.get("/sessions/{session_id}/batch")
    async def get_batch(session_id: str):
        return _get_session(session_id).pending_items()

    @app.post("/sessions/{session_id}/labels")
    async def submit_labels(session_id: str, payload: dict):
        if not isinstance(payload, dict) or "id" not in payload or "labels" not in payload:
            raise ApiError(422, "payload needs 'id' and 'labels'", field="labels")
        labels = payload["labels"]
        if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
            raise ApiError(422, "labels must be a list of strings", field="labels")
        return _get_session(session_id).submit(str(payload["id"]), labels)

    @app.get("/sessions/{session_id}/status")
    async def get_status(session_id: str):
        return _get_session(session_id).snapshot()

    @app.get("/sessions/{session_id}/curve")
    async def get_curve(session_id: str):
        return _get_session(session_id).curve_json()

    if static_dir is not None and static_dir.exists():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def _render_values(values: dict[str, str]) -> str:
    return "\n".join(f"{k} = {v}" for k, v in sorted(values.items())) + "\n"
