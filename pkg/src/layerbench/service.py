"""Annotation service: match serving, preference ingestion, quality review,
Passrate verdicts, and the leaderboard.

All ledger mutations funnel through one process-wide lock (single-writer
contract); every recorded outcome and verdict is appended to its log file and
flushed before the request returns, so a crash loses nothing. Model
identities are never exposed to annotators: a scheduled match shows previews
as "A" and "B" and the mapping stays server-side in the lease.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, Response
from filelock import FileLock, Timeout
from pydantic import BaseModel

from . import pngio
from .dataset import (
    DatasetManifest,
    discover_predictions,
    load_manifest,
    load_prediction_layer,
    quality_audit,
)
from .elo import (
    DEFAULT_LEASE_TTL,
    EloLedger,
    MatchRecord,
    Outcome,
    append_record,
    load_ledger,
    save_ledger,
)
from .errors import (
    DuplicateMatchId,
    LayerBenchError,
    NoComparableSamples,
    NotEnoughModels,
    StaleLease,
    UnknownModel,
)
from .layers import RgbaLayer, alpha_blend, render_checkerboard
from .metrics import PassVerdict, passrate_at_k

PREVIEW_CELL = 16

_OUTCOME_BY_VOTE = {"a": Outcome.A_WINS, "b": Outcome.B_WINS, "tie": Outcome.TIE}


class SessionRequest(BaseModel):
    annotator_id: str


class ResultRequest(BaseModel):
    token: str
    match_id: str
    outcome: str


class QualityRequest(BaseModel):
    token: str
    sample_id: str
    layer_id: str
    quality: str
    salient: bool | None = None
    occluded: bool | None = None


class PassrateRequest(BaseModel):
    token: str
    sample_id: str
    layer_id: str
    model_id: str
    k: int
    satisfied: bool


class AnnotationService:
    """All mutable state behind the HTTP API."""

    def __init__(
        self,
        manifest: DatasetManifest,
        pred_root: str | Path,
        ledger_path: str | Path,
        lease_ttl: float = DEFAULT_LEASE_TTL,
    ):
        self.manifest = manifest
        self.pred_root = Path(pred_root)
        self.ledger_path = Path(ledger_path)
        self.lease_ttl = float(lease_ttl)
        self.quality_path = Path(str(ledger_path) + ".quality.ndjson")
        self.passrate_path = Path(str(ledger_path) + ".passrate.ndjson")

        self._lock = threading.Lock()
        # thread_local=False: the HTTP worker that shuts down the app may not
        # be the thread that acquired the lock
        self._file_lock = FileLock(str(ledger_path) + ".lock", thread_local=False)
        try:
            self._file_lock.acquire(timeout=0)
        except Timeout as exc:
            raise LayerBenchError(f"ledger {ledger_path} is locked by another service") from exc

        if self.ledger_path.is_file():
            self.ledger = load_ledger(self.ledger_path)
        else:
            self.ledger = EloLedger()

        # prediction index: (model, sample, layer) -> ordered output paths
        self._pred_paths: dict[tuple[str, str, str], list[Path]] = {}
        if self.pred_root.is_dir():
            for model_dir in sorted(self.pred_root.iterdir()):
                if not model_dir.is_dir():
                    continue
                preds = discover_predictions(self.pred_root, model_dir.name, manifest)
                keys = {f"{s}/{l}" for s, l in preds.entries}
                self.ledger.register_model(model_dir.name, keys)
                for (sample_id, layer_id), paths in preds.entries.items():
                    self._pred_paths[(model_dir.name, sample_id, layer_id)] = paths
        save_ledger(self.ledger, self.ledger_path)

        self.sessions: dict[str, str] = {}
        self.quality_events: list[dict] = self._load_ndjson(self.quality_path)
        self.passrate_events: list[dict] = self._load_ndjson(self.passrate_path)
        self.leaderboard_version = len(self.ledger.history)
        self._schedule_seq = len(self.ledger.history)
        self._preview_cache: dict[tuple[str, str, str, int], bytes] = {}
        # match -> (model_a, model_b, sample key); outlives the lease so
        # preview URLs stay valid after a vote lands
        self._match_assignments: dict[str, tuple[str, str, str]] = {}

    @staticmethod
    def _load_ndjson(path: Path) -> list[dict]:
        if not path.is_file():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

    @staticmethod
    def _append_ndjson(path: Path, event: dict) -> None:
        with open(path, "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()

    def close(self) -> None:
        with self._lock:
            save_ledger(self.ledger, self.ledger_path)
        self._file_lock.release()

    # --- sessions ---

    def create_session(self, annotator_id: str) -> str:
        if not annotator_id:
            raise ValueError("annotator_id must be nonempty")
        token = secrets.token_hex(16)
        self.sessions[token] = annotator_id
        return token

    def annotator_for(self, token: str) -> str:
        try:
            return self.sessions[token]
        except KeyError:
            raise HTTPException(status_code=401, detail="invalid or expired token")

    # --- matches ---

    def next_match(self, annotator_id: str) -> dict:
        with self._lock:
            self._schedule_seq += 1
            lease = self.ledger.schedule_match(
                annotator_id,
                lease_ttl=self.lease_ttl,
                rng_seed=self._schedule_seq,
                now=time.time(),
            )
            self._match_assignments[lease.match_id] = (
                lease.model_a,
                lease.model_b,
                lease.sample_id,
            )
        sample_id, layer_id = lease.sample_id.split("/", 1)
        sample = self.manifest.sample(sample_id)
        layer = next(l for l in sample.layers if l.id == layer_id)
        return {
            "match_id": lease.match_id,
            "sample_id": lease.sample_id,
            "image_url": f"/api/asset/{sample.image_path}",
            "prompt": layer.prompts[0] if layer.prompts else None,
            "prompts": layer.prompts,
            "a": {"label": "A", "preview_url": f"/api/preview/match/{lease.match_id}/a"},
            "b": {"label": "B", "preview_url": f"/api/preview/match/{lease.match_id}/b"},
            "expires_at": lease.expires_at,
        }

    def record_result(self, annotator_id: str, match_id: str, vote: str) -> dict:
        outcome = _OUTCOME_BY_VOTE.get(vote)
        if outcome is None:
            raise HTTPException(status_code=422, detail=f"outcome must be a|b|tie, got {vote!r}")
        with self._lock:
            lease = self.ledger.pending.get(match_id)
            now = time.time()
            if lease is None or lease.expires_at < now:
                raise StaleLease(f"no active lease for match {match_id!r}")
            record = MatchRecord(
                match_id=match_id,
                model_a=lease.model_a,
                model_b=lease.model_b,
                sample_id=lease.sample_id,
                outcome=outcome,
                annotator_id=annotator_id,
                timestamp=now,
            )
            self.ledger.record_outcome(record, now=now)
            append_record(self.ledger_path, record)
            self.leaderboard_version += 1
            return {"ok": True, "new_leaderboard_version": self.leaderboard_version}

    # --- previews ---

    def _blend_preview(self, layer: RgbaLayer) -> bytes:
        board = render_checkerboard(layer.height, layer.width, cell=PREVIEW_CELL, jitter=0.0)
        return pngio.rgb_to_png_bytes(alpha_blend(layer, board))

    def preview_png(self, model_id: str, sample_id: str, layer_id: str, k: int) -> bytes:
        key = (model_id, sample_id, layer_id, k)
        if key not in self._preview_cache:
            sample = self.manifest.sample(sample_id)
            layer = next((l for l in sample.layers if l.id == layer_id), None)
            if layer is None:
                raise KeyError(layer_id)
            if model_id == "gt":
                loaded = self.manifest.load_layer(sample, layer)
            else:
                paths = self._pred_paths.get((model_id, sample_id, layer_id))
                if not paths or k >= len(paths):
                    raise KeyError(f"{model_id}/{sample_id}/{layer_id}_{k}")
                loaded = load_prediction_layer(paths[k], layer.kind)
            self._preview_cache[key] = self._blend_preview(loaded)
        return self._preview_cache[key]

    def match_preview_png(self, match_id: str, side: str) -> bytes:
        assignment = self._match_assignments.get(match_id)
        if assignment is None:
            raise KeyError(match_id)
        model_a, model_b, sample_key = assignment
        model_id = model_a if side == "a" else model_b
        sample_id, layer_id = sample_key.split("/", 1)
        return self.preview_png(model_id, sample_id, layer_id, 0)

    # --- quality & passrate ---

    def record_quality(self, annotator_id: str, req: QualityRequest) -> None:
        sample = self.manifest.sample(req.sample_id)  # KeyError -> 404
        if not any(l.id == req.layer_id for l in sample.layers):
            raise KeyError(req.layer_id)
        if req.quality not in ("good", "neutral", "poor"):
            raise HTTPException(status_code=422, detail=f"bad quality {req.quality!r}")
        event = {
            "annotator_id": annotator_id,
            "sample_id": req.sample_id,
            "layer_id": req.layer_id,
            "quality": req.quality,
            "salient": req.salient,
            "occluded": req.occluded,
            "timestamp": time.time(),
        }
        with self._lock:
            self.quality_events.append(event)
            self._append_ndjson(self.quality_path, event)

    def record_passrate(self, annotator_id: str, req: PassrateRequest) -> None:
        sample = self.manifest.sample(req.sample_id)
        if not any(l.id == req.layer_id for l in sample.layers):
            raise KeyError(req.layer_id)
        if req.k < 1:
            raise HTTPException(status_code=422, detail="k must be >= 1")
        event = {
            "annotator_id": annotator_id,
            "sample_id": req.sample_id,
            "layer_id": req.layer_id,
            "model_id": req.model_id,
            "k": req.k,
            "satisfied": req.satisfied,
            "timestamp": time.time(),
        }
        with self._lock:
            self.passrate_events.append(event)
            self._append_ndjson(self.passrate_path, event)

    def passrate_report(self, model_id: str, k: int) -> dict:
        verdicts = [
            PassVerdict(
                sample_id=f"{e['sample_id']}/{e['layer_id']}",
                k=e["k"],
                satisfied=e["satisfied"],
                annotator_id=e["annotator_id"],
            )
            for e in self.passrate_events
            if e["model_id"] == model_id
        ]
        rate = passrate_at_k(verdicts, k)  # NoVerdicts -> 404 via handler
        return {
            "model_id": model_id,
            "k": k,
            "passrate": rate,
            "n_samples": len({v.sample_id for v in verdicts if v.k == k}),
        }

    def quality_report(self) -> dict:
        """Quality tallies with submitted annotations overriding manifest labels."""
        latest: dict[tuple[str, str], dict] = {}
        for event in self.quality_events:
            latest[(event["sample_id"], event["layer_id"])] = event
        patched = DatasetManifest(
            version=self.manifest.version,
            samples=self.manifest.samples,
            root=self.manifest.root,
        )
        original = {}
        for sample in patched.samples:
            for layer in sample.layers:
                key = (sample.id, layer.id)
                original[key] = (layer.quality, layer.salient, layer.occluded)
                if key in latest:
                    layer.quality = latest[key]["quality"]
                    if latest[key]["salient"] is not None:
                        layer.salient = latest[key]["salient"]
                    if latest[key]["occluded"] is not None:
                        layer.occluded = latest[key]["occluded"]
        try:
            audit = quality_audit(patched)
        finally:
            for sample in patched.samples:
                for layer in sample.layers:
                    layer.quality, layer.salient, layer.occluded = original[(sample.id, layer.id)]
        return {"audit": audit, "n_annotations": len(self.quality_events)}


def create_app(
    manifest_path: str | Path,
    pred_root: str | Path,
    ledger_path: str | Path,
    lease_ttl: float = DEFAULT_LEASE_TTL,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    manifest = load_manifest(manifest_path)
    service = AnnotationService(manifest, pred_root, ledger_path, lease_ttl=lease_ttl)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        service.close()

    app = FastAPI(title="layerbench annotation service", lifespan=lifespan)
    app.state.service = service

    @app.exception_handler(LayerBenchError)
    def _domain_error(request: Request, exc: LayerBenchError):
        status = 400
        if isinstance(exc, (StaleLease, DuplicateMatchId)):
            status = 409
        elif isinstance(exc, (NotEnoughModels, NoComparableSamples)):
            status = 409
        elif isinstance(exc, UnknownModel):
            status = 404
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(KeyError)
    def _missing(request: Request, exc: KeyError):
        return JSONResponse(status_code=404, content={"error": "NotFound", "detail": str(exc)})

    @app.post("/api/session")
    def create_session(req: SessionRequest):
        return {"token": service.create_session(req.annotator_id)}

    @app.get("/api/match/next")
    def match_next(token: str = Query(...)):
        annotator = service.annotator_for(token)
        return service.next_match(annotator)

    @app.post("/api/match/result")
    def match_result(req: ResultRequest):
        annotator = service.annotator_for(req.token)
        return service.record_result(annotator, req.match_id, req.outcome)

    @app.get("/api/leaderboard")
    def leaderboard():
        return [
            {"model_id": m, "rating": rating, "matches": n}
            for m, rating, n in service.ledger.leaderboard()
        ]

    @app.get("/api/samples")
    def samples():
        return [
            {
                "id": s.id,
                "layers": [
                    {"id": l.id, "kind": l.kind.value, "prompts": l.prompts}
                    for l in s.layers
                ],
            }
            for s in service.manifest.samples
        ]

    @app.get("/api/sample/{sample_id}")
    def sample(sample_id: str):
        s = service.manifest.sample(sample_id)
        return {
            "id": s.id,
            "image_url": f"/api/asset/{s.image_path}",
            "background_url": (
                f"/api/asset/{s.background_path}" if s.background_path else None
            ),
            "layers": [
                {
                    "id": l.id,
                    "kind": l.kind.value,
                    "prompts": l.prompts,
                    "quality": l.quality,
                    "salient": l.salient,
                    "occluded": l.occluded,
                    "preview_url": f"/api/preview/gt/{s.id}/{l.id}",
                }
                for l in s.layers
            ],
        }

    @app.get("/api/asset/{rel_path:path}")
    def asset(rel_path: str):
        root = service.manifest.root.resolve()
        target = (root / rel_path).resolve()
        if root not in target.parents and target != root:
            raise HTTPException(status_code=403, detail="path escapes dataset root")
        if not target.is_file():
            raise HTTPException(status_code=404, detail=f"no asset {rel_path!r}")
        return Response(content=target.read_bytes(), media_type="image/png")

    @app.get("/api/preview/match/{match_id}/{side}")
    def preview_match(match_id: str, side: str):
        if side not in ("a", "b"):
            raise HTTPException(status_code=422, detail="side must be a or b")
        return Response(content=service.match_preview_png(match_id, side), media_type="image/png")

    @app.get("/api/preview/gt/{sample_id}/{layer_id}")
    def preview_gt(sample_id: str, layer_id: str):
        return Response(
            content=service.preview_png("gt", sample_id, layer_id, 0), media_type="image/png"
        )

    @app.get("/api/preview/pred/{model_id}/{sample_id}/{layer_id}/{k}")
    def preview_pred(model_id: str, sample_id: str, layer_id: str, k: int):
        return Response(
            content=service.preview_png(model_id, sample_id, layer_id, k),
            media_type="image/png",
        )

    @app.get("/api/predictions")
    def predictions():
        """Prediction coverage: model -> sample/layer -> number of outputs."""
        out: dict[str, dict[str, int]] = {}
        for (model_id, sample_id, layer_id), paths in service._pred_paths.items():
            out.setdefault(model_id, {})[f"{sample_id}/{layer_id}"] = len(paths)
        return out

    @app.post("/api/quality")
    def quality(req: QualityRequest):
        annotator = service.annotator_for(req.token)
        service.record_quality(annotator, req)
        return {"ok": True}

    @app.post("/api/passrate")
    def passrate(req: PassrateRequest):
        annotator = service.annotator_for(req.token)
        service.record_passrate(annotator, req)
        return {"ok": True}

    @app.get("/api/report/passrate")
    def report_passrate(model_id: str = Query(...), k: int = Query(...)):
        return service.passrate_report(model_id, k)

    @app.get("/api/report/quality")
    def report_quality():
        return service.quality_report()

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(
    manifest_path: str | Path,
    pred_root: str | Path,
    ledger_path: str | Path,
    port: int = 8000,
    lease_ttl: float = DEFAULT_LEASE_TTL,
    host: str = "127.0.0.1",
    ui_dir: str | Path | None = None,
) -> None:
    """Run the annotation service until interrupted."""
    import uvicorn

    app = create_app(manifest_path, pred_root, ledger_path, lease_ttl=lease_ttl, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)
