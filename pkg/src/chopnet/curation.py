"""Local HTTP curation service for hand screening chopped tiles.

Serves one dataset directory (manifest plus tiles/) over a small JSON API
so a reviewer can page through tiles, flag impurity tiles, and export the
reject list that the dataset builder consumes. Every decision is appended
to a JSON Lines log, {dataset_dir}/curation.log, and the log is replayed
on startup with the latest decision per tile winning. The service never
rewrites tile pixels or the manifest file itself; rejection becomes
durable dataset state only when the exported list is fed back through
apply_reject_list.

This is a single-user local tool and binds to loopback by default.
"""

import json
import os
import threading
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import uvicorn
from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .dataset import MANIFEST_NAME, format_reject_list, load_manifest
from .errors import BadPagination, ManifestError, TileNotFound

LOG_NAME = "curation.log"
MAX_PAGE_LIMIT = 1000


class CurationStore:
    """In-memory manifest state plus the append-only decision log."""

    def __init__(self, dataset_dir):
        self.dataset_dir = Path(dataset_dir)
        manifest_path = self.dataset_dir / MANIFEST_NAME
        if not manifest_path.is_file():
            raise ManifestError(f"{manifest_path}: no dataset manifest found")
        self.manifest = load_manifest(manifest_path)
        self.tiles_dir = self.dataset_dir / "tiles"
        self.log_path = self.dataset_dir / LOG_NAME
        self.records = sorted(self.manifest.records, key=lambda r: r.tile_id)
        self.by_id = {r.tile_id: r for r in self.records}
        # decision writes are serialized; reads are lock-free snapshots
        self._write_lock = threading.Lock()
        self._replay_log()

    def _replay_log(self):
        if not self.log_path.exists():
            return
        with open(self.log_path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    tile_id = entry["tile_id"]
                    rejected = bool(entry["rejected"])
                except (ValueError, KeyError, TypeError):
                    # a torn final line from a crash must not brick the log
                    continue
                rec = self.by_id.get(tile_id)
                if rec is not None:
                    rec.rejected = rejected

    def list_tiles(self, offset, limit, label=None, rejected=None):
        if not 1 <= limit <= MAX_PAGE_LIMIT:
            raise BadPagination(
                f"limit must be in [1, {MAX_PAGE_LIMIT}], got {limit}")
        if offset < 0:
            raise BadPagination(f"offset must be >= 0, got {offset}")
        rows = self.records
        if label is not None:
            rows = [r for r in rows if r.label == label]
        if rejected is not None:
            rows = [r for r in rows if r.rejected == rejected]
        return rows[offset:offset + limit], len(rows)

    def decide(self, tile_id, rejected):
        with self._write_lock:
            rec = self.by_id.get(tile_id)
            if rec is None:
                raise TileNotFound(f"unknown tile id {tile_id!r}")
            entry = {
                "tile_id": tile_id,
                "rejected": bool(rejected),
                "timestamp": datetime.now(timezone.utc).isoformat(),
            }
            with open(self.log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry) + "\n")
                f.flush()
                os.fsync(f.fileno())
            rec.rejected = bool(rejected)
            return rec

    def image_bytes(self, tile_id):
        if tile_id not in self.by_id:
            raise TileNotFound(f"unknown tile id {tile_id!r}")
        path = self.tiles_dir / f"{tile_id}.png"
        if not path.is_file():
            raise TileNotFound(f"{tile_id}: tile image missing from "
                               f"{self.tiles_dir}")
        return path.read_bytes()

    def export_rejects(self):
        return format_reject_list(
            r.tile_id for r in self.records if r.rejected)


def tile_view(rec):
    """Record as served by the API; a rejected tile is outside both splits."""
    view = asdict(rec)
    if rec.rejected:
        view["split"] = "none"
    return view


class Decision(BaseModel):
    rejected: bool


def _error(status, name, message):
    return JSONResponse(status_code=status,
                        content={"error": name, "message": message})


def create_app(dataset_dir, ui_dir=None):
    """Build the FastAPI app over one dataset directory.

    ui_dir, when given, is a directory of static files mounted at / (the
    review front end); the JSON API lives under /api either way.
    """
    store = CurationStore(dataset_dir)
    app = FastAPI(title="chopnet curation", docs_url=None, redoc_url=None)
    app.state.store = store

    @app.exception_handler(TileNotFound)
    async def _not_found(request, exc):
        return _error(404, "TileNotFound", str(exc))

    @app.exception_handler(BadPagination)
    async def _bad_pagination(request, exc):
        return _error(400, "BadPagination", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request, exc):
        problems = "; ".join(
            ".".join(str(part) for part in err["loc"]) + ": " + err["msg"]
            for err in exc.errors())
        return _error(400, "BadRequest", problems)

    @app.get("/api/tiles")
    def list_tiles(offset: int = 0, limit: int = 100,
                   label: int | None = None, rejected: bool | None = None):
        page, total = store.list_tiles(offset, limit, label, rejected)
        return {"tiles": [tile_view(r) for r in page], "total": total,
                "offset": offset, "limit": limit}

    @app.get("/api/tiles/{tile_id}/image")
    def tile_image(tile_id: str):
        return Response(content=store.image_bytes(tile_id),
                        media_type="image/png")

    @app.post("/api/tiles/{tile_id}/decision")
    def post_decision(tile_id: str, body: Decision):
        return tile_view(store.decide(tile_id, body.rejected))

    @app.get("/api/export/rejects")
    def export_rejects():
        return PlainTextResponse(store.export_rejects())

    @app.get("/api/classes")
    def classes():
        return {"classes": [{"id": c.id, "name": c.name}
                            for c in store.manifest.classes]}

    if ui_dir is not None:
        # mounted last so /api routes keep precedence
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")
    else:
        @app.get("/")
        def index():
            return {"service": "chopnet curation",
                    "tiles": len(store.records)}

    return app


def run_server(dataset_dir, host="127.0.0.1", port=8000, ui_dir=None):
    """Blocking uvicorn run; returns after a clean shutdown (Ctrl-C)."""
    app = create_app(dataset_dir, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
