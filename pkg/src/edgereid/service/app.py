from __future__ import annotations

from fastapi import FastAPI, HTTPException, Request

from ..errors import IncompatibleFeatures, ReidError
from ..protocol import encode_message
from ..ranking import evaluate
from ..similarity import SimilarityConfig
from ..store import GalleryStore
from .models import (
    EvaluateRequest,
    Health,
    Hit,
    Message,
    QueryRequest,
    QueryResponse,
    Report,
    SubmitResponse,
)


def _http_error(exc: ReidError) -> HTTPException:
    status = 409 if isinstance(exc, IncompatibleFeatures) else 422
    return HTTPException(status_code=status, detail={"error": type(exc).__name__, "detail": str(exc)})


def create_app(
    store: GalleryStore, similarity: SimilarityConfig | None = None, top_k: int = 10
) -> FastAPI:
    similarity = similarity or SimilarityConfig()
    app = FastAPI(title="edgereid ranking service")

    @app.get("/health", response_model=Health)
    def health():
        digest = store.config_digest
        return Health(status="ok", gallery_size=len(store), config_digest=digest.hex() if digest else None)

    @app.post("/gallery", response_model=SubmitResponse)
    def submit(message: Message):
        try:
            return SubmitResponse(entry_id=store.append(encode_message(message.to_domain())))
        except ReidError as exc:
            raise _http_error(exc) from exc

    @app.post("/gallery/raw", response_model=SubmitResponse)
    async def submit_raw(request: Request):
        """Body is one binary FeatureMessage, as sent over TCP."""
        body = await request.body()
        try:
            return SubmitResponse(entry_id=store.append(body))
        except ReidError as exc:
            raise _http_error(exc) from exc

    @app.post("/query", response_model=QueryResponse)
    def query(req: QueryRequest):
        try:
            fv = req.message.to_domain().features
            ranked = store.query(fv, req.top_k or top_k, similarity)
        except ReidError as exc:
            raise _http_error(exc) from exc
        return QueryResponse(results=[Hit(entry_id=e, score=s) for e, s in ranked.entries])

    @app.post("/evaluate", response_model=Report)
    def evaluate_against_gallery(req: EvaluateRequest):
        try:
            queries = [(m.annotation.to_domain(), m.features.to_domain()) for m in req.queries]
            report = evaluate(queries, store.snapshot(), similarity)
        except ReidError as exc:
            raise _http_error(exc) from exc
        return Report(**report.to_dict())

    return app
