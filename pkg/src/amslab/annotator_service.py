"""Reference annotator server.

Serves the POST /annotate contract over HTTP, backed by the deterministic
heuristic. Any server speaking this contract (for example one that renders
the netlist and queries a multimodal model) is interchangeable with this
one; the pipeline only depends on the wire format.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .annotate import heuristic_labels
from .errors import NetlistError
from .netlist import PORT_VOCABULARY, parse_netlist


class AnnotateRequest(BaseModel):
    netlist: str
    port: str = Field(description="port name, or '*' for every unknown port")
    vocabulary: list[str] = Field(default_factory=lambda: list(PORT_VOCABULARY))


class AnnotateResponse(BaseModel):
    port: str
    label: str
    confidence: float = Field(ge=0.0, le=1.0)


def create_app() -> FastAPI:
    app = FastAPI(title="amslab annotator", version="1.0")

    @app.post("/annotate", response_model=None)
    def annotate(req: AnnotateRequest):
        try:
            n = parse_netlist(req.netlist)
        except NetlistError as e:
            raise HTTPException(status_code=422, detail=f"unparseable netlist: {e}")
        vocab = set(req.vocabulary)
        labels = heuristic_labels(n)

        def reply(port: str, label: str) -> AnnotateResponse:
            if label not in vocab:
                raise HTTPException(status_code=422, detail=f"label {label!r} outside requested vocabulary")
            return AnnotateResponse(port=port, label=label, confidence=1.0)

        if req.port == "*":
            return [reply(p, t.value) for p, t in sorted(labels.items())]
        if req.port not in {p.name for p in n.ports}:
            raise HTTPException(status_code=404, detail=f"no port named {req.port!r}")
        if req.port in labels:
            return reply(req.port, labels[req.port].value)
        return reply(req.port, n.port(req.port).ptype.value)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    return app


app = create_app()
