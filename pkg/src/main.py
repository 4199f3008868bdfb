import logging

import uvicorn
from fastapi import FastAPI

from src.config import CHECKPOINT_DIR, setup_logging
from src.models.embodiments import BUILTIN
from src.routes.predictions import router as predictions_router
from src.world.tasks import TASKS

log = logging.getLogger(__name__)

app = FastAPI(title="DexVLA de bancada")

app.include_router(predictions_router)


@app.get("/")
def read_root():
    return {
        "message": "DexVLA API",
        "description": "Serve blocos de ação de uma política visão-linguagem-ação treinada no mundo sintético.",
        "embodiments": [spec.id for spec in BUILTIN.specs()],
        "tasks": sorted(TASKS),
        "endpoints": {
            "health": "/health",
            "predict": "/predict",
        },
        "docs": "/docs",
    }


@app.get("/health")
def health_check():
    return {"status": "healthy", "checkpoint_configured": bool(CHECKPOINT_DIR)}


def serve(host: str = "0.0.0.0", port: int = 8000):
    setup_logging()
    log.info("Servindo em %s:%d (checkpoint: %s)", host, port, CHECKPOINT_DIR or "não configurado")
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    serve()
