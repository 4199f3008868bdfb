from functools import lru_cache
from typing import List

from fastapi import APIRouter, Depends, HTTPException
from pydantic import BaseModel, Field

from src.errors import DexVLAError, RegistryError, RoutingError
from src.scripts.predict import PolicyPredictor


class ObservationData(BaseModel):
    embodiment: str = Field(..., description="Identificador da embodiment (ex.: 'arm3')")
    instruction: str = Field(..., description="Instrução direta da tarefa")
    proprio: List[float] = Field(..., description="Propriocepção (ângulos das juntas e garras)")
    views: List[List[List[List[int]]]] = Field(..., description="Três vistas RGB 64x64, shape [3, 64, 64, 3]")


class PredictionResponse(BaseModel):
    embodiment: str = Field(..., description="Embodiment que gerou o bloco")
    actions: List[List[float]] = Field(..., description="Bloco de ações desnormalizado [H, D]")
    horizon: int = Field(..., description="Número de passos do bloco")
    reasoning: str = Field("", description="Frase de subpasso decodificada pelo backbone")


@lru_cache(maxsize=1)
def get_predictor() -> PolicyPredictor:
    try:
        return PolicyPredictor()
    except (DexVLAError, FileNotFoundError) as e:
        raise HTTPException(status_code=503, detail=f"Política indisponível: {e}")


router = APIRouter()


@router.post("/predict", response_model=PredictionResponse)
async def predict_actions(observation: ObservationData, predictor: PolicyPredictor = Depends(get_predictor)):
    """
    Amostra um bloco de ações para a observação enviada.

    Retorna:
    - actions: bloco de H ações na escala da embodiment
    - reasoning: subpasso decodificado (vazio para checkpoints só de estágio 1)
    """
    try:
        result = predictor.predict_single(observation.model_dump())
        return PredictionResponse(**result)
    except (RoutingError, RegistryError) as e:
        raise HTTPException(status_code=404, detail=f"Erro na predição: {e}")
    except DexVLAError as e:
        raise HTTPException(status_code=422, detail=f"Erro na predição: {e}")
    except Exception as e:
        raise HTTPException(
            status_code=500,
            detail=f"Erro na predição: {str(e)}"
        )
