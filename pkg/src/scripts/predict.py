import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from src.config import CHECKPOINT_DIR
from src.errors import ConfigError, DimensionError
from src.models.embodiments import resolve
from src.models.policy import LearnedPolicy
from src.models.vision import N_VIEWS, RESOLUTION
from src.world.environment import Observation

log = logging.getLogger(__name__)


class PolicyPredictor:
    """
    Classe para gerar blocos de ação a partir de observações usando um checkpoint treinado
    """

    def __init__(self, checkpoint_dir: Optional[str] = None, seed: int = 0):
        """
        Inicializa o preditor carregando o checkpoint

        Args:
            checkpoint_dir: Diretório do checkpoint (padrão: DEXVLA_CHECKPOINT)
            seed: Semente do amostrador de difusão
        """
        self.checkpoint_dir = checkpoint_dir or CHECKPOINT_DIR
        self.seed = seed
        self.policy: Optional[LearnedPolicy] = None
        self.load_policy()

    def load_policy(self):
        if not self.checkpoint_dir:
            raise ConfigError("Configure DEXVLA_CHECKPOINT no .env com o diretório do checkpoint")
        path = Path(self.checkpoint_dir)
        if not os.path.exists(path):
            raise FileNotFoundError(f"Checkpoint não encontrado em: {path}")
        log.info("Carregando política de %s", path)
        self.policy = LearnedPolicy.from_checkpoint(path)
        self.rng = np.random.default_rng(self.seed)

    def to_observation(self, data: Dict[str, Any]) -> Observation:
        emb = resolve(data["embodiment"])
        proprio = np.asarray(data["proprio"], dtype=np.float32)
        if proprio.shape != (emb.proprio_dim,):
            raise DimensionError(f"proprio com {proprio.shape[0] if proprio.ndim == 1 else proprio.shape} "
                                 f"valores, esperado {emb.proprio_dim} para '{emb.id}'")
        try:
            views = np.asarray(data["views"])
        except ValueError as e:
            raise DimensionError(f"Vistas com formato irregular: {e}") from e
        expected = (N_VIEWS, RESOLUTION, RESOLUTION, 3)
        if views.shape != expected:
            raise DimensionError(f"Vistas com shape {views.shape}, esperado {expected}")
        if views.min(initial=0) < 0 or views.max(initial=0) > 255:
            raise DimensionError("Vistas devem conter valores RGB em [0, 255]")
        return Observation(emb.id, data["instruction"], proprio, views.astype(np.uint8))

    def predict_single(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """
        Amostra um bloco de ações para uma observação

        Args:
            data: Dicionário com embodiment, instruction, proprio e views

        Returns:
            Dicionário com o bloco de ações e o raciocínio decodificado
        """
        obs = self.to_observation(data)
        action = self.policy.act(obs, self.rng)
        return {
            "embodiment": obs.embodiment,
            "actions": action.actions.astype(float).tolist(),
            "horizon": int(action.actions.shape[0]),
            "reasoning": action.reasoning,
        }
