from unittest.mock import Mock, patch

import numpy as np
import pytest
from fastapi.testclient import TestClient

from src.errors import ConfigError, DimensionError, RegistryError, RoutingError
from src.main import app
from src.routes.predictions import get_predictor
from src.scripts.predict import PolicyPredictor
from src.training.trainer import train_stage
from src.world.environment import Environment
from tests.conftest import tiny_stage

client = TestClient(app)


@pytest.fixture
def observation_data():
    """Observação válida de um braço de 3 juntas"""
    obs = Environment("sort-2", "arm3", 0).reset()
    return {
        "embodiment": obs.embodiment,
        "instruction": obs.instruction,
        "proprio": obs.proprio.tolist(),
        "views": obs.views.tolist(),
    }


@pytest.fixture
def mock_predictor_response():
    """Resposta mockada com bloco de 2 passos"""
    return {
        "embodiment": "arm3",
        "actions": [[0.01, -0.02, 0.0, 1.0], [0.01, -0.02, 0.0, 1.0]],
        "horizon": 2,
        "reasoning": "reach red disc",
    }


@pytest.fixture
def mock_predictor(mock_predictor_response):
    predictor = Mock()
    predictor.predict_single.return_value = mock_predictor_response
    app.dependency_overrides[get_predictor] = lambda: predictor
    yield predictor
    app.dependency_overrides.clear()


@pytest.fixture(scope="module")
def checkpoint(dataset, tmp_path_factory):
    return train_stage(tiny_stage(1), dataset, tmp_path_factory.mktemp("predict")).final


class TestPredictEndpoint:
    """Testes para o endpoint /predict"""

    def test_predict_success(self, mock_predictor, observation_data):
        response = client.post("/predict", json=observation_data)

        assert response.status_code == 200
        data = response.json()
        assert data["horizon"] == 2
        assert data["reasoning"] == "reach red disc"
        assert len(data["actions"][0]) == 4
        assert mock_predictor.predict_single.called

    def test_predict_missing_required_field(self, mock_predictor, observation_data):
        incomplete = observation_data.copy()
        del incomplete["proprio"]

        response = client.post("/predict", json=incomplete)

        assert response.status_code == 422

    def test_predict_invalid_field_type(self, mock_predictor, observation_data):
        invalid = observation_data.copy()
        invalid["views"] = "imagem"

        response = client.post("/predict", json=invalid)

        assert response.status_code == 422

    @pytest.mark.parametrize("error", [RoutingError("sem cabeça"), RegistryError("desconhecida")])
    def test_unknown_embodiment(self, mock_predictor, observation_data, error):
        mock_predictor.predict_single.side_effect = error

        response = client.post("/predict", json=observation_data)

        assert response.status_code == 404
        assert "Erro na predição" in response.json()["detail"]

    def test_domain_error(self, mock_predictor, observation_data):
        mock_predictor.predict_single.side_effect = DimensionError("proprio inválida")

        response = client.post("/predict", json=observation_data)

        assert response.status_code == 422

    def test_predict_internal_error(self, mock_predictor, observation_data):
        mock_predictor.predict_single.side_effect = Exception("Erro no modelo")

        response = client.post("/predict", json=observation_data)

        assert response.status_code == 500
        assert "Erro na predição" in response.json()["detail"]

    @patch("src.routes.predictions.PolicyPredictor")
    def test_policy_unavailable(self, mock_cls, observation_data):
        mock_cls.side_effect = ConfigError("Configure DEXVLA_CHECKPOINT")
        get_predictor.cache_clear()

        response = client.post("/predict", json=observation_data)

        assert response.status_code == 503
        assert "Política indisponível" in response.json()["detail"]
        get_predictor.cache_clear()


class TestPolicyPredictor:
    def test_missing_checkpoint_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            PolicyPredictor(str(tmp_path / "nada"))

    def test_predict_single(self, checkpoint, observation_data):
        result = PolicyPredictor(str(checkpoint)).predict_single(observation_data)
        assert result["embodiment"] == "arm3"
        assert np.asarray(result["actions"]).shape == (result["horizon"], 4)
        assert result["reasoning"] == ""

    def test_wrong_proprio_length(self, checkpoint, observation_data):
        observation_data["proprio"] = observation_data["proprio"][:-1]
        with pytest.raises(DimensionError):
            PolicyPredictor(str(checkpoint)).predict_single(observation_data)

    @pytest.mark.parametrize("views", [
        np.zeros((2, 64, 64, 3), dtype=int).tolist(),
        np.zeros((3, 32, 32, 3), dtype=int).tolist(),
        [[[[0, 0, 0]]], [[[0, 0]]]],
    ], ids=["duas-vistas", "resolucao", "irregular"])
    def test_wrong_views_shape(self, checkpoint, observation_data, views):
        observation_data["views"] = views
        with pytest.raises(DimensionError):
            PolicyPredictor(str(checkpoint)).predict_single(observation_data)

    def test_wrong_views_shape_is_422(self, checkpoint, observation_data):
        predictor = PolicyPredictor(str(checkpoint))
        observation_data["views"] = np.zeros((3, 8, 8, 3), dtype=int).tolist()
        app.dependency_overrides[get_predictor] = lambda: predictor
        try:
            response = client.post("/predict", json=observation_data)
        finally:
            app.dependency_overrides.clear()
        assert response.status_code == 422

    def test_end_to_end(self, checkpoint, observation_data):
        predictor = PolicyPredictor(str(checkpoint))
        app.dependency_overrides[get_predictor] = lambda: predictor
        try:
            response = client.post("/predict", json=observation_data)
        finally:
            app.dependency_overrides.clear()
        assert response.status_code == 200
        assert len(response.json()["actions"]) == response.json()["horizon"]


class TestRootEndpoints:
    """Testes para os endpoints raiz"""

    def test_root_endpoint(self):
        response = client.get("/")

        assert response.status_code == 200
        data = response.json()
        assert "message" in data
        assert data["endpoints"]["predict"] == "/predict"
        assert data["embodiments"] == ["arm2", "arm3", "biman2x2"]
        assert "sort-2" in data["tasks"]

    def test_health_check(self):
        response = client.get("/health")

        assert response.status_code == 200
        assert response.json()["status"] == "healthy"
