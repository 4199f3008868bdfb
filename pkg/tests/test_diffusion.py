import numpy as np
import pytest

from src.autodiff import Tensor
from src.diffusion import ActionChunk, ddpm_step, diffusion_loss, make_schedule, q_sample, sample_chunk
from src.errors import ConfigError, ContractError, DimensionError, NumericError, TimestepRangeError


@pytest.fixture
def schedule():
    return make_schedule()


class TestSchedule:
    def test_defaults(self, schedule):
        assert schedule.T == 100
        assert schedule.beta[0] == pytest.approx(1e-4)
        assert schedule.beta[-1] == pytest.approx(2e-2)

    def test_alpha_bar_monotone(self, schedule):
        assert np.all(np.diff(schedule.alpha_bar) < 0)
        assert 0.0 < schedule.alpha_bar[-1] < schedule.alpha_bar[0] < 1.0

    def test_sigma_zero_at_first_step(self, schedule):
        assert schedule.sigma(0) == 0.0
        assert schedule.sigma(50) > 0.0

    @pytest.mark.parametrize("T,start,end", [(0, 1e-4, 2e-2), (10, 0.0, 0.1), (10, 0.2, 0.1), (10, 0.1, 1.0)])
    def test_invalid(self, T, start, end):
        with pytest.raises(ConfigError):
            make_schedule(T, start, end)


class TestForwardProcess:
    def test_q_sample_statistics(self, schedule):
        rng = np.random.default_rng(0)
        a0 = ActionChunk(np.full((20000, 1, 1), 0.5), "arm3")
        eps = rng.standard_normal(a0.values.shape)
        t = 60
        a_t = q_sample(a0, t, eps, schedule).values
        ab = schedule.alpha_bar[t]
        assert a_t.mean() == pytest.approx(np.sqrt(ab) * 0.5, abs=0.02)
        assert a_t.var() == pytest.approx(1.0 - ab, abs=0.02)

    def test_q_sample_batched_timesteps(self, schedule):
        a0 = ActionChunk(np.ones((2, 4, 3)), "arm3")
        eps = np.zeros((2, 4, 3))
        a_t = q_sample(a0, np.array([0, 99]), eps, schedule).values
        np.testing.assert_allclose(a_t[0], np.sqrt(schedule.alpha_bar[0]))
        np.testing.assert_allclose(a_t[1], np.sqrt(schedule.alpha_bar[99]))

    def test_q_sample_rejects_bad_timestep(self, schedule):
        a0 = ActionChunk(np.zeros((4, 3)), "arm3")
        with pytest.raises(TimestepRangeError):
            q_sample(a0, 100, np.zeros((4, 3)), schedule)

    def test_q_sample_rejects_bad_noise_shape(self, schedule):
        a0 = ActionChunk(np.zeros((4, 3)), "arm3")
        with pytest.raises(DimensionError):
            q_sample(a0, 1, np.zeros((4, 2)), schedule)

    def test_chunk_rejects_nan(self):
        with pytest.raises(NumericError):
            ActionChunk(np.array([[np.nan]]), "arm3")


class TestLoss:
    def test_masked_positions_ignored(self):
        eps = np.zeros((1, 3, 2))
        eps_hat = np.zeros((1, 3, 2))
        eps_hat[0, 2] = 100.0
        mask = np.array([[1.0, 1.0, 0.0]])
        loss = diffusion_loss(Tensor(eps_hat), eps, mask)
        assert loss.item() == 0.0

    def test_mean_over_valid_entries(self):
        eps_hat = np.ones((2, 2))
        loss = diffusion_loss(Tensor(eps_hat), np.zeros((2, 2)), np.array([1.0, 0.0]))
        assert loss.item() == pytest.approx(1.0)

    def test_empty_mask(self):
        with pytest.raises(ContractError):
            diffusion_loss(Tensor(np.ones((2, 2))), np.zeros((2, 2)), np.zeros(2))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            diffusion_loss(Tensor(np.ones((2, 2))), np.zeros((2, 3)))


class TestReverseProcess:
    def test_single_step_schedule_recovers_clean_chunk(self):
        s = make_schedule(1, 0.01, 0.01)
        rng = np.random.default_rng(0)
        a0 = ActionChunk(rng.uniform(-1, 1, (4, 3)), "arm3")
        eps = rng.standard_normal((4, 3))
        a_t = q_sample(a0, 0, eps, s)
        out = ddpm_step(a_t, eps, 0, s)
        np.testing.assert_allclose(out.values, a0.values, atol=1e-10)

    def test_nonzero_noise_at_last_step(self, schedule):
        a_t = ActionChunk(np.zeros((2, 2)), "arm3")
        with pytest.raises(ContractError):
            ddpm_step(a_t, np.zeros((2, 2)), 0, schedule, z=np.ones((2, 2)))

    def test_oracle_denoiser_reaches_target(self, schedule):
        """Com ε exato o amostrador converge para o alvo, seja qual for o ruído inicial."""
        target = np.array([[0.3, -0.7]])

        def oracle(a, t, cond, emb):
            ab = schedule.alpha_bar[t]
            return (a - np.sqrt(ab) * target) / np.sqrt(1.0 - ab)

        out = sample_chunk(oracle, None, "arm3", schedule, np.random.default_rng(3), (1, 2), dtype=np.float64)
        np.testing.assert_allclose(out.values, target, atol=1e-6)

    def test_two_point_distribution(self, schedule):
        """O ε ótimo para uma mistura de dois pontos gera amostras perto dos dois modos."""
        modes = np.array([-0.5, 0.5])

        def oracle(a, t, cond, emb):
            ab = schedule.alpha_bar[t]
            d = a[..., None] - np.sqrt(ab) * modes
            logw = -0.5 * d ** 2 / (1.0 - ab)
            w = np.exp(logw - logw.max(axis=-1, keepdims=True))
            w /= w.sum(axis=-1, keepdims=True)
            x0 = (w * modes).sum(axis=-1)
            return (a - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)

        out = sample_chunk(oracle, None, "arm3", schedule, np.random.default_rng(0), (400, 1), dtype=np.float64)
        values = out.values[:, 0]
        assert np.all(np.min(np.abs(values[:, None] - modes), axis=1) < 0.05)
        assert 0.3 < np.mean(values > 0) < 0.7

    def test_denoiser_shape_checked(self, schedule):
        with pytest.raises(DimensionError):
            sample_chunk(lambda a, t, c, e: np.zeros((3,)), None, "arm3", schedule,
                         np.random.default_rng(0), (2, 2))

    def test_non_finite_denoiser(self, schedule):
        with pytest.raises(NumericError):
            sample_chunk(lambda a, t, c, e: np.full(a.shape, np.inf), None, "arm3", schedule,
                         np.random.default_rng(0), (2, 2))
