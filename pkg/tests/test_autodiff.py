import json

import numpy as np
import pytest

from src.autodiff import ParamSet, Tensor, as_tensor, grad_check, load_checkpoint, no_grad, ops, save_checkpoint
from src.autodiff.checkpoint import MANIFEST_NAME
from src.errors import CheckpointCompatibilityError, ConfigError, ContractError, DimensionError, FormatError

TOLERANCE = 1e-4


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def _params(rng, **shapes):
    return ParamSet({name: rng.standard_normal(shape) for name, shape in shapes.items()})


class TestGradients:
    """Gradientes analíticos contra diferenças centrais"""

    def test_affine_tanh(self, rng):
        params = _params(rng, x=(3, 4), W=(4, 5), b=(5,))
        err = grad_check(lambda p: ops.sum(ops.tanh(ops.affine(p["x"], p["W"], p["b"]))), params)
        assert err < TOLERANCE

    def test_gelu_and_broadcast_mul(self, rng):
        params = _params(rng, x=(2, 3, 4), g=(4,))
        err = grad_check(lambda p: ops.mean(ops.mul(ops.gelu(p["x"]), p["g"])), params)
        assert err < TOLERANCE

    def test_log_softmax_and_index(self, rng):
        params = _params(rng, logits=(4, 6))
        targets = np.array([0, 5, 2, 3])

        def f(p):
            logp = ops.log_softmax(p["logits"], axis=-1)
            return ops.mul(ops.sum(ops.index(logp, (np.arange(4), targets))), -0.25)

        assert grad_check(f, params) < TOLERANCE

    def test_layer_norm(self, rng):
        params = _params(rng, x=(3, 8), gain=(8,), bias=(8,))
        weights = rng.standard_normal((3, 8))

        def f(p):
            y = ops.layer_norm(p["x"], p["gain"], p["bias"])
            return ops.sum(ops.mul(y, as_tensor(weights)))

        assert grad_check(f, params) < TOLERANCE

    def test_causal_attention(self, rng):
        params = _params(rng, q=(2, 5, 8), k=(2, 5, 8), v=(2, 5, 8))
        weights = rng.standard_normal((2, 5, 8))

        def f(p):
            out = ops.attention(p["q"], p["k"], p["v"], heads=2, causal=True)
            return ops.sum(ops.mul(out, as_tensor(weights)))

        assert grad_check(f, params) < TOLERANCE

    def test_concat_reshape_embedding(self, rng):
        params = _params(rng, table=(7, 3), extra=(2, 2, 3))
        ids = np.array([[1, 4], [6, 1]])

        def f(p):
            emb = ops.embedding(p["table"], ids)
            joined = ops.concat([emb, p["extra"]], axis=1)
            return ops.sum(ops.tanh(ops.reshape(joined, (2, 12))))

        assert grad_check(f, params) < TOLERANCE

    def test_sampled_entries(self, rng):
        params = _params(rng, W=(20, 20))
        err = grad_check(lambda p: ops.sum(ops.tanh(p["W"])), params, max_entries=10)
        assert err < TOLERANCE

    def test_non_scalar_rejected(self, rng):
        params = _params(rng, x=(3,))
        with pytest.raises(ContractError):
            grad_check(lambda p: ops.tanh(p["x"]), params)


class TestTensor:
    def test_backward_requires_scalar(self):
        x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
        with pytest.raises(ContractError):
            ops.mul(x, 2.0).backward()

    def test_gradient_accumulates_over_reuse(self):
        x = Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
        ops.sum(ops.add(ops.mul(x, x), x)).backward()
        np.testing.assert_allclose(x.grad, [3.0, 5.0])

    def test_no_grad_builds_no_graph(self):
        x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
        with no_grad():
            y = ops.sum(ops.mul(x, 3.0))
        assert not y.requires_grad
        assert y.parents == ()

    def test_affine_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ops.affine(np.ones((2, 3)), np.ones((4, 5)), np.ones(5))

    def test_heads_must_divide_width(self):
        x = np.ones((1, 3, 6))
        with pytest.raises(ConfigError):
            ops.attention(x, x, x, heads=4)

    def test_causal_mask_hides_future(self, rng):
        q = rng.standard_normal((1, 4, 4))
        v = rng.standard_normal((1, 4, 4))
        base = ops.attention(q, q, v, causal=True).data
        v2 = v.copy()
        v2[0, 3] += 10.0
        changed = ops.attention(q, q, v2, causal=True).data
        np.testing.assert_allclose(base[0, :3], changed[0, :3], atol=1e-6)


class TestParamSet:
    def test_duplicate_name(self):
        params = ParamSet({"a": np.zeros(2)})
        with pytest.raises(ConfigError):
            params.add("a", np.ones(2))

    def test_freeze_unknown_name(self):
        with pytest.raises(ConfigError):
            ParamSet({"a": np.zeros(2)}).freeze(["b"])

    def test_frozen_and_unused_get_no_grad(self):
        params = ParamSet({"w": np.ones(3), "frozen": np.ones(3), "unused": np.ones(3)}, frozen=["frozen"])
        bound = params.bind()
        ops.sum(ops.mul(bound["w"], bound["frozen"])).backward()
        grads = bound.grads()
        assert set(grads) == {"w"}

    def test_match_and_count(self):
        params = ParamSet({"head/arm3/in/W": np.zeros((4, 2)), "head/arm2/in/W": np.zeros((3, 2)), "trunk/W": np.zeros(5)})
        assert params.match("head/*") == ["head/arm2/in/W", "head/arm3/in/W"]
        assert params.count("head/") == 14
        assert params.count() == 19

    def test_digest_tracks_content(self):
        params = ParamSet({"a": np.arange(4.0)})
        before = params.digest("a")
        copy = params.copy()
        copy["a"][0] = 99.0
        assert params.digest("a") == before
        assert copy.digest("a") != before


class TestCheckpoint:
    def test_round_trip_keeps_frozen_and_metadata(self, tmp_path, rng):
        params = ParamSet({"b": rng.standard_normal(3).astype(np.float32), "a": np.arange(6, dtype=np.int64).reshape(2, 3)},
                          frozen=["a"])
        save_checkpoint(params, tmp_path / "ckpt", {"stage": 1})

        loaded, metadata = load_checkpoint(tmp_path / "ckpt")

        assert metadata == {"stage": 1}
        assert loaded.frozen == {"a"}
        assert loaded.digests() == params.digests()
        assert loaded["a"].dtype == np.int64

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CheckpointCompatibilityError):
            load_checkpoint(tmp_path / "nada")

    def test_unknown_format_version(self, tmp_path):
        save_checkpoint(ParamSet({"a": np.zeros(1)}), tmp_path)
        manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
        manifest["format_version"] = 999
        (tmp_path / MANIFEST_NAME).write_text(json.dumps(manifest))
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path)

    def test_no_temporary_files_left(self, tmp_path):
        save_checkpoint(ParamSet({"a": np.zeros(2)}), tmp_path)
        assert not list(tmp_path.glob("*.tmp"))
