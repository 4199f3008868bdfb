import numpy as np
import pytest

from src.autodiff import as_tensor, grad_check
from src.errors import ContextOverflowError, ContractError, DimensionError, FormatError, IngestError, NumericError
from src.models.backbone import (
    BackboneConfig,
    count_backbone_params,
    decode_reasoning,
    decode_text,
    forward_multimodal,
    forward_train,
    init_backbone_params,
    ntp_loss,
    prepare_instruction,
    total_loss,
)
from src.models.vocab import BOS_ID, EOS_ID, PAD_ID, SPECIAL_TOKENS, Vocabulary, build_vocabulary
from src.training.optim import OptimizerState, adamw_step
from src.world.generate import default_vocabulary

COND = 8
CFG = BackboneConfig(layers=1, width=16, heads=2, context=64, queries=2, instruction_cap=12, reasoning_cap=8, patch=32)


@pytest.fixture(scope="module")
def vocab():
    return default_vocabulary()


@pytest.fixture
def params(vocab):
    return init_backbone_params(CFG, len(vocab), cond_width=COND, seed=0)


@pytest.fixture
def views():
    return np.random.default_rng(0).integers(0, 256, size=(2, 3, 64, 64, 3), dtype=np.uint8)


def _instruction(vocab, text="put the red disc in zone a"):
    return [vocab.tokenize(text)] * 2


def _spans(vocab, text="place red disc in zone a"):
    return np.stack([vocab.encode_span(text, CFG.reasoning_cap)] * 2)


class TestVocabulary:
    def test_special_tokens_first(self, vocab):
        assert tuple(vocab.tokens[:4]) == SPECIAL_TOKENS
        assert vocab.tokens[4:] == sorted(vocab.tokens[4:])

    def test_closed_over_inventory(self, vocab):
        for phrase in ("reach red disc", "place blue rect in zone b", "done", "sort the objects by color",
                       "stack the green disc on the yellow rect"):
            assert vocab.detokenize(vocab.tokenize(phrase)) == phrase

    def test_out_of_vocabulary(self, vocab):
        with pytest.raises(IngestError):
            vocab.tokenize("grab the purple cube")

    def test_span_layout(self, vocab):
        span = vocab.encode_span("reach red disc", 8)
        assert len(span) == 10
        assert span[0] == BOS_ID
        assert span[4] == EOS_ID
        assert np.all(span[5:] == PAD_ID)

    def test_save_and_load(self, vocab, tmp_path):
        vocab.save(tmp_path / "vocab.json")
        assert Vocabulary.load(tmp_path / "vocab.json").tokens == vocab.tokens

    def test_missing_specials(self):
        with pytest.raises(FormatError):
            Vocabulary(tokens=["red", "blue"])

    def test_build_deduplicates(self):
        v = build_vocabulary(["reach red disc"], ["reach red disc", "done"])
        assert v.tokens[4:] == ["disc", "done", "reach", "red"]


class TestInstructionPrep:
    def test_single_sequence_padded(self):
        out = prepare_instruction([5, 6, 7], 6)
        assert out.shape == (1, 6)
        assert list(out[0]) == [5, 6, 7, PAD_ID, PAD_ID, PAD_ID]

    def test_overflow(self):
        with pytest.raises(ContextOverflowError):
            prepare_instruction([5] * 7, 6)

    def test_empty(self):
        with pytest.raises(ContractError):
            prepare_instruction([], 6)


class TestForward:
    def test_param_count_matches(self, params, vocab):
        assert params.count() == count_backbone_params(CFG, len(vocab), cond_width=COND)

    def test_film_width_matches_expert_projection(self, vocab):
        params = init_backbone_params(CFG, len(vocab), cond_width=COND, film_width=16)
        assert params["film/gamma/W"].shape == (CFG.width, 16)
        assert params["connector/fc2/W"].shape == (COND, COND)
        assert params.count() == count_backbone_params(CFG, len(vocab), cond_width=COND, film_width=16)

    def test_train_shapes(self, params, vocab, views):
        logits, targets, reasoning, conn = forward_train(views, _instruction(vocab), _spans(vocab), params, CFG)
        assert logits.shape == (2, CFG.span_len - 1, len(vocab))
        assert targets.shape == (2, CFG.span_len - 1)
        assert reasoning.embedding.shape == (2, CFG.width)
        assert conn.action_embedding.shape == (2, CFG.queries, COND)

    def test_film_starts_as_identity(self, params, vocab, views):
        _, _, reasoning, _ = forward_train(views, _instruction(vocab), _spans(vocab), params, CFG)
        gamma, beta = reasoning.film_params
        assert np.all(gamma.data == 0) and np.all(beta.data == 0)

    def test_earlier_positions_ignore_later_tokens(self, params, vocab, views):
        a = _spans(vocab, "place red disc in zone a")
        b = _spans(vocab, "place red disc in zone b")
        la = forward_train(views, _instruction(vocab), a, params, CFG)[0].data
        lb = forward_train(views, _instruction(vocab), b, params, CFG)[0].data
        changed = int(np.argmax(a[0] != b[0]))
        np.testing.assert_allclose(la[:, :changed], lb[:, :changed], atol=1e-5)
        assert not np.allclose(la[:, changed:], lb[:, changed:])

    def test_context_overflow(self, vocab, views):
        cfg = CFG.model_copy(update={"context": 20})
        params = init_backbone_params(cfg, len(vocab), cond_width=COND)
        with pytest.raises(ContextOverflowError):
            forward_train(views, _instruction(vocab), _spans(vocab), params, cfg)

    def test_bad_views(self, params, vocab):
        with pytest.raises(IngestError):
            forward_train(np.zeros((2, 2, 64, 64, 3), dtype=np.uint8), _instruction(vocab), _spans(vocab), params, CFG)

    def test_decode_is_terminated(self, params, vocab, views):
        span = decode_reasoning(views, _instruction(vocab), params, CFG)
        assert span.shape == (2, CFG.span_len)
        assert np.all(span[:, 0] == BOS_ID)
        assert np.all((span == EOS_ID).sum(axis=1) >= 1)

    def test_multimodal_outputs(self, params, vocab, views):
        reasoning, conn = forward_multimodal(views, _instruction(vocab), params, CFG)
        assert len(reasoning.token_ids) == 2
        assert all(ids[-1] == EOS_ID for ids in reasoning.token_ids)
        assert conn.action_embedding.shape == (2, CFG.queries, COND)

    def test_gradient_check(self, params, vocab, views):
        instruction, spans = _instruction(vocab), _spans(vocab)
        names = params.match("backbone/block0/*") + params.match("backbone/lm_head/*") + ["backbone/embed"]

        def f(p):
            logits, targets, _, _ = forward_train(views, instruction, spans, p, CFG)
            return ntp_loss(logits, targets)

        full = params.copy()
        full.freeze([n for n in full.names() if n not in names])
        assert grad_check(f, full, max_entries=3) < 1e-4


class TestLosses:
    def test_ntp_uniform_logits(self):
        logits = np.zeros((2, 3, 5))
        targets = np.array([[1, 2, 0], [3, 0, 0]])
        assert ntp_loss(logits, targets).item() == pytest.approx(np.log(5), rel=1e-5)

    def test_ntp_all_pad(self):
        with pytest.raises(ContractError):
            ntp_loss(np.zeros((1, 2, 5)), np.zeros((1, 2), dtype=np.int64))

    def test_ntp_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ntp_loss(np.zeros((1, 3, 5)), np.ones((1, 2), dtype=np.int64))

    def test_total_loss_weighting(self):
        assert total_loss(as_tensor(1.0), as_tensor(2.0), alpha=0.5).item() == pytest.approx(2.0)

    def test_total_loss_non_finite(self):
        with pytest.raises(NumericError):
            total_loss(as_tensor(np.nan), as_tensor(1.0))

    def test_decode_text_drops_eos(self, vocab):
        ids = vocab.tokenize("reach red disc") + [EOS_ID]
        assert decode_text(ids, vocab) == "reach red disc"


@pytest.mark.slow
class TestOverfit:
    def test_memorizes_one_phrase(self, vocab, views):
        """Um único par (observação, frase) é decorado e decodificado de volta."""
        params = init_backbone_params(CFG, len(vocab), cond_width=COND, seed=0)
        instruction = _instruction(vocab)
        spans = _spans(vocab, "reach red disc")
        state = OptimizerState()
        for _ in range(300):
            bound = params.bind()
            logits, targets, _, _ = forward_train(views, instruction, spans, bound, CFG)
            loss = ntp_loss(logits, targets)
            loss.backward()
            adamw_step(params, bound.grads(), state, lr=3e-3)
        span = decode_reasoning(views, instruction, params, CFG)
        text = decode_text([t for t in span[0][1:] if t != PAD_ID], vocab)
        assert text == "reach red disc"
        assert loss.item() < 0.1
