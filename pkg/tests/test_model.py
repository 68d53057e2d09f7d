"""
FTS Engine - Model Tests
========================
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from core.errors import EmptyInputError, ShapeError, VariantError
from core.gru import gru_forward
from core.model import (
    answer_backward,
    encode_answer,
    encode_answer_shared,
    encode_question,
    fit_length,
    model_backward,
    question_backward,
)
from core.numeric import numerical_gradient
from core.optim import init_model, make_gradcheck_instance


def small_model(rng, variant="fts_brnn", output_mode="affine", vocab=10, d_emb=3, d=4, train_embeddings=True):
    embeddings = rng.uniform(-0.5, 0.5, size=(vocab, d_emb))
    rows = np.full(vocab, train_embeddings)
    return init_model(variant, output_mode, d, embeddings, rows, rng)


class TestConstruction:
    def test_fts_brnn_requires_affine(self, rng):
        with pytest.raises(VariantError):
            small_model(rng, variant="fts_brnn", output_mode="concat")

    def test_named_tensor_layout(self, rng):
        m = small_model(rng)
        names = list(m.named_tensors())
        assert names[0] == "q_forward.W_r"
        assert "out.W_o" in names
        assert "answer_encoder.h0" in names
        assert names[-1] == "embeddings"

    def test_shared_variant_has_no_answer_encoder(self, rng):
        m = small_model(rng, variant="fts_brnn_s", output_mode="concat")
        assert m.answer_encoder is None
        assert m.out is None
        assert m.d_rep == 2 * m.d


class TestQuestionEncoder:
    def test_output_shapes(self, rng):
        m = small_model(rng)
        enc = encode_question(m, [2, 3, 4, 5])
        assert enc.Q_f.shape == (4, 4)
        assert enc.Q_b.shape == (4, 4)
        assert enc.Q_o.shape == (4, m.d_rep)

    def test_backward_states_aligned_with_time(self, rng):
        m = small_model(rng)
        ids = [2, 7, 3, 9, 1]
        enc = encode_question(m, ids)
        reversed_states, _ = gru_forward(m.q_backward, m.embeddings[ids[::-1]])
        # b(0) resumiu a sequência inteira lida de trás para frente
        np.testing.assert_allclose(enc.Q_b[0], reversed_states[-1])
        np.testing.assert_allclose(enc.Q_b[-1], reversed_states[0])

    def test_affine_output(self, rng):
        m = small_model(rng)
        enc = encode_question(m, [4, 5])
        expected = enc.Q_f @ m.out.W_o.T + enc.Q_b @ m.out.U_o.T + m.out.bias
        np.testing.assert_allclose(enc.Q_o, expected)

    def test_concat_output(self, rng):
        m = small_model(rng, variant="fts_brnn_s", output_mode="concat")
        enc = encode_question(m, [4, 5, 6])
        np.testing.assert_array_equal(enc.Q_o, np.concatenate([enc.Q_f, enc.Q_b], axis=1))

    def test_empty_question(self, rng):
        with pytest.raises(EmptyInputError):
            encode_question(small_model(rng), [])

    def test_mask_shape_checked(self, rng):
        with pytest.raises(ShapeError):
            encode_question(small_model(rng), [1, 2], dropout_mask=np.ones((3, 3)))

    @pytest.mark.parametrize("variant,output_mode", [("fts_brnn", "affine"), ("fts_brnn_s", "concat")])
    def test_all_ones_mask_is_no_mask(self, rng, variant, output_mode):
        m = small_model(rng, variant=variant, output_mode=output_mode)
        ids = [3, 1, 4, 1, 5]
        plain = encode_question(m, ids)
        masked = encode_question(m, ids, dropout_mask=np.ones((len(ids), m.embeddings.shape[1])))
        for name in ("Q_f", "Q_b", "Q_o"):
            assert getattr(plain, name).tobytes() == getattr(masked, name).tobytes(), name


class TestAnswerEncoders:
    def test_last_hidden_state(self, rng):
        m = small_model(rng)
        enc = encode_answer(m, [3, 4])
        hs, _ = gru_forward(m.answer_encoder, m.embeddings[[3, 4]])
        np.testing.assert_array_equal(enc.A_e, hs[-1])
        assert enc.representation is enc.A_e

    def test_shared_answer_is_padded(self, rng):
        m = small_model(rng, variant="fts_brnn_s", output_mode="affine")
        enc = encode_answer_shared(m, [3, 4], T=5)
        assert enc.A_o.shape == (5, m.d_rep)
        assert enc.token_ids.tolist() == [3, 4, 0, 0, 0]

    def test_wrong_variant(self, rng):
        with pytest.raises(VariantError):
            encode_answer(small_model(rng, variant="fts_brnn_s", output_mode="concat"), [1])
        with pytest.raises(VariantError):
            encode_answer_shared(small_model(rng), [1], T=3)


class TestFitLength:
    def test_pad(self):
        assert fit_length([5, 6], 4, 0) == [5, 6, 0, 0]

    def test_truncate(self):
        assert fit_length([5, 6, 7], 2, 0) == [5, 6]

    def test_exact(self):
        assert fit_length([5, 6], 2, 0) == [5, 6]


class TestBackward:
    def _check(self, m, f_and_backward):
        """Compara os gradientes analíticos com o oráculo para todos os tensores."""
        value, grads = f_and_backward()
        for name, tensor in m.named_tensors().items():
            def loss(values, tensor=tensor):
                saved = tensor.copy()
                tensor[...] = values
                try:
                    return f_and_backward(backward=False)[0]
                finally:
                    tensor[...] = saved
            np.testing.assert_allclose(grads[name], numerical_gradient(loss, tensor), rtol=1e-5, atol=1e-8, err_msg=name)

    @pytest.mark.parametrize("variant,output_mode", [("fts_brnn", "affine"), ("fts_brnn_s", "affine"), ("fts_brnn_s", "concat")])
    def test_linear_functional(self, variant, output_mode):
        rng = np.random.default_rng(3)
        m, _, _, _ = make_gradcheck_instance(variant, output_mode, rng)
        question = [1, 5, 2, 7]
        answer = [3, 8]
        mask = rng.uniform(0.0, 2.0, size=(len(question), m.embeddings.shape[1]))
        G = rng.normal(size=(len(question), m.d_rep))

        def f_and_backward(backward=True):
            q = encode_question(m, question, mask)
            a = encode_answer(m, answer) if variant == "fts_brnn" else encode_answer_shared(m, answer, len(question))
            g_a = rng_a[: a.representation.size].reshape(a.representation.shape)
            value = float(np.sum(G * q.Q_o) + np.sum(g_a * a.representation))
            if not backward:
                return value, None
            grads = model_backward(m, q, G, {0: a}, {0: g_a})
            return value, grads

        rng_a = rng.normal(size=len(question) * m.d_rep)
        self._check(m, f_and_backward)

    def test_frozen_rows_get_no_gradient(self, rng):
        m = small_model(rng, train_embeddings=False)
        grads = m.zero_grads()
        enc = encode_question(m, [2, 3, 4])
        question_backward(m, enc, np.ones_like(enc.Q_o), grads)
        answer_backward(m, encode_answer(m, [5]), np.ones(m.d), grads)
        assert not np.any(grads["embeddings"])

    def test_unknown_answer_gradient(self, rng):
        m = small_model(rng)
        q = encode_question(m, [2, 3])
        with pytest.raises(ShapeError):
            model_backward(m, q, np.zeros_like(q.Q_o), {}, {4: np.zeros(m.d)})
