"""
FTS Engine - FTS-BRNN Model
===========================
Monta os encoders:
- Perguntas: GRU bidirecional (forward + backward com parâmetros
  próprios) e camada de saída o(t) = W_o f(t) + U_o b(t) + bias
  (modo "affine") ou o(t) = [f(t); b(t)] (modo "concat").
- Respostas, variante fts_brnn: GRU unidirecional próprio; a
  representação é o último estado oculto A_e.
- Respostas, variante fts_brnn_s: o mesmo BRNN + camada de saída das
  perguntas sobre a resposta ajustada (pad/trunc) para T passos.

Uma única tabela de embeddings é compartilhada por perguntas e respostas.
Dropout só é aplicado aos embeddings de entrada das perguntas.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from core.errors import EmptyInputError, ShapeError, VariantError
from core.gru import GRUParams, GRUStepCache, gru_backward, gru_forward
from core.numeric import DTYPE, hadamard

Variant = Literal["fts_brnn", "fts_brnn_s"]
OutputMode = Literal["affine", "concat"]


@dataclass
class OutputLayerParams:
    """Camada de saída sobre o BRNN: W_o, U_o ∈ R^{d×d}, bias ∈ R^d."""
    W_o: np.ndarray
    U_o: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        d = self.bias.shape[0]
        if self.W_o.shape != (d, d) or self.U_o.shape != (d, d):
            raise ShapeError(f"output layer must be square d×d, got W_o{self.W_o.shape} U_o{self.U_o.shape} bias{self.bias.shape}")

    def named_tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {f"{prefix}W_o": self.W_o, f"{prefix}U_o": self.U_o, f"{prefix}bias": self.bias}


@dataclass
class ModelParams:
    """
    Todos os parâmetros do modelo.

    answer_encoder existe apenas na variante fts_brnn; out apenas no modo
    affine. trainable_rows marca as linhas de embeddings atualizáveis.
    """
    variant: Variant
    output_mode: OutputMode
    q_forward: GRUParams
    q_backward: GRUParams
    out: OutputLayerParams | None
    answer_encoder: GRUParams | None
    embeddings: np.ndarray
    trainable_rows: np.ndarray
    pad_id: int = 0

    def __post_init__(self) -> None:
        if self.variant == "fts_brnn" and self.output_mode != "affine":
            raise VariantError("fts_brnn requires the affine output layer")
        if (self.output_mode == "affine") != (self.out is not None):
            raise VariantError("output layer must be present exactly in affine mode")
        if (self.variant == "fts_brnn") != (self.answer_encoder is not None):
            raise VariantError("answer encoder must be present exactly in the fts_brnn variant")

        d, d_emb = self.q_forward.d, self.embeddings.shape[1]
        encoders = [self.q_forward, self.q_backward]
        if self.answer_encoder is not None:
            encoders.append(self.answer_encoder)
        for encoder in encoders:
            if encoder.d != d or encoder.d_in != d_emb:
                raise ShapeError(f"encoder dims (d={encoder.d}, d_in={encoder.d_in}) inconsistent with d={d}, embedding dim {d_emb}")
        if self.out is not None and self.out.bias.shape[0] != d:
            raise ShapeError(f"output layer dim {self.out.bias.shape[0]} != d={d}")
        if self.trainable_rows.shape != (self.embeddings.shape[0],):
            raise ShapeError("trainable_rows must have one flag per embedding row")

    @property
    def d(self) -> int:
        return self.q_forward.d

    @property
    def d_rep(self) -> int:
        """Dimensão de o(t) e das representações de resposta."""
        return self.d if self.output_mode == "affine" else 2 * self.d

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Todos os tensores por nome, em ordem estável (referências)."""
        tensors = {}
        tensors.update(self.q_forward.named_tensors("q_forward."))
        tensors.update(self.q_backward.named_tensors("q_backward."))
        if self.out is not None:
            tensors.update(self.out.named_tensors("out."))
        if self.answer_encoder is not None:
            tensors.update(self.answer_encoder.named_tensors("answer_encoder."))
        tensors["embeddings"] = self.embeddings
        return tensors

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(tensor) for name, tensor in self.named_tensors().items()}


@dataclass
class QuestionEncoding:
    """Saídas por passo da pergunta mais caches para o backward."""
    Q_f: np.ndarray
    Q_b: np.ndarray
    Q_o: np.ndarray
    token_ids: np.ndarray
    dropout_mask: np.ndarray | None = None
    fwd_caches: list[GRUStepCache] = field(default_factory=list, repr=False)
    bwd_caches: list[GRUStepCache] = field(default_factory=list, repr=False)

    @property
    def length(self) -> int:
        return self.Q_o.shape[0]


@dataclass
class AnswerEncoding:
    """
    Representação de uma resposta: A_e (último estado, fts_brnn) ou
    A_o (saídas por passo, fts_brnn_s).
    """
    token_ids: np.ndarray
    A_e: np.ndarray | None = None
    A_o: np.ndarray | None = None
    caches: list[GRUStepCache] = field(default_factory=list, repr=False)
    shared: QuestionEncoding | None = field(default=None, repr=False)

    @property
    def representation(self) -> np.ndarray:
        return self.A_e if self.A_e is not None else self.A_o


def _as_ids(token_ids) -> np.ndarray:
    ids = np.asarray(getattr(token_ids, "token_ids", token_ids), dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise EmptyInputError("token sequence must be non-empty")
    return ids


def fit_length(token_ids: Sequence[int], T: int, pad_id: int) -> list[int]:
    """Trunca ou completa com <pad> até exatamente T tokens."""
    if T < 1:
        raise ValueError("sequence length T must be >= 1")
    ids = list(token_ids)[:T]
    return ids + [pad_id] * (T - len(ids))


def encode_question(
    m: ModelParams,
    token_ids,
    dropout_mask: np.ndarray | None = None
) -> QuestionEncoding:
    """
    Codifica uma pergunta com o BRNN.

    Args:
        m: Parâmetros do modelo
        token_ids: Ids dos tokens (ou objeto com `.token_ids`)
        dropout_mask: Máscara T × d_emb aplicada aos embeddings (opcional)

    Returns:
        QuestionEncoding com Q_f, Q_b (alinhados por t) e Q_o
    """
    ids = _as_ids(token_ids)
    xs = m.embeddings[ids]
    if dropout_mask is not None:
        xs = hadamard(xs, dropout_mask)

    Q_f, fwd_caches = gru_forward(m.q_forward, xs)
    reversed_hs, bwd_caches = gru_forward(m.q_backward, xs[::-1])
    Q_b = np.ascontiguousarray(reversed_hs[::-1])

    if m.output_mode == "affine":
        Q_o = Q_f @ m.out.W_o.T + Q_b @ m.out.U_o.T + m.out.bias
    else:
        Q_o = np.concatenate([Q_f, Q_b], axis=1)

    return QuestionEncoding(
        Q_f=Q_f, Q_b=Q_b, Q_o=Q_o, token_ids=ids, dropout_mask=dropout_mask,
        fwd_caches=fwd_caches, bwd_caches=bwd_caches
    )


def encode_answer(m: ModelParams, token_ids) -> AnswerEncoding:
    """GRU unidirecional sobre a resposta; A_e = último estado oculto."""
    if m.variant != "fts_brnn":
        raise VariantError("encode_answer is only defined for the fts_brnn variant")
    ids = _as_ids(token_ids)
    hs, caches = gru_forward(m.answer_encoder, m.embeddings[ids])
    return AnswerEncoding(token_ids=ids, A_e=hs[-1], caches=caches)


def encode_answer_shared(m: ModelParams, token_ids, T: int) -> AnswerEncoding:
    """Resposta ajustada para T passos e codificada pelo BRNN das perguntas."""
    if m.variant != "fts_brnn_s":
        raise VariantError("encode_answer_shared is only defined for the fts_brnn_s variant")
    ids = fit_length(_as_ids(token_ids).tolist(), T, m.pad_id)
    encoding = encode_question(m, ids)
    return AnswerEncoding(token_ids=encoding.token_ids, A_o=encoding.Q_o, shared=encoding)


def _accumulate(grads: dict[str, np.ndarray], prefix: str, params: GRUParams) -> None:
    for name, tensor in params.named_tensors(prefix).items():
        grads[name] += tensor


def _scatter_embeddings(m: ModelParams, grads: dict[str, np.ndarray], ids: np.ndarray, grad_xs: np.ndarray) -> None:
    selected = m.trainable_rows[ids]
    if np.any(selected):
        np.add.at(grads["embeddings"], ids[selected], grad_xs[selected])


def question_backward(
    m: ModelParams,
    enc: QuestionEncoding,
    grad_Q_o: np.ndarray,
    grads: dict[str, np.ndarray]
) -> None:
    """Propaga dL/dQ_o pela camada de saída, pelos dois GRUs e pelos embeddings."""
    grad_Q_o = np.asarray(grad_Q_o, dtype=DTYPE)
    if grad_Q_o.shape != enc.Q_o.shape:
        raise ShapeError(f"grad_Q_o{grad_Q_o.shape} does not match Q_o{enc.Q_o.shape}")

    if m.output_mode == "affine":
        grads["out.W_o"] += grad_Q_o.T @ enc.Q_f
        grads["out.U_o"] += grad_Q_o.T @ enc.Q_b
        grads["out.bias"] += grad_Q_o.sum(axis=0)
        grad_f = grad_Q_o @ m.out.W_o
        grad_b = grad_Q_o @ m.out.U_o
    else:
        grad_f = grad_Q_o[:, :m.d]
        grad_b = grad_Q_o[:, m.d:]

    fwd_grads, grad_xs_f, _ = gru_backward(m.q_forward, enc.fwd_caches, grad_f)
    # o GRU backward leu a sequência invertida
    bwd_grads, grad_xs_b, _ = gru_backward(m.q_backward, enc.bwd_caches, grad_b[::-1])
    _accumulate(grads, "q_forward.", fwd_grads)
    _accumulate(grads, "q_backward.", bwd_grads)

    grad_xs = grad_xs_f + grad_xs_b[::-1]
    if enc.dropout_mask is not None:
        grad_xs = grad_xs * enc.dropout_mask
    _scatter_embeddings(m, grads, enc.token_ids, grad_xs)


def answer_backward(
    m: ModelParams,
    enc: AnswerEncoding,
    grad: np.ndarray,
    grads: dict[str, np.ndarray]
) -> None:
    """Propaga o gradiente da representação de uma resposta."""
    grad = np.asarray(grad, dtype=DTYPE)
    if enc.shared is not None:
        question_backward(m, enc.shared, grad, grads)
        return

    if grad.shape != enc.A_e.shape:
        raise ShapeError(f"answer gradient{grad.shape} does not match A_e{enc.A_e.shape}")
    grad_hs = np.zeros((len(enc.caches), m.d), dtype=DTYPE)
    grad_hs[-1] = grad
    enc_grads, grad_xs, _ = gru_backward(m.answer_encoder, enc.caches, grad_hs)
    _accumulate(grads, "answer_encoder.", enc_grads)
    _scatter_embeddings(m, grads, enc.token_ids, grad_xs)


def model_backward(
    m: ModelParams,
    question: QuestionEncoding,
    grad_Q_o: np.ndarray,
    answers: Mapping[int, AnswerEncoding],
    grad_answers: Mapping[int, np.ndarray],
    grads: dict[str, np.ndarray] | None = None
) -> dict[str, np.ndarray]:
    """
    Gradientes completos de um exemplo (pergunta + respostas envolvidas).

    Args:
        m: Parâmetros do modelo
        question: Encoding da pergunta
        grad_Q_o: dL/dQ_o (T × d_rep)
        answers: Encodings das respostas por id
        grad_answers: dL/d(representação) por id de resposta
        grads: Acumulador opcional (somado in-place)

    Returns:
        Dicionário nome → gradiente, mesmo layout de named_tensors()
    """
    if grads is None:
        grads = m.zero_grads()
    question_backward(m, question, grad_Q_o, grads)
    for answer_id in sorted(grad_answers):
        if answer_id not in answers:
            raise ShapeError(f"gradient for answer {answer_id} has no matching encoding")
        answer_backward(m, answers[answer_id], grad_answers[answer_id], grads)
    return grads
