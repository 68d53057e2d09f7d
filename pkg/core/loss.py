"""
FTS Engine - Margin Losses
==========================
Losses de margem com gradientes exatos em relação às saídas da
pergunta e às representações das respostas:

- full_time_loss: hinge em todos os passos t (supervisão full-time)
    Σ_t Σ_w max(0, m − o(t)·A_c + o(t)·A_w)
- pooling_loss: hinge sobre a saída agregada (média ou máximo)
    Σ_w max(0, m − o_p·A_c + o_p·A_w)
- full_time_loss_shared: variante com respostas por passo
    Σ_t Σ_w max(0, m − o(t)·A_c(t) + o(t)·A_w(t))

Hinge exatamente em zero contribui gradiente zero. A loss por pergunta
é uma soma (não média); a média por batch é feita no treino.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from core.errors import ShapeError
from core.numeric import DTYPE
from utils.logger import log_component_action


class LossConfig(BaseModel):
    """Configuração da loss de margem."""
    margin: float = Field(default=1.0, gt=0)
    wrong_answer_policy: Literal["all", "sample_k"] = "all"
    k: int = Field(default=5, ge=1)
    pooling: Literal["mean", "max"] = "mean"


@dataclass
class LossResult:
    """Valor da loss e gradientes por operando."""
    value: float
    grad_outputs: np.ndarray
    grad_correct: np.ndarray
    grad_wrong: dict[int, np.ndarray] = field(default_factory=dict)


WrongAnswers = Mapping[int, np.ndarray] | Sequence[np.ndarray]


def _as_mapping(A_wrong: WrongAnswers) -> dict[int, np.ndarray]:
    if isinstance(A_wrong, Mapping):
        return {int(k): np.asarray(v, dtype=DTYPE) for k, v in A_wrong.items()}
    return {i: np.asarray(v, dtype=DTYPE) for i, v in enumerate(A_wrong)}


def _empty_result(Q_o: np.ndarray, A_correct: np.ndarray) -> LossResult:
    log_component_action("@Loss", "Empty wrong-answer set, loss defined as 0", level="warning")
    return LossResult(0.0, np.zeros_like(Q_o), np.zeros_like(A_correct), {})


def _hinge_rows(
    O: np.ndarray,
    a_correct: np.ndarray,
    A_wrong: np.ndarray,
    margin: float
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Hinge para cada linha de O contra uma resposta correta e W erradas."""
    scores_correct = O @ a_correct
    scores_wrong = O @ A_wrong.T
    args = margin - scores_correct[:, None] + scores_wrong
    active = (args > 0).astype(DTYPE)
    value = float(np.sum(args * active))
    counts = active.sum(axis=1)
    grad_O = active @ A_wrong - counts[:, None] * a_correct
    grad_correct = -(counts @ O)
    grad_wrong = active.T @ O
    return value, grad_O, grad_correct, grad_wrong


def _check_vectors(Q_o: np.ndarray, A_correct: np.ndarray, wrong: dict[int, np.ndarray]) -> None:
    if Q_o.ndim != 2 or Q_o.shape[0] == 0:
        raise ShapeError(f"question outputs must be a non-empty T × d array, got {Q_o.shape}")
    d = Q_o.shape[1]
    if A_correct.shape != (d,):
        raise ShapeError(f"correct answer{A_correct.shape} does not match output dim {d}")
    for answer_id, vec in wrong.items():
        if vec.shape != (d,):
            raise ShapeError(f"wrong answer {answer_id}{vec.shape} does not match output dim {d}")


def pool_steps(X: np.ndarray, pooling: Literal["mean", "max"]) -> np.ndarray:
    """Agrega saídas T × d em um vetor d (média ou máximo por coordenada)."""
    if pooling == "mean":
        return X.sum(axis=0) / X.shape[0]
    return X[np.argmax(X, axis=0), np.arange(X.shape[1])]


def pool_steps_backward(X: np.ndarray, grad_pooled: np.ndarray, pooling: Literal["mean", "max"]) -> np.ndarray:
    """
    Gradiente de pool_steps em relação a X. Na média cada passo recebe
    1/T; no máximo cada coordenada vai para o primeiro passo que o atinge.
    """
    T = X.shape[0]
    if pooling == "mean":
        return np.repeat(grad_pooled[None, :] / T, T, axis=0)
    grad = np.zeros_like(X)
    grad[np.argmax(X, axis=0), np.arange(X.shape[1])] = grad_pooled
    return grad


def full_time_loss(
    Q_o: np.ndarray,
    A_correct: np.ndarray,
    A_wrong: WrongAnswers,
    cfg: LossConfig
) -> LossResult:
    """
    Loss de margem aplicada em todos os passos.

    Args:
        Q_o: Saídas da pergunta, T × d
        A_correct: Representação da resposta correta, d
        A_wrong: Representações das erradas (id → vetor, ou lista)
        cfg: Configuração (margem)
    """
    Q_o = np.asarray(Q_o, dtype=DTYPE)
    A_correct = np.asarray(A_correct, dtype=DTYPE)
    wrong = _as_mapping(A_wrong)
    _check_vectors(Q_o, A_correct, wrong)
    if not wrong:
        return _empty_result(Q_o, A_correct)

    ids = list(wrong)
    value, grad_O, grad_correct, grad_W = _hinge_rows(Q_o, A_correct, np.stack([wrong[i] for i in ids]), cfg.margin)
    return LossResult(value, grad_O, grad_correct, {i: grad_W[j] for j, i in enumerate(ids)})


def pooling_loss(
    Q_o: np.ndarray,
    A_correct: np.ndarray,
    A_wrong: WrongAnswers,
    cfg: LossConfig
) -> LossResult:
    """
    Loss de margem sobre a saída agregada no tempo.

    Com pooling="mean", o_p = Σ_t o(t) / T e cada o(t) recebe 1/T do
    gradiente de o_p. Com pooling="max", cada coordenada do gradiente vai
    para o primeiro passo que atinge o máximo.
    """
    Q_o = np.asarray(Q_o, dtype=DTYPE)
    A_correct = np.asarray(A_correct, dtype=DTYPE)
    wrong = _as_mapping(A_wrong)
    _check_vectors(Q_o, A_correct, wrong)
    if not wrong:
        return _empty_result(Q_o, A_correct)

    ids = list(wrong)
    value, grad_pooled, grad_correct, grad_W = _hinge_rows(
        pool_steps(Q_o, cfg.pooling)[None, :], A_correct, np.stack([wrong[i] for i in ids]), cfg.margin
    )
    grad_O = pool_steps_backward(Q_o, grad_pooled[0], cfg.pooling)
    return LossResult(value, grad_O, grad_correct, {i: grad_W[j] for j, i in enumerate(ids)})


def full_time_loss_shared(
    Q_o: np.ndarray,
    A_o_correct: np.ndarray,
    A_o_wrong: WrongAnswers,
    cfg: LossConfig
) -> LossResult:
    """
    Loss full-time com respostas por passo: o(t) é comparado com a saída
    da resposta no mesmo passo t. Todas as sequências têm comprimento T.
    """
    Q_o = np.asarray(Q_o, dtype=DTYPE)
    A_c = np.asarray(A_o_correct, dtype=DTYPE)
    wrong = _as_mapping(A_o_wrong)
    if Q_o.ndim != 2 or Q_o.shape[0] == 0:
        raise ShapeError(f"question outputs must be a non-empty T × d array, got {Q_o.shape}")
    if A_c.shape != Q_o.shape:
        raise ShapeError(f"correct answer outputs{A_c.shape} do not match question outputs{Q_o.shape}")
    for answer_id, seq in wrong.items():
        if seq.shape != Q_o.shape:
            raise ShapeError(f"wrong answer {answer_id} outputs{seq.shape} do not match question outputs{Q_o.shape}")
    if not wrong:
        return _empty_result(Q_o, A_c)

    ids = list(wrong)
    A_w = np.stack([wrong[i] for i in ids])                      # W × T × d
    scores_correct = np.sum(Q_o * A_c, axis=1)                   # T
    scores_wrong = np.einsum("td,wtd->tw", Q_o, A_w)             # T × W
    args = cfg.margin - scores_correct[:, None] + scores_wrong
    active = (args > 0).astype(DTYPE)
    value = float(np.sum(args * active))
    counts = active.sum(axis=1)

    grad_O = np.einsum("tw,wtd->td", active, A_w) - counts[:, None] * A_c
    grad_correct = -counts[:, None] * Q_o
    grad_wrong = {i: active[:, j][:, None] * Q_o for j, i in enumerate(ids)}
    return LossResult(value, grad_O, grad_correct, grad_wrong)
