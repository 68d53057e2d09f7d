"""
FTS Engine - Inference
======================
Representações de teste e predição de respostas:

- Pergunta: média das saídas o(t) no tempo (average pooling)
- Resposta: A_e (fts_brnn) ou média de A_o (fts_brnn_s)
- Predição: maior produto interno, ou cabeça de regressão logística
  (softmax) treinada sobre as representações das perguntas de treino

Empates no argmax vão sempre para o menor id de resposta.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from core.errors import EmptyInputError, ShapeError
from core.model import ModelParams, encode_answer, encode_answer_shared, encode_question, fit_length
from core.numeric import DTYPE, dot
from utils.dataset import Dataset
from utils.logger import log_component_action

EvalMethod = Literal["innerp", "lr"]


@dataclass(frozen=True)
class PooledRep:
    """Vetor agregado de uma pergunta (source=None) ou resposta (source=id)."""
    vec: np.ndarray
    source: int | None = None

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.vec)):
            raise ValueError("pooled representation must be finite")


@dataclass
class LRModel:
    """Regressão logística multinomial: logits = W q + b."""
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeError(f"LR weights W{self.W.shape} and b{self.b.shape} are inconsistent")
        if self.C < 2:
            raise ValueError("LR head needs at least 2 classes")

    @property
    def C(self) -> int:
        return self.W.shape[0]

    def logits(self, q: np.ndarray) -> np.ndarray:
        if q.shape != (self.W.shape[1],):
            raise ShapeError(f"question rep{q.shape} does not match LR input dim {self.W.shape[1]}")
        return self.W @ q + self.b


def _vec(rep: PooledRep | np.ndarray) -> np.ndarray:
    return np.asarray(rep.vec if isinstance(rep, PooledRep) else rep, dtype=DTYPE)


def average_pool(outputs: Sequence[np.ndarray] | np.ndarray, source: int | None = None) -> PooledRep:
    """Média elemento a elemento Σ_t o(t) / T."""
    if len(outputs) == 0:
        raise EmptyInputError("cannot pool an empty list of outputs")
    dims = {np.shape(o) for o in outputs}
    if len(dims) != 1:
        raise ShapeError(f"outputs must share one shape, got {sorted(dims)}")
    stacked = np.asarray(outputs, dtype=DTYPE)
    return PooledRep(vec=stacked.sum(axis=0) / stacked.shape[0], source=source)


def _answer_matrix(answers: Mapping[int, np.ndarray] | Sequence[tuple[int, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    items = answers.items() if isinstance(answers, Mapping) else answers
    ordered = sorted((int(i), _vec(v)) for i, v in items)
    if not ordered:
        raise EmptyInputError("answer list must be non-empty")
    ids = np.array([i for i, _ in ordered])
    return ids, np.stack([v for _, v in ordered])


def _first_argmax(scores: np.ndarray) -> int:
    # np.argmax devolve a primeira ocorrência do máximo
    return int(np.argmax(scores))


def _inner_products(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """q·A_i para cada linha da matriz de respostas."""
    return np.array([dot(row, vec) for row in matrix], dtype=DTYPE)


def predict_inner_product(
    q: PooledRep | np.ndarray,
    answers: Mapping[int, np.ndarray] | Sequence[tuple[int, np.ndarray]]
) -> int:
    """argmax_i q·A_i, empates para o menor id."""
    ids, matrix = _answer_matrix(answers)
    return int(ids[_first_argmax(_inner_products(matrix, _vec(q)))])


def rank_answers(
    q: PooledRep | np.ndarray,
    answers: Mapping[int, np.ndarray] | Sequence[tuple[int, np.ndarray]],
    k: int = 5,
    lr_model: LRModel | None = None
) -> list[int]:
    """
    Top-k ids por produto interno (ou por logits LR quando `lr_model`
    é dado). Ordem decrescente de score; empates pelo menor id.
    """
    ids, matrix = _answer_matrix(answers)
    vec = _vec(q)
    if lr_model is not None:
        scores = lr_model.logits(vec)[ids]
    else:
        scores = _inner_products(matrix, vec)
    order = np.lexsort((ids, -scores))
    return ids[order[:k]].tolist()


def train_lr(
    reps: Sequence[tuple[PooledRep | np.ndarray, int]],
    C: int,
    l2: float = 1e-4,
    iterations: int = 500,
    step_size: float = 0.5,
    tolerance: float = 1e-6
) -> LRModel:
    """
    Treina a cabeça LR por gradient descent full-batch sobre
    cross-entropy softmax + λ/2·‖W‖². Inicialização zero, portanto
    determinístico.

    O passo efetivo é step_size / max(1, média de ‖x‖²), o que mantém a
    descida estável para representações de qualquer escala.

    Args:
        reps: Pares (representação, id da resposta)
        C: Número de classes
        l2: λ
        iterations: Máximo de iterações
        step_size: Passo base
        tolerance: Para quando a norma do gradiente cai abaixo disso
    """
    if not reps:
        raise EmptyInputError("LR head needs at least one training example")
    if C < 2:
        raise ValueError("LR head needs at least 2 classes")

    X = np.stack([_vec(rep) for rep, _ in reps])
    labels = np.array([label for _, label in reps], dtype=np.int64)
    if labels.min() < 0 or labels.max() >= C:
        raise ValueError(f"labels must be in [0, {C})")
    if np.all(labels == labels[0]):
        log_component_action("@LRHead", "All training labels identical", {"label": int(labels[0])}, level="warning")

    N, D = X.shape
    Y = np.zeros((N, C), dtype=DTYPE)
    Y[np.arange(N), labels] = 1.0
    W = np.zeros((C, D), dtype=DTYPE)
    b = np.zeros(C, dtype=DTYPE)
    step = step_size / max(1.0, float(np.mean(np.sum(X * X, axis=1))))

    iteration = 0
    for iteration in range(1, iterations + 1):
        logits = X @ W.T + b
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        residual = (probs - Y) / N
        grad_W = residual.T @ X + l2 * W
        grad_b = residual.sum(axis=0)
        if np.sqrt(np.sum(grad_W ** 2) + np.sum(grad_b ** 2)) < tolerance:
            break
        W -= step * grad_W
        b -= step * grad_b

    log_component_action("@LRHead", "LR head trained", {
        "examples": N, "classes": C, "iterations": iteration
    }, level="debug")
    return LRModel(W=W, b=b)


def predict_lr(m: LRModel, q: PooledRep | np.ndarray) -> int:
    """argmax dos logits Wq + b, empates para a menor classe."""
    return _first_argmax(m.logits(_vec(q)))


# ============== REPRESENTAÇÕES DO MODELO ==============

def question_representation(model: ModelParams, token_ids: Sequence[int], seq_len: int | None = None) -> PooledRep:
    """Média de Q_o sem dropout. Na variante fts_brnn_s a pergunta é ajustada para seq_len."""
    ids = list(token_ids)
    if model.variant == "fts_brnn_s":
        if seq_len is None:
            raise ValueError("fts_brnn_s requires seq_len")
        ids = fit_length(ids, seq_len, model.pad_id)
    return average_pool(encode_question(model, ids).Q_o)


def answer_representations(
    model: ModelParams,
    answer_tokens: Mapping[int, Sequence[int]],
    seq_len: int | None = None
) -> dict[int, np.ndarray]:
    """Representação de teste de cada resposta: A_e, ou média de A_o."""
    reps = {}
    for answer_id in sorted(answer_tokens):
        if model.variant == "fts_brnn":
            reps[answer_id] = encode_answer(model, answer_tokens[answer_id]).A_e
        else:
            if seq_len is None:
                raise ValueError("fts_brnn_s requires seq_len")
            reps[answer_id] = average_pool(encode_answer_shared(model, answer_tokens[answer_id], seq_len).A_o).vec
    return reps


def answer_tokens_of(data: Dataset) -> dict[int, tuple[int, ...]]:
    """id da resposta → token_ids (dataset já codificado)."""
    return {a.answer_id: a.token_ids for a in data.answer_set.answers}


def pooled_questions(model: ModelParams, data: Dataset, seq_len: int | None = None) -> list[tuple[PooledRep, int]]:
    return [(question_representation(model, q.token_ids, seq_len), q.answer_id) for q in data.questions]


def fit_lr_head(
    model: ModelParams,
    train: Dataset,
    seq_len: int | None = None,
    l2: float = 1e-4,
    iterations: int = 500,
    step_size: float = 0.5
) -> LRModel:
    """Treina a cabeça LR sobre as representações do split de treino."""
    return train_lr(
        pooled_questions(model, train, seq_len), C=len(train.answer_set),
        l2=l2, iterations=iterations, step_size=step_size
    )


def evaluate(
    model: ModelParams,
    data: Dataset,
    method: EvalMethod = "innerp",
    lr_model: LRModel | None = None,
    seq_len: int | None = None
) -> float:
    """
    Acurácia (fração de perguntas com id previsto == id verdadeiro),
    dropout desligado.

    Raises:
        EmptyInputError: dataset vazio
        ValueError: method="lr" sem lr_model
    """
    if len(data) == 0:
        raise EmptyInputError("cannot evaluate an empty dataset")
    if method == "lr" and lr_model is None:
        raise ValueError("method 'lr' requires a trained LR model")

    answers = answer_representations(model, answer_tokens_of(data), seq_len) if method == "innerp" else None
    correct = 0
    for q in data.questions:
        rep = question_representation(model, q.token_ids, seq_len)
        predicted = predict_inner_product(rep, answers) if method == "innerp" else predict_lr(lr_model, rep)
        correct += int(predicted == q.answer_id)
    return correct / len(data)
