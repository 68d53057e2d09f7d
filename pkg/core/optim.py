"""
FTS Engine - Optimization
=========================
Inicialização uniforme, dropout invertido, RMSProp com momentum, o
laço de treino por época e a verificação de gradientes.

Atualização por tensor (ρ = rms_decay, μ = momentum):
    rms ← ρ·rms + (1−ρ)·g²
    v   ← μ·v − lr·g/√(rms+ε)
    θ   ← θ + v

A redução dos gradientes de um batch segue a ordem fixa das perguntas,
então o treino é bit a bit determinístico para a mesma seed.
"""

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Literal, Protocol

import numpy as np

from core.config import HyperParams
from core.errors import NonFiniteError
from core.gru import GRUParams
from core.loss import (
    LossConfig,
    LossResult,
    full_time_loss,
    full_time_loss_shared,
    pool_steps,
    pool_steps_backward,
    pooling_loss,
)
from core.model import (
    AnswerEncoding,
    ModelParams,
    OutputLayerParams,
    answer_backward,
    encode_answer,
    encode_answer_shared,
    encode_question,
    fit_length,
    question_backward,
)
from core.numeric import DTYPE, numerical_gradient
from utils.logger import log_component_action


class LabeledQuestion(Protocol):
    """Qualquer objeto com ids de tokens e id da resposta (ex: utils.dataset.Question)."""
    token_ids: Sequence[int]
    answer_id: int


# ============== INICIALIZAÇÃO ==============

def init_uniform(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """
    Amostras i.i.d. uniformes em [−a, a], a = √(6/(cols + rows)).
    Para vetores use cols=1.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    a = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols)).astype(DTYPE)


def _init_gru(d_in: int, d: int, rng: np.random.Generator) -> GRUParams:
    # Biases em zero; pesos e estado inicial uniformes
    return GRUParams(
        W_r=init_uniform(d, d_in, rng), U_r=init_uniform(d, d, rng), b_r=np.zeros(d, dtype=DTYPE),
        W_z=init_uniform(d, d_in, rng), U_z=init_uniform(d, d, rng), b_z=np.zeros(d, dtype=DTYPE),
        W_h=init_uniform(d, d_in, rng), U_h=init_uniform(d, d, rng), b_h=np.zeros(d, dtype=DTYPE),
        h0=init_uniform(d, 1, rng)[:, 0],
    )


def init_model(
    variant: Literal["fts_brnn", "fts_brnn_s"],
    output_mode: Literal["affine", "concat"],
    d: int,
    embeddings: np.ndarray,
    trainable_rows: np.ndarray,
    rng: np.random.Generator,
    pad_id: int = 0
) -> ModelParams:
    """Cria um ModelParams com a regra de inicialização uniforme."""
    d_in = embeddings.shape[1]
    q_forward = _init_gru(d_in, d, rng)
    q_backward = _init_gru(d_in, d, rng)
    out = None
    if output_mode == "affine":
        out = OutputLayerParams(W_o=init_uniform(d, d, rng), U_o=init_uniform(d, d, rng), bias=np.zeros(d, dtype=DTYPE))
    answer_encoder = _init_gru(d_in, d, rng) if variant == "fts_brnn" else None
    return ModelParams(
        variant=variant, output_mode=output_mode,
        q_forward=q_forward, q_backward=q_backward, out=out, answer_encoder=answer_encoder,
        embeddings=np.array(embeddings, dtype=DTYPE), trainable_rows=np.asarray(trainable_rows, dtype=bool),
        pad_id=pad_id
    )


# ============== DROPOUT ==============

def apply_dropout(
    x: np.ndarray,
    rate: float,
    rng: np.random.Generator,
    training: bool
) -> tuple[np.ndarray, np.ndarray]:
    """
    Dropout invertido: em treino zera cada entrada com probabilidade
    `rate` e escala as sobreviventes por 1/(1−rate). Em inferência é a
    identidade com máscara de uns.

    Returns:
        Tuple (saída, máscara multiplicativa)
    """
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0:
        return x, np.ones_like(x)
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


# ============== RMSPROP + MOMENTUM ==============

@dataclass
class OptimizerState:
    """Acumuladores RMS e velocidades por tensor (inicializados em zero)."""
    rms: dict[str, np.ndarray]
    velocity: dict[str, np.ndarray]
    step_count: int = 0

    @classmethod
    def for_params(cls, named: Mapping[str, np.ndarray]) -> "OptimizerState":
        return cls(
            rms={name: np.zeros_like(t) for name, t in named.items()},
            velocity={name: np.zeros_like(t) for name, t in named.items()},
        )


def rmsprop_momentum_step(
    state: OptimizerState,
    name: str,
    param: np.ndarray,
    grad: np.ndarray,
    hp: HyperParams
) -> None:
    """
    Atualiza `param` in-place.

    Raises:
        NonFiniteError: gradiente com NaN/Inf (nomeia o parâmetro)
    """
    if grad.shape != param.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameter '{name}' {param.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError(f"non-finite gradient for parameter '{name}'")
    rms = state.rms[name]
    velocity = state.velocity[name]
    rms *= hp.rms_decay
    rms += (1.0 - hp.rms_decay) * grad * grad
    velocity *= hp.momentum
    velocity -= hp.learning_rate * grad / np.sqrt(rms + hp.epsilon)
    param += velocity


def apply_gradients(
    model: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    hp: HyperParams
) -> None:
    """Um passo do otimizador sobre todos os tensores, em ordem fixa."""
    if hp.max_grad_norm is not None:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if norm > hp.max_grad_norm:
            scale = hp.max_grad_norm / norm
            log_component_action("@Optimizer", "Gradient clipped", {
                "step": state.step_count, "norm": norm
            }, level="debug")
            grads = {name: g * scale for name, g in grads.items()}
    for name, param in model.named_tensors().items():
        rmsprop_momentum_step(state, name, param, grads[name], hp)
    state.step_count += 1


# ============== OBJETIVO ==============

@dataclass
class Objective:
    """
    Liga a variante do modelo à loss configurada.

    Na variante fts_brnn_s perguntas e respostas são ajustadas para
    `seq_len` passos; com loss de pooling as respostas são agregadas com o
    mesmo operador da pergunta.
    """
    variant: Literal["fts_brnn", "fts_brnn_s"]
    loss_kind: Literal["full_time", "pooling"]
    cfg: LossConfig = field(default_factory=LossConfig)
    seq_len: int | None = None

    def __post_init__(self) -> None:
        if self.variant == "fts_brnn_s" and self.seq_len is None:
            raise ValueError("fts_brnn_s requires seq_len")

    def question_ids(self, token_ids: Sequence[int], pad_id: int) -> list[int]:
        if self.variant == "fts_brnn_s":
            return fit_length(token_ids, self.seq_len, pad_id)
        return list(token_ids)

    def encode_answer(self, model: ModelParams, token_ids: Sequence[int]) -> AnswerEncoding:
        if self.variant == "fts_brnn_s":
            return encode_answer_shared(model, token_ids, self.seq_len)
        return encode_answer(model, token_ids)

    def loss(
        self,
        Q_o: np.ndarray,
        correct: AnswerEncoding,
        wrong: Mapping[int, AnswerEncoding]
    ) -> LossResult:
        """Loss de um exemplo; gradientes de resposta no formato da representação."""
        if self.variant == "fts_brnn":
            reps = {i: enc.A_e for i, enc in wrong.items()}
            fn = full_time_loss if self.loss_kind == "full_time" else pooling_loss
            return fn(Q_o, correct.A_e, reps, self.cfg)

        if self.loss_kind == "full_time":
            return full_time_loss_shared(Q_o, correct.A_o, {i: enc.A_o for i, enc in wrong.items()}, self.cfg)

        pooling = self.cfg.pooling
        result = pooling_loss(
            Q_o, pool_steps(correct.A_o, pooling),
            {i: pool_steps(enc.A_o, pooling) for i, enc in wrong.items()}, self.cfg
        )
        return LossResult(
            value=result.value,
            grad_outputs=result.grad_outputs,
            grad_correct=pool_steps_backward(correct.A_o, result.grad_correct, pooling),
            grad_wrong={i: pool_steps_backward(wrong[i].A_o, g, pooling) for i, g in result.grad_wrong.items()},
        )


@dataclass
class BatchResult:
    """Losses por pergunta e gradientes somados do batch."""
    losses: list[float]
    grads: dict[str, np.ndarray]


def _choose_wrong(
    answer_id: int,
    all_ids: Sequence[int],
    cfg: LossConfig,
    rng: np.random.Generator | None
) -> list[int]:
    others = [i for i in all_ids if i != answer_id]
    if cfg.wrong_answer_policy == "all" or len(others) <= cfg.k:
        return others
    if rng is None:
        raise ValueError("sample_k policy requires an rng")
    return sorted(rng.choice(others, size=cfg.k, replace=False).tolist())


def batch_forward_backward(
    model: ModelParams,
    batch: Sequence[LabeledQuestion],
    answer_tokens: Mapping[int, Sequence[int]],
    objective: Objective,
    rng: np.random.Generator | None = None,
    drop_probability: float = 0.0,
    training: bool = False,
    backward: bool = True
) -> BatchResult:
    """
    Forward (e backward) de um batch.

    As representações de resposta são calculadas uma vez por batch (os
    parâmetros não mudam dentro dele) e retro-propagadas uma vez com os
    gradientes acumulados de todas as perguntas.

    Args:
        model: Parâmetros atuais
        batch: Perguntas com token_ids e answer_id
        answer_tokens: id da resposta → ids dos tokens
        objective: Variante + loss
        rng: RNG para dropout e amostragem de respostas erradas
        drop_probability: Probabilidade de dropout nas entradas das perguntas
        training: Liga o dropout
        backward: Se False, calcula só as losses

    Returns:
        BatchResult com losses por pergunta e gradientes somados
    """
    all_ids = sorted(answer_tokens)
    wrong_sets = [_choose_wrong(q.answer_id, all_ids, objective.cfg, rng) for q in batch]
    needed = sorted({q.answer_id for q in batch}.union(*wrong_sets))
    encodings = {i: objective.encode_answer(model, answer_tokens[i]) for i in needed}

    grads = model.zero_grads() if backward else {}
    answer_grads: dict[int, np.ndarray] = {}
    losses = []

    for question, wrong_ids in zip(batch, wrong_sets):
        ids = objective.question_ids(question.token_ids, model.pad_id)
        mask = None
        if training and drop_probability > 0:
            inputs = model.embeddings[np.asarray(ids, dtype=np.int64)]
            _, mask = apply_dropout(inputs, drop_probability, rng, training=True)
        q_enc = encode_question(model, ids, mask)
        result = objective.loss(q_enc.Q_o, encodings[question.answer_id], {i: encodings[i] for i in wrong_ids})
        losses.append(result.value)
        if not backward:
            continue

        question_backward(model, q_enc, result.grad_outputs, grads)
        contributions = [(question.answer_id, result.grad_correct), *result.grad_wrong.items()]
        for answer_id, grad in contributions:
            if answer_id in answer_grads:
                answer_grads[answer_id] = answer_grads[answer_id] + grad
            else:
                answer_grads[answer_id] = np.array(grad, dtype=DTYPE)

    if backward:
        for answer_id in sorted(answer_grads):
            answer_backward(model, encodings[answer_id], answer_grads[answer_id], grads)
    return BatchResult(losses=losses, grads=grads)


# ============== TREINO ==============

@dataclass
class EpochStats:
    """Resumo de uma época."""
    mean_loss: float
    examples_seen: int
    batches: int


def train_epoch(
    model: ModelParams,
    train: Sequence[LabeledQuestion],
    answer_tokens: Mapping[int, Sequence[int]],
    objective: Objective,
    hp: HyperParams,
    state: OptimizerState,
    rng: np.random.Generator
) -> EpochStats:
    """
    Uma época: embaralha as perguntas, e para cada batch faz forward/
    backward com máscaras de dropout novas, média dos gradientes e um
    passo do otimizador.

    Raises:
        NonFiniteError: loss não finita (com índice do batch)
    """
    order = rng.permutation(len(train))
    total_loss = 0.0
    batches = 0
    for batch_index, start in enumerate(range(0, len(order), hp.batch_size)):
        batch = [train[i] for i in order[start:start + hp.batch_size]]
        result = batch_forward_backward(
            model, batch, answer_tokens, objective, rng=rng,
            drop_probability=hp.drop_probability, training=True
        )
        batch_loss = math.fsum(result.losses)
        if not math.isfinite(batch_loss):
            raise NonFiniteError(f"non-finite loss in batch {batch_index}")
        scale = 1.0 / len(batch)
        for grad in result.grads.values():
            grad *= scale
        apply_gradients(model, result.grads, state, hp)
        total_loss += batch_loss
        batches += 1

    return EpochStats(mean_loss=total_loss / max(len(train), 1), examples_seen=len(train), batches=batches)


# ============== GRADIENT CHECK ==============

@dataclass
class GradCheckReport:
    """Erro relativo máximo por tensor e veredito."""
    max_relative_error: dict[str, float]
    tolerance: float

    @property
    def failures(self) -> list[str]:
        return [name for name, err in self.max_relative_error.items() if not err < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.max_relative_error.values(), default=0.0)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a − n| / max(1e−8, |a| + |n|), elemento a elemento."""
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))


def analytic_gradients(
    model: ModelParams,
    batch: Sequence[LabeledQuestion],
    answer_tokens: Mapping[int, Sequence[int]],
    objective: Objective
) -> dict[str, np.ndarray]:
    """Gradiente analítico da soma das losses (dropout desligado)."""
    return batch_forward_backward(model, batch, answer_tokens, objective).grads


def numeric_gradients(
    model: ModelParams,
    batch: Sequence[LabeledQuestion],
    answer_tokens: Mapping[int, Sequence[int]],
    objective: Objective,
    step: float = 1e-3
) -> dict[str, np.ndarray]:
    """
    Gradiente por diferenças centrais (com extrapolação de Richardson) de
    cada tensor. Na tabela de embeddings só as linhas treináveis são
    verificadas (as demais ficam 0).
    """
    def total_loss() -> float:
        result = batch_forward_backward(model, batch, answer_tokens, objective, backward=False)
        return math.fsum(result.losses)

    def loss_of(param: np.ndarray) -> Callable[[np.ndarray], float]:
        def f(values: np.ndarray) -> float:
            saved = param.copy()
            param[...] = values
            try:
                return total_loss()
            finally:
                param[...] = saved
        return f

    numeric = {}
    for name, param in model.named_tensors().items():
        if name == "embeddings":
            grad = np.zeros_like(param)
            for row in np.flatnonzero(model.trainable_rows):
                grad[row] = numerical_gradient(loss_of(param[row]), param[row], step, richardson=True)
            numeric[name] = grad
        else:
            numeric[name] = numerical_gradient(loss_of(param), param, step, richardson=True)
    return numeric


def compare_gradients(
    analytic: Mapping[str, np.ndarray],
    numeric: Mapping[str, np.ndarray],
    tolerance: float
) -> GradCheckReport:
    errors = {
        name: float(np.max(relative_error(analytic[name], numeric[name]), initial=0.0))
        for name in numeric
    }
    return GradCheckReport(max_relative_error=errors, tolerance=tolerance)


def gradient_check(
    model: ModelParams,
    batch: Sequence[LabeledQuestion],
    answer_tokens: Mapping[int, Sequence[int]],
    objective: Objective,
    tolerance: float = 1e-5,
    step: float = 1e-3
) -> GradCheckReport:
    """
    Compara o backward do modelo com diferenças centrais da loss
    configurada, em todos os tensores.
    """
    report = compare_gradients(
        analytic_gradients(model, batch, answer_tokens, objective),
        numeric_gradients(model, batch, answer_tokens, objective, step),
        tolerance
    )
    if not report.passed:
        log_component_action("@GradCheck", "Gradient mismatch", {
            "failures": report.failures, "worst": report.worst
        }, level="warning")
    return report


@dataclass(frozen=True)
class _Example:
    token_ids: tuple[int, ...]
    answer_id: int


def make_gradcheck_instance(
    variant: Literal["fts_brnn", "fts_brnn_s"],
    output_mode: Literal["affine", "concat"],
    rng: np.random.Generator,
    d: int = 4,
    T_q: int = 5,
    n_answers: int = 3,
    vocab_size: int = 12
) -> tuple[ModelParams, list[_Example], dict[int, list[int]], int | None]:
    """
    Instância aleatória pequena para gradcheck: pesos uniformes em
    [−0.5, 0.5], todas as linhas de embeddings treináveis.

    Returns:
        Tuple (modelo, [exemplo], tokens das respostas, seq_len)
    """
    def uniform(*shape: int) -> np.ndarray:
        return rng.uniform(-0.5, 0.5, size=shape)

    def gru(d_in: int) -> GRUParams:
        return GRUParams(
            W_r=uniform(d, d_in), U_r=uniform(d, d), b_r=uniform(d),
            W_z=uniform(d, d_in), U_z=uniform(d, d), b_z=uniform(d),
            W_h=uniform(d, d_in), U_h=uniform(d, d), b_h=uniform(d),
            h0=uniform(d),
        )

    d_emb = d
    out = OutputLayerParams(W_o=uniform(d, d), U_o=uniform(d, d), bias=uniform(d)) if output_mode == "affine" else None
    model = ModelParams(
        variant=variant, output_mode=output_mode,
        q_forward=gru(d_emb), q_backward=gru(d_emb), out=out,
        answer_encoder=gru(d_emb) if variant == "fts_brnn" else None,
        embeddings=uniform(vocab_size, d_emb), trainable_rows=np.ones(vocab_size, dtype=bool),
    )
    answer_tokens = {
        i: rng.integers(1, vocab_size, size=int(rng.integers(1, 3))).tolist()
        for i in range(n_answers)
    }
    example = _Example(token_ids=tuple(rng.integers(1, vocab_size, size=T_q).tolist()), answer_id=int(rng.integers(n_answers)))
    seq_len = T_q if variant == "fts_brnn_s" else None
    return model, [example], answer_tokens, seq_len
