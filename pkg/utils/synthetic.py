"""
FTS Engine - Synthetic Dataset Generator
========================================
Gera datasets de mesa para validar o pipeline fim a fim.

Cada classe k tem `signature_len` tokens exclusivos (sig_k_j). Uma
pergunta intercala esses tokens, na ordem, em posições aleatórias entre
`noise_len` tokens sorteados de um pool compartilhado (noise_i). A
resposta é o token `ans_k`. Determinístico para uma seed fixa.
"""

import numpy as np

from utils.dataset import Answer, AnswerSet, Dataset, Question


def generate_synthetic(
    n_answers: int,
    q_per_answer: int,
    signature_len: int,
    noise_len: int,
    seed: int,
    noise_pool: int = 50
) -> Dataset:
    """
    Args:
        n_answers: Número de classes de resposta
        q_per_answer: Perguntas por classe
        signature_len: Tokens de assinatura por classe
        noise_len: Tokens de ruído por pergunta (0 = só assinatura)
        seed: Seed do gerador
        noise_pool: Tamanho do pool de ruído compartilhado

    Returns:
        Dataset tokenizado, perguntas agrupadas por classe
    """
    if min(n_answers, q_per_answer, signature_len, noise_pool) < 1 or noise_len < 0:
        raise ValueError("synthetic generator sizes must be >= 1 and noise_len >= 0")

    rng = np.random.default_rng(seed)
    pool = [f"noise_{i}" for i in range(noise_pool)]
    answers = tuple(
        Answer(answer_id=k, phrase=f"ans_{k}", tokens=(f"ans_{k}",))
        for k in range(n_answers)
    )

    questions = []
    for k in range(n_answers):
        signature = [f"sig_{k}_{j}" for j in range(signature_len)]
        length = signature_len + noise_len
        for _ in range(q_per_answer):
            slots = np.sort(rng.choice(length, size=signature_len, replace=False))
            noise = iter(pool[i] for i in rng.integers(0, noise_pool, size=noise_len))
            sig = iter(signature)
            slot_set = set(slots.tolist())
            tokens = tuple(next(sig) if t in slot_set else next(noise) for t in range(length))
            questions.append(Question(
                sentences=(" ".join(tokens),),
                tokens=tokens,
                answer_id=k
            ))

    return Dataset(questions=tuple(questions), answer_set=AnswerSet(answers))
