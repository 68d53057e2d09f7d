"""
FTS Engine - Numeric Kernels
============================
Kernels densos mínimos sobre numpy (float64, row-major) usados por
todos os outros módulos, mais o oráculo de gradiente numérico por
diferenças centrais.

Todas as funções são puras: não alteram os argumentos.
"""

from typing import Callable

import numpy as np

from core.errors import OracleError, ShapeError

DTYPE = np.float64


def affine(W: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Calcula W·x + b.

    Args:
        W: Matriz d_out × d_in
        x: Vetor d_in
        b: Vetor d_out

    Raises:
        ShapeError: dimensões não conformes (mensagem nomeia os operandos)
    """
    if W.ndim != 2 or x.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"affine expects W rank 2, x and b rank 1; got W{W.shape} x{x.shape} b{b.shape}")
    if W.shape[1] != x.shape[0]:
        raise ShapeError(f"affine: W{W.shape} incompatible with x{x.shape}")
    if W.shape[0] != b.shape[0]:
        raise ShapeError(f"affine: W{W.shape} incompatible with b{b.shape}")
    return W @ x + b


def sigmoid(v: np.ndarray) -> np.ndarray:
    """Sigmoide elementwise, estável para |x| grande."""
    v = np.asarray(v, dtype=DTYPE)
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh_act(v: np.ndarray) -> np.ndarray:
    """Ativação candidata do GRU (φ = tanh)."""
    return np.tanh(np.asarray(v, dtype=DTYPE))


def hadamard(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Produto elementwise u ⊙ v."""
    if u.shape != v.shape:
        raise ShapeError(f"hadamard: u{u.shape} and v{v.shape} differ")
    return u * v


def dot(u: np.ndarray, v: np.ndarray) -> float:
    """Produto interno de dois vetores de mesmo comprimento."""
    if u.ndim != 1 or u.shape != v.shape:
        raise ShapeError(f"dot: u{u.shape} and v{v.shape} must be equal-length vectors")
    return float(np.dot(u, v))


def numerical_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    step: float = 1e-5,
    richardson: bool = False
) -> np.ndarray:
    """
    Gradiente por diferenças centrais: (f(x+h·e_i) − f(x−h·e_i)) / 2h.

    Com `richardson`, combina os passos h e h/2 em (4·D(h/2) − D(h)) / 3,
    o que cancela o termo O(h²) e permite um h maior, com menos
    cancelamento catastrófico em gradientes muito pequenos.

    Args:
        f: Função escalar de um tensor
        x: Ponto de avaliação (não é alterado)
        step: Passo h > 0
        richardson: Aplica a extrapolação de Richardson

    Raises:
        OracleError: f retornou valor não finito
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=DTYPE)
    grad = np.zeros_like(x)
    point = x.copy()

    def central(i: int, h: float) -> float:
        original = point.flat[i]
        point.flat[i] = original + h
        f_plus = float(f(point.copy()))
        point.flat[i] = original - h
        f_minus = float(f(point.copy()))
        point.flat[i] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise OracleError(f"non-finite evaluation at coordinate {i}")
        return (f_plus - f_minus) / (2.0 * h)

    for i in range(x.size):
        if richardson:
            grad.flat[i] = (4.0 * central(i, step / 2.0) - central(i, step)) / 3.0
        else:
            grad.flat[i] = central(i, step)
    return grad
