"""
FTS Engine - GRU Cell
=====================
Célula GRU com forward por passo, unroll de sequência e backward
exato (BPTT completo, sem truncamento).

Convenção do estado:
    r  = σ(W_r x + U_r h_prev + b_r)
    z  = σ(W_z x + U_z h_prev + b_z)
    h~ = tanh(W_h x + U_h (r ⊙ h_prev) + b_h)
    h  = z ⊙ h_prev + (1 − z) ⊙ h~

O gate z multiplica o estado anterior. h0 é parâmetro aprendido.
"""

from dataclasses import dataclass

import numpy as np

from core.errors import EmptyInputError, ShapeError
from core.numeric import DTYPE, affine, hadamard, sigmoid, tanh_act

GRU_FIELDS = ("W_r", "U_r", "b_r", "W_z", "U_z", "b_z", "W_h", "U_h", "b_h", "h0")


@dataclass
class GRUParams:
    """Os nove tensores do GRU mais o estado inicial aprendido h0."""
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray
    h0: np.ndarray

    def __post_init__(self) -> None:
        d, d_in = self.W_r.shape
        for name in ("W_r", "W_z", "W_h"):
            if getattr(self, name).shape != (d, d_in):
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {(d, d_in)}")
        for name in ("U_r", "U_z", "U_h"):
            if getattr(self, name).shape != (d, d):
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {(d, d)}")
        for name in ("b_r", "b_z", "b_h", "h0"):
            if getattr(self, name).shape != (d,):
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {(d,)}")

    @property
    def d(self) -> int:
        return self.W_r.shape[0]

    @property
    def d_in(self) -> int:
        return self.W_r.shape[1]

    @classmethod
    def zeros(cls, d_in: int, d: int) -> "GRUParams":
        shapes = {
            "W_r": (d, d_in), "U_r": (d, d), "b_r": (d,),
            "W_z": (d, d_in), "U_z": (d, d), "b_z": (d,),
            "W_h": (d, d_in), "U_h": (d, d), "b_h": (d,),
            "h0": (d,),
        }
        return cls(**{name: np.zeros(shape, dtype=DTYPE) for name, shape in shapes.items()})

    def named_tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Tensores por nome, em ordem estável (referências, não cópias)."""
        return {f"{prefix}{name}": getattr(self, name) for name in GRU_FIELDS}


@dataclass
class GRUGrads(GRUParams):
    """Gradientes com o mesmo layout de GRUParams."""


@dataclass
class GRUStepCache:
    """Intermediários de um passo, guardados para o backward."""
    x_t: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    h_tilde: np.ndarray
    h_t: np.ndarray


def _step(
    p: GRUParams,
    x_t: np.ndarray,
    px_r: np.ndarray,
    px_z: np.ndarray,
    px_h: np.ndarray,
    h_prev: np.ndarray
) -> tuple[np.ndarray, GRUStepCache]:
    # px_* = W_* x + b_* já calculados
    r = sigmoid(px_r + p.U_r @ h_prev)
    z = sigmoid(px_z + p.U_z @ h_prev)
    h_tilde = tanh_act(px_h + p.U_h @ hadamard(r, h_prev))
    h_t = hadamard(z, h_prev) + hadamard(1.0 - z, h_tilde)
    return h_t, GRUStepCache(x_t=x_t, h_prev=h_prev, r=r, z=z, h_tilde=h_tilde, h_t=h_t)


def gru_step(p: GRUParams, x_t: np.ndarray, h_prev: np.ndarray) -> tuple[np.ndarray, GRUStepCache]:
    """
    Um passo do GRU.

    Args:
        p: Parâmetros do GRU
        x_t: Entrada d_in
        h_prev: Estado anterior d

    Returns:
        Tuple (h_t, cache)
    """
    if h_prev.shape != (p.d,):
        raise ShapeError(f"gru_step: h_prev{h_prev.shape} does not match d={p.d}")
    return _step(
        p, x_t,
        affine(p.W_r, x_t, p.b_r),
        affine(p.W_z, x_t, p.b_z),
        affine(p.W_h, x_t, p.b_h),
        h_prev
    )


def gru_forward(p: GRUParams, xs) -> tuple[np.ndarray, list[GRUStepCache]]:
    """
    Desenrola o GRU sobre a sequência, partindo de h0.

    Args:
        p: Parâmetros do GRU
        xs: Sequência T × d_in (array ou lista de vetores)

    Returns:
        Tuple (hs T × d em ordem de entrada, caches)
    """
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise EmptyInputError("gru_forward requires a non-empty sequence")
    if xs.shape[1] != p.d_in:
        raise ShapeError(f"gru_forward: inputs have width {xs.shape[1]}, expected d_in={p.d_in}")

    # Projeções de entrada de todos os passos de uma vez
    proj_r = xs @ p.W_r.T + p.b_r
    proj_z = xs @ p.W_z.T + p.b_z
    proj_h = xs @ p.W_h.T + p.b_h

    hs = np.empty((xs.shape[0], p.d), dtype=DTYPE)
    caches = []
    h = p.h0
    for t in range(xs.shape[0]):
        h, cache = _step(p, xs[t], proj_r[t], proj_z[t], proj_h[t], h)
        hs[t] = h
        caches.append(cache)
    return hs, caches


def gru_backward(
    p: GRUParams,
    caches: list[GRUStepCache],
    grad_hs
) -> tuple[GRUGrads, np.ndarray, np.ndarray]:
    """
    Backward exato de Σ_t ⟨grad_hs[t], h_t⟩.

    Args:
        p: Parâmetros usados no forward
        caches: Caches de gru_forward
        grad_hs: Gradiente upstream por passo (T × d, zeros permitidos)

    Returns:
        Tuple (gradientes dos parâmetros, gradientes das entradas T × d_in, gradiente de h0)
    """
    grad_hs = np.asarray(grad_hs, dtype=DTYPE)
    T = len(caches)
    if grad_hs.shape != (T, p.d):
        raise ShapeError(f"gru_backward: grad_hs{grad_hs.shape} does not match {T} cached steps of d={p.d}")

    da_r = np.empty((T, p.d), dtype=DTYPE)
    da_z = np.empty((T, p.d), dtype=DTYPE)
    da_h = np.empty((T, p.d), dtype=DTYPE)
    carry = np.zeros(p.d, dtype=DTYPE)

    for t in range(T - 1, -1, -1):
        c = caches[t]
        dh = grad_hs[t] + carry
        dz = dh * (c.h_prev - c.h_tilde)
        dh_tilde = dh * (1.0 - c.z)
        da_h[t] = dh_tilde * (1.0 - c.h_tilde ** 2)
        d_rh = p.U_h.T @ da_h[t]
        da_z[t] = dz * c.z * (1.0 - c.z)
        da_r[t] = (d_rh * c.h_prev) * c.r * (1.0 - c.r)
        carry = dh * c.z + d_rh * c.r + p.U_z.T @ da_z[t] + p.U_r.T @ da_r[t]

    xs = np.stack([c.x_t for c in caches])
    h_prevs = np.stack([c.h_prev for c in caches])
    r_h_prevs = np.stack([c.r * c.h_prev for c in caches])

    grads = GRUGrads(
        W_r=da_r.T @ xs, U_r=da_r.T @ h_prevs, b_r=da_r.sum(axis=0),
        W_z=da_z.T @ xs, U_z=da_z.T @ h_prevs, b_z=da_z.sum(axis=0),
        W_h=da_h.T @ xs, U_h=da_h.T @ r_h_prevs, b_h=da_h.sum(axis=0),
        h0=carry.copy(),
    )
    grad_xs = da_r @ p.W_r + da_z @ p.W_z + da_h @ p.W_h
    return grads, grad_xs, carry
