"""
FTS Engine - Word Embeddings
============================
Leitor de embeddings no formato texto do GloVe (`token v1 ... v_dim`)
e montagem da matriz de embeddings alinhada ao vocabulário.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from core.errors import EmbeddingFormatError, ShapeError
from core.numeric import DTYPE
from core.optim import init_uniform
from utils.dataset import PAD_ID, UNK_ID, Vocabulary
from utils.logger import log_component_action


@dataclass(frozen=True)
class EmbeddingTable:
    """Tabela token → vetor, todos com comprimento `dim`."""
    dim: int
    entries: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.entries)


def load_embeddings(path: Path | str, dim: int) -> EmbeddingTable:
    """
    Lê um arquivo de embeddings GloVe.

    Linhas com aridade errada, UTF-8 inválido, valores não numéricos/não
    finitos ou token duplicado são contadas e ignoradas.

    Raises:
        OSError: arquivo ilegível
        EmbeddingFormatError: nenhuma linha utilizável
    """
    path = Path(path)
    entries: dict[str, np.ndarray] = {}
    skipped = 0

    with path.open("rb") as handle:
        for raw in handle:
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                skipped += 1
                continue
            parts = line.rstrip("\r\n").split(" ")
            if len(parts) != dim + 1 or not parts[0]:
                skipped += 1
                continue
            try:
                vector = np.array(parts[1:], dtype=DTYPE)
            except ValueError:
                skipped += 1
                continue
            if not np.all(np.isfinite(vector)) or parts[0] in entries:
                skipped += 1
                continue
            entries[parts[0]] = vector

    if skipped:
        log_component_action(
            "@Loader", "Malformed embedding lines skipped",
            {"path": str(path), "skipped": skipped}, level="warning"
        )
    if not entries:
        raise EmbeddingFormatError(f"no usable embedding lines in {path}")

    log_component_action("@Loader", "Embeddings loaded", {"path": str(path), "tokens": len(entries), "dim": dim})
    return EmbeddingTable(dim=dim, entries=entries)


def build_embedding_matrix(
    vocab: Vocabulary,
    table: EmbeddingTable | None,
    dim: int,
    rng: np.random.Generator
) -> np.ndarray:
    """
    Matriz |V| × dim. Tokens presentes na tabela copiam o vetor GloVe;
    os demais (incluindo <pad> e <unk>) são amostrados uniformes em ±a,
    a = √(6/(dim+1)). Com unk_policy="zero" a linha <unk> é zero.
    """
    if table is not None and table.dim != dim:
        raise ShapeError(f"embedding table dim {table.dim} != embedding_dim {dim}")

    matrix = np.empty((len(vocab), dim), dtype=DTYPE)
    for token_id, token in enumerate(vocab.tokens):
        if table is not None and token in table.entries:
            matrix[token_id] = table.entries[token]
        elif token_id == UNK_ID and vocab.unk_policy == "zero":
            matrix[token_id] = 0.0
        else:
            matrix[token_id] = init_uniform(dim, 1, rng)[:, 0]
    return matrix


def trainable_rows(vocab: Vocabulary, table: EmbeddingTable | None, train_embeddings: bool) -> np.ndarray:
    """
    Máscara booleana das linhas atualizáveis: <pad> sempre, <unk> se a
    política for "trainable", linhas sem vetor GloVe sempre, e linhas
    copiadas do GloVe apenas com train_embeddings.
    """
    entries = table.entries if table is not None else {}
    mask = np.array([train_embeddings or token not in entries for token in vocab.tokens], dtype=bool)
    mask[PAD_ID] = True
    mask[UNK_ID] = vocab.unk_policy == "trainable"
    return mask
