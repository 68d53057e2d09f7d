"""
FTS Engine - Checkpoints
========================
Formato binário:

    b"FTSB1\\n"
    uint64 little-endian: tamanho do header
    header JSON UTF-8 (chaves ordenadas): versão, dtype, config, vocabulário,
        respostas, diretório de tensores (nome, dims, offset), metadados
    payloads little-endian (float32 por padrão, float64 opcional) na
    ordem do diretório

Escrita atômica (temporário + rename).
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from core.config import RunConfig
from core.errors import BadMagicError, CheckpointError, TruncatedCheckpointError, VersionMismatchError
from core.gru import GRU_FIELDS, GRUParams
from core.model import ModelParams, OutputLayerParams
from core.numeric import DTYPE
from utils.dataset import Answer, AnswerSet, Vocabulary
from utils.files import atomic_write_bytes
from utils.logger import log_component_action

MAGIC = b"FTSB1\n"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<Q")
_PAYLOAD_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}


@dataclass
class Checkpoint:
    """Tudo o que é preciso para reconstruir modelo, vocabulário e respostas."""
    tensors: dict[str, np.ndarray]
    config: dict[str, Any]
    vocab_tokens: list[str]
    unk_policy: Literal["trainable", "zero"]
    answers: list[dict[str, Any]]
    trainable_rows: list[bool]
    best: dict[str, Any] = field(default_factory=dict)
    dtype: Literal["float32", "float64"] = "float32"
    format_version: int = FORMAT_VERSION

    def run_config(self) -> RunConfig:
        return RunConfig.model_validate(self.config)

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(tokens=tuple(self.vocab_tokens), unk_policy=self.unk_policy)

    def answer_set(self) -> AnswerSet:
        return AnswerSet(tuple(
            Answer(
                answer_id=a["answer_id"], phrase=a["phrase"],
                tokens=tuple(a["tokens"]), token_ids=tuple(a["token_ids"])
            )
            for a in self.answers
        ))


def _header(ckpt: Checkpoint) -> dict[str, Any]:
    payload_dtype = _PAYLOAD_DTYPES[ckpt.dtype]
    directory = []
    offset = 0
    for name, tensor in ckpt.tensors.items():
        directory.append({"name": name, "dims": list(tensor.shape), "offset": offset})
        offset += tensor.size * payload_dtype.itemsize
    return {
        "format_version": ckpt.format_version,
        "dtype": ckpt.dtype,
        "config": ckpt.config,
        "vocab": {"tokens": ckpt.vocab_tokens, "unk_policy": ckpt.unk_policy},
        "answers": ckpt.answers,
        "trainable_rows": ckpt.trainable_rows,
        "best": ckpt.best,
        "tensors": directory,
    }


def save_checkpoint(path: Path | str, ckpt: Checkpoint) -> Path:
    """Serializa `ckpt` em `path` (atômico)."""
    if ckpt.dtype not in _PAYLOAD_DTYPES:
        raise CheckpointError(f"unsupported checkpoint dtype '{ckpt.dtype}'")
    header = json.dumps(_header(ckpt), sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    payload_dtype = _PAYLOAD_DTYPES[ckpt.dtype]
    chunks = [MAGIC, _LENGTH.pack(len(header)), header]
    chunks.extend(np.ascontiguousarray(t, dtype=payload_dtype).tobytes() for t in ckpt.tensors.values())
    path = atomic_write_bytes(path, b"".join(chunks))
    log_component_action("@Checkpoint", "Checkpoint saved", {
        "path": str(path), "tensors": len(ckpt.tensors), "dtype": ckpt.dtype
    })
    return path


def load_checkpoint(path: Path | str) -> Checkpoint:
    """
    Lê um checkpoint. Tensores voltam como float64.

    Raises:
        BadMagicError: magic string ausente ou errada
        TruncatedCheckpointError: header ou payload incompletos
        VersionMismatchError: format_version desconhecida
        CheckpointError: header ilegível
        OSError: arquivo ilegível
    """
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic in {path}")
    cursor = len(MAGIC)
    if len(data) < cursor + _LENGTH.size:
        raise TruncatedCheckpointError(f"{path}: missing header length")
    (header_len,) = _LENGTH.unpack_from(data, cursor)
    cursor += _LENGTH.size
    if len(data) < cursor + header_len:
        raise TruncatedCheckpointError(f"{path}: header truncated")
    try:
        header = json.loads(data[cursor:cursor + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})") from None
    cursor += header_len

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    dtype = header.get("dtype", "float32")
    if dtype not in _PAYLOAD_DTYPES:
        raise CheckpointError(f"{path}: unsupported dtype '{dtype}'")
    payload_dtype = _PAYLOAD_DTYPES[dtype]

    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["dims"], dtype=np.int64))
        start = cursor + entry["offset"]
        end = start + count * payload_dtype.itemsize
        if end > len(data):
            raise TruncatedCheckpointError(f"{path}: payload of tensor '{entry['name']}' truncated")
        values = np.frombuffer(data, dtype=payload_dtype, count=count, offset=start)
        tensors[entry["name"]] = values.astype(DTYPE).reshape(entry["dims"])

    log_component_action("@Checkpoint", "Checkpoint loaded", {"path": str(path), "tensors": len(tensors)})
    return Checkpoint(
        tensors=tensors,
        config=header["config"],
        vocab_tokens=header["vocab"]["tokens"],
        unk_policy=header["vocab"]["unk_policy"],
        answers=header["answers"],
        trainable_rows=header["trainable_rows"],
        best=header.get("best", {}),
        dtype=dtype,
        format_version=version,
    )


def checkpoint_from_model(
    model: ModelParams,
    config: RunConfig,
    vocab: Vocabulary,
    answer_set: AnswerSet,
    best: dict[str, Any] | None = None
) -> Checkpoint:
    """Snapshot (cópia) dos parâmetros + config + vocabulário + respostas."""
    return Checkpoint(
        tensors={name: t.copy() for name, t in model.named_tensors().items()},
        config=config.model_dump(mode="json"),
        vocab_tokens=list(vocab.tokens),
        unk_policy=vocab.unk_policy,
        answers=[
            {"answer_id": a.answer_id, "phrase": a.phrase, "tokens": list(a.tokens), "token_ids": list(a.token_ids)}
            for a in answer_set.answers
        ],
        trainable_rows=[bool(flag) for flag in model.trainable_rows],
        best=dict(best or {}),
        dtype=config.checkpoint_dtype,
    )


def _gru_from(tensors: dict[str, np.ndarray], prefix: str) -> GRUParams:
    try:
        return GRUParams(**{name: tensors[f"{prefix}{name}"] for name in GRU_FIELDS})
    except KeyError as e:
        raise CheckpointError(f"checkpoint is missing tensor {e.args[0]}") from None


def model_from_checkpoint(ckpt: Checkpoint) -> ModelParams:
    """Reconstrói o ModelParams a partir dos tensores nomeados."""
    config = ckpt.run_config()
    tensors = ckpt.tensors
    out = None
    if config.output_mode == "affine":
        try:
            out = OutputLayerParams(W_o=tensors["out.W_o"], U_o=tensors["out.U_o"], bias=tensors["out.bias"])
        except KeyError as e:
            raise CheckpointError(f"checkpoint is missing tensor {e.args[0]}") from None
    return ModelParams(
        variant=config.variant,
        output_mode=config.output_mode,
        q_forward=_gru_from(tensors, "q_forward."),
        q_backward=_gru_from(tensors, "q_backward."),
        out=out,
        answer_encoder=_gru_from(tensors, "answer_encoder.") if config.variant == "fts_brnn" else None,
        embeddings=tensors["embeddings"],
        trainable_rows=np.array(ckpt.trainable_rows, dtype=bool),
        pad_id=ckpt.vocabulary().pad_id,
    )
