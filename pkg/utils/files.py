"""
FTS Engine - File Helpers
=========================
Escrita atômica (arquivo temporário no mesmo diretório + rename).
"""

import os
import tempfile
from pathlib import Path


def atomic_write_bytes(path: Path | str, payload: bytes) -> Path:
    """Escreve `payload` em `path` de forma atômica."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def atomic_write_text(path: Path | str, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))
