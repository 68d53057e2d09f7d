"""
FTS Engine - Shared Test Fixtures
=================================
"""

import json
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Adiciona diretório raiz ao path
sys.path.insert(0, str(Path(__file__).parent.parent))

# Testes não escrevem em logs/
os.environ.setdefault("FTS_LOG_TO_FILE", "false")
os.environ.setdefault("FTS_LOG_LEVEL", "WARNING")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: treinos de mesa que levam minutos")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def write_jsonl(path: Path, records: list[dict]) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def quiz_file(tmp_path) -> Path:
    """Três respostas com 6 perguntas cada, mais uma resposta rara (2 perguntas)."""
    records = []
    topics = {
        "Sun Wukong": ["monkey king", "journey west", "golden staff"],
        "China": ["great wall", "yangtze river", "beijing capital"],
        "Isaac Newton": ["gravity apple", "principia mathematica", "calculus"],
    }
    for answer, clues in topics.items():
        for i in range(6):
            records.append({
                "question": [f"This figure is linked to the {clues[i % 3]}.", f"Clue number {i} points here."],
                "answer": answer
            })
    records.append({"question": ["A rarely asked question."], "answer": "Rare"})
    records.append({"question": ["Another rare one."], "answer": "Rare"})
    return write_jsonl(tmp_path / "quiz.jsonl", records)
