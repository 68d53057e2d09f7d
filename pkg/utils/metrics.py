"""
FTS Engine - Metrics & Reports
==============================
Log de métricas em JSON Lines e relatórios em tabela (rich).

Os registros não levam timestamp: duas execuções com a mesma seed
produzem arquivos idênticos.
"""

import json
from pathlib import Path
from typing import Any

import pandas as pd
from rich.console import Console
from rich.table import Table

from utils.files import atomic_write_text

console = Console()


class MetricsWriter:
    """
    Acumula registros e regrava o arquivo JSONL inteiro a cada append,
    sempre de forma atômica.
    """

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.records: list[dict[str, Any]] = []

    def append(self, record: dict[str, Any]) -> None:
        self.records.append(record)
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        atomic_write_text(self.path, "\n".join(lines) + "\n")


def read_metrics(path: Path | str) -> list[dict[str, Any]]:
    with Path(path).open("r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def frame_to_table(df: pd.DataFrame, title: str) -> Table:
    """Converte um DataFrame em tabela rich (floats com 4 casas)."""
    table = Table(title=title)
    for column in df.columns:
        table.add_column(str(column), justify="right" if pd.api.types.is_numeric_dtype(df[column]) else "left")
    for row in df.itertuples(index=False):
        table.add_row(*(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row))
    return table


def print_frame(df: pd.DataFrame, title: str) -> None:
    console.print(frame_to_table(df, title))


def summarize_ablation(records: list[dict[str, Any]]) -> pd.DataFrame:
    """
    Média por configuração das acurácias InnerP/LR sobre as seeds.

    Args:
        records: Um registro por (configuração, seed) com acc_innerp e acc_lr
    """
    df = pd.DataFrame(records)
    summary = (
        df.groupby("configuration", sort=False)
        .agg(seeds=("seed", "count"), acc_innerp=("acc_innerp", "mean"), acc_lr=("acc_lr", "mean"))
        .reset_index()
    )
    return summary


def gradcheck_frame(reports: list[dict[str, Any]]) -> pd.DataFrame:
    """Uma linha por configuração: pior erro relativo e veredito."""
    return pd.DataFrame(reports, columns=["configuration", "instances", "worst_relative_error", "passed"])
