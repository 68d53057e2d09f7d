#!/usr/bin/env python3
"""
FTS Engine - Full-Time Supervised BRNN for Factoid QA
=====================================================
Treino e inferência de encoders GRU bidirecionais com loss de margem
aplicada em todos os passos de tempo.

Uso:
    python main.py synth --out data/                       # Dataset sintético de mesa
    python main.py split --dataset quiz.jsonl --out data/  # Split 60/20/20
    python main.py train --config runs/fts.conf            # Treino (best.ckpt, final.ckpt, metrics.jsonl)
    python main.py eval --checkpoint runs/best.ckpt --dataset quiz.jsonl --eval-method lr
    python main.py predict --checkpoint runs/best.ckpt --dataset quiz.jsonl
    python main.py gradcheck                               # Verificação de gradientes
    python main.py ablate --dataset data/synthetic.jsonl   # Grade loss × camada de saída

Status de saída: 0 sucesso, 1 erro de execução (ou gradcheck reprovado),
2 configuração inválida, 3 erro de I/O.
"""

import argparse
import sys
from pathlib import Path

# Adiciona o diretório raiz ao path
sys.path.insert(0, str(Path(__file__).parent))

from core.config import load_run_config
from core.errors import ConfigError, FTSError
from core.orchestrator import COMMANDS, run
from utils.logger import logger

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    """Flags comuns a todos os subcomandos; todas opcionais (None = não informado)."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Arquivo key = value")

    paths = common.add_argument_group("paths")
    paths.add_argument("--dataset")
    paths.add_argument("--valid-dataset")
    paths.add_argument("--test-dataset")
    paths.add_argument("--embeddings", help="Embeddings GloVe (formato texto)")
    paths.add_argument("--checkpoint")
    paths.add_argument("--out", help="Diretório de saída")

    model = common.add_argument_group("model")
    model.add_argument("--variant", help="fts-brnn | fts-brnn-s")
    model.add_argument("--output-mode", help="affine | concat")
    model.add_argument("--loss", help="full-time | pooling")
    model.add_argument("--pooling", help="mean | max (loss de pooling)")
    model.add_argument("--dim", type=int)
    model.add_argument("--embedding-dim", type=int)
    model.add_argument("--seq-len", type=int, help="T da variante fts-brnn-s")
    model.add_argument("--unk-policy", help="trainable | zero")
    model.add_argument("--train-embeddings", action="store_true", default=None)

    optim = common.add_argument_group("optimization")
    optim.add_argument("--lr", type=float)
    optim.add_argument("--momentum", type=float)
    optim.add_argument("--dropout", type=float)
    optim.add_argument("--epochs", type=int)
    optim.add_argument("--batch-size", type=int)
    optim.add_argument("--seed", type=int)
    optim.add_argument("--max-grad-norm", type=float)
    optim.add_argument("--wrong-answer-policy", help="all | sample-k")
    optim.add_argument("--sample-k", type=int)

    data = common.add_argument_group("data / evaluation")
    data.add_argument("--min-answer-count", type=int)
    data.add_argument("--eval-method", help="innerp | lr")
    data.add_argument("--seeds", help="Seeds da ablação, separadas por vírgula")
    data.add_argument("--checkpoint-dtype", help="float32 | float64")
    data.add_argument("--n-answers", type=int)
    data.add_argument("--q-per-answer", type=int)
    data.add_argument("--noise-len", type=int)

    parser = argparse.ArgumentParser(
        prog="fts-engine",
        description="Full-time supervised bidirectional GRU question answering"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common])
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point. Devolve o status de saída."""
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")

    try:
        config = load_run_config(config_path, args)
        return run(command, config)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except FTSError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
