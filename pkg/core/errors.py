"""
FTS Engine - Errors
===================
Hierarquia de exceções do sistema.
Toda falha de domínio herda de FTSError para que o CLI possa mapear
o tipo de erro para o código de saída correto.
"""


class FTSError(Exception):
    """Erro base do FTS Engine."""


class ShapeError(FTSError, ValueError):
    """Dimensões incompatíveis entre operandos."""


class EmptyInputError(FTSError, ValueError):
    """Sequência, lista ou dataset vazio onde é proibido."""


class OracleError(FTSError, ArithmeticError):
    """Avaliação não finita durante o gradiente numérico."""


class EmbeddingFormatError(FTSError, ValueError):
    """Arquivo de embeddings sem nenhuma linha utilizável."""


class DatasetParseError(FTSError, ValueError):
    """Registro JSONL malformado."""

    def __init__(self, line_number: int, reason: str) -> None:
        self.line_number = line_number
        super().__init__(f"line {line_number}: {reason}")


class EmptyDatasetError(FTSError, ValueError):
    """Filtro ou split resultou em dataset vazio."""


class VariantError(FTSError, ValueError):
    """Operação chamada para a variante errada do modelo."""


class NonFiniteError(FTSError, ArithmeticError):
    """Gradiente ou loss não finito (NaN/Inf)."""


class ConfigError(FTSError, ValueError):
    """Configuração inválida. `key` indica a chave ofensora."""

    def __init__(self, key: str, reason: str) -> None:
        self.key = key
        super().__init__(f"invalid config key '{key}': {reason}")


class CheckpointError(FTSError):
    """Erro base de leitura de checkpoint."""


class BadMagicError(CheckpointError):
    """Arquivo não começa com a assinatura esperada."""


class TruncatedCheckpointError(CheckpointError):
    """Header ou payload menor do que o declarado."""


class VersionMismatchError(CheckpointError):
    """Versão de formato desconhecida."""
