"""
FTS Engine - Configuration Module
=================================
Carrega e valida configurações usando Pydantic.

Duas camadas:
- Settings: knobs do processo (log level, diretório de logs), lidos do
  ambiente/.env com prefixo FTS_.
- RunConfig: hiperparâmetros e caminhos de um experimento. Vem de um
  arquivo `key = value` (python-dotenv) sobrescrito por flags do CLI.
  Precedência: flags > arquivo > defaults.
"""

from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.errors import ConfigError


class Settings(BaseSettings):
    """
    Configurações de processo do FTS Engine.
    Carrega automaticamente do arquivo .env (prefixo FTS_).
    """

    model_config = SettingsConfigDict(
        env_prefix="FTS_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Logging
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(default="INFO")
    log_dir: Path = Field(default=Path("logs"), description="Diretório do arquivo de log")
    log_to_file: bool = Field(default=True)


@lru_cache
def get_settings() -> Settings:
    """
    Retorna instância cacheada das configurações.
    Uso: `from core.config import get_settings; settings = get_settings()`
    """
    return Settings()


# Alias para acesso rápido
settings = get_settings()


_ENUM_FIELDS = (
    "variant", "output_mode", "loss_kind", "pooling",
    "wrong_answer_policy", "unk_policy", "eval_method", "checkpoint_dtype"
)

_ENUM_SYNONYMS = {
    "inner_product": "innerp",
    "full": "full_time",
    "fts": "full_time",
}


class HyperParams(BaseModel):
    """Hiperparâmetros de treino. Defaults seguem o protocolo experimental de referência."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    learning_rate: float = Field(default=0.002, gt=0, alias="lr", description="Alternativa documentada: 0.001")
    momentum: float = Field(default=0.8, ge=0, lt=1)
    rms_decay: float = Field(default=0.9, gt=0, lt=1)
    epsilon: float = Field(default=1e-6, gt=0)
    dropout_rate: float = Field(default=0.7, ge=0, lt=1, alias="dropout")
    dropout_is_keep_prob: bool = Field(default=False, description="Interpreta dropout_rate como probabilidade de manter")
    epochs: int = Field(default=100, ge=1)
    batch_size: int = Field(default=32, ge=1)
    seed: int = Field(default=0)
    margin: float = Field(default=1.0, gt=0)
    train_embeddings: bool = Field(default=False)
    max_grad_norm: float | None = Field(default=None, gt=0, description="Clip por norma global; None desliga")

    @property
    def drop_probability(self) -> float:
        """Probabilidade efetiva de zerar uma entrada."""
        return 1.0 - self.dropout_rate if self.dropout_is_keep_prob else self.dropout_rate


class RunConfig(HyperParams):
    """
    Configuração completa de uma execução (treino, avaliação, gradcheck...).
    """

    # Modelo
    variant: Literal["fts_brnn", "fts_brnn_s"] = "fts_brnn"
    output_mode: Literal["affine", "concat"] = "affine"
    dim: int = Field(default=100, ge=1, description="Dimensão d dos estados ocultos")
    embedding_dim: int = Field(default=100, ge=1)
    seq_len: int | None = Field(default=None, ge=1, description="Comprimento T (apenas FTS-BRNN-s)")
    unk_policy: Literal["trainable", "zero"] = "trainable"

    # Loss
    loss_kind: Literal["full_time", "pooling"] = Field(default="full_time", alias="loss")
    pooling: Literal["mean", "max"] = "mean"
    wrong_answer_policy: Literal["all", "sample_k"] = "all"
    sample_k: int = Field(default=5, ge=1)

    # Dados
    min_answer_count: int = Field(default=6, ge=1)
    dataset: Path | None = None
    valid_dataset: Path | None = None
    test_dataset: Path | None = None
    embeddings: Path | None = None
    checkpoint: Path | None = None
    out: Path = Path("runs")

    # Avaliação / cabeça LR
    eval_method: Literal["innerp", "lr"] = "innerp"
    lr_l2: float = Field(default=1e-4, ge=0)
    lr_iterations: int = Field(default=500, ge=1)
    lr_step_size: float = Field(default=0.5, gt=0)

    # Gerador sintético
    n_answers: int = Field(default=20, ge=1)
    q_per_answer: int = Field(default=15, ge=1)
    signature_len: int = Field(default=3, ge=1)
    noise_len: int = Field(default=12, ge=0)
    noise_pool: int = Field(default=50, ge=1)

    # Gradcheck / ablação / checkpoint
    gradcheck_tolerance: float = Field(default=1e-5, gt=0)
    gradcheck_instances: int = Field(default=10, ge=1)
    gradcheck_step: float = Field(default=1e-3, gt=0, description="Passo base h (Richardson com h e h/2)")
    seeds: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    checkpoint_dtype: Literal["float32", "float64"] = "float32"

    @field_validator(*_ENUM_FIELDS, mode="before")
    @classmethod
    def _normalize_enum(cls, value: Any) -> Any:
        if isinstance(value, str):
            value = value.strip().lower().replace("-", "_")
            return _ENUM_SYNONYMS.get(value, value)
        return value

    @field_validator("seq_len", "max_grad_norm", "dataset", "valid_dataset", "test_dataset",
                     "embeddings", "checkpoint", mode="before")
    @classmethod
    def _empty_is_none(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        return value

    @field_validator("seeds", mode="before")
    @classmethod
    def _split_seeds(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [int(part) for part in value.replace(" ", "").split(",") if part]
        return value

    @model_validator(mode="after")
    def _check_combination(self) -> "RunConfig":
        if self.variant == "fts_brnn" and self.output_mode != "affine":
            raise ConfigError("output_mode", "fts_brnn requires the affine output layer")
        return self

    def resolved_text(self) -> str:
        """Renderiza a config resolvida (defaults incluídos) como linhas `key = value`."""
        lines = []
        for key, value in sorted(self.model_dump(mode="json").items()):
            if value is None:
                value = ""
            elif isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _canonical_keys() -> dict[str, str]:
    """Mapeia nomes de campo e aliases (flags) para o nome canônico do campo."""
    mapping = {}
    for name, info in RunConfig.model_fields.items():
        mapping[name] = name
        if info.alias:
            mapping[info.alias] = name
    return mapping


def _canonicalize(raw: dict[str, Any]) -> dict[str, Any]:
    mapping = _canonical_keys()
    result = {}
    for key, value in raw.items():
        normalized = key.strip().lower().replace("-", "_")
        result[mapping.get(normalized, normalized)] = value
    return result


def load_run_config(
    config_path: Path | str | None = None,
    overrides: dict[str, Any] | None = None
) -> RunConfig:
    """
    Monta a RunConfig com precedência flags > arquivo > defaults.

    Args:
        config_path: Arquivo `key = value` opcional
        overrides: Valores vindos das flags (None = não informado)

    Returns:
        RunConfig validada

    Raises:
        ConfigError: chave desconhecida ou valor inválido
        FileNotFoundError: arquivo de config inexistente
    """
    raw: dict[str, Any] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        raw.update(_canonicalize(dotenv_values(path)))

    raw.update(_canonicalize({k: v for k, v in (overrides or {}).items() if v is not None}))

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        error = e.errors()[0]
        original = error.get("ctx", {}).get("error")
        if isinstance(original, ConfigError):
            raise original from None
        key = str(error["loc"][0]) if error.get("loc") else "config"
        raise ConfigError(key, error["msg"]) from None
