import os
from pathlib import Path
from typing import Any, Iterable, Literal

import yaml
from dotenv import dotenv_values
from limits import parse
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import ConfigError, config_error
from app.models.enum import FilterRule, Stage
from app.schemas.dialogue import SessionConfig
from app.schemas.filters import FilterConfig


class Settings(BaseSettings):
    """Настройки процесса из переменных окружения (.env поддерживается)"""

    APP_NAME: str = Field(default="CRS Dialogue Synth", description="Название приложения")
    DEBUG: bool = Field(default=False, description="Режим отладки")
    DATABASE_URL: str | None = Field(
        default=None,
        description="URL хранилища пайплайна; по умолчанию store.db в work_dir",
    )

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    def resolve_api_key(self, env_name: str) -> str | None:
        """Ключ API читается только из окружения; имя переменной задает конфиг"""
        value = os.environ.get(env_name)
        if value:
            return value
        if Path(".env").exists():
            return dotenv_values(".env").get(env_name) or None
        return None


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PathsConfig(StrictModel):
    reviews: Path
    items: Path
    work_dir: Path = Path("runs/default")
    prompts_dir: Path | None = None

    @property
    def store(self) -> Path:
        return self.work_dir / "store.db"

    @property
    def dialogues_raw(self) -> Path:
        return self.work_dir / "dialogues.raw.jsonl"

    @property
    def dialogues(self) -> Path:
        return self.work_dir / "dialogues.jsonl"

    @property
    def verdicts(self) -> Path:
        return self.work_dir / "verdicts.jsonl"

    @property
    def kept(self) -> Path:
        return self.work_dir / "dialogues.filtered.jsonl"

    @property
    def abstracts(self) -> Path:
        return self.work_dir / "abstracts.jsonl"

    @property
    def item_knowledge(self) -> Path:
        return self.work_dir / "item_knowledge.jsonl"

    def report(self, stage: str) -> Path:
        return self.work_dir / f"{stage}.report.json"

    @property
    def metrics_table(self) -> Path:
        return self.work_dir / "stats.report.txt"


class BackendConfig(StrictModel):
    kind: Literal["remote", "mock"] = "mock"
    chat_url: str = "https://api.openai.com/v1/chat/completions"
    embedding_url: str = "https://api.openai.com/v1/embeddings"
    nli_url: str | None = None
    chat_model: str = "gpt-3.5-turbo-1106"
    embedding_model: str = "text-embedding-ada-002"
    nli_model: str = "roberta-large-dnli"
    api_key_env: str = "OPENAI_API_KEY"
    rate_limit: str = Field(default="3500/minute", description="Общий лимит запросов")
    max_attempts: int = Field(default=3, ge=1)
    backoff_base: float = Field(default=1.0, ge=0)
    timeout: float = Field(default=60.0, gt=0)
    embedding_max_chars: int = Field(default=8000, ge=1)
    embedding_memo_size: int = Field(default=4096, ge=1, description="Векторов в LRU-памяти шлюза")
    simulator_temperature: float = Field(default=0.8, ge=0)
    summary_temperature: float = Field(default=0.0, ge=0)
    max_tokens: int = Field(default=512, ge=1)
    price_prompt_per_1k: float = Field(default=0.001, ge=0)
    price_completion_per_1k: float = Field(default=0.002, ge=0)
    mock_dim: int = Field(default=64, ge=2)

    @field_validator("rate_limit")
    @classmethod
    def check_rate_limit(cls, value: str) -> str:
        try:
            parse(value)
        except ValueError as e:
            raise ValueError(f"invalid rate limit string {value!r}: {e}")
        return value


class ExternalCorpus(StrictModel):
    path: Path
    format: Literal["normalized", "redial", "inspired"] = "normalized"
    name: str | None = None


class MetricsConfig(StrictModel):
    ngram_sizes: list[int] = Field(default_factory=lambda: [2, 3, 4])
    distinct_sizes: list[int] = Field(default_factory=lambda: [3, 4])
    recall_ks: list[int] = Field(default_factory=lambda: [1, 10, 50])
    pair_sample_size: int = Field(default=1000, ge=1)
    corpora: list[ExternalCorpus] = Field(default_factory=list)
    responses: Path | None = None
    rankings: Path | None = None


class PipelineConfig(StrictModel):
    """Полный конфиг пайплайна; каждый флаг CLI имеет ключ здесь"""

    paths: PathsConfig
    backend: BackendConfig = Field(default_factory=BackendConfig)
    session: SessionConfig = Field(default_factory=SessionConfig)
    filters: FilterConfig = Field(default_factory=FilterConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    seed: int = 42
    parallelism: int = Field(default=4, ge=1)
    limit_users: int | None = Field(default=None, ge=1)
    resume: bool = True

    def echo(self) -> dict[str, Any]:
        """Эффективный конфиг для заголовков выходных файлов (секретов здесь нет)"""
        return self.model_dump(mode="json")

    def check_stages(self, stages: Iterable[Stage]) -> None:
        """Требования, зависящие от набора стадий; проверяются до хранилища и сети"""
        nli_rules = {FilterRule.PERSONA_CONTRADICTION, FilterRule.GUESS_CONTRADICTION} & set(self.filters.rules)
        if Stage.FILTER in set(stages) and nli_rules and self.backend.kind == "remote" and not self.backend.nli_url:
            config_error("backend.nli_url", "contradiction filters need an NLI endpoint for the remote backend")


def _set_dotted(data: dict, dotted: str, value: Any) -> None:
    node = data
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            config_error(dotted, "parent key is not a mapping")
    node[leaf] = value


def load_pipeline_config(
    path: Path | None, overrides: dict[str, Any] | None = None
) -> PipelineConfig:
    """
    Читает YAML-конфиг и накладывает переопределения из флагов CLI.

    overrides: {"backend.kind": "mock", "seed": 7, ...}; None-значения пропускаются.
    """
    data: dict[str, Any] = {}
    if path is not None:
        if not path.exists():
            config_error("--config", f"file {path} does not exist")
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            raise ConfigError(f"--config: YAML parse error: {e}", key="--config")
        if loaded is not None and not isinstance(loaded, dict):
            config_error("--config", "top level must be a mapping")
        data = loaded or {}

    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, dotted, value)

    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(f"{key}: {first['msg']}", key=key)

    # Базовый seed сессий совпадает с глобальным, если не задан явно
    if "seed" not in data.get("session", {}):
        config.session = config.session.model_copy(update={"seed": config.seed})
    return config


settings = Settings()
