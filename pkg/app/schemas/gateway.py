import math

from pydantic import Field, field_validator, model_validator

from app.schemas.base import BaseSchema


class ChatRequest(BaseSchema):
    """
    Запрос к chat-completion бэкенду.

    purpose и hints не уходят по сети: это подсказки для офлайн-мока
    (какой симулятор спрашивает и что ему известно структурно).
    """

    system_prompt: str = Field(..., min_length=1)
    user_prompt: str = Field(..., min_length=1)
    temperature: float = Field(default=0.8, ge=0)
    max_tokens: int = Field(default=512, gt=0)
    seed: int | None = None
    purpose: str = "generic"
    hints: dict[str, str] = Field(default_factory=dict)

    @field_validator("temperature")
    @classmethod
    def finite_temperature(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("temperature must be finite")
        return value


class ChatCompletion(BaseSchema):
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


class EmbeddingVector(BaseSchema):
    values: list[float]
    model_tag: str
    truncated: bool = False

    @field_validator("values")
    @classmethod
    def finite_values(cls, values: list[float]) -> list[float]:
        if not values or not all(math.isfinite(v) for v in values):
            raise ValueError("embedding values must be finite and non-empty")
        return values


class NliScores(BaseSchema):
    entail: float = Field(..., ge=0, le=1)
    neutral: float = Field(..., ge=0, le=1)
    contradict: float = Field(..., ge=0, le=1)

    @model_validator(mode="after")
    def sums_to_one(self):
        total = self.entail + self.neutral + self.contradict
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"NLI probabilities sum to {total}, expected 1")
        return self


class UsageSnapshot(BaseSchema):
    requests: int = 0
    cache_hits: int = 0
    retries: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    embeddings: int = 0
    nli_calls: int = 0
