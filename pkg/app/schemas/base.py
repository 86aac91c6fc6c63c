"""
Базовая схема всех Pydantic моделей пайплайна
"""
from typing import Any

from pydantic import BaseModel, ConfigDict, model_validator


class BaseSchema(BaseModel):
    """
    Строки входного словаря обрезаются по краям до валидации.
    Экземпляры неизменяемы: базы и персоны разделяются между сессиями.
    """

    model_config = ConfigDict(from_attributes=True, frozen=True)

    @model_validator(mode="before")
    @classmethod
    def strip_all_strings(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        return {key: value.strip() if isinstance(value, str) else value for key, value in data.items()}
