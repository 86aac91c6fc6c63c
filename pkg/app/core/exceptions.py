from typing import Any, NoReturn


class PipelineError(Exception):
    """Базовая ошибка пайплайна: detail для человека, code для машины"""

    code = "pipeline_error"

    def __init__(self, detail: str = "Pipeline failed", **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context = context

    def to_dict(self) -> dict[str, Any]:
        return {"error": self.code, "detail": self.detail, **self.context}


class ConfigError(PipelineError):
    code = "config_error"


class UsageError(PipelineError):
    code = "usage_error"


class NotFoundError(PipelineError):
    code = "not_found"


class ValidationFailed(PipelineError):
    """Нарушение предусловия или битая запись (line: номер строки входного файла)"""

    code = "validation_error"


class TransportError(PipelineError):
    """Удаленный бэкенд не ответил за отведенное число попыток"""

    code = "transport_error"

    def __init__(self, detail: str = "Backend unavailable", attempts: list[str] | None = None):
        super().__init__(detail, attempts=attempts or [])
        self.attempts = attempts or []


class EmptyCompletionError(PipelineError):
    code = "empty_completion"


class ParseError(PipelineError):
    code = "parse_error"


class AbstractionError(PipelineError):
    code = "abstraction_error"


class IneligibleUserError(PipelineError):
    code = "ineligible_user"


class SimulatorError(PipelineError):
    code = "simulator_error"


class OffCandidateError(SimulatorError):
    code = "off_candidate"


class UndefinedMetricError(PipelineError):
    code = "undefined_metric"


class FilterRunError(PipelineError):
    code = "filter_run_error"


def bad_request(detail: str = "Bad request", **context: Any) -> NoReturn:
    raise ValidationFailed(detail, **context)


def not_found(detail: str = "Not found") -> NoReturn:
    raise NotFoundError(detail)


def usage_error(detail: str = "Stage order violated") -> NoReturn:
    raise UsageError(detail)


def config_error(key: str, detail: str = "missing or invalid value") -> NoReturn:
    raise ConfigError(f"{key}: {detail}", key=key)
