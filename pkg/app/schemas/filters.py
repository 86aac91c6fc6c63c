from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.enum import FilterRule, NliOrientation
from app.schemas.base import BaseSchema


class FilterConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    delta: float = Field(default=0.7, gt=0, lt=1, description="Порог противоречия NLI (строго >)")
    repetition_jaccard: float = Field(default=0.8, gt=0, le=1)
    repetition_n: int = Field(default=3, ge=1)
    orientation: NliOrientation = NliOrientation.STATEMENT_PREMISE
    rules: list[FilterRule] = Field(default_factory=lambda: list(FilterRule))


class RuleResult(BaseSchema):
    rule: FilterRule
    passed: bool
    evidence: list[dict[str, Any]] = Field(default_factory=list)


class FilterVerdict(BaseSchema):
    dialogue_id: str
    passed: bool
    failed_rules: list[FilterRule] = Field(default_factory=list)
    evidence: dict[str, list[dict[str, Any]]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def passed_iff_clean(self):
        if self.passed != (not self.failed_rules):
            raise ValueError("passed must hold exactly when no rule failed")
        return self

    @classmethod
    def from_results(cls, dialogue_id: str, results: list[RuleResult]) -> "FilterVerdict":
        failed = [result.rule for result in results if not result.passed]
        return cls(
            dialogue_id=dialogue_id,
            passed=not failed,
            failed_rules=failed,
            evidence={r.rule.value: r.evidence for r in results if not r.passed},
        )


class FilterReport(BaseSchema):
    total: int = 0
    kept: int = 0
    removed: int = 0
    held: int = 0
    removal_rate: float = 0.0
    per_rule: dict[str, int] = Field(default_factory=dict)
    held_ids: list[str] = Field(default_factory=list)
