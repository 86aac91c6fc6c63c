from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.enum import OutcomeKind, Role
from app.schemas.base import BaseSchema
from app.schemas.gateway import UsageSnapshot
from app.schemas.persona import Persona


class SessionConfig(BaseModel):
    """Параметры одной сессии генерации диалога"""

    model_config = ConfigDict(extra="forbid")

    k_schedule: list[int] = Field(default_factory=lambda: [3], min_length=1)
    force_from_turn: int = Field(default=3, ge=3)
    max_utterances: int = Field(default=20, ge=8)
    seed: int = 0
    dialogues_per_user: int = Field(default=1, ge=1)
    max_reasks: int = Field(default=2, ge=0)
    use_persona: bool = True
    seeker_template: Path | None = None
    recommender_template: Path | None = None
    seed_openers: list[list[str]] = Field(
        default_factory=lambda: [
            [
                "Hi there! I'm in the mood to watch a movie. Can you recommend something?",
                "Absolutely! What kind of movie are you in the mood for? Any specific genre or theme?",
            ],
            [
                "Hello! I'm looking for a good movie to watch tonight. Any ideas?",
                "Sure thing! Before I suggest anything, what kind of movies do you usually enjoy?",
            ],
        ],
        min_length=1,
    )

    @field_validator("k_schedule")
    @classmethod
    def positive_k(cls, values: list[int]) -> list[int]:
        if any(k < 1 for k in values):
            raise ValueError("every k in k_schedule must be >= 1")
        return values

    @field_validator("max_utterances")
    @classmethod
    def even_cap(cls, value: int) -> int:
        if value % 2:
            raise ValueError("max_utterances must be even")
        return value

    @field_validator("seed_openers")
    @classmethod
    def pairs_only(cls, values: list[list[str]]) -> list[list[str]]:
        if any(len(pair) != 2 or not all(p.strip() for p in pair) for pair in values):
            raise ValueError("each seed opener must be a (seeker, recommender) pair")
        return values

    def k_for(self, recommending_index: int) -> int:
        """k для i-го рекомендательного хода (с 1); последнее значение повторяется"""
        return self.k_schedule[min(recommending_index - 1, len(self.k_schedule) - 1)]


class Turn(BaseSchema):
    """Одна реплика; поля think/movie_* только у рекомендателя, terminal только у искателя"""

    role: Role
    text: str = Field(..., min_length=1)
    think: str | None = None
    movie_id: str | None = None
    movie_line: str | None = None
    candidate_ids: list[str] = Field(default_factory=list)
    target_forced: bool = False
    is_terminal: bool = False
    accepted_item_id: str | None = None


class SeekerTurn(BaseSchema):
    text: str = Field(..., min_length=1)
    accepted_item_id: str | None = None
    is_terminal: bool = False

    @model_validator(mode="after")
    def terminal_needs_item(self):
        if self.is_terminal and not self.accepted_item_id:
            raise ValueError("terminal seeker turn must carry accepted_item_id")
        return self

    def as_turn(self) -> Turn:
        return Turn(
            role=Role.SEEKER,
            text=self.text,
            is_terminal=self.is_terminal,
            accepted_item_id=self.accepted_item_id,
        )


class Candidate(BaseSchema):
    item_id: str
    title: str
    knowledge: str
    score: float


class CandidateSet(BaseSchema):
    items: list[Candidate]
    k: int = Field(..., ge=1)
    target_forced: bool = False

    @property
    def ids(self) -> list[str]:
        return [candidate.item_id for candidate in self.items]


class RecTurn(BaseSchema):
    think: str
    movie_id: str | None = None
    movie_line: str | None = None
    text: str = Field(..., min_length=1)

    def as_turn(self, candidates: CandidateSet | None = None) -> Turn:
        return Turn(
            role=Role.RECOMMENDER,
            text=self.text,
            think=self.think,
            movie_id=self.movie_id,
            movie_line=self.movie_line,
            candidate_ids=candidates.ids if candidates else [],
            target_forced=candidates.target_forced if candidates else False,
        )


class Outcome(BaseSchema):
    kind: OutcomeKind
    reason: str | None = None


class Dialogue(BaseSchema):
    dialogue_id: str
    user_id: str
    target_item_id: str
    replica: int = 0
    persona: Persona
    turns: list[Turn]
    outcome: Outcome
    seed: int
    use_persona: bool = True
    backend_tags: dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def roles_alternate(self):
        for index, turn in enumerate(self.turns):
            expected = Role.SEEKER if index % 2 == 0 else Role.RECOMMENDER
            if turn.role != expected:
                raise ValueError(f"turn {index} must be {expected.value}")
        return self

    @property
    def recommendations(self) -> list[tuple[int, str]]:
        return [(i, t.movie_id) for i, t in enumerate(self.turns) if t.movie_id]


class RunReport(BaseSchema):
    dialogues: int = 0
    skipped_existing: int = 0
    ineligible_users: int = 0
    outcomes: dict[str, int] = Field(default_factory=dict)
    abort_reasons: dict[str, int] = Field(default_factory=dict)
    usage: UsageSnapshot = Field(default_factory=UsageSnapshot)
    estimated_cost: float = 0.0
    cost_per_dialogue: float = 0.0


def render_context(turns: list[Turn]) -> str:
    """Транскрипт с префиксами ролей: вход обоих симуляторов и ретривера"""
    return "\n".join(f"{turn.role.speaker}: {turn.text}" for turn in turns)
