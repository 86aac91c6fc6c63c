from pydantic import Field

from app.models.enum import Role
from app.schemas.base import BaseSchema


class Tokenization(BaseSchema):
    """Штамп токенизатора: попадает в каждый отчет"""

    rule: str = "casefold+split-non-alnum"
    case_folding: bool = True
    split_on: str = "whitespace and punctuation"
    punctuation_tokens: str = "dropped"


class TranscriptTurn(BaseSchema):
    role: Role
    text: str


class Transcript(BaseSchema):
    """Нормализованный диалог любого корпуса: роль + текст на реплику"""

    dialogue_id: str
    turns: list[TranscriptTurn]
    user_id: str | None = None
    item_ids: list[str] = Field(default_factory=list)


class CorpusStats(BaseSchema):
    dialogues: int = 0
    utterances: int = 0
    users: int | None = None
    items: int | None = None
    avg_utterances: float = 0.0


class MetricsReport(BaseSchema):
    corpus: str
    tokenization: Tokenization = Field(default_factory=Tokenization)
    specificity: dict[int, float] = Field(default_factory=dict)
    specificity_aggregate: str = "mean over dialogues"
    inter_dialogue_similarity: float | None = None
    pair_sample_size: int | None = None
    avg_recommender_words: float | None = None
    distinct_n: dict[int, float] = Field(default_factory=dict)
    recall_at_k: dict[int, float] = Field(default_factory=dict)
    stats: CorpusStats = Field(default_factory=CorpusStats)
