from typing import Annotated, Any

from pydantic import BeforeValidator, Field, model_validator

from app.core.exceptions import not_found
from app.schemas.base import BaseSchema


def _coerce_identifier(value: Any) -> Any:
    # IMDB-выгрузки часто хранят id числами
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    return value


Identifier = Annotated[str, BeforeValidator(_coerce_identifier), Field(min_length=1)]
Rating = Annotated[int, Field(strict=True, ge=1, le=10)]


class RawReviewRecord(BaseSchema):
    """Одна строка входного файла отзывов"""

    user_id: Identifier
    item_id: Identifier
    title: str
    rating: Rating
    text: str
    votes: int = Field(default=0, ge=0)


class ItemRecord(BaseSchema):
    """Одна строка входного файла фильмов; title включает год"""

    item_id: Identifier
    title: str = Field(..., min_length=1)
    genre: list[str] = Field(default_factory=list)
    director: list[str] = Field(default_factory=list)
    cast: list[str] = Field(default_factory=list)


class Abstract(BaseSchema):
    """Выжимка [Like]/[Dislike]; хотя бы одно поле обязано быть"""

    like: str | None = None
    dislike: str | None = None
    source_ids: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_not_empty(self):
        if not self.like and not self.dislike:
            raise ValueError("abstract needs at least one of like/dislike")
        return self


class Review(BaseSchema):
    review_id: str
    user_id: str
    item_id: str
    title: str
    rating: int = Field(..., ge=1, le=10)
    text: str
    votes: int = Field(default=0, ge=0)
    seq: int = Field(default=0, description="Порядок вставки при загрузке")
    abstract: Abstract | None = None
    abstract_failed: bool = False


class ItemEntry(BaseSchema):
    item: ItemRecord
    reviews: list[Review] = Field(default_factory=list)
    selected: list[Review] = Field(default_factory=list, max_length=3)
    knowledge: Abstract | None = None
    knowledge_failed: bool = False


class UserReviewDB(BaseSchema):
    users: dict[str, list[Review]] = Field(default_factory=dict)

    def reviews_of(self, user_id: str) -> list[Review]:
        if user_id not in self.users:
            not_found(f"User {user_id} not found")
        return self.users[user_id]

    def find(self, user_id: str, item_id: str) -> Review | None:
        for review in self.users.get(user_id, []):
            if review.item_id == item_id:
                return review
        return None

    @property
    def review_count(self) -> int:
        return sum(len(reviews) for reviews in self.users.values())


class ItemReviewDB(BaseSchema):
    items: dict[str, ItemEntry] = Field(default_factory=dict)

    def entry(self, item_id: str) -> ItemEntry:
        if item_id not in self.items:
            not_found(f"Item {item_id} not found")
        return self.items[item_id]


class RecordError(BaseSchema):
    source: str
    line: int
    message: str


class IngestReport(BaseSchema):
    reviews_read: int = 0
    items_read: int = 0
    reviews_kept: int = 0
    duplicates_resolved: int = 0
    dropped_unknown_item: int = 0
    malformed: int = 0
    users: int = 0
    items: int = 0
    errors: list[RecordError] = Field(default_factory=list)


class AbstractionReport(BaseSchema):
    reviews_total: int = 0
    reviews_abstracted: int = 0
    reviews_cached: int = 0
    reviews_failed: int = 0
    items_total: int = 0
    items_abstracted: int = 0
    items_cached: int = 0
    items_failed: int = 0
    items_without_reviews: int = 0
