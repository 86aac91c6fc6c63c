from pydantic import Field, model_validator

from app.schemas.base import BaseSchema
from app.schemas.corpus import Abstract


class PersonaReview(BaseSchema):
    item_id: str
    title: str
    review_id: str
    user_id: str
    abstract: Abstract


class Persona(BaseSchema):
    """Общие (3 отзыва), целевое и динамически подтягиваемое ответное предпочтения"""

    user_id: str
    general: list[PersonaReview] = Field(..., min_length=3, max_length=3)
    target_item_id: str
    target_title: str
    target_rating: int = Field(..., ge=8, le=10)
    target_abstract: Abstract
    seed: int

    @model_validator(mode="after")
    def check_disjoint(self):
        general_items = {review.item_id for review in self.general}
        if self.target_item_id in general_items:
            raise ValueError("target item must not be one of the general reviews")
        if len(general_items) != 3:
            raise ValueError("general reviews must cover 3 distinct items")
        if any(review.user_id != self.user_id for review in self.general):
            raise ValueError("general reviews must belong to the persona user")
        return self
