import logging
import random

from app.core.exceptions import IneligibleUserError
from app.schemas.corpus import Abstract, Review, UserReviewDB
from app.schemas.persona import Persona, PersonaReview
from app.services.corpus_service import TARGET_MIN_RATING
from app.utils.helpers import split_sentences

logger = logging.getLogger(__name__)

GENERAL_SIZE = 3
MIN_ABSTRACTED = GENERAL_SIZE + 1


def _persona_review(review: Review) -> PersonaReview:
    return PersonaReview(
        item_id=review.item_id,
        title=review.title,
        review_id=review.review_id,
        user_id=review.user_id,
        abstract=review.abstract,
    )


def build_persona(db: UserReviewDB, user_id: str, rng_seed: int) -> Persona:
    """
    Целевой фильм - равновероятно среди оцененных на 8+, общие предпочтения -
    3 отзыва без возвращения из остальных. Учитываются только отзывы с выжимкой.
    """
    usable = [r for r in db.reviews_of(user_id) if r.abstract is not None]
    if len(usable) < MIN_ABSTRACTED:
        raise IneligibleUserError(
            f"user {user_id} has {len(usable)} abstracted reviews, needs {MIN_ABSTRACTED}",
            user_id=user_id,
        )
    eligible = [r for r in usable if r.rating >= TARGET_MIN_RATING]
    if not eligible:
        raise IneligibleUserError(f"user {user_id} has no review rated {TARGET_MIN_RATING}+", user_id=user_id)

    rng = random.Random(rng_seed)
    target = rng.choice(eligible)
    rest = [r for r in usable if r.item_id != target.item_id]
    general = rng.sample(rest, GENERAL_SIZE)
    return Persona(
        user_id=user_id,
        general=[_persona_review(r) for r in general],
        target_item_id=target.item_id,
        target_title=target.title,
        target_rating=target.rating,
        target_abstract=target.abstract,
        seed=rng_seed,
    )


def responsive_preference(db: UserReviewDB, user_id: str, item_id: str) -> Abstract | None:
    """Собственная выжимка пользователя о предложенном фильме, если он его смотрел"""
    review = db.find(user_id, item_id)
    return review.abstract if review else None


def persona_statements(persona: Persona) -> list[str]:
    """Отдельные предложения like/dislike общих и целевой выжимок - посылки для NLI"""
    statements = []
    for abstract in [review.abstract for review in persona.general] + [persona.target_abstract]:
        for label, text in (("likes", abstract.like), ("dislikes", abstract.dislike)):
            for sentence in split_sentences(text or ""):
                statement = f"{label}: {sentence}"
                if statement not in statements:
                    statements.append(statement)
    return statements
