import pytest

from app.core.exceptions import IneligibleUserError
from app.schemas.corpus import UserReviewDB
from app.services.persona_service import build_persona, persona_statements, responsive_preference
from tests.conftest import make_persona, make_review


def user_db(ratings, abstracted=None):
    abstracted = abstracted or [True] * len(ratings)
    reviews = [
        make_review("u1", f"i{n}", rating=rating, seq=n, like=f"I loved the part {n}." if ok else None)
        for n, (rating, ok) in enumerate(zip(ratings, abstracted))
    ]
    return UserReviewDB(users={"u1": reviews})


def test_persona_is_deterministic_per_seed():
    db = user_db([9, 3, 8, 5, 6, 10])
    assert build_persona(db, "u1", 5) == build_persona(db, "u1", 5)
    personas = {build_persona(db, "u1", seed).target_item_id for seed in range(40)}
    assert personas <= {"i0", "i2", "i5"}
    assert len(personas) > 1


def test_target_and_general_are_disjoint():
    db = user_db([9, 9, 9, 9, 9])
    for seed in range(20):
        persona = build_persona(db, "u1", seed)
        general = {review.item_id for review in persona.general}
        assert len(general) == 3
        assert persona.target_item_id not in general
        assert persona.target_rating >= 8


def test_exactly_four_reviews_use_all_of_them():
    persona = build_persona(user_db([8, 2, 3, 4]), "u1", 1)
    assert persona.target_item_id == "i0"
    assert sorted(r.item_id for r in persona.general) == ["i1", "i2", "i3"]


def test_too_few_abstracted_reviews_is_ineligible():
    with pytest.raises(IneligibleUserError):
        build_persona(user_db([9, 5, 5]), "u1", 0)
    # отзыв без выжимки не считается
    with pytest.raises(IneligibleUserError):
        build_persona(user_db([9, 5, 5, 5], [True, True, True, False]), "u1", 0)


def test_no_high_rating_is_ineligible():
    with pytest.raises(IneligibleUserError) as info:
        build_persona(user_db([7, 5, 5, 5, 6]), "u1", 0)
    assert info.value.code == "ineligible_user"


def test_responsive_preference_only_for_seen_items():
    db = user_db([9, 5, 5, 5])
    assert responsive_preference(db, "u1", "i1").like == "I loved the part 1."
    assert responsive_preference(db, "u1", "unseen") is None


def test_persona_statements_cover_general_and_target():
    persona = make_persona()
    statements = persona_statements(persona)
    assert "likes: I loved the witty dialogue." in statements
    assert "dislikes: I disliked the wooden acting." in statements
    assert "likes: I loved the gritty battle scenes." in statements
    assert "dislikes: I disliked the slow pacing." in statements
    assert len(statements) == len(set(statements)) == 6
