import json

import pytest

from app.core.exceptions import NotFoundError
from app.database.db import init_models, make_engine, make_session_maker, store_url
from app.schemas.corpus import ItemRecord, RawReviewRecord
from app.services.corpus_service import (
    eligible_target_items,
    ingest_reviews,
    load_databases,
    load_records,
    reviewed_pool,
    save_databases,
    select_item_reviews,
    store_item_knowledge,
    store_review_abstract,
    top_voted,
)
from tests.conftest import FIXTURES, abstract_of, make_review


def raw(user, item, votes=0, rating=7, text="I loved the witty dialogue."):
    return RawReviewRecord(user_id=user, item_id=item, title="x", rating=rating, text=text, votes=votes)


def item(item_id, title="Iron Harbor (2001)"):
    return ItemRecord(item_id=item_id, title=title, genre=["War"], director=["Ada"], cast=["Clara"])


def test_load_records_reports_bad_lines(tmp_path):
    path = tmp_path / "reviews.jsonl"
    lines = [
        json.dumps({"user_id": 1, "item_id": 2, "title": "A (2000)", "rating": 8, "text": "ok"}),
        "{not json",
        json.dumps({"user_id": "u", "item_id": "i", "title": "A", "rating": 11, "text": "ok"}),
        "",
        json.dumps({"user_id": "u", "item_id": "i", "title": "A", "rating": "9", "text": "ok"}),
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    records, errors = load_records(path, RawReviewRecord)

    assert [(r.user_id, r.item_id) for r in records] == [("1", "2")]
    assert [e.line for e in errors] == [2, 3, 5]
    assert errors[0].message.startswith("invalid JSON")
    assert errors[1].message.startswith("rating")


def test_duplicate_pair_keeps_more_votes_in_first_slot():
    records = [raw("u1", "i1", votes=1, text="first"), raw("u1", "i2"), raw("u1", "i1", votes=5, text="second")]
    user_db, item_db, report = ingest_reviews(records, [item("i1"), item("i2", "Paper Lanterns (2008)")])

    reviews = user_db.reviews_of("u1")
    assert [r.item_id for r in reviews] == ["i1", "i2"]
    assert reviews[0].text == "second"
    assert reviews[0].seq == 0
    assert report.duplicates_resolved == 1
    assert report.reviews_kept == 2


def test_duplicate_pair_tie_keeps_first_seen():
    records = [raw("u1", "i1", votes=3, text="first"), raw("u1", "i1", votes=3, text="second")]
    user_db, _, _ = ingest_reviews(records, [item("i1")])
    assert user_db.reviews_of("u1")[0].text == "first"


def test_reviews_of_unknown_items_are_dropped():
    user_db, item_db, report = ingest_reviews([raw("u1", "ghost"), raw("u1", "i1")], [item("i1")])
    assert report.dropped_unknown_item == 1
    assert [r.item_id for r in user_db.reviews_of("u1")] == ["i1"]
    assert user_db.reviews_of("u1")[0].title == "Iron Harbor (2001)"
    assert list(item_db.items) == ["i1"]


def test_top_voted_breaks_ties_by_insertion_order():
    reviews = [
        make_review("a", "i", votes=2, seq=0),
        make_review("b", "i", votes=5, seq=1),
        make_review("c", "i", votes=2, seq=2),
        make_review("d", "i", votes=1, seq=3),
    ]
    assert [r.user_id for r in top_voted(reviews)] == ["b", "a", "c"]


def test_item_with_fewer_than_three_reviews_keeps_all():
    _, item_db, _ = ingest_reviews([raw("u1", "i1"), raw("u2", "i1", votes=4)], [item("i1"), item("i2", "B (1990)")])
    assert [r.user_id for r in select_item_reviews(item_db, "i1")] == ["u2", "u1"]
    assert select_item_reviews(item_db, "i2") == []


def test_empty_streams_give_empty_databases():
    user_db, item_db, report = ingest_reviews([], [])
    assert user_db.users == {} and item_db.items == {}
    assert report.dropped_unknown_item == 0
    assert report.reviews_kept == 0


def test_five_reviews_select_top_three_by_votes():
    votes = {"a": 9, "b": 1, "c": 4, "d": 4, "e": 0}
    _, item_db, _ = ingest_reviews([raw(user, "i1", votes=v) for user, v in votes.items()], [item("i1")])
    assert [r.user_id for r in select_item_reviews(item_db, "i1")] == ["a", "c", "d"]


def test_item_without_reviews_selects_nothing():
    _, item_db, _ = ingest_reviews([raw("u1", "i1")], [item("i1"), item("i2", "B (1990)")])
    assert select_item_reviews(item_db, "i2") == []


def test_ingest_is_idempotent():
    reviews, review_errors = load_records(FIXTURES / "reviews.jsonl", RawReviewRecord)
    items, item_errors = load_records(FIXTURES / "items.jsonl", ItemRecord)
    first = ingest_reviews(reviews, items, review_errors + item_errors)
    second = ingest_reviews(reviews, items, review_errors + item_errors)
    assert first == second


def test_unknown_user_and_item_lookups_raise():
    user_db, item_db, _ = ingest_reviews([raw("u1", "i1")], [item("i1")])
    with pytest.raises(NotFoundError):
        user_db.reviews_of("nobody")
    with pytest.raises(NotFoundError):
        item_db.entry("nothing")


def test_eligible_targets_need_rating_of_eight():
    user_db, item_db, _ = ingest_reviews(
        [raw("u1", "i1", rating=7), raw("u1", "i2", rating=8), raw("u1", "i3", rating=10)],
        [item("i1", "A (2000)"), item("i2", "B (2001)"), item("i3", "C (2002)")],
    )
    assert [item_id for item_id, _ in eligible_target_items(user_db, "u1")] == ["i2", "i3"]
    assert [e.item.item_id for e in reviewed_pool(user_db, item_db, "u1")] == ["i1", "i2", "i3"]


def test_bundled_fixture_corpus_shape():
    reviews, review_errors = load_records(FIXTURES / "reviews.jsonl", RawReviewRecord)
    items, item_errors = load_records(FIXTURES / "items.jsonl", ItemRecord)
    user_db, item_db, report = ingest_reviews(reviews, items, review_errors + item_errors)

    assert report.malformed == 0
    assert report.users == 50
    assert report.items == 40
    assert report.duplicates_resolved == 1
    assert report.dropped_unknown_item == 1
    assert report.reviews_kept == 300
    for user_id in user_db.users:
        assert len(user_db.reviews_of(user_id)) >= 4
        assert eligible_target_items(user_db, user_id)


@pytest.mark.anyio
async def test_store_round_trip_keeps_abstracts_and_flags(tmp_path):
    user_db, item_db, _ = ingest_reviews(
        [raw("u1", "i1", votes=2), raw("u2", "i1", votes=9), raw("u1", "i2")],
        [item("i1"), item("i2", "Paper Lanterns (2008)")],
    )
    engine = make_engine(store_url(tmp_path / "store.db"))
    await init_models(engine)
    session_maker = make_session_maker(engine)
    async with session_maker() as db:
        await save_databases(db, user_db, item_db)
        await store_review_abstract(db, "u1:i1", abstract_of("I loved the witty dialogue.", None, "u1:i1"))
        await store_review_abstract(db, "u1:i2", None)
        await store_item_knowledge(db, "i1", abstract_of(None, "I disliked the slow pacing.", "u2:i1"))

    async with session_maker() as db:
        loaded_users, loaded_items = await load_databases(db)
    await engine.dispose()

    first, second = loaded_users.reviews_of("u1")
    assert first.abstract.like == "I loved the witty dialogue."
    assert first.abstract.dislike is None
    assert second.abstract is None and second.abstract_failed
    assert loaded_items.entry("i1").knowledge.dislike == "I disliked the slow pacing."
    assert [r.user_id for r in loaded_items.entry("i1").selected] == ["u2", "u1"]
    assert loaded_items.entry("i2").knowledge is None
