import json
import logging
from pathlib import Path
from typing import Iterable, TypeVar

from pydantic import BaseModel, ValidationError
from sqlalchemy import delete, select, update
from sqlalchemy.ext.asyncio import AsyncSession

from app.models import ItemRow, ReviewRow
from app.schemas.corpus import (
    Abstract,
    IngestReport,
    ItemEntry,
    ItemRecord,
    ItemReviewDB,
    RawReviewRecord,
    RecordError,
    Review,
    UserReviewDB,
)
from app.utils.jsonl import iter_lines

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

SELECTED_PER_ITEM = 3
TARGET_MIN_RATING = 8


def load_records(path: Path, model: type[M]) -> tuple[list[M], list[RecordError]]:
    """
    Читает JSONL-файл построчно; битые строки не роняют загрузку,
    а попадают в список ошибок с номером строки.
    """
    records: list[M] = []
    errors: list[RecordError] = []
    for line_no, line in iter_lines(path):
        try:
            records.append(model.model_validate(json.loads(line)))
        except json.JSONDecodeError as e:
            errors.append(RecordError(source=path.name, line=line_no, message=f"invalid JSON: {e.msg}"))
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first["loc"]) or "<record>"
            errors.append(RecordError(source=path.name, line=line_no, message=f"{field}: {first['msg']}"))
    for error in errors:
        logger.warning(f"⚠️ {error.source}:{error.line}: {error.message}")
    return records, errors


def review_id_for(user_id: str, item_id: str) -> str:
    return f"{user_id}:{item_id}"


def ingest_reviews(
    records: Iterable[RawReviewRecord],
    items: Iterable[ItemRecord],
    errors: list[RecordError] | None = None,
) -> tuple[UserReviewDB, ItemReviewDB, IngestReport]:
    """
    Строит базы user-review и item-review.

    Повторы (user, item): остается запись с большим числом голосов,
    при равенстве - первая встреченная (и ее место в порядке вставки).
    Отзывы о фильмах, которых нет в потоке фильмов, отбрасываются.
    """
    catalog: dict[str, ItemRecord] = {}
    items_read = 0
    for item in items:
        items_read += 1
        catalog.setdefault(item.item_id, item)

    kept: dict[tuple[str, str], tuple[int, RawReviewRecord]] = {}
    reviews_read = dropped = duplicates = 0
    for record in records:
        reviews_read += 1
        if record.item_id not in catalog:
            dropped += 1
            continue
        key = (record.user_id, record.item_id)
        if key in kept:
            duplicates += 1
            seq, current = kept[key]
            if record.votes > current.votes:
                kept[key] = (seq, record)
            continue
        kept[key] = (len(kept), record)

    users: dict[str, list[Review]] = {}
    per_item: dict[str, list[Review]] = {item_id: [] for item_id in sorted(catalog)}
    for seq, record in sorted(kept.values(), key=lambda pair: pair[0]):
        review = Review(
            review_id=review_id_for(record.user_id, record.item_id),
            user_id=record.user_id,
            item_id=record.item_id,
            title=catalog[record.item_id].title,
            rating=record.rating,
            text=record.text,
            votes=record.votes,
            seq=seq,
        )
        users.setdefault(record.user_id, []).append(review)
        per_item[record.item_id].append(review)

    item_db = ItemReviewDB(
        items={
            item_id: ItemEntry(
                item=catalog[item_id],
                reviews=reviews,
                selected=top_voted(reviews),
            )
            for item_id, reviews in per_item.items()
        }
    )
    user_db = UserReviewDB(users=users)
    report = IngestReport(
        reviews_read=reviews_read,
        items_read=items_read,
        reviews_kept=len(kept),
        duplicates_resolved=duplicates,
        dropped_unknown_item=dropped,
        malformed=len(errors or []),
        users=len(users),
        items=len(catalog),
        errors=errors or [],
    )
    logger.info(
        f"✅ Ingest: {report.reviews_kept} reviews, {report.users} users, {report.items} items "
        f"(dedup {duplicates}, unknown item {dropped}, malformed {report.malformed})"
    )
    return user_db, item_db, report


def top_voted(reviews: list[Review], limit: int = SELECTED_PER_ITEM) -> list[Review]:
    # сортировка стабильна, а reviews идут в порядке вставки
    return sorted(reviews, key=lambda review: (-review.votes, review.seq))[:limit]


def select_item_reviews(db: ItemReviewDB, item_id: str) -> list[Review]:
    return top_voted(db.entry(item_id).reviews)


def eligible_target_items(db: UserReviewDB, user_id: str) -> list[tuple[str, Review]]:
    """Отзывы пользователя с оценкой не ниже 8 - кандидаты в целевые фильмы"""
    return [(review.item_id, review) for review in db.reviews_of(user_id) if review.rating >= TARGET_MIN_RATING]


def reviewed_pool(user_db: UserReviewDB, item_db: ItemReviewDB, user_id: str) -> list[ItemEntry]:
    """Пул кандидатов рекомендателя: только фильмы, о которых пользователь писал"""
    item_ids = sorted({review.item_id for review in user_db.reviews_of(user_id)})
    return [item_db.items[item_id] for item_id in item_ids if item_id in item_db.items]


# ---------- Хранилище ---------- #
async def save_databases(db: AsyncSession, user_db: UserReviewDB, item_db: ItemReviewDB) -> None:
    """Перезаписывает корпус в хранилище целиком; повторный ingest дает ту же базу"""
    await db.execute(delete(ReviewRow))
    await db.execute(delete(ItemRow))
    for entry in item_db.items.values():
        db.add(
            ItemRow(
                item_id=entry.item.item_id,
                title=entry.item.title,
                genre=list(entry.item.genre),
                director=list(entry.item.director),
                cast=list(entry.item.cast),
            )
        )
    await db.flush()
    for reviews in user_db.users.values():
        for review in reviews:
            db.add(
                ReviewRow(
                    review_id=review.review_id,
                    user_id=review.user_id,
                    item_id=review.item_id,
                    title=review.title,
                    rating=review.rating,
                    text=review.text,
                    votes=review.votes,
                    seq=review.seq,
                )
            )
    await db.commit()
    logger.info(f"💾 Corpus saved: {user_db.review_count} reviews, {len(item_db.items)} items")


def _abstract(like: str | None, dislike: str | None, sources: list[str]) -> Abstract | None:
    if not like and not dislike:
        return None
    return Abstract(like=like, dislike=dislike, source_ids=sources)


async def load_databases(db: AsyncSession) -> tuple[UserReviewDB, ItemReviewDB]:
    item_rows = (await db.scalars(select(ItemRow).order_by(ItemRow.item_id))).all()
    review_rows = (await db.scalars(select(ReviewRow).order_by(ReviewRow.seq))).all()

    users: dict[str, list[Review]] = {}
    per_item: dict[str, list[Review]] = {row.item_id: [] for row in item_rows}
    for row in review_rows:
        review = Review(
            review_id=row.review_id,
            user_id=row.user_id,
            item_id=row.item_id,
            title=row.title,
            rating=row.rating,
            text=row.text,
            votes=row.votes or 0,
            seq=row.seq,
            abstract=_abstract(row.like, row.dislike, [row.review_id]),
            abstract_failed=bool(row.abstract_failed),
        )
        users.setdefault(row.user_id, []).append(review)
        per_item.setdefault(row.item_id, []).append(review)

    items = {}
    for row in item_rows:
        reviews = per_item[row.item_id]
        items[row.item_id] = ItemEntry(
            item=ItemRecord(
                item_id=row.item_id,
                title=row.title,
                genre=row.genre or [],
                director=row.director or [],
                cast=row.cast or [],
            ),
            reviews=reviews,
            selected=top_voted(reviews),
            knowledge=_abstract(row.like, row.dislike, list(row.knowledge_sources or [])),
            knowledge_failed=bool(row.knowledge_failed),
        )
    return UserReviewDB(users=users), ItemReviewDB(items=items)


async def store_review_abstract(db: AsyncSession, review_id: str, abstract: Abstract | None) -> None:
    """None - выжимка не удалась, отзыв помечается и исключается из персон"""
    await db.execute(
        update(ReviewRow)
        .where(ReviewRow.review_id == review_id)
        .values(
            like=abstract.like if abstract else None,
            dislike=abstract.dislike if abstract else None,
            abstract_failed=abstract is None,
        )
    )
    await db.commit()


async def store_item_knowledge(db: AsyncSession, item_id: str, abstract: Abstract | None) -> None:
    await db.execute(
        update(ItemRow)
        .where(ItemRow.item_id == item_id)
        .values(
            like=abstract.like if abstract else None,
            dislike=abstract.dislike if abstract else None,
            knowledge_sources=list(abstract.source_ids) if abstract else [],
            knowledge_failed=abstract is None,
        )
    )
    await db.commit()
