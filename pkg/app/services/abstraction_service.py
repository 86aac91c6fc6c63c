"""
Выжимки like/dislike: по одному отзыву пользователя и по трем популярным
отзывам о фильме.
"""
import asyncio
import logging
import re
from pathlib import Path

from pydantic import ValidationError
from sqlalchemy.ext.asyncio import AsyncSession, async_sessionmaker
from tqdm.asyncio import tqdm

from app.core.exceptions import (
    AbstractionError,
    EmptyCompletionError,
    ParseError,
    bad_request,
)
from app.schemas.corpus import (
    Abstract,
    AbstractionReport,
    ItemRecord,
    ItemReviewDB,
    Review,
    UserReviewDB,
)
from app.schemas.gateway import ChatRequest
from app.services.corpus_service import store_item_knowledge, store_review_abstract
from app.services.gateway_service import SYSTEM_PROMPT, LLMGateway
from app.services.recommender_service import render_item_knowledge
from app.utils.jsonl import JsonlWriter
from app.utils.prompts import FORMAT_REMINDER, ITEM_REVIEWS, USER_REVIEW, render_prompt

logger = logging.getLogger(__name__)

_HEADER = re.compile(r"\[(like|dislike)\]", re.IGNORECASE)
_NONE = re.compile(r"none\.?", re.IGNORECASE)


def parse_like_dislike(text: str) -> tuple[str | None, str | None]:
    """
    Ищет заголовки [Like]/[Dislike] в любом регистре и порядке.
    Секция - текст до следующего заголовка; "None." означает отсутствие.
    """
    matches = list(_HEADER.finditer(text or ""))
    if not matches:
        raise ParseError("completion has neither [Like] nor [Dislike] section")
    sections: dict[str, str | None] = {}
    for index, match in enumerate(matches):
        label = match.group(1).casefold()
        if label in sections:
            continue
        end = matches[index + 1].start() if index + 1 < len(matches) else len(text)
        body = text[match.end() : end].strip()
        sections[label] = None if not body or _NONE.fullmatch(body) else body
    return sections.get("like"), sections.get("dislike")


def render_like_dislike(abstract: Abstract) -> str:
    return f"[Like]\n{abstract.like or 'None.'}\n[Dislike]\n{abstract.dislike or 'None.'}"


async def _summarize(
    gateway: LLMGateway,
    prompt: str,
    *,
    purpose: str,
    source_text: str,
    source_ids: list[str],
    temperature: float,
    max_tokens: int,
    max_reasks: int,
    prompts_dir: Path | None,
) -> Abstract:
    reminder = render_prompt(FORMAT_REMINDER, prompts_dir, expected="[Like]\n...\n[Dislike]\n...")
    problems = []
    for attempt in range(max_reasks + 1):
        request = ChatRequest(
            system_prompt=SYSTEM_PROMPT,
            user_prompt=prompt if attempt == 0 else f"{prompt}\n{reminder}",
            temperature=temperature,
            max_tokens=max_tokens,
            purpose=purpose,
            hints={"source_text": source_text},
        )
        try:
            like, dislike = parse_like_dislike(await gateway.chat(request))
            return Abstract(like=like, dislike=dislike, source_ids=source_ids)
        except (ParseError, EmptyCompletionError) as e:
            problems.append(e.detail)
        except ValidationError:
            problems.append("both [Like] and [Dislike] are None")
        logger.debug(f"🔁 {purpose} {source_ids}: re-ask {attempt + 1}/{max_reasks}")
    raise AbstractionError(
        f"no usable abstract for {', '.join(source_ids)} after {max_reasks} re-asks",
        problems=problems,
    )


async def summarize_user_review(
    gateway: LLMGateway,
    review: Review,
    *,
    temperature: float = 0.0,
    max_tokens: int = 512,
    max_reasks: int = 2,
    prompts_dir: Path | None = None,
) -> Abstract:
    if not review.text.strip():
        bad_request(f"review {review.review_id} has empty text")
    prompt = render_prompt(USER_REVIEW, prompts_dir, review=review.text)
    return await _summarize(
        gateway,
        prompt,
        purpose="user-abstract",
        source_text=review.text,
        source_ids=[review.review_id],
        temperature=temperature,
        max_tokens=max_tokens,
        max_reasks=max_reasks,
        prompts_dir=prompts_dir,
    )


async def summarize_item_reviews(
    gateway: LLMGateway,
    item: ItemRecord,
    reviews: list[Review],
    *,
    temperature: float = 0.0,
    max_tokens: int = 512,
    max_reasks: int = 2,
    prompts_dir: Path | None = None,
) -> Abstract:
    if not reviews:
        bad_request(f"item {item.item_id} has no reviews to summarize")
    texts = [review.text for review in reviews]
    prompt = render_prompt(
        ITEM_REVIEWS,
        prompts_dir,
        title=item.title,
        genre=item.genre,
        director=item.director,
        cast=item.cast,
        reviews=texts,
    )
    return await _summarize(
        gateway,
        prompt,
        purpose="item-abstract",
        source_text="\n".join(texts),
        source_ids=[review.review_id for review in reviews],
        temperature=temperature,
        max_tokens=max_tokens,
        max_reasks=max_reasks,
        prompts_dir=prompts_dir,
    )


async def abstract_corpus(
    gateway: LLMGateway,
    session_maker: async_sessionmaker[AsyncSession],
    user_db: UserReviewDB,
    item_db: ItemReviewDB,
    *,
    parallelism: int = 4,
    temperature: float = 0.0,
    max_tokens: int = 512,
    max_reasks: int = 2,
    prompts_dir: Path | None = None,
    progress: bool = True,
) -> tuple[UserReviewDB, ItemReviewDB, AbstractionReport]:
    """
    Выжимки для всего корпуса. Отзыв с готовой (или проваленной) выжимкой
    повторно не отправляется; результат пишется в хранилище сразу.
    """
    semaphore = asyncio.Semaphore(parallelism)
    options = dict(temperature=temperature, max_tokens=max_tokens, max_reasks=max_reasks, prompts_dir=prompts_dir)

    reviews = [r for reviews in user_db.users.values() for r in reviews]
    pending_reviews = [r for r in reviews if r.abstract is None and not r.abstract_failed]
    entries = list(item_db.items.values())
    pending_items = [
        e for e in entries if e.selected and e.knowledge is None and not e.knowledge_failed
    ]

    async def review_job(review: Review) -> tuple[Review, Abstract | None]:
        async with semaphore:
            try:
                return review, await summarize_user_review(gateway, review, **options)
            except AbstractionError as e:
                logger.warning(f"⚠️ Review {review.review_id}: {e.detail}")
                return review, None

    async def item_job(entry) -> tuple[str, Abstract | None]:
        async with semaphore:
            try:
                return entry.item.item_id, await summarize_item_reviews(
                    gateway, entry.item, entry.selected, **options
                )
            except AbstractionError as e:
                logger.warning(f"⚠️ Item {entry.item.item_id}: {e.detail}")
                return entry.item.item_id, None

    review_results: dict[str, Abstract | None] = {}
    jobs = [review_job(r) for r in pending_reviews]
    async with session_maker() as db:
        for future in tqdm.as_completed(jobs, total=len(jobs), desc="reviews", disable=not progress):
            review, abstract = await future
            review_results[review.review_id] = abstract
            await store_review_abstract(db, review.review_id, abstract)

    item_results: dict[str, Abstract | None] = {}
    jobs = [item_job(e) for e in pending_items]
    async with session_maker() as db:
        for future in tqdm.as_completed(jobs, total=len(jobs), desc="items", disable=not progress):
            item_id, abstract = await future
            item_results[item_id] = abstract
            await store_item_knowledge(db, item_id, abstract)

    def refresh(review: Review) -> Review:
        if review.review_id not in review_results:
            return review
        abstract = review_results[review.review_id]
        return review.model_copy(update={"abstract": abstract, "abstract_failed": abstract is None})

    new_user_db = UserReviewDB(
        users={user_id: [refresh(r) for r in rs] for user_id, rs in user_db.users.items()}
    )
    new_items = {}
    for item_id, entry in item_db.items.items():
        update = {
            "reviews": [refresh(r) for r in entry.reviews],
            "selected": [refresh(r) for r in entry.selected],
        }
        if item_id in item_results:
            update["knowledge"] = item_results[item_id]
            update["knowledge_failed"] = item_results[item_id] is None
        new_items[item_id] = entry.model_copy(update=update)

    report = AbstractionReport(
        reviews_total=len(reviews),
        reviews_abstracted=sum(a is not None for a in review_results.values()),
        reviews_cached=len(reviews) - len(pending_reviews),
        reviews_failed=sum(a is None for a in review_results.values()),
        items_total=len(entries),
        items_abstracted=sum(a is not None for a in item_results.values()),
        items_cached=sum(1 for e in entries if e.knowledge is not None or e.knowledge_failed),
        items_failed=sum(a is None for a in item_results.values()),
        items_without_reviews=sum(1 for e in entries if not e.selected),
    )
    logger.info(
        f"✅ Abstraction: reviews +{report.reviews_abstracted} (failed {report.reviews_failed}), "
        f"items +{report.items_abstracted} (failed {report.items_failed})"
    )
    return new_user_db, ItemReviewDB(items=new_items), report


def export_abstracts(
    user_db: UserReviewDB,
    item_db: ItemReviewDB,
    abstracts_path: Path,
    knowledge_path: Path,
    header: dict | None = None,
) -> None:
    """abstracts.jsonl (review -> выжимка) и item_knowledge.jsonl (фильм -> знания)"""
    reviews = sorted(
        (r for rs in user_db.users.values() for r in rs if r.abstract is not None),
        key=lambda r: r.review_id,
    )
    with JsonlWriter(abstracts_path, header=header, append=False) as writer:
        for review in reviews:
            writer.write(
                {
                    "review_id": review.review_id,
                    "user_id": review.user_id,
                    "item_id": review.item_id,
                    "like": review.abstract.like,
                    "dislike": review.abstract.dislike,
                }
            )
    with JsonlWriter(knowledge_path, header=header, append=False) as writer:
        for item_id in sorted(item_db.items):
            entry = item_db.items[item_id]
            writer.write(
                {
                    "item_id": item_id,
                    "title": entry.item.title,
                    "like": entry.knowledge.like if entry.knowledge else None,
                    "dislike": entry.knowledge.dislike if entry.knowledge else None,
                    "source_ids": list(entry.knowledge.source_ids) if entry.knowledge else [],
                    "knowledge": render_item_knowledge(entry),
                }
            )
