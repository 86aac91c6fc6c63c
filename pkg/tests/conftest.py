import time
from pathlib import Path

import pytest

from app.core.config import PipelineConfig
from app.database.db import init_models, make_engine, make_session_maker, store_url
from app.schemas.corpus import Abstract, ItemRecord, RawReviewRecord, Review
from app.schemas.persona import Persona, PersonaReview
from app.services.abstraction_service import abstract_corpus
from app.services.corpus_service import ingest_reviews, load_records, save_databases
from app.services.gateway_service import LLMGateway
from app.services.mock_backend import MockChatBackend, MockEmbeddingBackend, MockNliBackend
from app.utils.rate_limit import RateLimiter

FIXTURES = Path(__file__).resolve().parent.parent / "data" / "fixtures"
FAST_RATE = "100000/second"


@pytest.fixture
def anyio_backend():
    return "asyncio"


class VirtualClock:
    """Часы для тестов: sleep мгновенно сдвигает время и запоминает паузы"""

    def __init__(self, start: float = 0.0):
        self.time = start
        self.sleeps: list[float] = []

    def now(self) -> float:
        return self.time

    async def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        self.time += max(seconds, 0.0)


class _ClockTime:
    """Подмена модуля time в хранилище limits: time() идет по виртуальным часам"""

    def __init__(self, clock: VirtualClock):
        self.clock = clock

    def __getattr__(self, name):
        return getattr(time, name)

    def time(self) -> float:
        return self.clock.now()


@pytest.fixture
def virtual_clock(monkeypatch) -> VirtualClock:
    """Виртуальные часы, по которым живет и окно limits"""
    clock = VirtualClock()
    monkeypatch.setattr("limits.aio.storage.memory.time", _ClockTime(clock))
    return clock


def make_gateway(
    chat=None,
    embedder=None,
    nli=None,
    *,
    rate: str = FAST_RATE,
    clock: VirtualClock | None = None,
    **kwargs,
) -> LLMGateway:
    clock = clock or VirtualClock()
    return LLMGateway(
        chat or MockChatBackend(),
        embedder or MockEmbeddingBackend(dim=32, seed=7),
        nli if nli is not None else MockNliBackend(),
        RateLimiter(rate, clock=clock, record=True),
        clock=clock,
        **kwargs,
    )


def abstract_of(like: str | None = None, dislike: str | None = None, source: str = "r") -> Abstract:
    return Abstract(like=like, dislike=dislike, source_ids=[source])


def make_review(
    user_id: str,
    item_id: str,
    rating: int = 7,
    text: str = "I loved the witty dialogue.",
    *,
    votes: int = 0,
    seq: int = 0,
    like: str | None = "I loved the witty dialogue.",
    dislike: str | None = None,
    title: str | None = None,
) -> Review:
    review_id = f"{user_id}:{item_id}"
    return Review(
        review_id=review_id,
        user_id=user_id,
        item_id=item_id,
        title=title or f"Film {item_id} (2001)",
        rating=rating,
        text=text,
        votes=votes,
        seq=seq,
        abstract=abstract_of(like, dislike, review_id) if like or dislike else None,
    )


def make_persona(
    user_id: str = "u1",
    target_title: str = "Iron Harbor (2001)",
    target_like: str = "I loved the gritty battle scenes.",
    target_dislike: str | None = "I disliked the slow pacing.",
    general_likes: tuple[str, ...] = (
        "I loved the witty dialogue.",
        "I loved the haunting soundtrack.",
        "I loved the eerie atmosphere.",
    ),
    general_dislikes: tuple[str | None, ...] = (None, "I disliked the wooden acting.", None),
    seed: int = 11,
) -> Persona:
    general = [
        PersonaReview(
            item_id=f"g{index}",
            title=f"General {index} (1999)",
            review_id=f"{user_id}:g{index}",
            user_id=user_id,
            abstract=abstract_of(like, dislike, f"{user_id}:g{index}"),
        )
        for index, (like, dislike) in enumerate(zip(general_likes, general_dislikes))
    ]
    return Persona(
        user_id=user_id,
        general=general,
        target_item_id="target",
        target_title=target_title,
        target_rating=9,
        target_abstract=abstract_of(target_like, target_dislike, f"{user_id}:target"),
        seed=seed,
    )


def pipeline_config(tmp_path: Path, **overrides) -> PipelineConfig:
    data = {
        "paths": {
            "reviews": str(FIXTURES / "reviews.jsonl"),
            "items": str(FIXTURES / "items.jsonl"),
            "work_dir": str(tmp_path / "run"),
        },
        "backend": {"kind": "mock", "rate_limit": FAST_RATE, "mock_dim": 32},
        "seed": 42,
        "parallelism": 4,
    }
    for key, value in overrides.items():
        data[key] = {**data[key], **value} if isinstance(value, dict) and key in data else value
    return PipelineConfig.model_validate(data)


async def prepared_corpus(tmp_path: Path, gateway: LLMGateway | None = None):
    """Встроенный корпус: ingest + выжимки на мок-бэкенде, хранилище во временной папке"""
    reviews, review_errors = load_records(FIXTURES / "reviews.jsonl", RawReviewRecord)
    items, item_errors = load_records(FIXTURES / "items.jsonl", ItemRecord)
    user_db, item_db, _ = ingest_reviews(reviews, items, review_errors + item_errors)

    engine = make_engine(store_url(tmp_path / "store.db"))
    await init_models(engine)
    session_maker = make_session_maker(engine)
    async with session_maker() as db:
        await save_databases(db, user_db, item_db)
    gateway = gateway or make_gateway()
    user_db, item_db, _ = await abstract_corpus(gateway, session_maker, user_db, item_db, progress=False)
    await engine.dispose()
    return gateway, user_db, item_db
