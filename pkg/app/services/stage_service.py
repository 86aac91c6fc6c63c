import logging
from typing import Any

from sqlalchemy.ext.asyncio import AsyncSession

from app.core.exceptions import usage_error
from app.models import StageStatus
from app.models.enum import Stage

logger = logging.getLogger(__name__)

# стадия -> что должно быть завершено до нее
REQUIRES: dict[Stage, Stage | None] = {
    Stage.INGEST: None,
    Stage.ABSTRACT: Stage.INGEST,
    Stage.GENERATE: Stage.ABSTRACT,
    Stage.FILTER: Stage.GENERATE,
    Stage.STATS: Stage.GENERATE,
}


async def is_completed(db: AsyncSession, stage: Stage) -> bool:
    row = await db.get(StageStatus, stage.value)
    return bool(row and row.completed)


async def require_previous(db: AsyncSession, stage: Stage) -> None:
    previous = REQUIRES[stage]
    if previous is not None and not await is_completed(db, previous):
        usage_error(f"stage '{stage.value}' needs '{previous.value}' to be completed first")


async def mark_completed(db: AsyncSession, stage: Stage, summary: dict[str, Any] | None = None) -> None:
    row = await db.get(StageStatus, stage.value)
    if row is None:
        row = StageStatus(stage=stage.value)
        db.add(row)
    row.completed = True
    row.summary = summary or {}
    await db.commit()
    logger.info(f"✅ Stage '{stage.value}' completed")


async def reset_from(db: AsyncSession, stage: Stage) -> None:
    """Повторный ingest делает недействительными все последующие стадии"""
    order = list(Stage)
    for later in order[order.index(stage) :]:
        row = await db.get(StageStatus, later.value)
        if row is not None:
            row.completed = False
    await db.commit()
