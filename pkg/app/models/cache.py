from datetime import datetime, timezone

from app.database.db import Base
from sqlalchemy import JSON, Boolean, Column, DateTime, Index, String, Text


# ---------- Caches ---------- #
class ResponseCacheRow(Base):
    """Ответы chat/NLI по ключу (хэш запроса, тег модели)"""

    __tablename__ = "response_cache"
    __table_args__ = (
        Index("ix_response_cache_kind", "kind"),
        {"extend_existing": True},
    )

    key = Column(String(64), primary_key=True)
    kind = Column(String, nullable=False)  # chat | nli
    model_tag = Column(String, nullable=False)
    payload = Column(Text, nullable=False)
    created_at = Column(
        DateTime(timezone=True), default=lambda: datetime.now(timezone.utc)
    )


class EmbeddingCacheRow(Base):
    __tablename__ = "embedding_cache"
    __table_args__ = {"extend_existing": True}

    key = Column(String(64), primary_key=True)
    model_tag = Column(String, nullable=False)
    vector = Column(JSON, nullable=False)
    truncated = Column(Boolean, default=False)
