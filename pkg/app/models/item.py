from datetime import datetime, timezone

from app.database.db import Base
from sqlalchemy import JSON, Boolean, Column, DateTime, String, Text


# ---------- Item ---------- #
class ItemRow(Base):
    __tablename__ = "item"
    __table_args__ = {"extend_existing": True}

    item_id = Column(String, primary_key=True)
    title = Column(String, nullable=False)  # вместе с годом: "Fury (2014)"
    genre = Column(JSON, default=list)
    director = Column(JSON, default=list)
    cast = Column(JSON, default=list)

    # выжимка знаний о фильме по трем самым популярным отзывам
    like = Column(Text, nullable=True)
    dislike = Column(Text, nullable=True)
    knowledge_sources = Column(JSON, default=list)
    knowledge_failed = Column(Boolean, default=False)

    updated_at = Column(
        DateTime(timezone=True),
        default=lambda: datetime.now(timezone.utc),
        onupdate=lambda: datetime.now(timezone.utc),
    )
