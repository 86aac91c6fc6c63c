from datetime import datetime, timezone

from app.database.db import Base
from sqlalchemy import Boolean, Column, DateTime, ForeignKey, Index, Integer, String, Text


# ---------- Review ---------- #
class ReviewRow(Base):
    """Отзыв одного пользователя об одном фильме + его выжимка like/dislike"""

    __tablename__ = "review"
    __table_args__ = (
        Index("ix_review_user_seq", "user_id", "seq"),
        Index("ix_review_item_votes", "item_id", "votes"),
        {"extend_existing": True, "sqlite_autoincrement": True},
    )

    id = Column(Integer, primary_key=True, index=True)
    review_id = Column(String, unique=True, nullable=False, index=True)
    user_id = Column(String, nullable=False, index=True)
    item_id = Column(String, ForeignKey("item.item_id"), nullable=False)
    title = Column(String, nullable=False)
    rating = Column(Integer, nullable=False)
    text = Column(Text, nullable=False)
    votes = Column(Integer, default=0)
    seq = Column(Integer, nullable=False)  # порядок вставки при загрузке

    like = Column(Text, nullable=True)
    dislike = Column(Text, nullable=True)
    abstract_failed = Column(Boolean, default=False)

    created_at = Column(
        DateTime(timezone=True), default=lambda: datetime.now(timezone.utc)
    )
