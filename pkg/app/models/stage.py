from datetime import datetime, timezone

from app.database.db import Base
from sqlalchemy import JSON, Boolean, Column, DateTime, String


# ---------- Stage status ---------- #
class StageStatus(Base):
    """Какие стадии пайплайна завершены (порядок стадий проверяет CLI)"""

    __tablename__ = "stage_status"
    __table_args__ = {"extend_existing": True}

    stage = Column(String, primary_key=True)
    completed = Column(Boolean, default=False)
    summary = Column(JSON, default=dict)
    updated_at = Column(
        DateTime(timezone=True),
        default=lambda: datetime.now(timezone.utc),
        onupdate=lambda: datetime.now(timezone.utc),
    )
