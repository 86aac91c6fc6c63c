from app.models.item import ItemRow
from app.models.review import ReviewRow
from app.models.cache import ResponseCacheRow, EmbeddingCacheRow
from app.models.stage import StageStatus
from app.database.db import Base




