import asyncio
import logging
import time
from typing import Protocol

from limits import RateLimitItem, parse
from limits.aio.storage import MemoryStorage
from limits.aio.strategies import MovingWindowRateLimiter

logger = logging.getLogger(__name__)

# окно limits сравнивает метки нестрого: ждем чуть дольше момента сброса
_RESET_MARGIN = 1e-3


class Clock(Protocol):
    def now(self) -> float: ...

    async def sleep(self, seconds: float) -> None: ...


class SystemClock:
    """Та же шкала, что у хранилища limits (time.time)"""

    def now(self) -> float:
        return time.time()

    async def sleep(self, seconds: float) -> None:
        await asyncio.sleep(seconds)


class RateLimiter:
    """
    Общий для всех сессий ограничитель запросов (скользящее окно limits).

    Лимит задается строкой в формате limits: "3500/minute", "10/second".
    Решение "пропустить или ждать" принимает MovingWindowRateLimiter,
    часы нужны только для ожидания до сброса окна.
    """

    def __init__(self, rate: str | RateLimitItem, clock: Clock | None = None, record: bool = False):
        self.item = parse(rate) if isinstance(rate, str) else rate
        self.clock = clock or SystemClock()
        self.record = record
        self.history: list[float] = []
        self.strategy = MovingWindowRateLimiter(MemoryStorage())
        self._lock = asyncio.Lock()

    async def acquire(self) -> None:
        async with self._lock:
            while not await self.strategy.hit(self.item, "gateway"):
                stats = await self.strategy.get_window_stats(self.item, "gateway")
                wait = max(stats.reset_time - self.clock.now(), 0.0) + _RESET_MARGIN
                logger.debug(f"⏳ Rate limit {self.item}: waiting {wait:.2f}s")
                await self.clock.sleep(wait)
            if self.record:
                self.history.append(self.clock.now())
