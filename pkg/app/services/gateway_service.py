"""
Единый доступ к chat-completion, эмбеддингам и NLI.

Удаленные бэкенды говорят по HTTPS на распространенной wire-схеме
chat/embeddings; моки (app.services.mock_backend) детерминированы.
Ретраи, лимит запросов, кэш и учет расходов живут здесь, в шлюзе.
"""
import asyncio
import json
import logging
import random
from collections import OrderedDict
from typing import Awaitable, Callable, Protocol, TypeVar

import httpx
from sqlalchemy.dialects.sqlite import insert
from sqlalchemy.ext.asyncio import AsyncSession, async_sessionmaker

from app.core.config import PipelineConfig, Settings
from app.core.exceptions import (
    ConfigError,
    EmptyCompletionError,
    TransportError,
    bad_request,
)
from app.models import EmbeddingCacheRow, ResponseCacheRow
from app.schemas.gateway import (
    ChatCompletion,
    ChatRequest,
    EmbeddingVector,
    NliScores,
    UsageSnapshot,
)
from app.utils.hashing import stable_hash
from app.utils.rate_limit import Clock, RateLimiter, SystemClock

logger = logging.getLogger(__name__)
T = TypeVar("T")

SYSTEM_PROMPT = "You are a helpful assistant."


class TransientBackendError(Exception):
    """Таймаут, обрыв, 429/5xx: имеет смысл повторить"""


class PermanentBackendError(Exception):
    """4xx и прочее, что повтор не исправит"""


# ---------- Протоколы бэкендов ---------- #
class ChatBackend(Protocol):
    model_tag: str

    async def complete(self, request: ChatRequest) -> ChatCompletion: ...


class EmbeddingBackend(Protocol):
    model_tag: str

    async def embed(self, text: str) -> list[float]: ...


class NliBackend(Protocol):
    model_tag: str

    async def score(self, premise: str, hypothesis: str) -> NliScores: ...


# ---------- Удаленные бэкенды (httpx) ---------- #
async def _post_json(
    client: httpx.AsyncClient, url: str, payload: dict, headers: dict, timeout: float
) -> dict | list:
    try:
        response = await client.post(url, json=payload, headers=headers, timeout=timeout)
    except httpx.TransportError as e:
        raise TransientBackendError(f"{type(e).__name__}: {e}") from e
    if response.status_code == 429 or response.status_code >= 500:
        raise TransientBackendError(f"HTTP {response.status_code}")
    if response.status_code >= 400:
        raise PermanentBackendError(f"HTTP {response.status_code}: {response.text[:200]}")
    try:
        return response.json()
    except ValueError as e:
        raise TransientBackendError("response body is not JSON") from e


class RemoteChatBackend:
    def __init__(self, client: httpx.AsyncClient, url: str, model_tag: str, api_key: str, timeout: float):
        self.client = client
        self.url = url
        self.model_tag = model_tag
        self.timeout = timeout
        self.headers = {"Authorization": f"Bearer {api_key}"}

    async def complete(self, request: ChatRequest) -> ChatCompletion:
        payload = {
            "model": self.model_tag,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        data = await _post_json(self.client, self.url, payload, self.headers, self.timeout)
        try:
            content = data["choices"][0]["message"].get("content") or ""
        except (KeyError, IndexError, TypeError, AttributeError) as e:
            raise PermanentBackendError(f"unexpected chat response shape: {e}") from e
        usage = data.get("usage") or {}
        return ChatCompletion(
            text=content,
            prompt_tokens=int(usage.get("prompt_tokens") or 0),
            completion_tokens=int(usage.get("completion_tokens") or 0),
        )


class RemoteEmbeddingBackend:
    def __init__(self, client: httpx.AsyncClient, url: str, model_tag: str, api_key: str, timeout: float):
        self.client = client
        self.url = url
        self.model_tag = model_tag
        self.timeout = timeout
        self.headers = {"Authorization": f"Bearer {api_key}"}

    async def embed(self, text: str) -> list[float]:
        data = await _post_json(
            self.client, self.url, {"model": self.model_tag, "input": text}, self.headers, self.timeout
        )
        try:
            return [float(v) for v in data["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError) as e:
            raise PermanentBackendError(f"unexpected embedding response shape: {e}") from e


# индексы классов у NLI-моделей, обученных на MNLI/DNLI
_LABEL_INDEX = {"label_0": "contradict", "label_1": "neutral", "label_2": "entail"}


def _nli_label(label: str) -> str | None:
    label = label.casefold()
    if label in _LABEL_INDEX:
        return _LABEL_INDEX[label]
    for prefix, name in (("entail", "entail"), ("neutral", "neutral"), ("contra", "contradict")):
        if label.startswith(prefix):
            return name
    return None


def parse_nli_response(data: dict | list) -> NliScores:
    """Принимает {entailment, neutral, contradiction} или список {label, score} (в т.ч. вложенный)"""
    scores = {"entail": 0.0, "neutral": 0.0, "contradict": 0.0}
    if isinstance(data, list):
        rows = data[0] if data and isinstance(data[0], list) else data
        for row in rows:
            name = _nli_label(str(row.get("label", "")))
            if name:
                scores[name] = float(row.get("score", 0.0))
    elif isinstance(data, dict):
        for key, value in data.items():
            name = _nli_label(key)
            if name:
                scores[name] = float(value)
    total = sum(scores.values())
    if total <= 0:
        raise PermanentBackendError(f"NLI response has no usable labels: {str(data)[:200]}")
    return NliScores(**{k: v / total for k, v in scores.items()})


class RemoteNliBackend:
    def __init__(self, client: httpx.AsyncClient, url: str, model_tag: str, api_key: str, timeout: float):
        self.client = client
        self.url = url
        self.model_tag = model_tag
        self.timeout = timeout
        self.headers = {"Authorization": f"Bearer {api_key}"}

    async def score(self, premise: str, hypothesis: str) -> NliScores:
        payload = {"inputs": {"text": premise, "text_pair": hypothesis}}
        data = await _post_json(self.client, self.url, payload, self.headers, self.timeout)
        return parse_nli_response(data)


# ---------- Кэши ---------- #
class ResponseCache(Protocol):
    async def get(self, key: str) -> str | None: ...

    async def put(self, key: str, kind: str, model_tag: str, payload: str) -> None: ...


class MemoryResponseCache:
    def __init__(self):
        self.rows: dict[str, str] = {}

    async def get(self, key: str) -> str | None:
        return self.rows.get(key)

    async def put(self, key: str, kind: str, model_tag: str, payload: str) -> None:
        self.rows.setdefault(key, payload)


class SqlResponseCache:
    """Кэш ответов в хранилище; каждая запись - отдельная транзакция upsert"""

    def __init__(self, session_maker: async_sessionmaker[AsyncSession]):
        self.session_maker = session_maker

    async def get(self, key: str) -> str | None:
        async with self.session_maker() as db:
            row = await db.get(ResponseCacheRow, key)
            return row.payload if row else None

    async def put(self, key: str, kind: str, model_tag: str, payload: str) -> None:
        async with self.session_maker() as db:
            await db.execute(
                insert(ResponseCacheRow)
                .values(key=key, kind=kind, model_tag=model_tag, payload=payload)
                .on_conflict_do_nothing(index_elements=["key"])
            )
            await db.commit()


class EmbeddingCache(Protocol):
    async def get(self, key: str) -> tuple[list[float], bool] | None: ...

    async def put(self, key: str, model_tag: str, values: list[float], truncated: bool) -> None: ...


class MemoryEmbeddingCache:
    def __init__(self):
        self.rows: dict[str, tuple[list[float], bool]] = {}

    async def get(self, key: str) -> tuple[list[float], bool] | None:
        return self.rows.get(key)

    async def put(self, key: str, model_tag: str, values: list[float], truncated: bool) -> None:
        self.rows.setdefault(key, (values, truncated))


class SqlEmbeddingCache:
    def __init__(self, session_maker: async_sessionmaker[AsyncSession]):
        self.session_maker = session_maker

    async def get(self, key: str) -> tuple[list[float], bool] | None:
        async with self.session_maker() as db:
            row = await db.get(EmbeddingCacheRow, key)
            return (list(row.vector), bool(row.truncated)) if row else None

    async def put(self, key: str, model_tag: str, values: list[float], truncated: bool) -> None:
        async with self.session_maker() as db:
            await db.execute(
                insert(EmbeddingCacheRow)
                .values(key=key, model_tag=model_tag, vector=values, truncated=truncated)
                .on_conflict_do_nothing(index_elements=["key"])
            )
            await db.commit()


# ---------- Учет расходов ---------- #
class UsageCounter:
    def __init__(self):
        self.requests = 0
        self.cache_hits = 0
        self.retries = 0
        self.prompt_tokens = 0
        self.completion_tokens = 0
        self.embeddings = 0
        self.nli_calls = 0

    def snapshot(self) -> UsageSnapshot:
        return UsageSnapshot(**vars(self))

    def cost(self, price_prompt_per_1k: float, price_completion_per_1k: float) -> float:
        return (
            self.prompt_tokens / 1000 * price_prompt_per_1k
            + self.completion_tokens / 1000 * price_completion_per_1k
        )


# ---------- Шлюз ---------- #
class LLMGateway:
    """
    Безопасен для вызова из многих сессий одновременно.

    Общее изменяемое состояние: ограничитель запросов, кэши, счетчики.
    Все остальное живет в рамках одного запроса.
    """

    def __init__(
        self,
        chat_backend: ChatBackend,
        embedding_backend: EmbeddingBackend,
        nli_backend: NliBackend | None,
        limiter: RateLimiter,
        *,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        embedding_max_chars: int = 8000,
        clock: Clock | None = None,
        response_cache: ResponseCache | None = None,
        embedding_cache: EmbeddingCache | None = None,
        jitter_seed: int = 0,
        embedding_memo_size: int = 4096,
    ):
        self.chat_backend = chat_backend
        self.embedding_backend = embedding_backend
        self.nli_backend = nli_backend
        self.limiter = limiter
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.embedding_max_chars = embedding_max_chars
        self.clock = clock or SystemClock()
        self.response_cache = response_cache or MemoryResponseCache()
        self.embedding_cache = embedding_cache or MemoryEmbeddingCache()
        self.usage = UsageCounter()
        self._jitter = random.Random(jitter_seed)
        # LRU в памяти поверх постоянного кэша; контексты диалогов уникальны, поэтому размер ограничен
        self._embedding_memo: OrderedDict[str, EmbeddingVector] = OrderedDict()
        self.embedding_memo_size = embedding_memo_size
        self._dims: dict[str, int] = {}
        self._inflight: dict[str, asyncio.Future] = {}
        self.http_client: httpx.AsyncClient | None = None

    @property
    def tags(self) -> dict[str, str]:
        tags = {
            "chat": self.chat_backend.model_tag,
            "embedding": self.embedding_backend.model_tag,
        }
        if self.nli_backend is not None:
            tags["nli"] = self.nli_backend.model_tag
        return tags

    async def _with_retries(self, label: str, call: Callable[[], Awaitable[T]]) -> T:
        attempts: list[str] = []
        for attempt in range(1, self.max_attempts + 1):
            await self.limiter.acquire()
            self.usage.requests += 1
            try:
                return await call()
            except TransientBackendError as e:
                attempts.append(f"attempt {attempt}: {e}")
                if attempt == self.max_attempts:
                    break
                delay = self.backoff_base * 2 ** (attempt - 1)
                delay += self._jitter.uniform(0, self.backoff_base / 2)
                self.usage.retries += 1
                logger.warning(
                    f"🔁 {label}: attempt {attempt}/{self.max_attempts} failed ({e}), retry in {delay:.2f}s"
                )
                await self.clock.sleep(delay)
            except PermanentBackendError as e:
                attempts.append(f"attempt {attempt}: {e}")
                break
        logger.error(f"❌ {label}: giving up after {len(attempts)} attempt(s)")
        raise TransportError(f"{label} failed after {len(attempts)} attempt(s)", attempts=attempts)

    async def _once(self, key: str, fetch: Callable[[], Awaitable[T]]) -> T:
        """Одинаковые запросы в полете разделяют один вызов; повторные считаются попаданием в кэш"""
        task = self._inflight.get(key)
        if task is not None:
            self.usage.cache_hits += 1
            return await asyncio.shield(task)
        task = asyncio.ensure_future(fetch())
        self._inflight[key] = task
        try:
            return await asyncio.shield(task)
        finally:
            if task.done():
                self._inflight.pop(key, None)
            else:
                task.add_done_callback(lambda _: self._inflight.pop(key, None))

    async def chat(self, request: ChatRequest) -> str:
        tag = self.chat_backend.model_tag
        key = stable_hash(
            "chat",
            tag,
            request.system_prompt,
            request.user_prompt,
            request.temperature,
            request.max_tokens,
            request.seed,
            request.hints,
        )
        return await self._once(key, lambda: self._chat_uncached(key, tag, request))

    async def _chat_uncached(self, key: str, tag: str, request: ChatRequest) -> str:
        cached = await self.response_cache.get(key)
        if cached is not None:
            self.usage.cache_hits += 1
            return ChatCompletion.model_validate_json(cached).text

        completion = await self._with_retries(
            f"chat[{request.purpose}]", lambda: self.chat_backend.complete(request)
        )
        self.usage.prompt_tokens += completion.prompt_tokens
        self.usage.completion_tokens += completion.completion_tokens
        if not completion.text.strip():
            raise EmptyCompletionError(f"chat[{request.purpose}] returned an empty completion")
        await self.response_cache.put(key, "chat", tag, completion.model_dump_json())
        return completion.text

    async def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            bad_request("embed() needs non-empty text")
        tag = self.embedding_backend.model_tag
        truncated = len(text) > self.embedding_max_chars
        if truncated:
            logger.debug(f"✂️ Embedding input truncated from {len(text)} chars")
            text = text[: self.embedding_max_chars]
        key = stable_hash("embed", tag, text)
        if key in self._embedding_memo:
            self.usage.cache_hits += 1
            self._embedding_memo.move_to_end(key)
            return self._embedding_memo[key]
        return await self._once(key, lambda: self._embed_uncached(key, tag, text, truncated))

    async def _embed_uncached(self, key: str, tag: str, text: str, truncated: bool) -> EmbeddingVector:
        cached = await self.embedding_cache.get(key)
        if cached is not None:
            self.usage.cache_hits += 1
            values, truncated = cached[0], cached[1] or truncated
        else:
            values = await self._with_retries("embed", lambda: self.embedding_backend.embed(text))
            self.usage.embeddings += 1
            await self.embedding_cache.put(key, tag, values, truncated)

        dim = self._dims.setdefault(tag, len(values))
        if dim != len(values):
            bad_request(f"embedding length {len(values)} differs from {dim} for {tag}")
        vector = EmbeddingVector(values=values, model_tag=tag, truncated=truncated)
        self._embedding_memo[key] = vector
        while len(self._embedding_memo) > self.embedding_memo_size:
            self._embedding_memo.popitem(last=False)
        return vector

    async def nli(self, premise: str, hypothesis: str) -> NliScores:
        if not premise.strip() or not hypothesis.strip():
            bad_request("nli() needs non-empty premise and hypothesis")
        if self.nli_backend is None:
            raise ConfigError("backend.nli_url: NLI endpoint is not configured", key="backend.nli_url")
        tag = self.nli_backend.model_tag
        key = stable_hash("nli", tag, premise, hypothesis)
        return await self._once(key, lambda: self._nli_uncached(key, tag, premise, hypothesis))

    async def _nli_uncached(self, key: str, tag: str, premise: str, hypothesis: str) -> NliScores:
        cached = await self.response_cache.get(key)
        if cached is not None:
            self.usage.cache_hits += 1
            return NliScores.model_validate_json(cached)
        scores = await self._with_retries(
            "nli", lambda: self.nli_backend.score(premise, hypothesis)
        )
        self.usage.nli_calls += 1
        await self.response_cache.put(key, "nli", tag, scores.model_dump_json())
        return scores

    async def aclose(self) -> None:
        if self.http_client is not None:
            await self.http_client.aclose()


def build_gateway(
    config: PipelineConfig,
    settings: Settings,
    session_maker: async_sessionmaker[AsyncSession] | None = None,
    *,
    clock: Clock | None = None,
    http_client: httpx.AsyncClient | None = None,
) -> LLMGateway:
    """Собирает шлюз по секции backend; ключ API проверяется до первого сетевого вызова"""
    from app.services.mock_backend import (
        MockChatBackend,
        MockEmbeddingBackend,
        MockNliBackend,
    )

    backend = config.backend
    owned_client = None
    if backend.kind == "mock":
        chat: ChatBackend = MockChatBackend()
        embedder: EmbeddingBackend = MockEmbeddingBackend(dim=backend.mock_dim, seed=config.seed)
        nli: NliBackend | None = MockNliBackend()
    else:
        api_key = settings.resolve_api_key(backend.api_key_env)
        if not api_key:
            raise ConfigError(
                f"backend.api_key_env: environment variable {backend.api_key_env} is not set",
                key="backend.api_key_env",
            )
        client = http_client or httpx.AsyncClient()
        owned_client = client if http_client is None else None
        chat = RemoteChatBackend(client, backend.chat_url, backend.chat_model, api_key, backend.timeout)
        embedder = RemoteEmbeddingBackend(
            client, backend.embedding_url, backend.embedding_model, api_key, backend.timeout
        )
        nli = (
            RemoteNliBackend(client, backend.nli_url, backend.nli_model, api_key, backend.timeout)
            if backend.nli_url
            else None
        )

    gateway = LLMGateway(
        chat,
        embedder,
        nli,
        RateLimiter(backend.rate_limit, clock=clock),
        max_attempts=backend.max_attempts,
        backoff_base=backend.backoff_base,
        embedding_max_chars=backend.embedding_max_chars,
        embedding_memo_size=backend.embedding_memo_size,
        clock=clock,
        response_cache=SqlResponseCache(session_maker) if session_maker else None,
        embedding_cache=SqlEmbeddingCache(session_maker) if session_maker else None,
        jitter_seed=config.seed,
    )
    gateway.http_client = owned_client
    logger.info(f"✅ Gateway ready: backend={backend.kind}, tags={gateway.tags}")
    return gateway


def dumps_hint(value: object) -> str:
    """Подсказки мока передаются строками; сложные значения - JSON"""
    return json.dumps(value, ensure_ascii=False, sort_keys=True)
