"""
Офлайн-бэкенды для тестов и прогонов без сети.

Все три - чистые функции от (вход, seed): одинаковый запуск дает
побайтно одинаковый датасет при любом параллелизме.
"""
import json
import re
from collections import Counter
from typing import Callable

import numpy as np

from app.schemas.gateway import ChatCompletion, ChatRequest, NliScores
from app.utils.hashing import derive_seed
from app.utils.helpers import normalize_text, split_sentences, tokenize

Responder = Callable[[ChatRequest], str]

NEGATIVE_CUES = frozenset(
    {
        "hate", "hated", "hates", "dislike", "disliked", "dislikes", "not", "no",
        "never", "don't", "didn't", "doesn't", "isn't", "wasn't", "can't",
        "cannot", "won't", "avoid", "avoided", "detest", "loathe",
    }
)
POSITIVE_CUES = frozenset(
    {
        "like", "liked", "likes", "love", "loved", "loves", "enjoy", "enjoyed",
        "enjoys", "want", "wants", "fan", "prefer", "prefers", "adore", "adored",
        "appreciate", "appreciated",
    }
)
STOPWORDS = frozenset(
    {
        "i", "i'm", "me", "my", "a", "an", "the", "and", "or", "of", "to", "in",
        "on", "with", "for", "is", "are", "was", "were", "it", "its", "it's",
        "this", "that", "these", "those", "movie", "movies", "film", "films",
        "really", "very", "so", "something", "some", "be", "been", "by", "as",
        "at", "seeker", "seems", "they", "them", "their", "all", "just", "too",
    }
)
_NLI_TOKEN = re.compile(r"[a-z0-9']+")


def analyze_statement(text: str) -> tuple[str | None, frozenset[str]]:
    """Полярность (positive/negative/None) и множество "признаков" высказывания"""
    tokens = _NLI_TOKEN.findall(text.casefold().replace("’", "'"))
    polarity = None
    if any(token in NEGATIVE_CUES for token in tokens):
        polarity = "negative"
    elif any(token in POSITIVE_CUES for token in tokens):
        polarity = "positive"
    features = frozenset(
        token
        for token in tokens
        if token not in NEGATIVE_CUES and token not in POSITIVE_CUES and token not in STOPWORDS
    )
    return polarity, features


def _scores(dominant: str) -> NliScores:
    values = {"entail": 0.05, "neutral": 0.05, "contradict": 0.05}
    values[dominant] = 0.9
    return NliScores(**values)


class MockNliBackend:
    """
    Правило: противоречие, если полярности противоположны и все признаки
    посылки встречаются в гипотезе; совпадение текстов - следование.
    """

    model_tag = "mock-nli"

    async def score(self, premise: str, hypothesis: str) -> NliScores:
        if normalize_text(premise) == normalize_text(hypothesis):
            return _scores("entail")
        p_polarity, p_features = analyze_statement(premise)
        h_polarity, h_features = analyze_statement(hypothesis)
        if p_polarity and h_polarity and p_features and p_features <= h_features:
            return _scores("contradict" if p_polarity != h_polarity else "entail")
        return _scores("neutral")


class MockEmbeddingBackend:
    """Сумма seeded-векторов токенов с весами-частотами, нормированная к единице"""

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.model_tag = f"mock-embedding-{dim}"
        self._token_vectors: dict[str, np.ndarray] = {}

    def _vector(self, token: str) -> np.ndarray:
        if token not in self._token_vectors:
            rng = np.random.default_rng(derive_seed(self.seed, token))
            self._token_vectors[token] = rng.standard_normal(self.dim)
        return self._token_vectors[token]

    def vector(self, text: str) -> np.ndarray:
        counts = Counter(tokenize(text)) or Counter({text: 1})
        total = np.zeros(self.dim)
        # сортировка фиксирует порядок сложения float
        for token in sorted(counts):
            total += counts[token] * self._vector(token)
        norm = np.linalg.norm(total)
        if norm == 0:
            return self._vector(f"\x00{text}") / np.linalg.norm(self._vector(f"\x00{text}"))
        return total / norm

    async def embed(self, text: str) -> list[float]:
        return self.vector(text).tolist()


# ---------- Чат ---------- #
def _hint_list(request: ChatRequest, key: str) -> list[str]:
    raw = request.hints.get(key)
    return json.loads(raw) if raw else []


def _hint_int(request: ChatRequest, key: str) -> int:
    return int(request.hints.get(key) or 0)


def summarize_response(request: ChatRequest) -> str:
    """Предложения с позитивными маркерами уходят в [Like], с негативными в [Dislike]"""
    source = request.hints.get("source_text") or request.user_prompt
    like, dislike = [], []
    for sentence in split_sentences(source):
        polarity, _ = analyze_statement(sentence)
        if polarity == "positive":
            like.append(sentence)
        elif polarity == "negative":
            dislike.append(sentence)
    return f"[Like]\n{' '.join(like) or 'None.'}\n[Dislike]\n{' '.join(dislike) or 'None.'}"


_REJECT_OPENERS = [
    "Hmm, I think I'll pass on '{title}' this time.",
    "'{title}' sounds a bit off for my mood tonight.",
    "I'll skip '{title}' for now.",
    "Maybe another time for '{title}'.",
]
_ANSWER_OPENERS = [
    "I'm in the mood for something I'd enjoy.",
    "Good question!",
    "Let me think about what usually works for me.",
]


def seeker_response(request: ChatRequest) -> str:
    turn = _hint_int(request, "turn")
    title = request.hints.get("recommended_title")
    target_likes = _hint_list(request, "target_likes") or ["a story that keeps me hooked."]
    feature = target_likes[turn % len(target_likes)]

    if title and request.hints.get("recommended_is_target") == "yes":
        return (
            f"That sounds like exactly what I'm looking for! "
            f"I'll definitely give '{title}' a watch. Thanks for the recommendation! [EOD]"
        )
    if title:
        parts = [_REJECT_OPENERS[turn % len(_REJECT_OPENERS)].format(title=title)]
        if request.hints.get("responsive") == "yes":
            parts.append("I've seen it already and I'd like to try something new.")
        parts.append(f"What I'm really after: {feature}")
        return " ".join(parts)

    parts = [_ANSWER_OPENERS[turn % len(_ANSWER_OPENERS)]]
    general = _hint_list(request, "general_likes")
    if general:
        parts.append(f"In general I'm a fan of this: {general[turn % len(general)]}")
    parts.append(f"Right now I'd love this: {feature}")
    return " ".join(parts)


_QUESTIONS = [
    "Great, thanks for sharing! Are there any actors or directors you especially enjoy?",
    "Nice! Do you prefer something recent, or are classics fine too?",
]
_REC_OPENERS = ["How about '{title}'?", "You might enjoy '{title}'.", "I'd suggest '{title}'."]


def recommender_response(request: ChatRequest) -> str:
    turn = _hint_int(request, "turn")
    if request.hints.get("phase") != "recommending":
        return (
            "Think: The seeker wants a movie they will enjoy.\n"
            f"Recommender: {_QUESTIONS[turn % len(_QUESTIONS)]}"
        )
    titles = _hint_list(request, "candidates")
    snippets = _hint_list(request, "candidate_likes")
    pick = len(titles) - 1 if request.hints.get("forced") == "yes" else 0
    title = titles[pick]
    snippet = snippets[pick] if pick < len(snippets) and snippets[pick] else "People say it is worth a watch."
    return (
        "Think: The seeker wants a movie close to what they described.\n"
        f"Movie: {title}\n"
        f"Recommender: {_REC_OPENERS[turn % len(_REC_OPENERS)].format(title=title)} {snippet}"
    )


DEFAULT_RESPONDERS: dict[str, Responder] = {
    "user-abstract": summarize_response,
    "item-abstract": summarize_response,
    "seeker": seeker_response,
    "recommender": recommender_response,
}


class MockChatBackend:
    """
    Отвечает по script (ключ - hints["script_key"]) или по назначению запроса.

    responders переопределяют ответчиков по умолчанию; так тесты подмешивают
    дефектные реплики.
    """

    model_tag = "mock-chat"

    def __init__(
        self,
        script: dict[str, str] | None = None,
        responders: dict[str, Responder] | None = None,
    ):
        self.script = script or {}
        self.responders = {**DEFAULT_RESPONDERS, **(responders or {})}
        self.calls: Counter[str] = Counter()

    async def complete(self, request: ChatRequest) -> ChatCompletion:
        self.calls[request.purpose] += 1
        key = request.hints.get("script_key")
        if key is not None and key in self.script:
            text = self.script[key]
        elif request.purpose in self.responders:
            text = self.responders[request.purpose](request)
        else:
            text = request.user_prompt
        return ChatCompletion(
            text=text,
            prompt_tokens=len(tokenize(request.system_prompt)) + len(tokenize(request.user_prompt)),
            completion_tokens=len(tokenize(text)),
        )
