"""
Метрики качества корпуса (специфичность n-грамм, междиалоговая близость,
длина реплик рекомендателя) и метрики моделей (Distinct-n, Recall@k).
"""
import itertools
import logging
import random
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from app.core.config import MetricsConfig
from app.core.exceptions import UndefinedMetricError, bad_request
from app.models.enum import Role
from app.schemas.metrics import CorpusStats, MetricsReport, Transcript
from app.services.gateway_service import LLMGateway
from app.utils.helpers import ngrams, tokenize
from app.utils.jsonl import read_jsonl

logger = logging.getLogger(__name__)

__all__ = [
    "tokenize",
    "ngrams",
    "ngram_specificity",
    "inter_dialogue_similarity",
    "avg_recommender_words",
    "distinct_n",
    "recall_at_k",
    "corpus_stats",
    "compute_report",
    "format_report",
]

# Опубликованные значения для сравнения в текстовой таблице
REFERENCE = {
    "ReDial": {"dialogues": 10006, "users": 956, "utterances": 182150, 2: 65.44, 3: 65.97, 4: 65.37, "words": 11.01},
    "INSPIRED": {"dialogues": 1001, "users": 1594, "utterances": 35811, 2: 119.56, 3: 123.01, 4: 122.81, "words": 14.62},
    "released synthetic": {
        "dialogues": 57277, "users": 4680, "utterances": 548061,
        2: 141.79, 3: 149.75, 4: 153.00, "words": 38.81,
        "similarity": 0.1900, "similarity_no_persona": 0.1962,
    },
}


def seeker_text(transcript: Transcript) -> str:
    return " ".join(turn.text for turn in transcript.turns if turn.role == Role.SEEKER)


def _require_corpus(corpus: Sequence[Transcript], metric: str) -> None:
    if not corpus:
        raise UndefinedMetricError(f"{metric} is undefined on an empty corpus")
    for transcript in corpus:
        if not transcript.turns:
            bad_request(f"dialogue {transcript.dialogue_id} has no utterances")


def ngram_specificity(corpus: Sequence[Transcript], n: int) -> float:
    """Среднее по диалогам число уникальных n-грамм в склеенных репликах искателя"""
    if n < 1:
        bad_request("n must be >= 1")
    _require_corpus(corpus, "n-gram specificity")
    counts = [len(set(ngrams(tokenize(seeker_text(t)), n))) for t in corpus]
    return sum(counts) / len(counts)


def sample_pairs(count: int, size: int, seed: int) -> list[tuple[int, int]]:
    total = count * (count - 1) // 2
    if size >= total:
        return list(itertools.combinations(range(count), 2))
    rng = random.Random(seed)
    chosen: set[tuple[int, int]] = set()
    while len(chosen) < size:
        i, j = rng.sample(range(count), 2)
        chosen.add((min(i, j), max(i, j)))
    return sorted(chosen)


async def inter_dialogue_similarity(
    corpus: Sequence[Transcript], gateway: LLMGateway, pair_sample_size: int = 1000, seed: int = 0
) -> float:
    texts = [text for text in (seeker_text(t) for t in corpus) if text.strip()]
    if len(texts) < 2:
        raise UndefinedMetricError("inter-dialogue similarity needs at least 2 dialogues with seeker text")
    pairs = sample_pairs(len(texts), pair_sample_size, seed)
    needed = sorted({index for pair in pairs for index in pair})
    vectors = {}
    for index in needed:
        values = np.asarray((await gateway.embed(texts[index])).values, dtype=float)
        vectors[index] = values / np.linalg.norm(values)
    return float(np.mean([vectors[i] @ vectors[j] for i, j in pairs]))


def merged_recommender_utterances(transcript: Transcript) -> list[str]:
    """Подряд идущие реплики рекомендателя склеиваются в одну"""
    merged: list[str] = []
    previous = None
    for turn in transcript.turns:
        if turn.role == Role.RECOMMENDER:
            if previous == Role.RECOMMENDER:
                merged[-1] = f"{merged[-1]} {turn.text}"
            else:
                merged.append(turn.text)
        previous = turn.role
    return merged


def avg_recommender_words(corpus: Sequence[Transcript]) -> float:
    _require_corpus(corpus, "average recommender words")
    lengths = [len(text.split()) for t in corpus for text in merged_recommender_utterances(t)]
    if not lengths:
        raise UndefinedMetricError("corpus has no recommender utterances")
    return sum(lengths) / len(lengths)


def distinct_n(responses: Iterable[str], n: int) -> float:
    if n < 1:
        bad_request("n must be >= 1")
    grams = [gram for response in responses for gram in ngrams(tokenize(response), n)]
    if not grams:
        raise UndefinedMetricError(f"no {n}-gram exists in the responses")
    return len(set(grams)) / len(grams)


def recall_at_k(episodes: Sequence[tuple[Sequence[str], str]], k: int) -> float:
    if k < 1:
        bad_request("k must be >= 1")
    if not episodes:
        raise UndefinedMetricError("recall@k is undefined without episodes")
    hits = 0
    for number, (ranked, target) in enumerate(episodes):
        if len(set(ranked)) != len(ranked):
            bad_request(f"episode {number} ranking contains duplicate ids", episode=number)
        hits += target in ranked[:k]
    return hits / len(episodes)


def corpus_stats(corpus: Sequence[Transcript]) -> CorpusStats:
    users = {t.user_id for t in corpus if t.user_id is not None}
    items = {item for t in corpus for item in t.item_ids}
    utterances = sum(len(t.turns) for t in corpus)
    return CorpusStats(
        dialogues=len(corpus),
        utterances=utterances,
        users=len(users) if users else None,
        items=len(items) if items else None,
        avg_utterances=round(utterances / len(corpus), 4) if corpus else 0.0,
    )


async def compute_report(
    name: str,
    corpus: Sequence[Transcript],
    config: MetricsConfig,
    *,
    gateway: LLMGateway | None = None,
    seed: int = 0,
    responses: Sequence[str] | None = None,
    episodes: Sequence[tuple[Sequence[str], str]] | None = None,
) -> MetricsReport:
    """Метрики, которые не определены на входе, пропускаются с предупреждением"""
    specificity = {}
    words = similarity = None
    if corpus:
        specificity = {n: round(ngram_specificity(corpus, n), 4) for n in config.ngram_sizes}
        try:
            words = round(avg_recommender_words(corpus), 4)
        except UndefinedMetricError as e:
            logger.warning(f"⚠️ {name}: {e.detail}")
        if gateway is not None:
            try:
                similarity = round(
                    await inter_dialogue_similarity(corpus, gateway, config.pair_sample_size, seed), 6
                )
            except UndefinedMetricError as e:
                logger.warning(f"⚠️ {name}: {e.detail}")

    distinct = {}
    for n in config.distinct_sizes if responses else []:
        try:
            distinct[n] = round(distinct_n(responses, n), 6)
        except UndefinedMetricError as e:
            logger.warning(f"⚠️ {name}: {e.detail}")
    recall = {k: round(recall_at_k(episodes, k), 6) for k in config.recall_ks} if episodes else {}

    return MetricsReport(
        corpus=name,
        specificity=specificity,
        inter_dialogue_similarity=similarity,
        pair_sample_size=config.pair_sample_size if similarity is not None else None,
        avg_recommender_words=words,
        distinct_n=distinct,
        recall_at_k=recall,
        stats=corpus_stats(corpus),
    )


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}" if abs(value) < 1 else f"{value:.2f}"
    return f"{value:,}"


def format_report(reports: Sequence[MetricsReport]) -> str:
    """Текстовая таблица: измеренные корпуса, затем опубликованные значения"""
    sizes = sorted({n for r in reports for n in r.specificity} | {2, 3, 4})
    rows = [("dialogues", "dialogues"), ("utterances", "utterances"), ("users", "users")]
    rows += [(f"{n}-gram specificity", n) for n in sizes]
    rows += [("recommender words", "words"), ("inter-dialogue similarity", "similarity")]

    columns: list[tuple[str, dict]] = []
    for report in reports:
        values = {
            "dialogues": report.stats.dialogues,
            "utterances": report.stats.utterances,
            "users": report.stats.users,
            "words": report.avg_recommender_words,
            "similarity": report.inter_dialogue_similarity,
            **report.specificity,
        }
        columns.append((report.corpus, values))
    for name, values in REFERENCE.items():
        columns.append((f"{name} (published)", values))

    label_width = max(len(label) for label, _ in rows)
    widths = [max(len(name), 12) for name, _ in columns]
    lines = ["  ".join([" " * label_width] + [name.rjust(w) for (name, _), w in zip(columns, widths)])]
    for label, key in rows:
        cells = [_fmt(values.get(key)).rjust(w) for (_, values), w in zip(columns, widths)]
        lines.append("  ".join([label.ljust(label_width)] + cells))

    extra = [r for r in reports if r.distinct_n or r.recall_at_k]
    for report in extra:
        parts = [f"distinct-{n}={v:.4f}" for n, v in sorted(report.distinct_n.items())]
        parts += [f"recall@{k}={v:.4f}" for k, v in sorted(report.recall_at_k.items())]
        lines.append(f"{report.corpus}: " + ", ".join(parts))
    stamp = reports[0].tokenization if reports else None
    if stamp is not None:
        lines.append(
            f"tokenization: {stamp.rule} (case folding {'on' if stamp.case_folding else 'off'}, "
            f"split on {stamp.split_on}, punctuation {stamp.punctuation_tokens}); specificity = mean over dialogues"
        )
    return "\n".join(lines) + "\n"


def read_responses(path: Path) -> list[str]:
    """JSONL с полем response: ответы модели-рекомендателя для Distinct-n"""
    responses = []
    for number, record in enumerate(read_jsonl(path), start=1):
        if not isinstance(record.get("response"), str):
            bad_request(f"{path.name}: record {number} has no 'response' string", line=number)
        responses.append(record["response"])
    return responses


def read_rankings(path: Path) -> list[tuple[list[str], str]]:
    """JSONL с полями ranked (список id) и target: эпизоды для Recall@k"""
    episodes = []
    for number, record in enumerate(read_jsonl(path), start=1):
        ranked, target = record.get("ranked"), record.get("target")
        if not isinstance(ranked, list) or target is None:
            bad_request(f"{path.name}: record {number} needs 'ranked' and 'target'", line=number)
        episodes.append(([str(item) for item in ranked], str(target)))
    return episodes
