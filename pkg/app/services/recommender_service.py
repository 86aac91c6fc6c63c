"""
Рекомендатель: поиск кандидатов по косинусной близости эмбеддингов
и ход в формате Think/Movie/Recommender.
"""
import logging
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from app.core.exceptions import (
    EmptyCompletionError,
    OffCandidateError,
    ParseError,
    SimulatorError,
    bad_request,
)
from app.models.enum import Phase
from app.schemas.corpus import ItemEntry
from app.schemas.dialogue import Candidate, CandidateSet, RecTurn, Turn, render_context
from app.schemas.gateway import ChatRequest
from app.services.gateway_service import SYSTEM_PROMPT, LLMGateway, dumps_hint
from app.utils.helpers import normalize_title, split_sentences, split_title_year
from app.utils.prompts import FORMAT_REMINDER, RECOMMENDER, render_prompt

logger = logging.getLogger(__name__)

_PREFIX = re.compile(r"^[ \t]*(think|movie|recommender)[ \t]*:", re.IGNORECASE | re.MULTILINE)
_NUMBER_WORDS = {1: "one", 2: "two", 3: "three", 4: "four", 5: "five", 6: "six", 7: "seven", 8: "eight", 9: "nine", 10: "ten"}
REC_FORMAT = "Think: ...\nMovie: Movie title (Year)\nRecommender: ..."
ASK_FORMAT = "Think: ...\nRecommender: ..."


def render_item_knowledge(entry: ItemEntry) -> str:
    """Знания о фильме в порядке полей промпта выжимки: название, жанр, режиссер, актеры, like/dislike"""
    item = entry.item
    lines = [
        f"Title: {item.title}",
        f"Genre: {', '.join(item.genre)}",
        f"Director: {', '.join(item.director)}",
        f"Cast: {', '.join(item.cast)}",
    ]
    if entry.knowledge is not None:
        lines.append(f"Like: {entry.knowledge.like or 'None.'}")
        lines.append(f"Dislike: {entry.knowledge.dislike or 'None.'}")
    return "\n".join(lines)


def cosine_scores(query: Sequence[float], vectors: np.ndarray) -> np.ndarray:
    q = np.asarray(query, dtype=float)
    norms = np.linalg.norm(vectors, axis=1) * np.linalg.norm(q)
    dots = vectors @ q
    return np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)


def rank_candidates(
    query: Sequence[float],
    item_vectors: dict[str, Sequence[float]],
    k: int,
    *,
    turn_index: int,
    target_id: str | None,
    force_from_turn: int,
) -> tuple[list[tuple[str, float]], bool]:
    """
    Top-k по косинусу, при равенстве - по item_id. С хода force_from_turn
    целевой фильм вне top-k заменяет последнего кандидата.
    """
    if k < 1:
        bad_request("k must be >= 1")
    if not item_vectors:
        return [], False
    ids = sorted(item_vectors)
    scores = cosine_scores(query, np.array([item_vectors[i] for i in ids], dtype=float))
    by_id = {item_id: float(score) for item_id, score in zip(ids, scores)}
    # округление гасит шум последних битов float, иначе равные косинусы не считаются равными
    order = sorted(ids, key=lambda item_id: (-round(by_id[item_id], 12), item_id))
    top = order[:k]
    forced = False
    if turn_index >= force_from_turn and target_id in by_id and target_id not in top:
        top[-1] = target_id
        forced = True
    return [(item_id, by_id[item_id]) for item_id in top], forced


async def retrieve_candidates(
    gateway: LLMGateway,
    context: list[Turn],
    pool: list[ItemEntry],
    k: int,
    turn_index: int,
    target_id: str | None,
    force_from_turn: int,
) -> CandidateSet:
    if not pool:
        bad_request("candidate pool is empty")
    query = await gateway.embed(render_context(context))
    knowledge = {entry.item.item_id: render_item_knowledge(entry) for entry in pool}
    vectors = {}
    for item_id, text in knowledge.items():
        vectors[item_id] = (await gateway.embed(text)).values
    ranked, forced = rank_candidates(
        query.values,
        vectors,
        k,
        turn_index=turn_index,
        target_id=target_id,
        force_from_turn=force_from_turn,
    )
    titles = {entry.item.item_id: entry.item.title for entry in pool}
    items = [
        Candidate(item_id=item_id, title=titles[item_id], knowledge=knowledge[item_id], score=score)
        for item_id, score in ranked
    ]
    if forced:
        logger.debug(f"🎯 Target {target_id} forced into candidates at turn {turn_index}")
    return CandidateSet(items=items, k=k, target_forced=forced)


def parse_reasoning(raw_text: str) -> tuple[str, str | None, str]:
    """Поля Think/Movie/Recommender от префикса до следующего префикса (Think может быть многострочным)"""
    matches = list(_PREFIX.finditer(raw_text or ""))
    fields: dict[str, str] = {}
    for index, match in enumerate(matches):
        name = match.group(1).casefold()
        end = matches[index + 1].start() if index + 1 < len(matches) else len(raw_text)
        fields.setdefault(name, raw_text[match.end() : end].strip())
    if "think" not in fields:
        raise ParseError("completion has no 'Think:' line")
    if not fields.get("recommender"):
        raise ParseError("completion has no 'Recommender:' utterance")
    movie = fields.get("movie") or None
    if movie and normalize_title(movie) in ("none", "n a"):
        movie = None
    return fields["think"], movie, fields["recommender"]


def _clean_movie_line(movie_line: str) -> str:
    line = movie_line.strip().strip("\"'*`").strip()
    # "(Fury (2014))" - шаблон формата иногда копируется со скобками
    if line.startswith("(") and line.endswith(")") and line.count("(") >= 2:
        line = line[1:-1].strip()
    return line


def match_candidate(movie_line: str, candidates: Sequence[Candidate]) -> Candidate | None:
    """Название без учета регистра; год можно опустить, но если он есть - должен совпасть"""
    line = _clean_movie_line(movie_line)
    wanted = normalize_title(line)
    _, year = split_title_year(line)
    for candidate in candidates:
        _, candidate_year = split_title_year(candidate.title)
        if normalize_title(candidate.title) != wanted:
            continue
        if year is None or candidate_year is None or year == candidate_year:
            return candidate
    return None


def _first_like(knowledge: str) -> str:
    for line in knowledge.splitlines():
        if line.startswith("Like: ") and line != "Like: None.":
            sentences = split_sentences(line[len("Like: ") :])
            return sentences[0] if sentences else ""
    return ""


async def next_recommender_utterance(
    gateway: LLMGateway,
    context: list[Turn],
    candidates: CandidateSet | None,
    phase: Phase,
    *,
    turn_index: int = 1,
    temperature: float = 0.8,
    max_tokens: int = 512,
    seed: int | None = None,
    max_reasks: int = 2,
    template: Path | None = None,
    prompts_dir: Path | None = None,
    hints: dict[str, str] | None = None,
) -> RecTurn:
    items = candidates.items if candidates else []
    if phase == Phase.RECOMMENDING and not items:
        bad_request("recommending turn needs at least one candidate")

    count = len(items) or 3
    prompt = render_prompt(
        RECOMMENDER,
        prompts_dir,
        template,
        count_word=_NUMBER_WORDS.get(count, str(count)),
        phase=phase.value,
        candidates=[c.knowledge for c in items],
        context=render_context(context),
    )
    expected = REC_FORMAT if phase == Phase.RECOMMENDING else ASK_FORMAT
    reminder = render_prompt(FORMAT_REMINDER, prompts_dir, expected=expected)
    request_hints = {
        "phase": phase.value,
        "turn": str(turn_index),
        "candidates": dumps_hint([c.title for c in items]),
        "candidate_likes": dumps_hint([_first_like(c.knowledge) for c in items]),
        "forced": "yes" if candidates and candidates.target_forced else "no",
        **(hints or {}),
    }

    problems = []
    for attempt in range(max_reasks + 1):
        request = ChatRequest(
            system_prompt=SYSTEM_PROMPT,
            user_prompt=prompt if attempt == 0 else f"{prompt}\n{reminder}",
            temperature=temperature,
            max_tokens=max_tokens,
            seed=seed,
            purpose="recommender",
            hints=request_hints,
        )
        try:
            raw = (await gateway.chat(request)).strip()
            # промпт заканчивается на "Think:", модель может продолжить без префикса
            if not _PREFIX.match(raw):
                raw = f"Think: {raw}"
            think, movie_line, text = parse_reasoning(raw)
        except (ParseError, EmptyCompletionError) as e:
            problems.append(e.detail)
            logger.debug(f"🔁 recommender turn {turn_index}: re-ask {attempt + 1}/{max_reasks}")
            continue

        if phase == Phase.QUESTIONING:
            return RecTurn(think=think, text=text)
        if movie_line is None:
            problems.append("recommending turn has no 'Movie:' line")
            continue
        chosen = match_candidate(movie_line, items)
        if chosen is None:
            raise OffCandidateError(f"recommended '{movie_line}' is not among the candidates", movie_line=movie_line)
        return RecTurn(think=think, movie_id=chosen.item_id, movie_line=movie_line, text=text)

    raise SimulatorError(f"recommender output unusable after {max_reasks} re-asks", problems=problems)
