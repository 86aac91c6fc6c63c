"""
Фильтрация диалогов: базовые правила (повторы, утечка цели, принятие
чужого фильма) и правила на NLI (противоречие персоне, противоречие
догадки рекомендателя репликам искателя).
"""
import asyncio
import logging
from collections import Counter
from pathlib import Path
from typing import Any

from tqdm.asyncio import tqdm

from app.core.exceptions import FilterRunError, TransportError
from app.models.enum import FilterRule, NliOrientation, OutcomeKind, Role
from app.schemas.dialogue import Dialogue
from app.schemas.filters import FilterConfig, FilterReport, FilterVerdict, RuleResult
from app.services.gateway_service import LLMGateway
from app.services.persona_service import persona_statements
from app.utils.helpers import contains_phrase, ngrams, normalize_title, tokenize
from app.utils.jsonl import JsonlWriter

logger = logging.getLogger(__name__)

__all__ = ["normalize_title", "word_ngrams", "apply_filters"]


def word_ngrams(tokens: list[str], n: int) -> set[tuple[str, ...]]:
    return set(ngrams(tokens, n))


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def filter_repetition(dialogue: Dialogue, config: FilterConfig) -> RuleResult:
    evidence: list[dict[str, Any]] = []
    seen: dict[str, int] = {}
    for index, turn in enumerate(dialogue.turns):
        text = turn.text.strip()
        if text in seen:
            evidence.append({"turns": [seen[text], index], "duplicate": True})
        else:
            seen[text] = index

    grams = [word_ngrams(tokenize(turn.text), config.repetition_n) for turn in dialogue.turns]
    duplicates = {tuple(e["turns"]) for e in evidence}
    for j, later in enumerate(dialogue.turns):
        for i in range(j):
            if dialogue.turns[i].role != later.role or (i, j) in duplicates:
                continue
            if not grams[i] or not grams[j]:
                continue
            score = jaccard(grams[i], grams[j])
            if score > config.repetition_jaccard:
                evidence.append({"turns": [i, j], "jaccard": round(score, 4)})
    return RuleResult(rule=FilterRule.REPETITION, passed=not evidence, evidence=evidence)


def filter_target_leak(dialogue: Dialogue) -> RuleResult:
    """Название цели в репликах искателя до первой рекомендации цели"""
    title = dialogue.persona.target_title
    first_rec = next(
        (i for i, turn in enumerate(dialogue.turns) if turn.movie_id == dialogue.target_item_id),
        len(dialogue.turns),
    )
    evidence = [
        {"turn": index, "title": title}
        for index, turn in enumerate(dialogue.turns[:first_rec])
        if turn.role == Role.SEEKER and contains_phrase(turn.text, title)
    ]
    return RuleResult(rule=FilterRule.TARGET_LEAK, passed=not evidence, evidence=evidence)


def filter_wrong_acceptance(dialogue: Dialogue) -> RuleResult:
    evidence: list[dict[str, Any]] = []
    last_rec: str | None = None
    for index, turn in enumerate(dialogue.turns):
        if turn.role == Role.RECOMMENDER and turn.movie_id:
            last_rec = turn.movie_id
        if turn.role == Role.SEEKER and turn.is_terminal and last_rec != dialogue.target_item_id:
            evidence.append({"turn": index, "last_recommendation": last_rec})
    if dialogue.outcome.kind == OutcomeKind.ACCEPTED_OTHER and not evidence:
        evidence.append({"outcome": dialogue.outcome.kind.value})
    return RuleResult(rule=FilterRule.WRONG_ACCEPTANCE, passed=not evidence, evidence=evidence)


async def _contradict(gateway: LLMGateway, premise: str, hypothesis: str) -> float:
    try:
        return (await gateway.nli(premise, hypothesis)).contradict
    except TransportError as e:
        raise FilterRunError(f"NLI unavailable: {e.detail}", attempts=e.attempts)


async def filter_persona_contradiction(
    dialogue: Dialogue, gateway: LLMGateway, config: FilterConfig
) -> RuleResult:
    """Каждое предложение персоны против каждой реплики искателя; провал при contradict > delta"""
    evidence = []
    statements = persona_statements(dialogue.persona)
    for index, turn in enumerate(dialogue.turns):
        if turn.role != Role.SEEKER:
            continue
        for statement in statements:
            if config.orientation == NliOrientation.STATEMENT_PREMISE:
                score = await _contradict(gateway, statement, turn.text)
            else:
                score = await _contradict(gateway, turn.text, statement)
            if score > config.delta:
                evidence.append({"turn": index, "statement": statement, "contradict": round(score, 4)})
    return RuleResult(rule=FilterRule.PERSONA_CONTRADICTION, passed=not evidence, evidence=evidence)


async def filter_guess_contradiction(
    dialogue: Dialogue, gateway: LLMGateway, config: FilterConfig
) -> RuleResult:
    """Think рекомендателя против всех предыдущих реплик искателя"""
    evidence = []
    for j, rec in enumerate(dialogue.turns):
        if rec.role != Role.RECOMMENDER or not rec.think:
            continue
        for i in range(j):
            seeker = dialogue.turns[i]
            if seeker.role != Role.SEEKER:
                continue
            if config.orientation == NliOrientation.STATEMENT_PREMISE:
                score = await _contradict(gateway, seeker.text, rec.think)
            else:
                score = await _contradict(gateway, rec.think, seeker.text)
            if score > config.delta:
                evidence.append({"think_turn": j, "seeker_turn": i, "contradict": round(score, 4)})
    return RuleResult(rule=FilterRule.GUESS_CONTRADICTION, passed=not evidence, evidence=evidence)


async def evaluate_dialogue(dialogue: Dialogue, gateway: LLMGateway, config: FilterConfig) -> FilterVerdict:
    """Все включенные правила без короткого замыкания"""
    results = []
    for rule in FilterRule:
        if rule not in config.rules:
            continue
        if rule == FilterRule.REPETITION:
            results.append(filter_repetition(dialogue, config))
        elif rule == FilterRule.TARGET_LEAK:
            results.append(filter_target_leak(dialogue))
        elif rule == FilterRule.WRONG_ACCEPTANCE:
            results.append(filter_wrong_acceptance(dialogue))
        elif rule == FilterRule.PERSONA_CONTRADICTION:
            results.append(await filter_persona_contradiction(dialogue, gateway, config))
        else:
            results.append(await filter_guess_contradiction(dialogue, gateway, config))
    return FilterVerdict.from_results(dialogue.dialogue_id, results)


async def apply_filters(
    dialogues: list[Dialogue],
    gateway: LLMGateway,
    config: FilterConfig,
    *,
    parallelism: int = 4,
    progress: bool = False,
) -> tuple[list[Dialogue], list[FilterVerdict], FilterReport]:
    """
    Возвращает оставленные диалоги, вердикты и отчет. Диалоги, для которых
    NLI недоступен, откладываются (held) и в долю удаленных не входят.
    """
    semaphore = asyncio.Semaphore(parallelism)

    async def job(dialogue: Dialogue) -> tuple[Dialogue, FilterVerdict | None]:
        async with semaphore:
            try:
                return dialogue, await evaluate_dialogue(dialogue, gateway, config)
            except FilterRunError as e:
                logger.warning(f"⚠️ Dialogue {dialogue.dialogue_id} held: {e.detail}")
                return dialogue, None

    results = await tqdm.gather(
        *(job(d) for d in dialogues), desc="filters", disable=not progress
    )
    kept, verdicts, held = [], [], []
    per_rule: Counter[str] = Counter()
    for dialogue, verdict in sorted(results, key=lambda pair: pair[0].dialogue_id):
        if verdict is None:
            held.append(dialogue.dialogue_id)
            continue
        verdicts.append(verdict)
        per_rule.update(rule.value for rule in verdict.failed_rules)
        if verdict.passed:
            kept.append(dialogue)

    judged = len(verdicts)
    removed = judged - len(kept)
    report = FilterReport(
        total=len(dialogues),
        kept=len(kept),
        removed=removed,
        held=len(held),
        removal_rate=round(removed / judged, 6) if judged else 0.0,
        per_rule=dict(sorted(per_rule.items())),
        held_ids=held,
    )
    logger.info(
        f"✅ Filters: kept {report.kept}/{report.total}, removed {removed} "
        f"({report.removal_rate:.1%}), held {report.held}"
    )
    return kept, verdicts, report


def write_filter_outputs(
    kept: list[Dialogue],
    verdicts: list[FilterVerdict],
    kept_path: Path,
    verdicts_path: Path,
    header: dict[str, Any] | None = None,
) -> None:
    with JsonlWriter(verdicts_path, header=header, append=False) as writer:
        for verdict in verdicts:
            writer.write(verdict)
    with JsonlWriter(kept_path, header=header, append=False) as writer:
        for dialogue in kept:
            writer.write(dialogue)
