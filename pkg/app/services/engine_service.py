"""
Сессии генерации диалогов и пакетный прогон по пользователям.
"""
import asyncio
import logging
import random
from collections import Counter
from pathlib import Path
from typing import Any

from tqdm.asyncio import tqdm

from app.core.config import PipelineConfig
from app.core.exceptions import IneligibleUserError, PipelineError
from app.models.enum import OutcomeKind, Phase, Role
from app.schemas.corpus import ItemReviewDB, UserReviewDB
from app.schemas.dialogue import Dialogue, Outcome, RunReport, SessionConfig, Turn
from app.schemas.persona import Persona
from app.services.corpus_service import reviewed_pool
from app.services.gateway_service import LLMGateway
from app.services.persona_service import build_persona, responsive_preference
from app.services.recommender_service import next_recommender_utterance, retrieve_candidates
from app.services.seeker_service import next_seeker_utterance
from app.utils.hashing import derive_seed
from app.utils.jsonl import JsonlWriter, read_jsonl, repair_tail

logger = logging.getLogger(__name__)


def session_seed(global_seed: int, user_id: str, replica: int) -> int:
    return derive_seed("session", global_seed, user_id, replica)


def dialogue_id(user_id: str, replica: int) -> str:
    return f"{user_id}:{replica}"


async def generate_dialogue(
    gateway: LLMGateway,
    persona: Persona,
    user_db: UserReviewDB,
    item_db: ItemReviewDB,
    config: SessionConfig,
    *,
    replica: int = 0,
    temperature: float = 0.8,
    max_tokens: int = 512,
    prompts_dir: Path | None = None,
) -> Dialogue:
    """
    Одна сессия: пара-затравка, затем искатель -> рекомендатель до
    принятия, прерывания или лимита реплик. Ошибки симуляторов и
    транспорта превращаются в исход aborted и не роняют пакет.
    """
    did = dialogue_id(persona.user_id, replica)
    target = persona.target_item_id
    seeker_open, recommender_open = random.Random(persona.seed).choice(config.seed_openers)
    turns: list[Turn] = [
        Turn(role=Role.SEEKER, text=seeker_open),
        Turn(role=Role.RECOMMENDER, text=recommender_open),
    ]
    pool = reviewed_pool(user_db, item_db, persona.user_id)
    titles = {entry.item.item_id: entry.item.title for entry in pool}
    recommended: set[str] = set()
    last_rec: str | None = None
    turn_index = recommending_index = 0
    hints = {"dialogue_id": did}

    try:
        while True:
            if len(turns) >= config.max_utterances:
                outcome = Outcome(kind=OutcomeKind.MAX_TURNS)
                break
            responsive = None
            if last_rec and last_rec != target:
                responsive = responsive_preference(user_db, persona.user_id, last_rec)
            seeker = await next_seeker_utterance(
                gateway,
                persona,
                turns,
                last_rec,
                responsive,
                last_rec_title=titles.get(last_rec) if last_rec else None,
                use_persona=config.use_persona,
                temperature=temperature,
                max_tokens=max_tokens,
                seed=derive_seed(persona.seed, len(turns)),
                template=config.seeker_template,
                prompts_dir=prompts_dir,
                hints=hints,
            )
            turns.append(seeker.as_turn())
            if seeker.is_terminal:
                kind = OutcomeKind.ACCEPTED_TARGET if seeker.accepted_item_id == target else OutcomeKind.ACCEPTED_OTHER
                outcome = Outcome(kind=kind)
                break

            turn_index += 1
            phase = Phase.QUESTIONING if turn_index == 1 else Phase.RECOMMENDING
            if phase == Phase.RECOMMENDING:
                recommending_index += 1
            available = [entry for entry in pool if entry.item.item_id not in recommended]
            if not available:
                outcome = Outcome(kind=OutcomeKind.ABORTED, reason="pool_exhausted: every reviewed item was recommended")
                break
            candidates = await retrieve_candidates(
                gateway,
                turns,
                available,
                config.k_for(max(recommending_index, 1)),
                turn_index,
                target,
                config.force_from_turn,
            )
            rec = await next_recommender_utterance(
                gateway,
                turns,
                candidates,
                phase,
                turn_index=turn_index,
                temperature=temperature,
                max_tokens=max_tokens,
                seed=derive_seed(persona.seed, len(turns)),
                max_reasks=config.max_reasks,
                template=config.recommender_template,
                prompts_dir=prompts_dir,
                hints=hints,
            )
            turns.append(rec.as_turn(candidates))
            last_rec = rec.movie_id
            if last_rec:
                recommended.add(last_rec)
    except PipelineError as e:
        logger.warning(f"⚠️ Dialogue {did} aborted: {e.code}: {e.detail}")
        outcome = Outcome(kind=OutcomeKind.ABORTED, reason=f"{e.code}: {e.detail}")

    return Dialogue(
        dialogue_id=did,
        user_id=persona.user_id,
        target_item_id=target,
        replica=replica,
        persona=persona,
        turns=turns,
        outcome=outcome,
        seed=persona.seed,
        use_persona=config.use_persona,
        backend_tags=gateway.tags,
    )


def load_existing_ids(path: Path) -> set[str]:
    if not path.exists():
        return set()
    repair_tail(path)
    return {record["dialogue_id"] for record in read_jsonl(path) if "dialogue_id" in record}


def load_dialogues(path: Path) -> list[Dialogue]:
    return [Dialogue.model_validate(record) for record in read_jsonl(path)]


async def run_batch(
    gateway: LLMGateway,
    user_db: UserReviewDB,
    item_db: ItemReviewDB,
    config: PipelineConfig,
    *,
    users: list[str] | None = None,
    raw_path: Path | None = None,
    header: dict[str, Any] | None = None,
    progress: bool = True,
) -> RunReport:
    """
    Пакет (пользователь, реплика) -> seed -> диалог. Каждый готовый диалог
    сразу дописывается в контрольный журнал; при resume уже записанные
    dialogue_id пропускаются.
    """
    session = config.session
    raw_path = raw_path or config.paths.dialogues_raw
    users = sorted(users if users is not None else user_db.users)
    if config.limit_users:
        users = users[: config.limit_users]

    existing = load_existing_ids(raw_path) if config.resume else set()
    personas: list[tuple[Persona, int]] = []
    ineligible: set[str] = set()
    skipped = 0
    for user_id in users:
        for replica in range(session.dialogues_per_user):
            if dialogue_id(user_id, replica) in existing:
                skipped += 1
                continue
            try:
                seed = session_seed(session.seed, user_id, replica)
                personas.append((build_persona(user_db, user_id, seed), replica))
            except IneligibleUserError as e:
                if user_id not in ineligible:
                    logger.info(f"⚠️ Skipping user {user_id}: {e.detail}")
                ineligible.add(user_id)
    logger.info(f"🚀 Generating {len(personas)} dialogues ({skipped} already done, parallelism {config.parallelism})")

    semaphore = asyncio.Semaphore(config.parallelism)

    async def session_job(persona: Persona, replica: int) -> Dialogue:
        async with semaphore:
            options = dict(
                replica=replica,
                temperature=config.backend.simulator_temperature,
                max_tokens=config.backend.max_tokens,
                prompts_dir=config.paths.prompts_dir,
            )
            dialogue = await generate_dialogue(gateway, persona, user_db, item_db, session, **options)
            # транспортный сбой: сессия повторяется один раз
            if dialogue.outcome.kind == OutcomeKind.ABORTED and (dialogue.outcome.reason or "").startswith("transport_error"):
                logger.warning(f"🔁 Retrying session {dialogue.dialogue_id} after transport failure")
                dialogue = await generate_dialogue(gateway, persona, user_db, item_db, session, **options)
            return dialogue

    created = 0
    jobs = [session_job(persona, replica) for persona, replica in personas]
    with JsonlWriter(raw_path, header=header, append=config.resume) as writer:
        for future in tqdm.as_completed(jobs, total=len(jobs), desc="dialogues", disable=not progress):
            writer.write(await future)
            created += 1

    all_dialogues = load_dialogues(raw_path)
    outcomes = Counter(d.outcome.kind.value for d in all_dialogues)
    reasons = Counter(
        (d.outcome.reason or "unknown").split(":")[0]
        for d in all_dialogues
        if d.outcome.kind == OutcomeKind.ABORTED
    )
    cost = gateway.usage.cost(config.backend.price_prompt_per_1k, config.backend.price_completion_per_1k)
    report = RunReport(
        dialogues=len(all_dialogues),
        skipped_existing=skipped,
        ineligible_users=len(ineligible),
        outcomes=dict(sorted(outcomes.items())),
        abort_reasons=dict(sorted(reasons.items())),
        usage=gateway.usage.snapshot(),
        estimated_cost=round(cost, 6),
        cost_per_dialogue=round(cost / created, 6) if created else 0.0,
    )
    logger.info(f"✅ Generated {created} dialogues: {report.outcomes}")
    return report


def compact_dialogues(raw_path: Path, out_path: Path, header: dict[str, Any] | None = None) -> list[Dialogue]:
    """Итоговый файл: по одному диалогу на id, отсортировано по dialogue_id"""
    unique: dict[str, Dialogue] = {}
    for dialogue in load_dialogues(raw_path):
        unique.setdefault(dialogue.dialogue_id, dialogue)
    ordered = [unique[key] for key in sorted(unique)]
    with JsonlWriter(out_path, header=header, append=False) as writer:
        for dialogue in ordered:
            writer.write(dialogue)
    return ordered
