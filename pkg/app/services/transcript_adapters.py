"""
Приведение корпусов к единой форме {dialogue_id, turns: [{role, text}]}.

Поддерживаются: собственные диалоги пайплайна, уже нормализованный JSONL,
выгрузка ReDial (JSONL) и INSPIRED (TSV).
"""
import csv
import logging
import re
from pathlib import Path

from pydantic import ValidationError

from app.core.exceptions import bad_request
from app.core.config import ExternalCorpus
from app.models.enum import Role
from app.schemas.dialogue import Dialogue
from app.schemas.metrics import Transcript, TranscriptTurn
from app.utils.jsonl import read_jsonl

logger = logging.getLogger(__name__)

_MENTION = re.compile(r"@(\d+)")


def from_dialogue(dialogue: Dialogue) -> Transcript:
    items = [dialogue.target_item_id] + [t.movie_id for t in dialogue.turns if t.movie_id]
    return Transcript(
        dialogue_id=dialogue.dialogue_id,
        turns=[TranscriptTurn(role=t.role, text=t.text) for t in dialogue.turns],
        user_id=dialogue.user_id,
        item_ids=sorted(set(items)),
    )


def read_normalized(path: Path) -> list[Transcript]:
    transcripts = []
    for number, record in enumerate(read_jsonl(path), start=1):
        try:
            if "persona" in record and "outcome" in record:
                transcripts.append(from_dialogue(Dialogue.model_validate(record)))
            else:
                transcripts.append(Transcript.model_validate(record))
        except ValidationError as e:
            bad_request(f"{path.name}: record {number} is not a transcript: {e.errors()[0]['msg']}", line=number)
    return transcripts


def read_redial(path: Path) -> list[Transcript]:
    """Искатель - initiatorWorkerId; упоминания @id заменяются названиями из movieMentions"""
    transcripts = []
    for record in read_jsonl(path):
        mentions = record.get("movieMentions") or {}
        if isinstance(mentions, list):  # в части выгрузок - список пар
            mentions = {str(m[0]): m[1] for m in mentions}
        seeker_id = record.get("initiatorWorkerId")
        turns = []
        for message in record.get("messages", []):
            text = _MENTION.sub(lambda m: mentions.get(m.group(1)) or m.group(0), message.get("text", "")).strip()
            if not text:
                continue
            role = Role.SEEKER if message.get("senderWorkerId") == seeker_id else Role.RECOMMENDER
            turns.append(TranscriptTurn(role=role, text=text))
        transcripts.append(
            Transcript(
                dialogue_id=str(record.get("conversationId")),
                turns=turns,
                user_id=str(seeker_id) if seeker_id is not None else None,
                item_ids=sorted(str(key) for key in mentions),
            )
        )
    return transcripts


def read_inspired(path: Path) -> list[Transcript]:
    """TSV с колонками dialog_id, speaker (SEEKER/RECOMMENDER), text"""
    grouped: dict[str, list[TranscriptTurn]] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f, delimiter="\t"):
            speaker = (row.get("speaker") or "").strip().upper()
            text = (row.get("text") or row.get("utterance") or "").strip()
            if speaker not in ("SEEKER", "RECOMMENDER") or not text:
                continue
            grouped.setdefault(row["dialog_id"], []).append(
                TranscriptTurn(role=Role(speaker.lower()), text=text)
            )
    return [Transcript(dialogue_id=key, turns=turns) for key, turns in grouped.items()]


READERS = {
    "normalized": read_normalized,
    "redial": read_redial,
    "inspired": read_inspired,
}


def load_corpus(corpus: ExternalCorpus) -> list[Transcript]:
    transcripts = []
    for transcript in READERS[corpus.format](corpus.path):
        if not transcript.turns:
            logger.warning(f"⚠️ {corpus.path.name}: dialogue {transcript.dialogue_id} has no utterances, skipped")
            continue
        transcripts.append(transcript)
    logger.info(f"📚 {corpus.name or corpus.path.name}: {len(transcripts)} dialogues ({corpus.format})")
    return transcripts
