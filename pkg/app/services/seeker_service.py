import logging
import re
from pathlib import Path

from app.core.exceptions import EmptyCompletionError, SimulatorError
from app.schemas.corpus import Abstract
from app.schemas.dialogue import SeekerTurn, Turn, render_context
from app.schemas.gateway import ChatRequest
from app.schemas.persona import Persona
from app.services.abstraction_service import render_like_dislike
from app.services.gateway_service import SYSTEM_PROMPT, LLMGateway, dumps_hint
from app.models.enum import Role
from app.utils.helpers import scrub_title, split_sentences
from app.utils.prompts import SEEKER, render_prompt

logger = logging.getLogger(__name__)

END_TOKEN = "[EOD]"
_END = re.compile(r"\s*" + re.escape(END_TOKEN) + r"\s*")


def detect_termination(text: str) -> tuple[str, bool]:
    """[EOD] в любом месте (регистр важен); токен и пробелы вокруг убираются"""
    if END_TOKEN not in text:
        return text, False
    return _END.sub(" ", text).strip(), True


def render_persona(persona: Persona) -> str:
    blocks = [f"{review.title}\n{render_like_dislike(review.abstract)}" for review in persona.general]
    return "\n\n".join(blocks)


def seeker_feature_section(persona: Persona) -> str:
    """Признаки целевого фильма без его названия"""
    return scrub_title(render_like_dislike(persona.target_abstract), persona.target_title)


def _likes(abstract: Abstract | None) -> list[str]:
    if abstract is None:
        return []
    return split_sentences(abstract.like or "")


async def next_seeker_utterance(
    gateway: LLMGateway,
    persona: Persona,
    context: list[Turn],
    last_rec: str | None = None,
    responsive: Abstract | None = None,
    *,
    last_rec_title: str | None = None,
    use_persona: bool = True,
    temperature: float = 0.8,
    max_tokens: int = 512,
    seed: int | None = None,
    template: Path | None = None,
    prompts_dir: Path | None = None,
    hints: dict[str, str] | None = None,
) -> SeekerTurn:
    is_target = last_rec is not None and last_rec == persona.target_item_id
    responsive_block = None
    if last_rec and not is_target and responsive is not None:
        responsive_block = (
            f"Here is your review about {last_rec_title or 'the recommended movie'}:\n"
            f"{render_like_dislike(responsive)}"
        )

    prompt = render_prompt(
        SEEKER,
        prompts_dir,
        template,
        target_title=persona.target_title,
        persona=render_persona(persona) if use_persona else "",
        features=seeker_feature_section(persona),
        responsive=responsive_block,
        context=render_context(context),
    )
    target_likes = [scrub_title(s, persona.target_title) for s in _likes(persona.target_abstract)]
    request_hints = {
        "turn": str(sum(1 for turn in context if turn.role == Role.SEEKER)),
        "target_likes": dumps_hint(target_likes),
        "general_likes": dumps_hint(
            [likes[0] for likes in (_likes(r.abstract) for r in persona.general) if likes]
            if use_persona
            else []
        ),
        "responsive": "yes" if responsive_block else "no",
        **(hints or {}),
    }
    if last_rec:
        request_hints["recommended_title"] = last_rec_title or last_rec
        request_hints["recommended_is_target"] = "yes" if is_target else "no"

    request = ChatRequest(
        system_prompt=SYSTEM_PROMPT,
        user_prompt=prompt,
        temperature=temperature,
        max_tokens=max_tokens,
        seed=seed,
        purpose="seeker",
        hints=request_hints,
    )
    try:
        raw = await gateway.chat(request)
    except EmptyCompletionError as e:
        raise SimulatorError(f"seeker: {e.detail}")

    text, terminal = detect_termination(raw.strip())
    if not text:
        raise SimulatorError("seeker produced an empty utterance")
    if terminal and last_rec is None:
        raise SimulatorError("seeker ended the dialogue before any recommendation")
    return SeekerTurn(text=text, accepted_item_id=last_rec if terminal else None, is_terminal=terminal)
