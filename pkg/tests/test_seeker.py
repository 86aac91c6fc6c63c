import pytest

from app.core.exceptions import SimulatorError
from app.models.enum import Role
from app.schemas.dialogue import Turn
from app.services.mock_backend import MockChatBackend
from app.services.seeker_service import detect_termination, next_seeker_utterance, seeker_feature_section
from app.utils.helpers import contains_phrase
from tests.conftest import abstract_of, make_gateway, make_persona

OPENING = [
    Turn(role=Role.SEEKER, text="Hi! Can you recommend a movie?"),
    Turn(role=Role.RECOMMENDER, text="Sure, what do you like?"),
]


def capture(reply):
    seen = []

    def responder(request):
        seen.append(request)
        return reply

    return seen, MockChatBackend(responders={"seeker": responder})


def test_detect_termination_strips_token():
    assert detect_termination("Great, thanks! [EOD]") == ("Great, thanks!", True)
    assert detect_termination("Sounds good [EOD] really") == ("Sounds good really", True)
    assert detect_termination("No end [eod] here") == ("No end [eod] here", False)


def test_feature_section_never_contains_target_title():
    persona = make_persona(
        target_title="Iron Harbor (2001)",
        target_like="I loved how Iron Harbor (2001) handles the gritty battle scenes. Iron Harbor is great.",
    )
    section = seeker_feature_section(persona)
    assert not contains_phrase(section, persona.target_title)
    assert "this movie" in section


def test_feature_section_scrubs_title_written_without_accents():
    persona = make_persona(
        target_title="Amélie (2001)",
        target_like="I loved how Amelie brightens every scene. AMÉLIE (2001) made me smile.",
    )
    section = seeker_feature_section(persona)
    assert not contains_phrase(section, persona.target_title)
    assert "I loved how this movie brightens every scene." in section
    assert "this movie made me smile." in section


@pytest.mark.anyio
async def test_seeker_accepts_target_with_end_token():
    persona = make_persona()
    turn = await next_seeker_utterance(
        make_gateway(), persona, OPENING, "target", last_rec_title=persona.target_title
    )
    assert turn.is_terminal
    assert turn.accepted_item_id == "target"
    assert "[EOD]" not in turn.text


@pytest.mark.anyio
async def test_seeker_rejects_other_movie_without_leaking_target():
    persona = make_persona()
    turn = await next_seeker_utterance(
        make_gateway(), persona, OPENING, "other", last_rec_title="Paper Lanterns (2008)"
    )
    assert not turn.is_terminal
    assert "Paper Lanterns" in turn.text
    assert not contains_phrase(turn.text, persona.target_title)


@pytest.mark.anyio
async def test_prompt_carries_persona_only_when_enabled():
    persona = make_persona()
    seen, chat = capture("I like dramas.")
    gateway = make_gateway(chat)
    await next_seeker_utterance(gateway, persona, OPENING, use_persona=True)
    await next_seeker_utterance(gateway, persona, OPENING, use_persona=False)

    with_persona, without_persona = seen
    assert "Here are your reviews" in with_persona.user_prompt
    assert "General 0 (1999)" in with_persona.user_prompt
    assert "Here are your reviews" not in without_persona.user_prompt
    assert "Iron Harbor (2001)" in with_persona.user_prompt  # только в инструкции
    assert "Seeker: Hi! Can you recommend a movie?" in with_persona.user_prompt


@pytest.mark.anyio
async def test_responsive_review_is_added_for_seen_non_target():
    persona = make_persona()
    seen, chat = capture("Not for me.")
    await next_seeker_utterance(
        make_gateway(chat),
        persona,
        OPENING,
        "seen-item",
        abstract_of(None, "I disliked the cheap jump scares."),
        last_rec_title="Amber Signal (2012)",
    )
    assert "Here is your review about Amber Signal (2012)" in seen[0].user_prompt
    assert seen[0].hints["responsive"] == "yes"


@pytest.mark.anyio
async def test_end_token_before_any_recommendation_is_an_error():
    _, chat = capture("Bye [EOD]")
    with pytest.raises(SimulatorError):
        await next_seeker_utterance(make_gateway(chat), make_persona(), OPENING)


@pytest.mark.anyio
async def test_empty_seeker_reply_is_an_error():
    _, chat = capture("[EOD]")
    with pytest.raises(SimulatorError):
        await next_seeker_utterance(make_gateway(chat), make_persona(), OPENING, "x", last_rec_title="X (2000)")
