import json
import random

import numpy as np
import pytest

from app.core.config import ExternalCorpus, MetricsConfig
from app.core.exceptions import UndefinedMetricError, ValidationFailed
from app.models.enum import Role
from app.schemas.metrics import Transcript, TranscriptTurn
from app.services.metrics_service import (
    avg_recommender_words,
    compute_report,
    corpus_stats,
    distinct_n,
    format_report,
    inter_dialogue_similarity,
    ngram_specificity,
    read_rankings,
    read_responses,
    recall_at_k,
    sample_pairs,
)
from app.services.mock_backend import MockEmbeddingBackend
from app.services.transcript_adapters import load_corpus
from tests.conftest import make_gateway

VOCAB = ["movie", "action", "fun", "dark", "i", "like", "love", "drama", "great", "plot"]


def transcript(dialogue_id, *turns, user_id=None):
    return Transcript(
        dialogue_id=dialogue_id,
        turns=[TranscriptTurn(role=role, text=text) for role, text in turns],
        user_id=user_id,
    )


def random_corpus(rng):
    corpus = []
    for index in range(rng.randint(1, 10)):
        turns = []
        for position in range(rng.randint(1, 6)):
            role = rng.choice([Role.SEEKER, Role.RECOMMENDER]) if position else Role.SEEKER
            words = [rng.choice(VOCAB) for _ in range(rng.randint(1, 6))]
            turns.append((role, " ".join(words)))
        corpus.append(transcript(f"d{index}", *turns))
    return corpus


# ---------- Независимые переборные реализации ---------- #
def brute_specificity(corpus, n):
    totals = []
    for t in corpus:
        words = " ".join(turn.text for turn in t.turns if turn.role == Role.SEEKER).split()
        totals.append(len({tuple(words[i : i + n]) for i in range(len(words) - n + 1)}))
    return sum(totals) / len(totals)


def brute_recommender_words(corpus):
    lengths = []
    for t in corpus:
        run = None
        for turn in t.turns:
            if turn.role == Role.RECOMMENDER:
                run = (run or []) + turn.text.split()
            elif run is not None:
                lengths.append(len(run))
                run = None
        if run is not None:
            lengths.append(len(run))
    return sum(lengths) / len(lengths) if lengths else None


def brute_distinct(responses, n):
    grams = []
    for response in responses:
        words = response.split()
        grams += [" ".join(words[i : i + n]) for i in range(len(words) - n + 1)]
    return len(set(grams)) / len(grams) if grams else None


def test_metrics_match_brute_force_on_random_corpora():
    for trial in range(100):
        rng = random.Random(trial)
        corpus = random_corpus(rng)
        for n in (1, 2, 3):
            assert ngram_specificity(corpus, n) == pytest.approx(brute_specificity(corpus, n))

        expected_words = brute_recommender_words(corpus)
        if expected_words is None:
            with pytest.raises(UndefinedMetricError):
                avg_recommender_words(corpus)
        else:
            assert avg_recommender_words(corpus) == pytest.approx(expected_words)

        responses = [turn.text for t in corpus for turn in t.turns]
        for n in (2, 3):
            expected = brute_distinct(responses, n)
            if expected is None:
                with pytest.raises(UndefinedMetricError):
                    distinct_n(responses, n)
            else:
                assert distinct_n(responses, n) == pytest.approx(expected)

        ids = [f"m{i}" for i in range(12)]
        episodes = [(rng.sample(ids, rng.randint(0, 12)), rng.choice(ids)) for _ in range(rng.randint(1, 8))]
        previous = 0.0
        for k in (1, 3, 5, 20):
            hits = sum(1 for ranked, target in episodes if target in ranked[:k])
            value = recall_at_k(episodes, k)
            assert value == pytest.approx(hits / len(episodes))
            assert value >= previous
            previous = value


def test_specificity_examples():
    corpus = [transcript("d", (Role.SEEKER, "i like action movies . action movies are fun"))]
    assert ngram_specificity(corpus, 2) == 6
    assert ngram_specificity([transcript("d", (Role.SEEKER, "hello"))], 2) == 0


def test_specificity_ignores_order_and_rejects_bad_input():
    a = transcript("a", (Role.SEEKER, "dark plot twist"), (Role.RECOMMENDER, "ok"))
    b = transcript("b", (Role.SEEKER, "fun fun fun movie"))
    assert ngram_specificity([a, b], 2) == ngram_specificity([b, a], 2)
    with pytest.raises(UndefinedMetricError):
        ngram_specificity([], 2)
    with pytest.raises(ValidationFailed):
        ngram_specificity([a, Transcript(dialogue_id="empty", turns=[])], 2)
    with pytest.raises(ValidationFailed):
        ngram_specificity([a], 0)


def test_recommender_runs_are_merged():
    corpus = [
        transcript(
            "d",
            (Role.SEEKER, "hi"),
            (Role.RECOMMENDER, "a b"),
            (Role.RECOMMENDER, "c"),
        )
    ]
    assert avg_recommender_words(corpus) == 3
    assert avg_recommender_words([transcript("d", (Role.RECOMMENDER, "hello there"))]) == 2.0


def test_distinct_examples():
    assert distinct_n(["a b a b"], 2) == pytest.approx(2 / 3)
    assert distinct_n(["a a a"], 1) == pytest.approx(1 / 3)
    assert distinct_n(["same", "same", "same", "same"], 1) == pytest.approx(1 / 4)
    with pytest.raises(UndefinedMetricError):
        distinct_n(["short"], 3)


def test_recall_examples():
    assert recall_at_k([(["t", "x"], "t")], 1) == 1.0
    episodes = [([f"x{i}", "t"] if i < 3 else [f"x{i}"], "t") for i in range(10)]
    assert recall_at_k(episodes, 10) == pytest.approx(0.3)
    assert recall_at_k([(["a", "b"], "t")], 50) == 0.0
    with pytest.raises(ValidationFailed):
        recall_at_k([(["a", "a"], "a")], 1)
    with pytest.raises(ValidationFailed):
        recall_at_k([(["a"], "a")], 0)


def test_sample_pairs_is_seeded_and_exhaustive_when_small():
    assert sample_pairs(4, 100, 0) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    pairs = sample_pairs(50, 20, 3)
    assert pairs == sample_pairs(50, 20, 3)
    assert len(pairs) == len(set(pairs)) == 20
    assert all(i < j for i, j in pairs)


@pytest.mark.anyio
async def test_identical_dialogues_have_similarity_one():
    corpus = [transcript(f"d{i}", (Role.SEEKER, "gritty war movies please")) for i in range(2)]
    assert await inter_dialogue_similarity(corpus, make_gateway()) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.anyio
async def test_similarity_is_mean_of_pair_cosines():
    texts = ["dark gritty thriller", "light romantic comedy", "gritty comedy with heart"]
    corpus = [transcript(f"d{i}", (Role.SEEKER, text), (Role.RECOMMENDER, "ok")) for i, text in enumerate(texts)]
    backend = MockEmbeddingBackend(dim=32, seed=7)
    vectors = [backend.vector(text) for text in texts]
    expected = np.mean([vectors[0] @ vectors[1], vectors[0] @ vectors[2], vectors[1] @ vectors[2]])

    value = await inter_dialogue_similarity(corpus, make_gateway(embedder=backend))
    assert value == pytest.approx(float(expected), abs=1e-9)


@pytest.mark.anyio
async def test_similarity_needs_two_dialogues_with_seeker_text():
    corpus = [transcript("a", (Role.SEEKER, "war")), transcript("b", (Role.RECOMMENDER, "hi"))]
    with pytest.raises(UndefinedMetricError):
        await inter_dialogue_similarity(corpus, make_gateway())


def test_corpus_stats_counts_users_and_items():
    corpus = [
        transcript("a", (Role.SEEKER, "x"), (Role.RECOMMENDER, "y"), user_id="u1"),
        transcript("b", (Role.SEEKER, "x"), user_id="u1"),
    ]
    stats = corpus_stats(corpus)
    assert (stats.dialogues, stats.utterances, stats.users, stats.items) == (2, 3, 1, None)
    assert stats.avg_utterances == 1.5


@pytest.mark.anyio
async def test_report_skips_undefined_metrics_and_formats_table():
    corpus = [
        transcript("a", (Role.SEEKER, "i like dark movies"), (Role.RECOMMENDER, "try this one")),
        transcript("b", (Role.SEEKER, "i like fun movies"), (Role.RECOMMENDER, "maybe that")),
    ]
    report = await compute_report(
        "generated",
        corpus,
        MetricsConfig(),
        gateway=make_gateway(),
        responses=["a b c d", "a b c e"],
        episodes=[(["x", "t"], "t")],
    )
    assert report.specificity[2] == 3.0
    assert report.avg_recommender_words == 2.5
    assert report.inter_dialogue_similarity is not None and report.pair_sample_size == 1000
    assert report.distinct_n[3] == pytest.approx(0.75)
    assert report.recall_at_k == {1: 0.0, 10: 1.0, 50: 1.0}

    silent = await compute_report("silent", [transcript("s", (Role.SEEKER, "hello"))], MetricsConfig())
    assert silent.avg_recommender_words is None
    assert silent.inter_dialogue_similarity is None

    table = format_report([report, silent])
    header = table.splitlines()[0]
    assert "generated" in header and "ReDial (published)" in header
    assert "2-gram specificity" in table and "141.79" in table
    assert "generated: distinct-3=0.7500" in table
    assert table.rstrip().endswith("specificity = mean over dialogues")


def test_redial_and_inspired_adapters(tmp_path):
    redial = tmp_path / "redial.jsonl"
    redial.write_text(
        json.dumps(
            {
                "conversationId": 391,
                "initiatorWorkerId": 7,
                "movieMentions": {"111": "Iron Harbor (2001)"},
                "messages": [
                    {"senderWorkerId": 7, "text": "Hi, any horror?"},
                    {"senderWorkerId": 8, "text": "Have you seen @111 ?"},
                    {"senderWorkerId": 8, "text": ""},
                    {"senderWorkerId": 7, "text": "Yes, loved it"},
                ],
            }
        )
        + "\n",
        encoding="utf-8",
    )
    (dialogue,) = load_corpus(ExternalCorpus(path=redial, format="redial"))
    assert dialogue.dialogue_id == "391" and dialogue.user_id == "7"
    assert [t.role for t in dialogue.turns] == [Role.SEEKER, Role.RECOMMENDER, Role.SEEKER]
    assert dialogue.turns[1].text == "Have you seen Iron Harbor (2001) ?"
    assert dialogue.item_ids == ["111"]

    inspired = tmp_path / "inspired.tsv"
    inspired.write_text(
        "dialog_id\tspeaker\ttext\n"
        "d1\tRECOMMENDER\tHello!\n"
        "d1\tSEEKER\tI want a comedy.\n"
        "d2\tSEEKER\tAnything scary?\n"
        "d2\tOTHER\tignored\n",
        encoding="utf-8",
    )
    transcripts = load_corpus(ExternalCorpus(path=inspired, format="inspired"))
    assert [t.dialogue_id for t in transcripts] == ["d1", "d2"]
    assert [len(t.turns) for t in transcripts] == [2, 1]


def test_redial_record_without_text_is_skipped(tmp_path):
    redial = tmp_path / "redial.jsonl"
    records = [
        {"conversationId": 1, "initiatorWorkerId": 7, "messages": [{"senderWorkerId": 7, "text": "  "}]},
        {"conversationId": 2, "initiatorWorkerId": 7, "messages": [{"senderWorkerId": 7, "text": "Any comedy?"}]},
    ]
    redial.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")

    transcripts = load_corpus(ExternalCorpus(path=redial, format="redial"))

    assert [t.dialogue_id for t in transcripts] == ["2"]
    stats = corpus_stats(transcripts)
    assert stats.dialogues == 1 and stats.utterances == 1


def test_normalized_adapter_rejects_garbage(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        json.dumps({"dialogue_id": "a", "turns": [{"role": "seeker", "text": "hi"}]}) + "\n" + json.dumps({"x": 1}) + "\n",
        encoding="utf-8",
    )
    with pytest.raises(ValidationFailed) as info:
        load_corpus(ExternalCorpus(path=path))
    assert info.value.context["line"] == 2


def test_response_and_ranking_files(tmp_path):
    responses = tmp_path / "responses.jsonl"
    responses.write_text('{"response": "try this"}\n{"response": "or that"}\n', encoding="utf-8")
    rankings = tmp_path / "rankings.jsonl"
    rankings.write_text('{"ranked": [1, 2, 3], "target": 2}\n', encoding="utf-8")

    assert read_responses(responses) == ["try this", "or that"]
    assert read_rankings(rankings) == [(["1", "2", "3"], "2")]

    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"ranked": "nope", "target": 1}\n', encoding="utf-8")
    with pytest.raises(ValidationFailed):
        read_rankings(broken)
