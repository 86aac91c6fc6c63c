from enum import Enum


class Role(str, Enum):
    SEEKER = "seeker"
    RECOMMENDER = "recommender"

    @property
    def speaker(self) -> str:
        """Префикс реплики в транскрипте для промптов"""
        return self.value.capitalize()


class Phase(str, Enum):
    QUESTIONING = "questioning"
    RECOMMENDING = "recommending"


class OutcomeKind(str, Enum):
    ACCEPTED_TARGET = "accepted-target"
    ACCEPTED_OTHER = "accepted-other"
    ABORTED = "aborted"
    MAX_TURNS = "max-turns"

    @property
    def label(self):
        names = {
            OutcomeKind.ACCEPTED_TARGET: "✅ принят целевой фильм",
            OutcomeKind.ACCEPTED_OTHER: "⚠️ принят другой фильм",
            OutcomeKind.ABORTED: "❌ прерван",
            OutcomeKind.MAX_TURNS: "🔁 лимит реплик",
        }
        return names[self]


class FilterRule(str, Enum):
    REPETITION = "repetition"
    TARGET_LEAK = "target-leak"
    WRONG_ACCEPTANCE = "wrong-acceptance"
    PERSONA_CONTRADICTION = "persona-contradiction"
    GUESS_CONTRADICTION = "guess-contradiction"


class NliOrientation(str, Enum):
    STATEMENT_PREMISE = "statement-premise"
    UTTERANCE_PREMISE = "utterance-premise"


class Stage(str, Enum):
    INGEST = "ingest"
    ABSTRACT = "abstract"
    GENERATE = "generate"
    FILTER = "filter"
    STATS = "stats"
