import re
from unidecode import unidecode  # хорошая библиотека для латинизации

_YEAR_SUFFIX = re.compile(r"\s*\((\d{4})\)\s*$")
_NON_ALNUM = re.compile(r"[^a-z0-9]+")
_TOKEN = re.compile(r"[^\W_]+")
_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+|\n+")
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def split_title_year(title: str) -> tuple[str, str | None]:
    """'Fury (2014)' -> ('Fury', '2014')"""
    match = _YEAR_SUFFIX.search(title)
    if not match:
        return title.strip(), None
    return title[: match.start()].strip(), match.group(1)


def normalize_title(title: str) -> str:
    """Латинизирует, приводит к нижнему регистру, убирает год и схлопывает пунктуацию."""
    name, _ = split_title_year(title)
    s = unidecode(name.strip()).casefold()
    return _NON_ALNUM.sub(" ", s).strip()


def normalize_text(text: str) -> str:
    """Та же нормализация для произвольного текста (год не отрезается)"""
    s = unidecode(text).casefold()
    return _NON_ALNUM.sub(" ", s).strip()


def contains_phrase(text: str, phrase: str) -> bool:
    """Вхождение нормализованной фразы по границам слов"""
    needle = normalize_title(phrase)
    if not needle:
        return False
    return f" {needle} " in f" {normalize_text(text)} "


def tokenize(text: str) -> list[str]:
    """Casefold + разбиение по пробелам и пунктуации; пунктуация отбрасывается"""
    return _TOKEN.findall(text.casefold())


def ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def split_sentences(text: str) -> list[str]:
    """Делит выжимку на отдельные утверждения (предложения и пункты списка)"""
    parts = []
    for chunk in _SENTENCE_BREAK.split(text or ""):
        chunk = _BULLET.sub("", chunk).strip()
        if chunk:
            parts.append(chunk)
    return parts


def _folded_with_offsets(text: str) -> tuple[str, list[int]]:
    """normalize_text посимвольно: сложенная строка + индекс исходного символа для каждой позиции"""
    chars: list[str] = []
    offsets: list[int] = []
    for index, ch in enumerate(text):
        for c in unidecode(ch).casefold():
            chars.append(c if ("a" <= c <= "z" or "0" <= c <= "9") else " ")
            offsets.append(index)
    return "".join(chars), offsets


def scrub_title(text: str, title: str, replacement: str = "this movie") -> str:
    """
    Убирает упоминания названия (с годом и без) из текста. Сравнение идет
    в той же нормализации, что и contains_phrase: 'Amelie' == 'Amélie'.
    """
    for needle in (normalize_text(title), normalize_title(title)):
        if not needle:
            continue
        pattern = re.compile(r"(?<![a-z0-9])" + " +".join(map(re.escape, needle.split())) + r"(?![a-z0-9])")
        folded, offsets = _folded_with_offsets(text)
        spans = []
        for match in pattern.finditer(folded):
            start, end = offsets[match.start()], offsets[match.end() - 1] + 1
            if title.rstrip().endswith(")") and text[end : end + 1] == ")":
                end += 1
            spans.append((start, end))
        for start, end in reversed(spans):
            text = text[:start] + replacement + text[end:]
    return text
