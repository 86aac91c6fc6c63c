"""JSONL: запись с заголовком + чтение с пропуском заголовка."""
import json
import logging
import os
from pathlib import Path
from typing import Any, Iterator

from pydantic import BaseModel

HEADER_KEY = "_header"
_TAIL_BLOCK = 65536

logger = logging.getLogger(__name__)


class JsonlWriter:
    """
    Построчная запись JSONL (append + flush на каждую запись).

    Первая строка нового файла - заголовок с эффективным конфигом,
    читатели его пропускают.
    """

    def __init__(self, path: Path, header: dict[str, Any] | None = None, append: bool = True):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        if append:
            repair_tail(path)
        fresh = not (append and path.exists() and path.stat().st_size > 0)
        self.file = open(path, "a" if not fresh else "w", encoding="utf-8")
        if fresh and header is not None:
            self._write_line({HEADER_KEY: header})

    def _write_line(self, obj: dict[str, Any]) -> None:
        self.file.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
        self.file.flush()

    def write(self, entry: BaseModel | dict[str, Any]) -> None:
        if isinstance(entry, BaseModel):
            entry = entry.model_dump(mode="json")
        self._write_line(entry)

    def close(self) -> None:
        if self.file and not self.file.closed:
            self.file.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


def repair_tail(path: Path) -> bool:
    """
    Обрезает недописанную последнюю строку (процесс убит посреди записи).
    Читается только хвост файла. True, если что-то было отрезано.
    """
    if not path.exists():
        return False
    with open(path, "r+b") as f:
        end = f.seek(0, os.SEEK_END)
        if end == 0:
            return False
        pos, chunk = end, b""
        while pos > 0:
            step = min(_TAIL_BLOCK, pos)
            pos -= step
            f.seek(pos)
            chunk = f.read(step) + chunk
            if b"\n" in chunk.rstrip(b"\n"):
                break
        body = chunk.rstrip(b"\n")
        start = body.rfind(b"\n") + 1
        tail = body[start:]
        try:
            json.loads(tail)
        except ValueError:
            cut = pos + start
            f.truncate(cut)
            logger.warning(f"⚠️ {path.name}: dropped torn last line ({end - cut} bytes)")
            return True
        if not chunk.endswith(b"\n"):
            f.seek(0, os.SEEK_END)
            f.write(b"\n")
    return False


def iter_lines(path: Path) -> Iterator[tuple[int, str]]:
    """(номер строки с 1, строка) без пустых строк"""
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if line:
                yield number, line


def read_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    for _, line in iter_lines(path):
        obj = json.loads(line)
        if HEADER_KEY in obj:
            continue
        yield obj


def read_header(path: Path) -> dict[str, Any] | None:
    for _, line in iter_lines(path):
        obj = json.loads(line)
        return obj.get(HEADER_KEY)
    return None


def write_json(path: Path, obj: BaseModel | dict[str, Any]) -> None:
    """Отчеты: один JSON-документ, ключи отсортированы для побайтового сравнения"""
    if isinstance(obj, BaseModel):
        obj = obj.model_dump(mode="json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
