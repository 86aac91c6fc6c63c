import hashlib
import json
from typing import Any


def stable_hash(*parts: Any) -> str:
    """sha256 от канонического JSON; одинаковые входы дают одинаковый ключ в любом процессе"""
    payload = json.dumps(parts, ensure_ascii=False, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def derive_seed(*parts: Any) -> int:
    """Детерминированный 63-битный seed из произвольных частей"""
    return int(stable_hash(*parts)[:15], 16)
