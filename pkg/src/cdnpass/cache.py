"""TTL cache for DNS/RDAP lookups: in-memory map with an optional JSON disk
store. RDAP endpoints rate-limit aggressively, so results default to a 24 h
lifetime."""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Any, Optional

DEFAULT_TTL = 24 * 3600.0

_MISSING = object()


class LookupCache:
    """Thread-safe (kind, key) -> value store with per-entry expiry."""

    def __init__(self, path: Optional[str | Path] = None, ttl: float = DEFAULT_TTL) -> None:
        self.ttl = ttl
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[float, Any]] = {}
        if self._path and self._path.exists():
            try:
                raw = json.loads(self._path.read_text("utf-8"))
                self._entries = {k: (float(v[0]), v[1]) for k, v in raw.items()}
            except (ValueError, OSError):
                self._entries = {}

    @staticmethod
    def _key(kind: str, key: str) -> str:
        return f"{kind}|{key}"

    def get(self, kind: str, key: str, default: Any = None) -> Any:
        with self._lock:
            entry = self._entries.get(self._key(kind, key), _MISSING)
            if entry is _MISSING:
                return default
            expires, value = entry
            if expires < time.time():
                del self._entries[self._key(kind, key)]
                return default
            return value

    def put(self, kind: str, key: str, value: Any) -> None:
        with self._lock:
            self._entries[self._key(kind, key)] = (time.time() + self.ttl, value)

    def __contains__(self, kind_key: tuple[str, str]) -> bool:
        sentinel = object()
        return self.get(kind_key[0], kind_key[1], sentinel) is not sentinel

    def flush(self) -> None:
        if not self._path:
            return
        with self._lock:
            payload = {k: [expires, value] for k, (expires, value) in self._entries.items()}
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._path.write_text(json.dumps(payload, sort_keys=True), "utf-8")
