# core/cache.py
"""
In-memory memo cache keyed by feature-mask bytes.
Safe for concurrent coroutines: lookups are double-checked under a per-key asyncio.Lock,
so a mask that appears twice in one swarm round is evaluated once.
"""

import asyncio
from typing import Awaitable, Callable, Dict, Generic, Optional, TypeVar

T = TypeVar('T')


class MaskCache(Generic[T]):
    """
    Usage:
        cache = MaskCache(name="fitness:opt")
        value = await cache.get_or_fetch(mask.key, async_fetch_function)
    """

    def __init__(self, name: str = "cache"):
        self.name = name
        self._store: Dict[bytes, T] = {}
        self._locks: Dict[bytes, asyncio.Lock] = {}
        self.hits = 0
        self.misses = 0

    def __contains__(self, key: bytes) -> bool:
        return key in self._store

    def __len__(self) -> int:
        return len(self._store)

    def peek(self, key: bytes) -> Optional[T]:
        return self._store.get(key)

    async def put(self, key: bytes, value: T) -> None:
        self._store[key] = value

    async def get_or_fetch(self, key: bytes, fetch_func: Callable[[], Awaitable[T]]) -> T:
        # Fast path without lock
        if key in self._store:
            self.hits += 1
            return self._store[key]

        lock = self._locks.setdefault(key, asyncio.Lock())
        try:
            async with lock:
                # Double-check: a concurrent caller may have filled the key while we waited
                if key in self._store:
                    self.hits += 1
                    return self._store[key]
                self.misses += 1
                value = await fetch_func()
                self._store[key] = value
                return value
        finally:
            if not lock.locked():
                self._locks.pop(key, None)

    def clear(self) -> None:
        self._store.clear()

    def get_cache_info(self) -> dict:
        """Cache metadata (for logging)."""
        return {
            "name": self.name,
            "entries": len(self._store),
            "hits": self.hits,
            "misses": self.misses,
        }
