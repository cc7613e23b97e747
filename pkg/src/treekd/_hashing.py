"""Stable 64-bit hashing (Python's ``hash`` is salted per process)."""

from __future__ import annotations

import hashlib


def h64(*parts: object) -> int:
    """Hash a tuple of ints/strings/nested tuples to an unsigned 64-bit int."""
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def short_digest(data: str | bytes, n: int = 12) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()[:n]
