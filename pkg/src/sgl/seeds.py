"""Stable derivation of per-task seeds from a master seed."""
from __future__ import annotations

import hashlib

__all__ = ["derive_seed"]


def derive_seed(master: int, kind: str, index: int = 0) -> int:
    """63-bit seed from ``(master, kind, index)`` via BLAKE2b; stable across runs and platforms."""
    msg = f"{int(master)}|{kind}|{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little") >> 1
