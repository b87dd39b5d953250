"""Credential hashing and bearer-token helpers.

Passwords are stored as salted PBKDF2 digests; raw passwords and raw tokens
never touch the metadata store or any log line.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from datetime import datetime, timedelta, timezone

# 200k rounds keeps verification under ~100ms on commodity hardware while
# staying expensive enough for offline guessing.
_ROUNDS = 200_000
_ALGO = "sha256"

TOKEN_TTL = timedelta(hours=24)


def hash_credential(password: str) -> str:
    salt = secrets.token_hex(16)
    digest = hashlib.pbkdf2_hmac(
        _ALGO, password.encode("utf-8"), bytes.fromhex(salt), _ROUNDS
    )
    return f"pbkdf2${_ALGO}${_ROUNDS}${salt}${digest.hex()}"


def verify_credential(password: str, stored: str) -> bool:
    try:
        scheme, algo, rounds, salt, expected = stored.split("$")
        if scheme != "pbkdf2":
            return False
        digest = hashlib.pbkdf2_hmac(
            algo, password.encode("utf-8"), bytes.fromhex(salt), int(rounds)
        )
    except (ValueError, TypeError):
        return False
    return hmac.compare_digest(digest.hex(), expected)


def new_token() -> str:
    return secrets.token_urlsafe(32)


def token_expiry(now: datetime) -> datetime:
    if now.tzinfo is None:
        now = now.replace(tzinfo=timezone.utc)
    return now + TOKEN_TTL
