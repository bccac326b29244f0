"""Signing keys and address derivation.

The default scheme is Ed25519: signatures are deterministic, which keeps
transaction hashes reproducible across runs. Addresses are the last 20
bytes of the SHA-256 digest of the raw 32-byte public key, rendered as
``0x`` plus 40 lowercase hex characters. Anything that signs payloads and
exposes 32-byte public keys can stand in for SigningKey; nothing below
type-checks against the class itself.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .canonical import bytes_to_hex, parse_hex, require_keys, sha256
from .errors import InvalidKey

PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64

_ADDRESS_RE = re.compile(r"0x[0-9a-f]{40}")


def derive_address(public_key: bytes) -> str:
    """Map a raw public key to its 42-character account address."""
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != PUBLIC_KEY_SIZE:
        raise InvalidKey(f"public key must be {PUBLIC_KEY_SIZE} raw bytes")
    return "0x" + sha256(bytes(public_key))[-20:].hex()


def is_address(text: str) -> bool:
    return isinstance(text, str) and _ADDRESS_RE.fullmatch(text) is not None


def require_address(text: str) -> str:
    if not is_address(text):
        raise ValueError(f"not a valid address: {text!r}")
    return text


class SigningKey:
    """An Ed25519 keypair that signs ledger payloads."""

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self._public_bytes = private.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )

    @classmethod
    def generate(cls) -> "SigningKey":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_private_bytes(cls, raw: bytes) -> "SigningKey":
        if len(raw) != 32:
            raise InvalidKey("signing private key must be 32 raw bytes")
        return cls(Ed25519PrivateKey.from_private_bytes(raw))

    def private_bytes(self) -> bytes:
        return self._private.private_bytes(
            serialization.Encoding.Raw,
            serialization.PrivateFormat.Raw,
            serialization.NoEncryption(),
        )

    @property
    def public_bytes(self) -> bytes:
        return self._public_bytes

    @property
    def address(self) -> str:
        return derive_address(self._public_bytes)

    def sign(self, payload: bytes) -> bytes:
        return self._private.sign(payload)


def verify_signature(public_key: bytes, signature: bytes, payload: bytes) -> bool:
    """Check a detached Ed25519 signature; False on any mismatch."""
    if len(public_key) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, payload)
    except (InvalidSignature, ValueError):
        return False
    return True


def save_signing_key(path: str | Path, key: SigningKey) -> None:
    """Write the private key file (0600) and its .pub companion."""
    path = Path(path)
    _write_key_file(path, {"kind": "signing", "private_key": bytes_to_hex(key.private_bytes())})
    _write_key_file(
        path.with_name(path.name + ".pub"),
        {"kind": "signing-public", "public_key": bytes_to_hex(key.public_bytes)},
        private=False,
    )


def load_signing_key(path: str | Path) -> SigningKey:
    obj = _read_key_file(path, kind="signing")
    return SigningKey.from_private_bytes(parse_hex(obj["private_key"], length=32))


def load_signing_public(path: str | Path) -> bytes:
    obj = _read_key_file(path, kind="signing-public")
    return parse_hex(obj["public_key"], length=PUBLIC_KEY_SIZE)


def _write_key_file(path: Path, obj: dict, private: bool = True) -> None:
    data = json.dumps(obj, indent=2) + "\n"
    path.write_text(data, encoding="utf-8")
    if private:
        os.chmod(path, 0o600)


def _read_key_file(path: str | Path, kind: str) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidKey(f"cannot read key file {path}: {exc}") from exc
    value_key = "private_key" if not kind.endswith("-public") else "public_key"
    try:
        require_keys(obj, {"kind", value_key}, "key file")
    except ValueError as exc:
        raise InvalidKey(str(exc)) from exc
    if obj["kind"] != kind:
        raise InvalidKey(f"key file {path} has kind {obj['kind']!r}, expected {kind!r}")
    return obj
