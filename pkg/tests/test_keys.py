import hashlib
import re

import pytest

from thermoledger.errors import InvalidKey
from thermoledger.keys import (
    SigningKey,
    derive_address,
    load_signing_key,
    load_signing_public,
    save_signing_key,
    verify_signature,
)

from .conftest import seeded_key

# Independently computed: sha256(bytes(range(32)))[-20:] with hashlib alone.
ADDRESS_GOLDEN = "0xbbb25b4ff412a49c732db2c8abc1b8581bd710dd"

ADDRESS_FORMAT = re.compile(r"0x[0-9a-f]{40}")


def test_derive_address_deterministic():
    pk = bytes(range(32))
    assert derive_address(pk) == derive_address(pk)


def test_derive_address_golden():
    assert derive_address(bytes(range(32))) == ADDRESS_GOLDEN
    # recompute the oracle in place to keep the pinned value honest
    assert ADDRESS_GOLDEN == "0x" + hashlib.sha256(bytes(range(32))).digest()[-20:].hex()


def test_address_format():
    for seed in range(5):
        addr = seeded_key(seed + 1).address
        assert len(addr) == 42
        assert ADDRESS_FORMAT.fullmatch(addr)


@pytest.mark.parametrize("bad", [b"", b"\x00" * 31, b"\x00" * 33, "not-bytes"])
def test_derive_address_rejects_malformed(bad):
    with pytest.raises(InvalidKey):
        derive_address(bad)


def test_sign_and_verify():
    key = seeded_key(7)
    payload = b"reading batch 42"
    sig = key.sign(payload)
    assert verify_signature(key.public_bytes, sig, payload)
    assert not verify_signature(key.public_bytes, sig, payload + b"!")
    other = seeded_key(8)
    assert not verify_signature(other.public_bytes, sig, payload)


def test_signature_deterministic():
    key = seeded_key(7)
    assert key.sign(b"x") == key.sign(b"x")


def test_key_file_round_trip(tmp_path):
    key = SigningKey.generate()
    path = tmp_path / "sensor.key"
    save_signing_key(path, key)
    loaded = load_signing_key(path)
    assert loaded.address == key.address
    assert loaded.private_bytes() == key.private_bytes()
    assert load_signing_public(tmp_path / "sensor.key.pub") == key.public_bytes


def test_key_file_kind_checked(tmp_path):
    path = tmp_path / "k.key"
    save_signing_key(path, SigningKey.generate())
    with pytest.raises(InvalidKey):
        load_signing_key(tmp_path / "k.key.pub")
    with pytest.raises(InvalidKey):
        load_signing_key(tmp_path / "missing.key")
