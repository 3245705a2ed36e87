"""Keys, signatures, SHA-256 and the block-hash function.

Signatures are Ed25519 (PyNaCl). Keys are derived deterministically from a
64-bit seed so simulations and golden tests replay byte for byte.
"""
from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass, field

import nacl.bindings
import nacl.exceptions
import nacl.public
import nacl.signing

DIGEST_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64
ZERO_DIGEST = bytes(DIGEST_SIZE)

_KEY_DOMAIN = b"lc4iot/key"
_SEAL_DOMAIN = b"lc4iot/seal"

Digest = bytes


def sha256(data: bytes) -> Digest:
    return hashlib.sha256(data).digest()


def length_prefixed(*fields: bytes) -> bytes:
    """4-byte big-endian length followed by raw bytes, for each field in order."""
    out = bytearray()
    for f in fields:
        out += struct.pack(">I", len(f))
        out += f
    return bytes(out)


@dataclass(frozen=True)
class Signature:
    value: bytes
    signer_key: bytes

    def __bytes__(self) -> bytes:
        return self.value


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 key pair; ``private_key`` is the 32-byte signing seed."""

    public_key: bytes
    private_key: bytes = field(repr=False)
    _signer: nacl.signing.SigningKey = field(
        init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self):
        signer = nacl.signing.SigningKey(self.private_key)
        if bytes(signer.verify_key) != self.public_key:
            raise ValueError("public key does not match private key")
        object.__setattr__(self, "_signer", signer)

    @classmethod
    def from_secret(cls, secret: bytes) -> KeyPair:
        signer = nacl.signing.SigningKey(secret)
        return cls(bytes(signer.verify_key), bytes(secret))

    def sign(self, message: bytes) -> Signature:
        return Signature(self._signer.sign(message).signature, self.public_key)


def keypair_generate(seed: int) -> KeyPair:
    """Deterministic key pair for a 64-bit seed."""
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    secret = sha256(_KEY_DOMAIN + struct.pack(">Q", seed))
    return KeyPair.from_secret(secret)


def verify(public_key: bytes, message: bytes, signature: bytes | Signature) -> bool:
    sig = signature.value if isinstance(signature, Signature) else signature
    if len(public_key) != PUBLIC_KEY_SIZE or len(sig) != SIGNATURE_SIZE:
        return False
    try:
        nacl.signing.VerifyKey(public_key).verify(message, sig)
    except (nacl.exceptions.BadSignatureError, nacl.exceptions.ValueError,
            nacl.exceptions.TypeError, nacl.exceptions.RuntimeError):
        return False
    return True


# -- sealing to a signing key ------------------------------------------------

def seal(receiver_pk: bytes, plaintext: bytes, entropy: bytes) -> bytes:
    """Encrypt ``plaintext`` so only the holder of ``receiver_pk`` can open it.

    The ephemeral key is derived from ``entropy`` and the message, so the
    output is reproducible; callers pass a secret (e.g. their own signing
    seed) as entropy.
    """
    recv = nacl.bindings.crypto_sign_ed25519_pk_to_curve25519(receiver_pk)
    eph = nacl.public.PrivateKey(
        sha256(_SEAL_DOMAIN + entropy + receiver_pk + plaintext)
    )
    eph_pk = bytes(eph.public_key)
    nonce = sha256(eph_pk + recv)[: nacl.public.Box.NONCE_SIZE]
    box = nacl.public.Box(eph, nacl.public.PublicKey(recv))
    return eph_pk + box.encrypt(plaintext, nonce).ciphertext


def unseal(keypair: KeyPair, sealed: bytes) -> bytes:
    """Open a :func:`seal` output. Raises ``nacl.exceptions.CryptoError`` on failure."""
    eph_pk, ciphertext = sealed[:32], sealed[32:]
    sk = nacl.bindings.crypto_sign_ed25519_sk_to_curve25519(
        keypair.private_key + keypair.public_key
    )
    recv = nacl.bindings.crypto_sign_ed25519_pk_to_curve25519(keypair.public_key)
    nonce = sha256(eph_pk + recv)[: nacl.public.Box.NONCE_SIZE]
    box = nacl.public.Box(nacl.public.PrivateKey(sk), nacl.public.PublicKey(eph_pk))
    return box.decrypt(ciphertext, nonce)


# -- block hashing -----------------------------------------------------------

class HashCounter:
    """Monotone count of block-header hash evaluations (the work metric)."""

    def __init__(self):
        self._n = 0
        self._lock = threading.Lock()

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._n += n

    @property
    def value(self) -> int:
        return self._n


block_hash_calls = HashCounter()


def block_header(index: int, prev_hash: Digest, ts: int, tx) -> bytes:
    """8-byte BE index || 32-byte prev hash || 8-byte BE ts || serialized tx."""
    if len(prev_hash) != DIGEST_SIZE:
        raise ValueError("prev_hash must be 32 bytes")
    body = tx if isinstance(tx, (bytes, bytearray)) else tx.serialize()
    return struct.pack(">Q", index) + prev_hash + struct.pack(">Q", ts) + body


def cal_block_hash(index: int, prev_hash: Digest, ts: int, tx) -> Digest:
    block_hash_calls.add()
    return sha256(block_header(index, prev_hash, ts, tx))
