"""Digests, attribute-level multi-signatures, and field sealing.

The signature scheme protects the values v1..vk of an attribute list
n1..nk: each value is hashed, the fixed-length hashes are concatenated, the
concatenation is hashed again, and that double hash is signed with the
signer's private key. A verifier therefore needs, per attribute, either the
value or its digest -- which is what lets intermediaries check signatures
over data they are not allowed to read.

Sealing pairs a value's digest with its encryption under a fresh symmetric
key, wrapped once per authorized reader's public key.

All primitives sit behind a CryptoSuite so a deployment can swap them; the
default fixes SHA-256, RSA-2048 with PKCS#1 v1.5 over the 32-byte payload
(deterministic signatures), RSA-OAEP-SHA256 key wrap, and AES-256-GCM.
"""

from __future__ import annotations

import hashlib
import os
import secrets
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

from cryptography.exceptions import InvalidSignature, InvalidTag, UnsupportedAlgorithm
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa, utils
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .model import AttributeSignature, Sealed, canonical_bytes


class EnvelopeError(Exception):
    """Base class for signature/sealing errors."""


class EmptyFieldList(EnvelopeError):
    pass


class DuplicateSignedAttribute(EnvelopeError):
    pass


class AttrListMismatch(EnvelopeError):
    pass


class EmptyReaderSet(EnvelopeError):
    pass


class NoWrappedKeyForHolder(EnvelopeError):
    """The opener has no wrapped key: an unauthorized access attempt."""


class AuthDecryptFailure(EnvelopeError):
    """Authenticated decryption failed: the ciphertext was tampered with."""


class DigestMismatch(EnvelopeError):
    """Decrypted plaintext does not match the carried digest."""


class EntropyUnavailable(EnvelopeError):
    pass


@dataclass(frozen=True)
class KeyPair:
    """One asymmetric key pair per identity, used both to sign and to
    receive wrapped keys."""

    public: rsa.RSAPublicKey
    private: rsa.RSAPrivateKey
    owner: str


@dataclass(frozen=True)
class SymmetricKey:
    bytes: bytes
    id: str


@dataclass(frozen=True)
class PlainView:
    """Verifier knows the attribute's plaintext."""

    text: str


@dataclass(frozen=True)
class DigestView:
    """Verifier knows only the attribute's digest."""

    digest: bytes


View = PlainView | DigestView

_OAEP = padding.OAEP(
    mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None
)
_PKCS1 = padding.PKCS1v15()
_PREHASHED = utils.Prehashed(hashes.SHA256())


@lru_cache(maxsize=256)
def _load_public(der: bytes) -> rsa.RSAPublicKey:
    return serialization.load_der_public_key(der)


class CryptoSuite:
    """The deployment's primitive selection: one hash, one signature scheme,
    one key wrap, one authenticated cipher."""

    suite_id = "SHA256-RSA2048-PKCS1V15-OAEP-AESGCM"
    digest_length = 32
    symmetric_key_length = 32
    _nonce_length = 12

    def digest(self, data: bytes) -> bytes:
        return hashlib.sha256(data).digest()

    def generate_keypair(self, owner: str) -> KeyPair:
        private = rsa.generate_private_key(public_exponent=65537, key_size=2048)
        return KeyPair(private.public_key(), private, owner)

    def sign(self, private: rsa.RSAPrivateKey, payload: bytes) -> bytes:
        return private.sign(payload, _PKCS1, _PREHASHED)

    def verify(self, public, payload: bytes, sig: bytes) -> bool:
        # verification input may be attacker-controlled down to the key
        # bytes (exported chains embed certificates): fail closed
        try:
            key = _load_public(public) if isinstance(public, bytes) else public
        except (ValueError, UnsupportedAlgorithm):
            return False
        if not isinstance(key, rsa.RSAPublicKey):
            return False
        try:
            key.verify(sig, payload, _PKCS1, _PREHASHED)
            return True
        except InvalidSignature:
            return False

    def wrap_key(self, public, key_material: bytes) -> bytes:
        key = _load_public(public) if isinstance(public, bytes) else public
        return key.encrypt(key_material, _OAEP)

    def unwrap_key(self, private: rsa.RSAPrivateKey, wrapped: bytes) -> bytes:
        try:
            return private.decrypt(wrapped, _OAEP)
        except ValueError as exc:
            raise AuthDecryptFailure(f"key unwrap failed: {exc}") from None

    def encrypt(self, key: bytes, plaintext: bytes) -> bytes:
        nonce = os.urandom(self._nonce_length)
        return nonce + AESGCM(key).encrypt(nonce, plaintext, None)

    def decrypt(self, key: bytes, blob: bytes) -> bytes:
        if len(blob) < self._nonce_length + 16:
            raise AuthDecryptFailure("ciphertext too short")
        try:
            return AESGCM(key).decrypt(blob[: self._nonce_length], blob[self._nonce_length :], None)
        except InvalidTag:
            raise AuthDecryptFailure("authentication tag mismatch") from None

    def public_bytes(self, public: rsa.RSAPublicKey) -> bytes:
        return public.public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
        )

    def private_bytes(self, private: rsa.RSAPrivateKey) -> bytes:
        return private.private_bytes(
            serialization.Encoding.DER,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )

    def load_private(self, der: bytes) -> rsa.RSAPrivateKey:
        return serialization.load_der_private_key(der, password=None)


DEFAULT_SUITE = CryptoSuite()


def digest(data: bytes, suite: CryptoSuite = DEFAULT_SUITE) -> bytes:
    return suite.digest(data)


def value_digest(text: str, suite: CryptoSuite = DEFAULT_SUITE) -> bytes:
    """Digest of a field value's canonical bytes."""
    return suite.digest(canonical_bytes(text))


def fresh_symmetric_key(suite: CryptoSuite = DEFAULT_SUITE) -> SymmetricKey:
    try:
        material = os.urandom(suite.symmetric_key_length)
    except OSError as exc:  # pragma: no cover - no entropy source in practice
        raise EntropyUnavailable(str(exc)) from None
    return SymmetricKey(material, secrets.token_hex(16))


def signing_payload(
    names: Sequence[str],
    value_digests: Sequence[bytes],
    *,
    bind_names: bool = False,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> bytes:
    """The double hash: digest of the raw concatenation of the per-value
    digests. Digests are fixed-length, so no separators are needed.

    With ``bind_names`` the digest of the comma-joined name list is
    prepended to the concatenation, closing the name-binding gap; default
    is the bare value formula.
    """
    parts = list(value_digests)
    if bind_names:
        parts.insert(0, suite.digest(canonical_bytes(",".join(names))))
    return suite.digest(b"".join(parts))


def multi_sign(
    key_pair: KeyPair,
    fields: Sequence[tuple[str, str]],
    *,
    bind_names: bool = False,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> AttributeSignature:
    """Sign the values of an ordered attribute list with one signature."""
    return multi_sign_views(
        key_pair,
        [(n, PlainView(v)) for n, v in fields],
        bind_names=bind_names,
        suite=suite,
    )


def multi_sign_views(
    key_pair: KeyPair,
    views: Sequence[tuple[str, View]],
    *,
    bind_names: bool = False,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> AttributeSignature:
    """Like multi_sign, but some values may be known only by digest
    (a signer can vouch for linkage to a value it cannot read)."""
    if not views:
        raise EmptyFieldList("nothing to sign")
    names = [n for n, _ in views]
    if len(set(names)) != len(names):
        raise DuplicateSignedAttribute(f"duplicate attributes in {names}")
    payload = signing_payload(
        names,
        [value_digest(v.text, suite) if isinstance(v, PlainView) else v.digest for _, v in views],
        bind_names=bind_names,
        suite=suite,
    )
    return AttributeSignature(key_pair.owner, tuple(names), suite.sign(key_pair.private, payload))


def verify_multi_sig(
    public,
    sig: AttributeSignature,
    views: Sequence[tuple[str, View]],
    *,
    bind_names: bool = False,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> bool:
    """Check a signature given, per covered attribute, either the plaintext
    or its digest. The view list must match ``sig.attrs`` exactly."""
    if tuple(n for n, _ in views) != sig.attrs:
        raise AttrListMismatch(
            f"views cover {[n for n, _ in views]}, signature covers {list(sig.attrs)}"
        )
    digests = [
        value_digest(v.text, suite) if isinstance(v, PlainView) else v.digest for _, v in views
    ]
    payload = signing_payload(sig.attrs, digests, bind_names=bind_names, suite=suite)
    return suite.verify(public, payload, sig.sig)


def seal_field(
    value: str,
    readers: Mapping[str, object] | Iterable[tuple[str, object]],
    suite: CryptoSuite = DEFAULT_SUITE,
) -> Sealed:
    """Encrypt a value under a fresh symmetric key, wrapping the key for
    every reader, and pair the ciphertext with the value's digest."""
    reader_list = list(readers.items()) if isinstance(readers, Mapping) else list(readers)
    if not reader_list:
        raise EmptyReaderSet("sealing requires at least one reader")
    key = fresh_symmetric_key(suite)
    return Sealed(
        digest=value_digest(value, suite),
        ciphertext=suite.encrypt(key.bytes, canonical_bytes(value)),
        wrapped_keys={identity: suite.wrap_key(public, key.bytes) for identity, public in reader_list},
    )


def open_field(
    sealed: Sealed,
    holder: str,
    private: rsa.RSAPrivateKey,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> str:
    """Unwrap, decrypt, and check the plaintext against the carried digest."""
    if holder not in sealed.wrapped_keys:
        raise NoWrappedKeyForHolder(f"no wrapped key for {holder}")
    key = suite.unwrap_key(private, sealed.wrapped_keys[holder])
    plaintext = suite.decrypt(key, sealed.ciphertext)
    if suite.digest(plaintext) != sealed.digest:
        raise DigestMismatch("plaintext digest does not match sealed digest")
    return plaintext.decode("utf-8")
