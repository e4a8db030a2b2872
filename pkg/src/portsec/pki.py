"""Desk-scale PKI: root CA, per-organization subordinate CAs, role-bearing
end-entity certificates, chain validation, and revocation lists.

Timestamps are logical integers advanced by the caller, so every validity
decision is reproducible. Each identity has a single key pair serving both
signing and key-wrap duty; its certificate binds subject, organization and
exactly one role to the public key.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

from .envelope import DEFAULT_SUITE, CryptoSuite, KeyPair
from .model import ParseError, _b64, _b64_strict, _escape_token, _split_elements, _split_segments, _unescape_token

#: Role token carried by certificate-authority certificates.
CA_ROLE = "CA"


class PkiError(Exception):
    """Base class for PKI errors."""


class ValidityOutsideIssuer(PkiError):
    """Requested validity window exceeds the issuing CA's own."""


class UnknownSerial(PkiError):
    """Revocation of a serial this CA never issued."""


class FailureReason(str, enum.Enum):
    BROKEN_SIGNATURE = "BrokenSignature"
    UNTRUSTED_ROOT = "UntrustedRoot"
    REVOKED = "Revoked"
    EXPIRED = "Expired"


@dataclass(frozen=True)
class Certificate:
    """Binding of subject, org and role to a public key, vouched by issuer."""

    serial: int
    subject: str
    org: str
    role: str
    issuer: str
    not_before: int
    not_after: int
    public_key: bytes
    signature: bytes

    def body_bytes(self) -> bytes:
        """Canonical signed portion: the wire record minus the signature."""
        return _cert_elements(self, with_sig=False)

    def covers(self, at: int) -> bool:
        return self.not_before <= at <= self.not_after


@dataclass(frozen=True)
class ChainResult:
    valid: bool
    reason: FailureReason | None = None
    detail: str = ""

    def __bool__(self) -> bool:  # pragma: no cover - convenience
        return self.valid


@dataclass
class CaState:
    """One certificate authority: its key pair, own certificate, and the
    lists of issued and revoked serials. Single-writer access assumed."""

    key_pair: KeyPair
    cert: Certificate
    issued: list[int] = field(default_factory=list)
    revoked: set[int] = field(default_factory=set)
    parent: str | None = None
    suite: CryptoSuite = DEFAULT_SUITE

    @property
    def name(self) -> str:
        return self.cert.subject

    def issue(
        self,
        subject: str,
        org: str,
        role: str,
        subject_public_key: bytes,
        validity: tuple[int, int],
    ) -> Certificate:
        not_before, not_after = validity
        if not_before < self.cert.not_before or not_after > self.cert.not_after:
            raise ValidityOutsideIssuer(
                f"requested {validity} outside issuer window "
                f"({self.cert.not_before}, {self.cert.not_after})"
            )
        serial = (self.issued[-1] if self.issued else 0) + 1
        cert = _signed_cert(
            self.suite,
            self.key_pair,
            serial=serial,
            subject=subject,
            org=org,
            role=role,
            issuer=self.name,
            not_before=not_before,
            not_after=not_after,
            public_key=subject_public_key,
        )
        self.issued.append(serial)
        return cert

    def revoke(self, serial: int) -> None:
        """Idempotent; unknown serials are refused."""
        if serial not in self.issued:
            raise UnknownSerial(f"{self.name} never issued serial {serial}")
        self.revoked.add(serial)


def _cert_elements(cert: Certificate, with_sig: bool) -> bytes:
    parts = [
        b"CERT",
        b"%d" % cert.serial,
        _escape_token(cert.subject),
        _escape_token(cert.org),
        _escape_token(cert.role),
        _escape_token(cert.issuer),
        b"%d" % cert.not_before,
        b"%d" % cert.not_after,
        _b64(cert.public_key),
    ]
    if with_sig:
        parts.append(_b64(cert.signature))
    return b"+".join(parts)


def _signed_cert(suite: CryptoSuite, signer: KeyPair, **fields) -> Certificate:
    unsigned = Certificate(signature=b"", **fields)
    sig = suite.sign(signer.private, suite.digest(unsigned.body_bytes()))
    return Certificate(signature=sig, **fields)


def cert_to_wire(cert: Certificate) -> bytes:
    """`CERT+serial+subject+org+role+issuer+nb+na+pubkey+sig'`"""
    return _cert_elements(cert, with_sig=True) + b"'"


def cert_from_wire(data: bytes) -> Certificate:
    segments = _split_segments(data)
    if len(segments) != 1:
        raise ParseError("expected exactly one CERT segment", 0)
    off, seg = segments[0]
    elems = _split_elements(seg, off)
    if elems[0][1] != b"CERT" or len(elems) != 10:
        raise ParseError("malformed CERT segment", off)
    texts = [_unescape_token(e[1], e[0]) for e in elems[1:9]]
    for idx in (0, 5, 6):
        if not texts[idx].lstrip("-").isdigit():
            raise ParseError(f"expected integer, got {texts[idx]!r}", elems[idx + 1][0])
    return Certificate(
        serial=int(texts[0]),
        subject=texts[1],
        org=texts[2],
        role=texts[3],
        issuer=texts[4],
        not_before=int(texts[5]),
        not_after=int(texts[6]),
        public_key=_b64_strict(elems[8][1], elems[8][0]),
        signature=_b64_strict(elems[9][1], elems[9][0]),
    )


def create_root(
    name: str,
    validity: tuple[int, int] = (0, 1_000_000),
    suite: CryptoSuite = DEFAULT_SUITE,
    key_pair: KeyPair | None = None,
) -> CaState:
    """Self-signed trust anchor; its own serial 1 counts as issued."""
    kp = key_pair or suite.generate_keypair(name)
    cert = _signed_cert(
        suite,
        kp,
        serial=1,
        subject=name,
        org=name,
        role=CA_ROLE,
        issuer=name,
        not_before=validity[0],
        not_after=validity[1],
        public_key=suite.public_bytes(kp.public),
    )
    return CaState(kp, cert, issued=[1], suite=suite)


def create_subordinate(
    parent: CaState,
    name: str,
    validity: tuple[int, int],
    suite: CryptoSuite = DEFAULT_SUITE,
    key_pair: KeyPair | None = None,
) -> CaState:
    """Organization-level CA whose certificate is issued by ``parent``."""
    kp = key_pair or suite.generate_keypair(name)
    cert = parent.issue(name, name, CA_ROLE, suite.public_bytes(kp.public), validity)
    return CaState(kp, cert, suite=suite, parent=parent.name)


def validate_chain(
    leaf: Certificate,
    chain: list[Certificate],
    trust_anchor: Certificate,
    at: int,
    ca_registry: Mapping[str, CaState],
    suite: CryptoSuite = DEFAULT_SUITE,
) -> ChainResult:
    """Walk leaf -> intermediates -> root.

    Valid iff every link's signature verifies under its issuer's key, the
    top certificate is the given trust anchor, no link's serial sits in its
    issuer's revocation list, and ``at`` lies within every validity window.
    Checks run in that order and report the first failure.
    """
    links = [leaf, *chain]
    if links[-1] != trust_anchor:
        if links[-1].issuer == trust_anchor.subject:
            links.append(trust_anchor)
        else:
            return ChainResult(
                False, FailureReason.UNTRUSTED_ROOT, f"chain top is {links[-1].subject}"
            )

    for i, cert in enumerate(links):
        parent = links[i + 1] if i + 1 < len(links) else links[-1]
        if cert.issuer != parent.subject:
            return ChainResult(
                False,
                FailureReason.BROKEN_SIGNATURE,
                f"{cert.subject} issued by {cert.issuer}, not {parent.subject}",
            )
        payload = suite.digest(cert.body_bytes())
        if not suite.verify(parent.public_key, payload, cert.signature):
            return ChainResult(
                False, FailureReason.BROKEN_SIGNATURE, f"signature on {cert.subject}"
            )

    root = links[-1]
    if root != trust_anchor or root.issuer != root.subject:
        return ChainResult(False, FailureReason.UNTRUSTED_ROOT, f"root is {root.subject}")

    for cert in links:
        issuer_state = ca_registry.get(cert.issuer)
        if issuer_state is not None and cert.serial in issuer_state.revoked:
            return ChainResult(
                False, FailureReason.REVOKED, f"{cert.subject} (serial {cert.serial})"
            )

    for cert in links:
        if not cert.covers(at):
            return ChainResult(
                False,
                FailureReason.EXPIRED,
                f"{cert.subject} valid ({cert.not_before}, {cert.not_after}), queried at {at}",
            )

    return ChainResult(True)
