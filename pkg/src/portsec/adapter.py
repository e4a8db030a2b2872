"""Per-actor message security endpoint: creator and validator.

Outbound, an adapter applies the protection plan (plain / sealed / hash
only per attribute), signs what its actor authored, and attaches carried
signatures from upstream actors. Inbound, it validates the sender's
certificate chain, every signature, write-coverage, linkage, and
representation compliance, decrypts what its actor may read, and files all
signatures in an append-only store kept for forensics.

Validation never raises: every problem becomes a finding, and the verdict
is REJECT exactly when a reject-class finding is present. Phases run to
completion so a report localizes all problems at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import envelope
from .envelope import (
    AuthDecryptFailure,
    CryptoSuite,
    DEFAULT_SUITE,
    DigestView,
    KeyPair,
    PlainView,
    open_field,
    seal_field,
    value_digest,
    verify_multi_sig,
)
from .model import (
    AttributeSignature,
    FieldValue,
    HashOnly,
    Message,
    Plain,
    Sealed,
    SecuredMessage,
)
from .pki import CaState, Certificate, validate_chain
from .policy import AccessMatrix, Action, PlanKind, Role, protection_plan

BOOKING_ATTR = "B_NO"


class AdapterError(Exception):
    """Base class for adapter errors (outbound side; validation never raises)."""


class WritePermissionDenied(AdapterError):
    pass


class CarriedSignatureInvalid(AdapterError):
    pass


class NotValidated(AdapterError):
    """forward() requires an ACCEPT report for the message being forwarded."""


class Severity(str, enum.Enum):
    REJECT = "REJECT"
    WARNING = "WARNING"


class FindingCode(str, enum.Enum):
    CHAIN_INVALID = "ChainInvalid"
    SIGNATURE_INVALID = "SignatureInvalid"
    WRITE_COVERAGE_GAP = "WriteCoverageGap"
    LINKAGE_MISMATCH = "LinkageMismatch"
    REPRESENTATION_VIOLATION = "RepresentationViolation"
    DIGEST_MISMATCH = "DigestMismatch"
    NONCE_REUSE = "NonceReuse"


@dataclass(frozen=True)
class Finding:
    code: FindingCode
    subject: str
    detail: str
    severity: Severity


@dataclass(frozen=True)
class ValidationReport:
    verdict: str  # "ACCEPT" | "REJECT"
    findings: tuple[Finding, ...]
    decrypted_view: Mapping[str, str]
    verified_signers: tuple[tuple[str, str], ...]  # (identity, role)

    @property
    def accepted(self) -> bool:
        return self.verdict == "ACCEPT"

    def codes(self) -> set[FindingCode]:
        return {f.code for f in self.findings}


def report_to_wire(report: ValidationReport) -> bytes:
    """`VERDICT+...'` then one `FINDING+code+subject+detail'` per line.
    The decrypted view never leaves the adapter."""
    from .model import _escape_token

    lines = [b"VERDICT+" + report.verdict.encode() + b"'"]
    for f in report.findings:
        lines.append(
            b"+".join(
                [
                    b"FINDING",
                    f.code.value.encode(),
                    _escape_token(f.subject),
                    _escape_token(f.detail),
                ]
            )
            + b"'"
        )
    return b"\n".join(lines) + b"\n"


@dataclass(frozen=True)
class StoreRecord:
    """One signature as it transited this adapter, with the attribute
    digests it was checked against: the forensic trail."""

    instance_id: str
    msg_type: str
    signature: AttributeSignature
    received_from: str
    at: int
    attr_digests: tuple[tuple[str, bytes], ...]

    def digest_of(self, attr: str) -> bytes | None:
        for name, d in self.attr_digests:
            if name == attr:
                return d
        return None


@dataclass
class AdapterState:
    """One actor's security endpoint. Single-writer access assumed."""

    identity: str
    role: Role
    key_pair: KeyPair
    cert_chain: tuple[Certificate, ...]  # leaf first, up to (excluding) anchor
    matrix: AccessMatrix
    trust_anchor: Certificate
    ca_registry: Mapping[str, CaState]
    directory: Mapping[str, tuple[Certificate, tuple[Certificate, ...]]]
    clock: int = 0
    nonce_reuse_rejects: bool = False
    suite: CryptoSuite = DEFAULT_SUITE
    signature_store: list[StoreRecord] = field(default_factory=list)
    seen_booking_numbers: dict[bytes, str] = field(default_factory=dict)

    @property
    def leaf_cert(self) -> Certificate:
        return self.cert_chain[0]


def _field_digest(value: FieldValue, suite: CryptoSuite) -> bytes:
    if isinstance(value, Plain):
        return value_digest(value.text, suite)
    return value.digest


def _views_for(sig: AttributeSignature, msg: Message, suite: CryptoSuite):
    views = []
    for attr in sig.attrs:
        v = msg.get(attr)
        views.append((attr, PlainView(v.text) if isinstance(v, Plain) else DigestView(v.digest)))
    return views


def _sig_digests(sig: AttributeSignature, msg: Message, suite: CryptoSuite):
    return tuple((a, _field_digest(msg.get(a), suite)) for a in sig.attrs)


def _store_signatures(
    state: AdapterState, sm: SecuredMessage, received_from: str
) -> None:
    for sig in sm.signatures:
        state.signature_store.append(
            StoreRecord(
                instance_id=sm.message.instance_id,
                msg_type=sm.message.msg_type,
                signature=sig,
                received_from=received_from,
                at=state.clock,
                attr_digests=_sig_digests(sig, sm.message, state.suite),
            )
        )


def _role_identities(state: AdapterState, roles: Iterable[Role]) -> dict[str, bytes]:
    """Directory identities holding any of the given roles, with their
    public keys; used to choose wrapped-key recipients."""
    wanted = {Role(r).value for r in roles}
    return {
        ident: cert.public_key
        for ident, (cert, _) in state.directory.items()
        if cert.role in wanted
    }


def secure_outbound(
    state: AdapterState,
    msg: Message,
    carried: Sequence[AttributeSignature],
    receiver: Role,
    downstream: Iterable[Role] = (),
    *,
    authored: Iterable[str] = (),
    co_attest: Iterable[str] = (),
) -> SecuredMessage:
    """Build the protected form of a message this actor is sending.

    ``authored`` names the attributes whose values this actor vouches for
    as their writer (write permission enforced); ``co_attest`` names
    attributes included in its signature purely for linkage, such as the
    booking number binding an importer's signature to the run. The actor
    signs authored + co_attest as one signature; carried signatures are
    attached unmodified. Fields arriving already sealed or hash-only pass
    through; only plaintext fields are (re)planned.
    """
    authored = list(authored)
    co_attest = [a for a in co_attest if a not in authored]
    for attr in authored:
        if not state.matrix.check(state.role, attr, Action.WRITE):
            raise WritePermissionDenied(f"{state.role.value} may not write {attr}")

    for sig in carried:
        entry = state.directory.get(sig.signer)
        if entry is None:
            raise CarriedSignatureInvalid(f"unknown signer {sig.signer}")
        if not verify_multi_sig(
            entry[0].public_key, sig, _views_for(sig, msg, state.suite), suite=state.suite
        ):
            raise CarriedSignatureInvalid(
                f"signature by {sig.signer} does not match current values"
            )

    plain_attrs = [n for n, v in msg.fields if isinstance(v, Plain)]
    plan = protection_plan(state.matrix, state.role, receiver, downstream, plain_attrs)

    own: AttributeSignature | None = None
    to_sign = [a for a in msg.attribute_names() if a in authored or a in co_attest]
    if to_sign:
        own = envelope.multi_sign_views(
            state.key_pair,
            [
                (a, PlainView(v.text) if isinstance(v := msg.get(a), Plain) else DigestView(v.digest))
                for a in to_sign
            ],
            suite=state.suite,
        )

    out_fields: list[tuple[str, FieldValue]] = []
    for name, value in msg.fields:
        if not isinstance(value, Plain):
            out_fields.append((name, value))
            continue
        decision = plan.decision(name)
        if decision.kind is PlanKind.PLAIN:
            out_fields.append((name, value))
        elif decision.kind is PlanKind.HASH_ONLY:
            out_fields.append((name, HashOnly(value_digest(value.text, state.suite))))
        else:
            recipients = _role_identities(state, decision.readers)
            out_fields.append((name, seal_field(value.text, recipients, state.suite)))

    signatures = tuple(carried) + ((own,) if own else ())
    sm = SecuredMessage(
        Message(msg.msg_type, msg.instance_id, tuple(out_fields)), signatures, state.identity
    )
    _store_signatures(state, sm, received_from=state.identity)
    return sm


def validate_inbound(
    state: AdapterState,
    sm: SecuredMessage,
    sender_cert_chain: Sequence[Certificate],
) -> ValidationReport:
    """Run all validation phases and report every finding.

    Order: sender chain, per-signature verification (with signer chains
    from the directory), write-coverage, linkage, representation
    compliance, nonce check, decryption of readable sealed fields, store
    append. See module docstring for the reject semantics.
    """
    findings: list[Finding] = []
    msg = sm.message

    def reject(code: FindingCode, subject: str, detail: str):
        findings.append(Finding(code, subject, detail, Severity.REJECT))

    # (a) sender chain
    if not sender_cert_chain:
        reject(FindingCode.CHAIN_INVALID, sm.sender, "no certificate chain presented")
    else:
        leaf = sender_cert_chain[0]
        res = validate_chain(
            leaf,
            list(sender_cert_chain[1:]),
            state.trust_anchor,
            at=state.clock,
            ca_registry=state.ca_registry,
            suite=state.suite,
        )
        if not res.valid:
            reject(
                FindingCode.CHAIN_INVALID, sm.sender, f"{res.reason.value}: {res.detail}"
            )
        elif leaf.subject != sm.sender:
            reject(
                FindingCode.CHAIN_INVALID,
                sm.sender,
                f"presented chain names {leaf.subject}",
            )

    # (b) signatures
    verified: list[tuple[AttributeSignature, str]] = []  # (sig, signer role)
    for sig in sm.signatures:
        if sig.signer == sm.sender and sender_cert_chain:
            cert, chain = sender_cert_chain[0], tuple(sender_cert_chain[1:])
        elif sig.signer in state.directory:
            cert, chain = state.directory[sig.signer]
        else:
            reject(FindingCode.CHAIN_INVALID, sig.signer, "signer not in directory")
            continue
        res = validate_chain(
            cert, list(chain), state.trust_anchor, at=state.clock,
            ca_registry=state.ca_registry, suite=state.suite,
        )
        if not res.valid:
            reject(
                FindingCode.CHAIN_INVALID,
                sig.signer,
                f"signer chain {res.reason.value}: {res.detail}",
            )
            continue
        if verify_multi_sig(
            cert.public_key, sig, _views_for(sig, msg, state.suite), suite=state.suite
        ):
            verified.append((sig, cert.role))
        else:
            upgraded = _linkage_evidence(state, sig, msg)
            if upgraded:
                for attr, detail in upgraded:
                    reject(FindingCode.LINKAGE_MISMATCH, attr, detail)
            else:
                reject(
                    FindingCode.SIGNATURE_INVALID,
                    sig.signer,
                    f"signature over {','.join(sig.attrs)} does not verify",
                )

    # (c) write-coverage
    verified_roles = [
        (sig, Role(role))
        for sig, role in verified
        if any(role == r.value for r in Role)
    ]
    for attr in msg.attribute_names():
        writers = state.matrix.writers_of(attr)
        if not any(attr in sig.attrs and role in writers for sig, role in verified_roles):
            reject(
                FindingCode.WRITE_COVERAGE_GAP,
                attr,
                f"no verified signature from {sorted(r.value for r in writers)}",
            )

    # (d) linkage across verified signatures: shared attributes must agree.
    # All views above came from the same field values, so disagreement can
    # only surface via store evidence (handled in phase b) -- this re-check
    # guards the invariant directly.
    by_attr: dict[str, set[bytes]] = {}
    for sig, _ in verified:
        for attr in sig.attrs:
            by_attr.setdefault(attr, set()).add(_field_digest(msg.get(attr), state.suite))
    for attr, digests in by_attr.items():
        if len(digests) > 1:  # pragma: no cover - unreachable by construction
            reject(FindingCode.LINKAGE_MISMATCH, attr, "covering signatures disagree")

    # (e) representation compliance
    def may_read(a: str) -> bool:
        return state.matrix.check(state.role, a, Action.READ)

    for name, value in msg.fields:
        if isinstance(value, Plain) and not may_read(name):
            reject(
                FindingCode.REPRESENTATION_VIOLATION,
                name,
                f"plaintext exposed to {state.role.value} without read permission",
            )
        if isinstance(value, Sealed):
            if may_read(name) and state.identity not in value.wrapped_keys:
                reject(
                    FindingCode.REPRESENTATION_VIOLATION,
                    name,
                    "no wrapped key for an authorized reader",
                )
            if not may_read(name) and state.identity in value.wrapped_keys:
                reject(
                    FindingCode.REPRESENTATION_VIOLATION,
                    name,
                    f"wrapped key offered to {state.role.value} without read permission",
                )

    # (f) nonce check on the booking number
    booking_digest: bytes | None = None
    if msg.has(BOOKING_ATTR):
        booking_digest = _field_digest(msg.get(BOOKING_ATTR), state.suite)
        prior = state.seen_booking_numbers.get(booking_digest)
        if prior is not None and prior != msg.instance_id:
            findings.append(
                Finding(
                    FindingCode.NONCE_REUSE,
                    BOOKING_ATTR,
                    f"booking number already used by run {prior}",
                    Severity.REJECT if state.nonce_reuse_rejects else Severity.WARNING,
                )
            )

    # (g) decrypt readable sealed fields
    decrypted: dict[str, str] = {}
    for name, value in msg.fields:
        if isinstance(value, Plain) and may_read(name):
            decrypted[name] = value.text
        elif isinstance(value, Sealed) and may_read(name) and state.identity in value.wrapped_keys:
            try:
                decrypted[name] = open_field(value, state.identity, state.key_pair.private, state.suite)
            except (AuthDecryptFailure, envelope.DigestMismatch) as exc:
                reject(FindingCode.DIGEST_MISMATCH, name, str(exc))

    # (h) file everything
    _store_signatures(state, sm, received_from=sm.sender)

    verdict = "REJECT" if any(f.severity is Severity.REJECT for f in findings) else "ACCEPT"
    if verdict == "ACCEPT" and booking_digest is not None:
        state.seen_booking_numbers.setdefault(booking_digest, msg.instance_id)
    return ValidationReport(
        verdict,
        tuple(findings),
        decrypted,
        tuple((sig.signer, role) for sig, role in verified),
    )


def _linkage_evidence(
    state: AdapterState, sig: AttributeSignature, msg: Message
) -> list[tuple[str, str]]:
    """A failed signature whose exact bytes are on file under another run,
    with different digests for shared attributes, is a splice, not noise.
    Returns (attribute, localization detail) pairs."""
    hits = []
    for rec in state.signature_store:
        if rec.signature.sig != sig.sig or rec.signature.signer != sig.signer:
            continue
        if rec.instance_id == msg.instance_id:
            continue
        for attr in sig.attrs:
            stored = rec.digest_of(attr)
            if stored is None or not msg.has(attr):
                continue
            current = _field_digest(msg.get(attr), state.suite)
            if stored != current:
                hits.append(
                    (
                        attr,
                        f"signature by {sig.signer} was recorded in run "
                        f"{rec.instance_id} (from {rec.received_from} at t={rec.at}) "
                        f"with a different {attr}",
                    )
                )
    return hits


def forward(
    state: AdapterState,
    report: ValidationReport,
    sm: SecuredMessage,
    receiver: Role,
    downstream: Iterable[Role] = (),
    *,
    new_msg_type: str | None = None,
    authored: Iterable[str] = (),
) -> SecuredMessage:
    """Re-plan a validated message for the next receiver.

    Plaintext fields may downgrade (to hash-only) or be sealed for new
    downstream readers; sealed fields pass through byte-identical so the
    original sealer stays accountable. All carried signatures are kept. A
    forwarder signs only attributes it authored here (usually none).
    """
    if not report.accepted:
        raise NotValidated("cannot forward a message that did not validate")
    msg = sm.message
    plain_attrs = [n for n, v in msg.fields if isinstance(v, Plain)]
    plan = protection_plan(state.matrix, state.role, receiver, downstream, plain_attrs)

    out_fields: list[tuple[str, FieldValue]] = []
    for name, value in msg.fields:
        if not isinstance(value, Plain):
            out_fields.append((name, value))
            continue
        decision = plan.decision(name)
        if decision.kind is PlanKind.PLAIN:
            out_fields.append((name, value))
        elif decision.kind is PlanKind.HASH_ONLY:
            out_fields.append((name, HashOnly(value_digest(value.text, state.suite))))
        else:
            out_fields.append(
                (name, seal_field(value.text, _role_identities(state, decision.readers), state.suite))
            )

    authored = list(authored)
    for attr in authored:
        if not state.matrix.check(state.role, attr, Action.WRITE):
            raise WritePermissionDenied(f"{state.role.value} may not write {attr}")
    signatures = list(sm.signatures)
    if authored:
        own = envelope.multi_sign_views(
            state.key_pair,
            [
                (a, PlainView(v.text) if isinstance(v := msg.get(a), Plain) else DigestView(v.digest))
                for a in authored
            ],
            suite=state.suite,
        )
        signatures.append(own)

    out = SecuredMessage(
        Message(new_msg_type or msg.msg_type, msg.instance_id, tuple(out_fields)),
        tuple(signatures),
        state.identity,
    )
    if authored:
        _store_signatures(
            state,
            SecuredMessage(out.message, (signatures[-1],), state.identity),
            received_from=state.identity,
        )
    return out


def query_signature_store(state: AdapterState, instance_id: str) -> list[StoreRecord]:
    """All records for one run, in receipt order."""
    return [rec for rec in state.signature_store if rec.instance_id == instance_id]
