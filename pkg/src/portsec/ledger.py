"""Desk-scale permissioned ledger for container assets.

A single in-process net stands in for the replicated peers: hash-chained
blocks of signed transactions, chaincode gates (role, multitenancy,
lifecycle) on submission, configurable endorsement before commit, and a
world state that is always the deterministic replay of the chain.

Confidential consignment attributes are never ledger data; assets carry
only container number, lifecycle state, owning shipping line, and handling
terminal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .envelope import DEFAULT_SUITE, CryptoSuite, KeyPair
from .model import ParseError, _b64, _b64_strict, _escape_token, _split_elements, _split_segments, _unescape_token
from .pki import CaState, Certificate, cert_from_wire, cert_to_wire, validate_chain
from .policy import Role

GENESIS_PREV = bytes(32)
CHAIN_VERSION = "1"


class LifecycleState(str, enum.Enum):
    CREATED = "CREATED"
    DELIVERED = "DELIVERED"
    CLEARED = "CLEARED"
    LOADED = "LOADED"


class LedgerAction(str, enum.Enum):
    CREATE = "CREATE"
    ACKNOWLEDGE_DELIVERY = "ACKNOWLEDGE_DELIVERY"
    CLEAR = "CLEAR"
    LOAD = "LOAD"


#: Chaincode role gate: who may invoke each action.
ACTION_ROLES = {
    LedgerAction.CREATE: Role.SHIPPING_LINE,
    LedgerAction.ACKNOWLEDGE_DELIVERY: Role.TERMINAL,
    LedgerAction.CLEAR: Role.PCS,
    LedgerAction.LOAD: Role.TERMINAL,
}

#: Lifecycle gate: required prior state and resulting state per action.
TRANSITIONS = {
    LedgerAction.ACKNOWLEDGE_DELIVERY: (LifecycleState.CREATED, LifecycleState.DELIVERED),
    LedgerAction.CLEAR: (LifecycleState.DELIVERED, LifecycleState.CLEARED),
    LedgerAction.LOAD: (LifecycleState.CLEARED, LifecycleState.LOADED),
}


class LedgerError(Exception):
    """Base class for ledger denials and faults."""


class ChainInvalidCert(LedgerError):
    pass


class RoleDenied(LedgerError):
    pass


class TenancyDenied(LedgerError):
    pass


class LifecycleDenied(LedgerError):
    pass


class DuplicateContainer(LedgerError):
    pass


class UnknownContainer(LedgerError):
    pass


class MalformedTransaction(LedgerError):
    pass


class IneligibleEndorser(LedgerError):
    pass


class DuplicateEndorsement(LedgerError):
    pass


class InsufficientEndorsements(LedgerError):
    pass


class StaleTransaction(LedgerError):
    pass


class NotVisible(LedgerError):
    pass


@dataclass(frozen=True)
class ContainerAsset:
    cnt_no: str
    state: LifecycleState
    shipping_line: str  # creator's organization, bound from its certificate
    terminal: str  # chosen at creation, immutable


@dataclass(frozen=True)
class Transaction:
    invoker: Certificate
    action: LedgerAction
    cnt_no: str
    args: tuple[tuple[str, str], ...]
    invoker_signature: bytes
    endorsements: tuple[tuple[str, bytes], ...] = ()  # (endorser identity, sig)

    def body_bytes(self) -> bytes:
        """Canonical signed portion: everything except signatures."""
        parts = [
            b"TXB",
            _escape_token(self.invoker.subject),
            b"%d" % self.invoker.serial,
            self.action.value.encode(),
            _escape_token(self.cnt_no),
        ]
        for k, v in self.args:
            parts += [_escape_token(k), _escape_token(v)]
        return b"+".join(parts)

    def arg(self, key: str) -> str | None:
        for k, v in self.args:
            if k == key:
                return v
        return None


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    transactions: tuple[Transaction, ...]
    orderer_signature: bytes


@dataclass
class PendingTransaction:
    """A gate-checked transaction collecting endorsements before commit."""

    tx: Transaction
    asset_before: ContainerAsset | None  # snapshot for staleness detection
    endorsements: list[tuple[str, bytes]] = field(default_factory=list)

    def endorsed(self) -> Transaction:
        return replace(self.tx, endorsements=tuple(self.endorsements))


@dataclass(frozen=True)
class EndorsementPolicy:
    """Required endorsement count and eligible roles per action.

    Tenancy-aware: a TERMINAL endorser must be the asset's (or, for CREATE,
    the chosen) terminal, a SHIPPING_LINE endorser the asset's owner; PCS
    endorsers are unconstrained. Count 0 models proof-by-authority, where
    the orderer's mandatory block signature is the only vouching party.
    """

    required: Mapping[LedgerAction, int]
    eligible: Mapping[LedgerAction, frozenset[Role]]

    @staticmethod
    def default() -> "EndorsementPolicy":
        return EndorsementPolicy(
            required={a: 1 for a in LedgerAction},
            eligible={
                LedgerAction.CREATE: frozenset({Role.TERMINAL}),
                LedgerAction.ACKNOWLEDGE_DELIVERY: frozenset({Role.SHIPPING_LINE, Role.PCS}),
                LedgerAction.CLEAR: frozenset({Role.TERMINAL}),
                LedgerAction.LOAD: frozenset({Role.PCS}),
            },
        )

    @staticmethod
    def authority() -> "EndorsementPolicy":
        return EndorsementPolicy(
            required={a: 0 for a in LedgerAction},
            eligible={a: frozenset() for a in LedgerAction},
        )


@dataclass(frozen=True)
class ChainVerification:
    valid: bool
    first_bad_block: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:  # pragma: no cover - convenience
        return self.valid


@dataclass
class LedgerNet:
    """One logical copy of the shared ledger. Single-writer access assumed."""

    organizations: tuple[tuple[str, str], ...]  # (org name, role token)
    endorsement_policy: EndorsementPolicy
    orderer_identity: str
    orderer_key: KeyPair
    directory: Mapping[str, tuple[Certificate, tuple[Certificate, ...]]]
    trust_anchor: Certificate
    ca_registry: Mapping[str, CaState]
    suite: CryptoSuite = DEFAULT_SUITE
    clock: int = 0
    baseline_state: dict[str, ContainerAsset] = field(default_factory=dict)
    chain: list[Block] = field(default_factory=list)
    world_state: dict[str, ContainerAsset] = field(default_factory=dict)


def create_net(
    organizations: Iterable[tuple[str, str]],
    orderer_identity: str,
    orderer_key: KeyPair,
    directory: Mapping[str, tuple[Certificate, tuple[Certificate, ...]]],
    trust_anchor: Certificate,
    ca_registry: Mapping[str, CaState],
    endorsement_policy: EndorsementPolicy | None = None,
    suite: CryptoSuite = DEFAULT_SUITE,
    baseline_state: Mapping[str, ContainerAsset] | None = None,
    genesis_prev: bytes = GENESIS_PREV,
) -> LedgerNet:
    """New net with an empty, orderer-signed genesis block."""
    net = LedgerNet(
        organizations=tuple(organizations),
        endorsement_policy=endorsement_policy or EndorsementPolicy.default(),
        orderer_identity=orderer_identity,
        orderer_key=orderer_key,
        directory=directory,
        trust_anchor=trust_anchor,
        ca_registry=ca_registry,
        suite=suite,
        baseline_state=dict(baseline_state or {}),
    )
    net.world_state = dict(net.baseline_state)
    genesis = _sign_block(net, index=0, prev_hash=genesis_prev, transactions=())
    net.chain.append(genesis)
    return net


def build_transaction(
    action: LedgerAction,
    cnt_no: str,
    args: Sequence[tuple[str, str]],
    invoker_chain: Sequence[Certificate],
    key_pair: KeyPair,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> tuple[Transaction, tuple[Certificate, ...]]:
    """Signed transaction plus the chain to present at submission."""
    tx = Transaction(invoker_chain[0], LedgerAction(action), cnt_no, tuple(args), b"")
    sig = suite.sign(key_pair.private, suite.digest(tx.body_bytes()))
    return replace(tx, invoker_signature=sig), tuple(invoker_chain)


def _check_cert(net: LedgerNet, chain: Sequence[Certificate], who: str) -> None:
    res = validate_chain(
        chain[0], list(chain[1:]), net.trust_anchor, at=net.clock,
        ca_registry=net.ca_registry, suite=net.suite,
    )
    if not res.valid:
        raise ChainInvalidCert(f"{who}: {res.reason.value}: {res.detail}")


def _gate(tx: Transaction, state: Mapping[str, ContainerAsset]) -> ContainerAsset | None:
    """Chaincode decision point, judging from certificate facts and current
    state alone (so replay can reuse it). Returns the asset the action
    touches (None for CREATE) or raises the matching denial."""
    try:
        role = Role(tx.invoker.role)
    except ValueError:
        raise RoleDenied(f"{tx.invoker.role} is not a ledger role") from None
    if role is not ACTION_ROLES[tx.action]:
        raise RoleDenied(
            f"{tx.action.value} requires {ACTION_ROLES[tx.action].value}, invoker is {role.value}"
        )

    if tx.action is LedgerAction.CREATE:
        if tx.cnt_no in state:
            raise DuplicateContainer(tx.cnt_no)
        if tx.arg("terminal") is None:
            raise MalformedTransaction("CREATE requires a terminal argument")
        return None

    asset = state.get(tx.cnt_no)
    if asset is None:
        raise UnknownContainer(tx.cnt_no)
    if tx.action in (LedgerAction.ACKNOWLEDGE_DELIVERY, LedgerAction.LOAD):
        if asset.terminal != tx.invoker.org:
            raise TenancyDenied(
                f"asset {tx.cnt_no} belongs to terminal {asset.terminal}, not {tx.invoker.org}"
            )
    required, _ = TRANSITIONS[tx.action]
    if asset.state is not required:
        raise LifecycleDenied(
            f"{tx.action.value} requires state {required.value}, asset is {asset.state.value}"
        )
    return asset


def _apply(tx: Transaction, state: dict[str, ContainerAsset]) -> None:
    if tx.action is LedgerAction.CREATE:
        # Creator binding: owner comes from the certificate, never the args.
        state[tx.cnt_no] = ContainerAsset(
            tx.cnt_no,
            LifecycleState.CREATED,
            shipping_line=tx.invoker.org,
            terminal=tx.arg("terminal"),
        )
    else:
        _, nxt = TRANSITIONS[tx.action]
        state[tx.cnt_no] = replace(state[tx.cnt_no], state=nxt)


def submit(
    net: LedgerNet, tx: Transaction, invoker_chain: Sequence[Certificate]
) -> PendingTransaction:
    """Run the chaincode gates; a pass yields a pending transaction that
    still needs endorsements. Raises the first failing gate's denial."""
    _check_cert(net, invoker_chain, f"invoker {tx.invoker.subject}")
    if invoker_chain[0] != tx.invoker:
        raise ChainInvalidCert("presented chain does not match transaction invoker")
    if not net.suite.verify(
        tx.invoker.public_key, net.suite.digest(tx.body_bytes()), tx.invoker_signature
    ):
        raise ChainInvalidCert(f"invoker signature by {tx.invoker.subject} does not verify")
    asset = _gate(tx, net.world_state)
    return PendingTransaction(tx=tx, asset_before=asset)


def endorse(
    net: LedgerNet,
    pending: PendingTransaction,
    endorser_chain: Sequence[Certificate],
    endorser_key: KeyPair,
) -> PendingTransaction:
    """Append one endorsement if the endorser is eligible for the action."""
    cert = endorser_chain[0]
    _check_cert(net, endorser_chain, f"endorser {cert.subject}")
    tx = pending.tx
    if cert.subject == tx.invoker.subject:
        raise IneligibleEndorser("invoker cannot endorse its own transaction")
    if any(ident == cert.subject for ident, _ in pending.endorsements):
        raise DuplicateEndorsement(cert.subject)

    try:
        role = Role(cert.role)
    except ValueError:
        raise IneligibleEndorser(f"{cert.role} is not an endorsing role") from None
    eligible = net.endorsement_policy.eligible[tx.action]
    if role not in eligible:
        raise IneligibleEndorser(
            f"{tx.action.value} accepts {sorted(r.value for r in eligible)}, got {role.value}"
        )
    if role is Role.TERMINAL:
        expected = tx.arg("terminal") if tx.action is LedgerAction.CREATE else (
            pending.asset_before.terminal if pending.asset_before else None
        )
        if cert.org != expected:
            raise IneligibleEndorser(f"terminal {cert.org} is not the designated {expected}")
    if role is Role.SHIPPING_LINE and pending.asset_before is not None:
        if cert.org != pending.asset_before.shipping_line:
            raise IneligibleEndorser(
                f"shipping line {cert.org} does not own {tx.cnt_no}"
            )

    payload = net.suite.digest(tx.body_bytes() + tx.invoker_signature)
    pending.endorsements.append((cert.subject, net.suite.sign(endorser_key.private, payload)))
    return pending


@dataclass(frozen=True)
class CommitResult:
    block: Block | None
    committed: tuple[Transaction, ...]
    rejected: tuple[tuple[PendingTransaction, LedgerError], ...]


def commit(net: LedgerNet, pendings: Sequence[PendingTransaction]) -> CommitResult:
    """Order, re-validate, and append one block.

    Each pending needs its endorsement quota; the gates re-run against the
    provisional state so earlier transactions in the batch are visible
    (a second CLEAR of the same container is stale, not double-applied).
    Rejected transactions are reported, not raised, so a partly good batch
    still commits.
    """
    provisional = dict(net.world_state)
    good: list[Transaction] = []
    bad: list[tuple[PendingTransaction, LedgerError]] = []
    for pending in pendings:
        tx = pending.endorsed()
        needed = net.endorsement_policy.required[tx.action]
        if len(tx.endorsements) < needed:
            bad.append(
                (pending, InsufficientEndorsements(f"{len(tx.endorsements)} of {needed}"))
            )
            continue
        try:
            _gate(tx, provisional)
        except LedgerError as exc:
            bad.append((pending, StaleTransaction(f"re-validation failed: {exc}")))
            continue
        _apply(tx, provisional)
        good.append(tx)

    if not good:
        return CommitResult(None, (), tuple(bad))

    block = _sign_block(
        net,
        index=len(net.chain),
        prev_hash=net.suite.digest(block_bytes(net.chain[-1])),
        transactions=tuple(good),
    )
    net.chain.append(block)
    net.world_state = provisional
    return CommitResult(block, tuple(good), tuple(bad))


def query(net: LedgerNet, reader_chain: Sequence[Certificate], cnt_no: str) -> ContainerAsset:
    """Multitenant read: owners see their containers, terminals theirs,
    the PCS only containers currently inside a terminal."""
    cert = reader_chain[0]
    _check_cert(net, reader_chain, f"reader {cert.subject}")
    asset = net.world_state.get(cnt_no)
    if asset is None:
        raise UnknownContainer(cnt_no)
    try:
        role = Role(cert.role)
    except ValueError:
        raise NotVisible(f"{cert.role} has no ledger read rights") from None
    visible = (
        (role is Role.SHIPPING_LINE and asset.shipping_line == cert.org)
        or (role is Role.TERMINAL and asset.terminal == cert.org)
        or (
            role is Role.PCS
            and asset.state in (LifecycleState.DELIVERED, LifecycleState.CLEARED)
        )
    )
    if not visible:
        raise NotVisible(f"{cnt_no} is not visible to {cert.subject}")
    return asset


# --- serialization and verification ------------------------------------------


def _txn_line(tx: Transaction) -> bytes:
    parts = [
        b"TXN",
        tx.action.value.encode(),
        _escape_token(tx.cnt_no),
        _escape_token(tx.invoker.subject),
        b"%d" % tx.invoker.serial,
        _b64(tx.invoker_signature),
        b"%03d" % len(tx.args),
    ]
    for k, v in tx.args:
        parts += [_escape_token(k), _escape_token(v)]
    parts.append(b"%03d" % len(tx.endorsements))
    for ident, sig in tx.endorsements:
        parts += [_escape_token(ident), _b64(sig)]
    return b"+".join(parts) + b"'"


def _block_header(block: Block) -> bytes:
    return b"BLK+%d+" % block.index + _b64(block.prev_hash)


def _block_body(index: int, prev_hash: bytes, transactions: tuple[Transaction, ...]) -> bytes:
    lines = [b"BLK+%d+" % index + _b64(prev_hash)]
    lines += [_txn_line(t) for t in transactions]
    return b"\n".join(lines)


def block_bytes(block: Block) -> bytes:
    """Canonical serialized form: header (with orderer signature) plus one
    TXN line per transaction. prev_hash links digest these bytes."""
    lines = [_block_header(block) + b"+" + _b64(block.orderer_signature) + b"'"]
    lines += [_txn_line(t) for t in block.transactions]
    return b"\n".join(lines) + b"\n"


def _sign_block(net: LedgerNet, index: int, prev_hash: bytes, transactions: tuple) -> Block:
    payload = net.suite.digest(_block_body(index, prev_hash, transactions))
    return Block(index, prev_hash, transactions, net.suite.sign(net.orderer_key.private, payload))


def export_chain(net: LedgerNet) -> bytes:
    """Offline-verifiable dump: header, baseline state, every referenced
    certificate (so signatures check without the live net), then blocks."""
    lines = [
        b"LEDGER+" + CHAIN_VERSION.encode() + b"+" + _escape_token(net.suite.suite_id) + b"'",
        b"ANCHOR+" + _escape_token(net.orderer_identity) + b"+" + _b64(net.chain[0].prev_hash) + b"'",
    ]
    for cnt_no in sorted(net.baseline_state):
        a = net.baseline_state[cnt_no]
        lines.append(
            b"+".join(
                [b"BASE", _escape_token(a.cnt_no), a.state.value.encode(),
                 _escape_token(a.shipping_line), _escape_token(a.terminal)]
            )
            + b"'"
        )
    referenced = {net.orderer_identity}
    for block in net.chain:
        for tx in block.transactions:
            referenced.add(tx.invoker.subject)
            referenced.update(ident for ident, _ in tx.endorsements)
    emitted: set[str] = set()
    for ident in sorted(referenced):
        for cert in _cert_with_issuers(net, ident):
            if cert.subject not in emitted:
                emitted.add(cert.subject)
                lines.append(cert_to_wire(cert))
    body = b"\n".join(lines) + b"\n"
    return body + b"".join(block_bytes(b) for b in net.chain)


def _cert_with_issuers(net: LedgerNet, ident: str) -> list[Certificate]:
    entry = net.directory.get(ident)
    if entry is None:
        raise LedgerError(f"no certificate on file for {ident}")
    cert, chain = entry
    out = [cert, *chain]
    if out[-1].issuer == out[-1].subject:
        return out
    # Directory chains may exclude the anchor; the export must not.
    return out + [net.trust_anchor]


@dataclass(frozen=True)
class ExportedChain:
    suite_id: str
    orderer_identity: str
    baseline_prev: bytes
    baseline_state: dict[str, ContainerAsset]
    certs: dict[str, Certificate]
    blocks: tuple[Block, ...]


def parse_chain(data: bytes) -> ExportedChain:
    """Strict parse of an exported chain; any malformed line raises."""
    suite_id = orderer = None
    baseline_prev = b""
    baseline: dict[str, ContainerAsset] = {}
    certs: dict[str, Certificate] = {}
    blocks: list[Block] = []
    current: tuple[int, bytes, bytes] | None = None  # index, prev, orderer sig
    txns: list[Transaction] = []

    def flush():
        nonlocal current, txns
        if current is not None:
            blocks.append(Block(current[0], current[1], tuple(txns), current[2]))
        current, txns = None, []

    for line in data.splitlines():
        if not line:
            continue
        segs = _split_segments(line)
        if len(segs) != 1:
            raise ParseError("one record per line expected", 0)
        off, seg = segs[0]
        elems = _split_elements(seg, off)
        tag = elems[0][1]
        if tag == b"LEDGER":
            if len(elems) != 3 or elems[1][1] != CHAIN_VERSION.encode():
                raise ParseError("unsupported chain header", off)
            suite_id = _unescape_token(elems[2][1], 0)
        elif tag == b"ANCHOR":
            if len(elems) != 3:
                raise ParseError("malformed ANCHOR", off)
            orderer = _unescape_token(elems[1][1], 0)
            baseline_prev = _b64_strict(elems[2][1], elems[2][0])
        elif tag == b"BASE":
            if len(elems) != 5:
                raise ParseError("malformed BASE", off)
            cnt = _unescape_token(elems[1][1], 0)
            try:
                st = LifecycleState(_unescape_token(elems[2][1], 0))
            except ValueError:
                raise ParseError("unknown lifecycle state", elems[2][0]) from None
            baseline[cnt] = ContainerAsset(
                cnt, st, _unescape_token(elems[3][1], 0), _unescape_token(elems[4][1], 0)
            )
        elif tag == b"CERT":
            cert = cert_from_wire(line)
            certs[cert.subject] = cert
        elif tag == b"BLK":
            flush()
            if len(elems) != 4 or not elems[1][1].isdigit():
                raise ParseError("malformed BLK", off)
            current = (
                int(elems[1][1]),
                _b64_strict(elems[2][1], elems[2][0]),
                _b64_strict(elems[3][1], elems[3][0]),
            )
        elif tag == b"TXN":
            if current is None:
                raise ParseError("TXN before any BLK", off)
            txns.append(_parse_txn(elems, off, certs))
        else:
            raise ParseError(f"unknown chain record {tag!r}", off)
    flush()

    if suite_id is None or orderer is None:
        raise ParseError("chain lacks LEDGER/ANCHOR header", 0)
    return ExportedChain(suite_id, orderer, baseline_prev, baseline, certs, tuple(blocks))


def _parse_txn(elems, off: int, certs: Mapping[str, Certificate]) -> Transaction:
    if len(elems) < 7:
        raise ParseError("malformed TXN", off)
    try:
        action = LedgerAction(_unescape_token(elems[1][1], 0))
    except ValueError:
        raise ParseError("unknown ledger action", elems[1][0]) from None
    cnt_no = _unescape_token(elems[2][1], 0)
    subject = _unescape_token(elems[3][1], 0)
    if not elems[4][1].isdigit():
        raise ParseError("invoker serial must be an integer", elems[4][0])
    serial = int(elems[4][1])
    invoker_sig = _b64_strict(elems[5][1], elems[5][0])
    if not elems[6][1].isdigit():
        raise ParseError("argument count must be an integer", elems[6][0])
    argc = int(elems[6][1])
    pos = 7
    if len(elems) < pos + 2 * argc + 1:
        raise ParseError("argument list truncated", off)
    args = tuple(
        (_unescape_token(elems[pos + 2 * i][1], 0), _unescape_token(elems[pos + 2 * i + 1][1], 0))
        for i in range(argc)
    )
    pos += 2 * argc
    if not elems[pos][1].isdigit():
        raise ParseError("endorsement count must be an integer", elems[pos][0])
    endc = int(elems[pos][1])
    pos += 1
    if len(elems) != pos + 2 * endc:
        raise ParseError("endorsement list length mismatch", off)
    endorsements = tuple(
        (
            _unescape_token(elems[pos + 2 * i][1], 0),
            _b64_strict(elems[pos + 2 * i + 1][1], elems[pos + 2 * i + 1][0]),
        )
        for i in range(endc)
    )
    invoker = certs.get(subject)
    if invoker is None:
        raise ParseError(f"transaction invoker {subject} has no certificate record", off)
    if invoker.serial != serial:
        raise ParseError(f"certificate serial mismatch for {subject}", off)
    return Transaction(invoker, action, cnt_no, args, invoker_sig, endorsements)


def verify_exported(
    exported: ExportedChain,
    endorsement_policy: EndorsementPolicy | None = None,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> ChainVerification:
    """Full offline audit: certificate integrity, hash links, orderer and
    transaction signatures, endorsement quotas, and gate-respecting replay."""
    policy = endorsement_policy or EndorsementPolicy.default()
    if exported.suite_id != suite.suite_id:
        return ChainVerification(False, None, f"suite mismatch: {exported.suite_id}")

    for cert in exported.certs.values():
        issuer = exported.certs.get(cert.issuer)
        if issuer is None:
            return ChainVerification(False, None, f"{cert.subject}: issuer {cert.issuer} missing")
        if not suite.verify(
            issuer.public_key, suite.digest(cert.body_bytes()), cert.signature
        ):
            return ChainVerification(False, None, f"{cert.subject}: certificate signature broken")

    orderer_cert = exported.certs.get(exported.orderer_identity)
    if orderer_cert is None:
        return ChainVerification(False, None, "orderer certificate missing")

    if not exported.blocks:
        return ChainVerification(False, None, "empty chain")
    state = dict(exported.baseline_state)
    for pos, block in enumerate(exported.blocks):
        idx = block.index
        if idx != pos:
            return ChainVerification(False, idx, "non-consecutive block index")
        expected_prev = exported.baseline_prev if pos == 0 else suite.digest(
            block_bytes(exported.blocks[pos - 1])
        )
        if block.prev_hash != expected_prev:
            return ChainVerification(False, idx, "previous-hash link broken")
        payload = suite.digest(_block_body(idx, block.prev_hash, block.transactions))
        if not suite.verify(orderer_cert.public_key, payload, block.orderer_signature):
            return ChainVerification(False, idx, "orderer signature broken")
        for tx in block.transactions:
            if not suite.verify(
                tx.invoker.public_key, suite.digest(tx.body_bytes()), tx.invoker_signature
            ):
                return ChainVerification(False, idx, f"invoker signature broken on {tx.cnt_no}")
            if len(tx.endorsements) < policy.required[tx.action]:
                return ChainVerification(False, idx, f"under-endorsed {tx.action.value}")
            end_payload = suite.digest(tx.body_bytes() + tx.invoker_signature)
            for ident, sig in tx.endorsements:
                cert = exported.certs.get(ident)
                if cert is None:
                    return ChainVerification(False, idx, f"endorser {ident} has no certificate")
                if not suite.verify(cert.public_key, end_payload, sig):
                    return ChainVerification(False, idx, f"endorsement by {ident} broken")
            try:
                _gate(tx, state)
            except LedgerError as exc:
                return ChainVerification(False, idx, f"replay gate failure: {exc}")
            _apply(tx, state)
    return ChainVerification(True)


def verify_chain(net: LedgerNet) -> ChainVerification:
    """Audit the live net and confirm the world state is the replay."""
    exported = parse_chain(export_chain(net))
    res = verify_exported(exported, net.endorsement_policy, net.suite)
    if not res.valid:
        return res
    state = dict(net.baseline_state)
    for block in net.chain:
        for tx in block.transactions:
            _apply(tx, state)
    if state != net.world_state:
        return ChainVerification(False, None, "world state does not match replay")
    return ChainVerification(True)


def rollover(net: LedgerNet) -> LedgerNet:
    """Start a successor chain whose genesis commits to the predecessor:
    the new genesis prev_hash is the digest of the old world state, which
    becomes the new baseline."""
    state_digest = net.suite.digest(
        b"".join(
            b"+".join(
                [_escape_token(a.cnt_no), a.state.value.encode(),
                 _escape_token(a.shipping_line), _escape_token(a.terminal)]
            )
            + b"'"
            for a in (net.world_state[k] for k in sorted(net.world_state))
        )
    )
    return create_net(
        net.organizations,
        net.orderer_identity,
        net.orderer_key,
        net.directory,
        net.trust_anchor,
        net.ca_registry,
        net.endorsement_policy,
        net.suite,
        baseline_state=net.world_state,
        genesis_prev=state_digest,
    )
