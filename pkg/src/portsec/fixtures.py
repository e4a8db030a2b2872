"""Scenario fixtures: actors, keys, certificates, and consignment data.

A fixture set pins every input a scenario run needs, including private
keys, so repeated runs are reproducible: signatures are deterministic
given fixed keys, leaving sealing randomness as the only varying bytes.
Fixture files are line-oriented UTF-8 in the flat segment style.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING

from .adapter import AdapterState
from .envelope import DEFAULT_SUITE, CryptoSuite, KeyPair
from .model import ParseError, _b64, _b64_strict, _escape_token, _split_elements, _split_segments, _unescape_token
from .pki import CA_ROLE, CaState, Certificate, cert_from_wire, cert_to_wire, create_root, create_subordinate
from .policy import AccessMatrix, Role, default_matrix

if TYPE_CHECKING:  # pragma: no cover
    from .ledger import EndorsementPolicy, LedgerNet

FIXTURE_VERSION = "1"

#: Validity windows (logical time) for the three certificate tiers.
ROOT_VALIDITY = (0, 1_000_000)
CA_VALIDITY = (0, 500_000)
LEAF_VALIDITY = (0, 400_000)

#: Role token for the ledger's ordering service identity.
ORDERER_ROLE = "ORDERER"

DEFAULT_VALUES = {
    "B_NO": "BKG-7401",
    "BL_NO": "BL-55821",
    "CNT_NO": "COSU1234567",
    "CNT_C": "400 cartons machine parts",
    "CNT_W": "18400 kg",
    "CSG_DATA": "consignee ACME Imports, notify NordFreight GmbH",
    "DG": "false",
    "CNT_LOC": "YARD-B12",
    "ATB_NO": "ATB-990133",
    "CLR": "CLEARED",
}

#: (identity, role token, organization). One organization CA each.
DEFAULT_ACTORS = (
    ("importer-1", Role.IMPORTER.value, "IMP1"),
    ("sl1-clerk", Role.SHIPPING_LINE.value, "SL1"),
    ("sl2-clerk", Role.SHIPPING_LINE.value, "SL2"),
    ("pcs-op", Role.PCS.value, "PCS1"),
    ("t1-op", Role.TERMINAL.value, "T1"),
    ("t2-op", Role.TERMINAL.value, "T2"),
    ("customs-officer", Role.CUSTOMS.value, "CUST"),
    ("pa-officer", Role.PORT_AUTHORITY.value, "PA"),
    ("orderer-1", ORDERER_ROLE, "ORD"),
)

ROOT_CA = "PortRoot"


class FixtureError(Exception):
    pass


class FixtureIncomplete(FixtureError):
    """A scenario prerequisite (actor, key, cert, value) is missing."""


@dataclass(frozen=True)
class ActorRecord:
    identity: str
    role: str
    org: str


@dataclass(frozen=True)
class FixtureSet:
    suite_id: str
    run_tag: str
    cas: tuple[tuple[str, str | None], ...]  # (name, parent), root first
    actors: tuple[ActorRecord, ...]
    keys: dict[str, bytes]  # identity -> PKCS8 DER private key
    certs: dict[str, Certificate]
    values: dict[str, str]

    @property
    def dangerous_goods(self) -> bool:
        return self.values.get("DG", "false") == "true"

    def actor(self, identity: str) -> ActorRecord:
        for a in self.actors:
            if a.identity == identity:
                return a
        raise FixtureIncomplete(f"no actor {identity}")

    def by_role(self, role: str) -> ActorRecord:
        """The first actor holding a role; scenario scripts address the
        primary organization of each role."""
        for a in self.actors:
            if a.role == role:
                return a
        raise FixtureIncomplete(f"no actor with role {role}")

    def with_values(self, run_tag: str | None = None, **overrides: str) -> "FixtureSet":
        """Same world, different run tag / consignment values (used to set
        up second runs for replay experiments)."""
        return replace(
            self,
            run_tag=run_tag or self.run_tag,
            values={**self.values, **overrides},
        )

    def organizations(self) -> tuple[tuple[str, str], ...]:
        """Deduplicated (org, role) pairs, fixture order."""
        seen: dict[str, str] = {}
        for a in self.actors:
            seen.setdefault(a.org, a.role)
        return tuple(seen.items())


def generate_fixtures(
    run_tag: str = "R1",
    values: dict[str, str] | None = None,
    actors: tuple[tuple[str, str, str], ...] = DEFAULT_ACTORS,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> FixtureSet:
    """Fresh keys and certificates for the default desk-scale world:
    one root CA, one CA per organization, one clerk per actor."""
    root = create_root(ROOT_CA, ROOT_VALIDITY, suite)
    cas: list[tuple[str, str | None]] = [(ROOT_CA, None)]
    keys = {ROOT_CA: suite.private_bytes(root.key_pair.private)}
    certs = {ROOT_CA: root.cert}
    ca_states = {ROOT_CA: root}

    records = tuple(ActorRecord(*a) for a in actors)
    for org in dict.fromkeys(a.org for a in records):
        ca_name = f"{org}-CA"
        ca = create_subordinate(root, ca_name, CA_VALIDITY, suite)
        cas.append((ca_name, ROOT_CA))
        keys[ca_name] = suite.private_bytes(ca.key_pair.private)
        certs[ca_name] = ca.cert
        ca_states[ca_name] = ca

    for a in records:
        kp = suite.generate_keypair(a.identity)
        keys[a.identity] = suite.private_bytes(kp.private)
        certs[a.identity] = ca_states[f"{a.org}-CA"].issue(
            a.identity, a.org, a.role, suite.public_bytes(kp.public), LEAF_VALIDITY
        )

    return FixtureSet(
        suite_id=suite.suite_id,
        run_tag=run_tag,
        cas=tuple(cas),
        actors=records,
        keys=keys,
        certs=certs,
        values=dict(values or DEFAULT_VALUES),
    )


# --- file form ---------------------------------------------------------------


def fixtures_to_bytes(fx: FixtureSet) -> bytes:
    # Records are line-oriented; the escape mechanism covers + ' ? only.
    for text in (fx.run_tag, *fx.values.values(), *fx.values):
        if "\n" in text or "\r" in text:
            raise FixtureError(f"newline in fixture token {text!r}")
    lines = [
        b"FIX+" + FIXTURE_VERSION.encode() + b"+" + _escape_token(fx.suite_id) + b"'",
        b"RUN+" + _escape_token(fx.run_tag) + b"'",
    ]
    for name, parent in fx.cas:
        lines.append(
            b"CA+" + _escape_token(name) + b"+" + _escape_token(parent or "-") + b"'"
        )
    for a in fx.actors:
        lines.append(
            b"+".join(
                [b"ACTOR", _escape_token(a.identity), _escape_token(a.role), _escape_token(a.org)]
            )
            + b"'"
        )
    for ident in sorted(fx.keys):
        lines.append(b"KEY+" + _escape_token(ident) + b"+" + _b64(fx.keys[ident]) + b"'")
    for ident in sorted(fx.certs):
        lines.append(cert_to_wire(fx.certs[ident]))
    for attr in sorted(fx.values):
        lines.append(
            b"VAL+" + _escape_token(attr) + b"+" + _escape_token(fx.values[attr]) + b"'"
        )
    return b"\n".join(lines) + b"\n"


def fixtures_from_bytes(data: bytes) -> FixtureSet:
    suite_id = run_tag = None
    cas: list[tuple[str, str | None]] = []
    actors: list[ActorRecord] = []
    keys: dict[str, bytes] = {}
    certs: dict[str, Certificate] = {}
    values: dict[str, str] = {}

    for raw_line in data.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        segs = _split_segments(line)
        if len(segs) != 1:
            raise ParseError("one record per line expected", 0)
        off, seg = segs[0]
        elems = _split_elements(seg, off)
        tag = elems[0][1]
        if tag == b"FIX":
            if len(elems) != 3 or _unescape_token(elems[1][1], 0) != FIXTURE_VERSION:
                raise ParseError("unsupported fixture header", off)
            suite_id = _unescape_token(elems[2][1], 0)
        elif tag == b"RUN":
            run_tag = _unescape_token(elems[1][1], 0)
        elif tag == b"CA":
            name = _unescape_token(elems[1][1], 0)
            parent = _unescape_token(elems[2][1], 0)
            cas.append((name, None if parent == "-" else parent))
        elif tag == b"ACTOR":
            actors.append(
                ActorRecord(*(_unescape_token(e[1], e[0]) for e in elems[1:4]))
            )
        elif tag == b"KEY":
            keys[_unescape_token(elems[1][1], 0)] = _b64_strict(elems[2][1], elems[2][0])
        elif tag == b"CERT":
            cert = cert_from_wire(line)
            certs[cert.subject] = cert
        elif tag == b"VAL":
            values[_unescape_token(elems[1][1], 0)] = _unescape_token(elems[2][1], elems[2][0])
        else:
            raise ParseError(f"unknown fixture record {tag!r}", off)

    if suite_id is None or run_tag is None:
        raise ParseError("fixture file lacks FIX/RUN header", 0)
    return FixtureSet(suite_id, run_tag, tuple(cas), tuple(actors), keys, certs, values)


def save_fixtures(fx: FixtureSet, path: str | Path) -> None:
    Path(path).write_bytes(fixtures_to_bytes(fx))


def load_fixtures(path: str | Path) -> FixtureSet:
    return fixtures_from_bytes(Path(path).read_bytes())


# --- world construction ------------------------------------------------------


@lru_cache(maxsize=128)
def _load_private_cached(suite: CryptoSuite, der: bytes):
    # Key objects are immutable; reloading the same fixture DER per world
    # rebuild would redo an expensive consistency check every time.
    return suite.load_private(der)


@dataclass
class World:
    """Runtime actor mesh rebuilt from a fixture set."""

    fixtures: FixtureSet
    suite: CryptoSuite
    matrix: AccessMatrix
    root_anchor: Certificate
    ca_registry: dict[str, CaState]
    directory: dict[str, tuple[Certificate, tuple[Certificate, ...]]]
    key_pairs: dict[str, KeyPair]
    adapters: dict[str, AdapterState] = field(default_factory=dict)

    def adapter(self, identity: str) -> AdapterState:
        return self.adapters[identity]

    def adapter_by_role(self, role: Role) -> AdapterState:
        return self.adapters[self.fixtures.by_role(role.value).identity]

    def chain_of(self, identity: str) -> tuple[Certificate, ...]:
        """Leaf-first chain up to and including the root."""
        chain = [self.directory_cert(identity)]
        while chain[-1].issuer != chain[-1].subject:
            chain.append(self.directory_cert(chain[-1].issuer))
        return tuple(chain)

    def directory_cert(self, identity: str) -> Certificate:
        try:
            return self.fixtures.certs[identity]
        except KeyError:
            raise FixtureIncomplete(f"no certificate for {identity}") from None

    def set_clocks(self, at: int) -> None:
        for a in self.adapters.values():
            a.clock = at


def build_world(
    fx: FixtureSet,
    matrix: AccessMatrix | None = None,
    suite: CryptoSuite = DEFAULT_SUITE,
    nonce_reuse_rejects: bool = False,
) -> World:
    """Reconstruct CA states, the certificate directory, and one adapter
    per actor from a fixture set."""
    if fx.suite_id != suite.suite_id:
        raise FixtureIncomplete(f"fixtures pin suite {fx.suite_id}, runtime has {suite.suite_id}")
    matrix = matrix or default_matrix()

    key_pairs: dict[str, KeyPair] = {}
    for ident, der in fx.keys.items():
        private = _load_private_cached(suite, der)
        key_pairs[ident] = KeyPair(private.public_key(), private, ident)

    ca_registry: dict[str, CaState] = {}
    for name, parent in fx.cas:
        cert = fx.certs.get(name)
        if cert is None or name not in key_pairs:
            raise FixtureIncomplete(f"CA {name} lacks key or certificate")
        issued = sorted(c.serial for c in fx.certs.values() if c.issuer == name)
        ca_registry[name] = CaState(
            key_pairs[name], cert, issued=issued, parent=parent, suite=suite
        )

    root_anchor = fx.certs.get(ROOT_CA)
    if root_anchor is None:
        raise FixtureIncomplete("no root certificate")

    directory: dict[str, tuple[Certificate, tuple[Certificate, ...]]] = {}
    world = World(fx, suite, matrix, root_anchor, ca_registry, directory, key_pairs)
    for a in fx.actors:
        if a.identity not in fx.certs or a.identity not in key_pairs:
            raise FixtureIncomplete(f"actor {a.identity} lacks key or certificate")
        full = world.chain_of(a.identity)
        directory[a.identity] = (full[0], full[1:])

    for a in fx.actors:
        try:
            role = Role(a.role)
        except ValueError:
            continue  # orderer and similar non-policy identities
        world.adapters[a.identity] = AdapterState(
            identity=a.identity,
            role=role,
            key_pair=key_pairs[a.identity],
            cert_chain=world.chain_of(a.identity),
            matrix=matrix,
            trust_anchor=root_anchor,
            ca_registry=ca_registry,
            directory=directory,
            nonce_reuse_rejects=nonce_reuse_rejects,
            suite=suite,
        )
    return world


def build_net(world: World, endorsement_policy: EndorsementPolicy | None = None) -> LedgerNet:
    """Ledger net over the same PKI and directory as the adapter mesh."""
    from .ledger import create_net

    orderer = world.fixtures.by_role(ORDERER_ROLE)
    return create_net(
        organizations=world.fixtures.organizations(),
        orderer_identity=orderer.identity,
        orderer_key=world.key_pairs[orderer.identity],
        directory=world.directory,
        trust_anchor=world.root_anchor,
        ca_registry=world.ca_registry,
        endorsement_policy=endorsement_policy,
        suite=world.suite,
    )
