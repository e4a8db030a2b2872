"""Global access-control matrix and per-message protection plans.

The matrix assigns each (role, attribute) pair one of NONE / R / RW. Read
permissions drive confidentiality (who may see a value in plaintext, and
therefore which representation an attribute takes on the wire); write
permissions drive integrity (whose signature can vouch for an attribute).

A protection plan answers, for a concrete send: which attributes travel
PLAIN, which are SEALED and for whom, which are reduced to HASH_ONLY, and
which roles' signatures must cover each attribute.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .model import CORE_ATTRIBUTES, InvariantViolation, validate_attribute_name


class Role(str, enum.Enum):
    IMPORTER = "IMPORTER"
    SHIPPING_LINE = "SHIPPING_LINE"
    PCS = "PCS"
    TERMINAL = "TERMINAL"
    CUSTOMS = "CUSTOMS"
    PORT_AUTHORITY = "PORT_AUTHORITY"


#: Table rows of the core matrix; PORT_AUTHORITY is an extension role.
CORE_ROLES = (Role.IMPORTER, Role.SHIPPING_LINE, Role.PCS, Role.TERMINAL, Role.CUSTOMS)


class Permission(str, enum.Enum):
    NONE = "-"
    READ = "R"
    READ_WRITE = "RW"


class Action(str, enum.Enum):
    READ = "READ"
    WRITE = "WRITE"


class PolicyError(Exception):
    """Base class for policy errors."""


class PolicyParseError(PolicyError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MissingEntry(PolicyError):
    """A core (role, attribute) cell is absent from the document."""


class NoWriterForAttribute(PolicyError):
    """No role holds RW on an attribute, so nobody could ever author it."""


class UnknownEntry(PolicyError):
    """Query against a role or attribute the matrix does not know."""


class SenderCannotRead(PolicyError):
    """A plan would have the sender transmit plaintext it may not hold."""


class PlanKind(str, enum.Enum):
    PLAIN = "PLAIN"
    HASH_ONLY = "HASH_ONLY"
    SEALED = "SEALED"


@dataclass(frozen=True)
class Decision:
    """Wire representation chosen for one attribute."""

    kind: PlanKind
    readers: frozenset[Role] = frozenset()

    def __post_init__(self):
        if self.kind is PlanKind.SEALED and not self.readers:
            raise InvariantViolation("SEALED decision needs at least one reader")
        if self.kind is not PlanKind.SEALED and self.readers:
            raise InvariantViolation(f"{self.kind.value} decision carries no readers")


@dataclass(frozen=True)
class AccessMatrix:
    """Immutable permission table over roles x attributes."""

    entries: Mapping[tuple[Role, str], Permission]
    attributes: tuple[str, ...]

    def permission(self, role: Role, attribute: str) -> Permission:
        try:
            return self.entries[(Role(role), attribute)]
        except (KeyError, ValueError):
            raise UnknownEntry(f"no entry for ({role}, {attribute})") from None

    def check(self, role: Role, attribute: str, action: Action) -> bool:
        p = self.permission(role, attribute)
        if Action(action) is Action.READ:
            return p in (Permission.READ, Permission.READ_WRITE)
        return p is Permission.READ_WRITE

    def writers_of(self, attribute: str) -> frozenset[Role]:
        if attribute not in self.attributes:
            raise UnknownEntry(f"unknown attribute {attribute}")
        return frozenset(
            r for r in Role if self.entries[(r, attribute)] is Permission.READ_WRITE
        )

    def readers_of(self, attribute: str) -> frozenset[Role]:
        if attribute not in self.attributes:
            raise UnknownEntry(f"unknown attribute {attribute}")
        return frozenset(
            r for r in Role if self.entries[(r, attribute)] is not Permission.NONE
        )


@dataclass(frozen=True)
class ProtectionPlan:
    """Per-attribute wire decisions plus the signature duties they imply.

    ``carried_signature_requirements`` lists one (role, reason) pair per
    eligible writer per attribute: any one of the listed roles satisfies
    the write-coverage duty its reason names.
    """

    decisions: tuple[tuple[str, Decision], ...]
    required_writer_roles: tuple[tuple[str, frozenset[Role]], ...]
    carried_signature_requirements: frozenset[tuple[Role, str]]

    def decision(self, attribute: str) -> Decision:
        for name, d in self.decisions:
            if name == attribute:
                return d
        raise KeyError(attribute)

    def writers(self, attribute: str) -> frozenset[Role]:
        for name, ws in self.required_writer_roles:
            if name == attribute:
                return ws
        raise KeyError(attribute)

    def serialize(self) -> bytes:
        """Deterministic line form, one PLAN segment per attribute."""
        lines = []
        for name, d in self.decisions:
            readers = ",".join(sorted(r.value for r in d.readers))
            writers = ",".join(sorted(r.value for r in self.writers(name)))
            lines.append(f"PLAN+{name}+{d.kind.value}+{readers}+{writers}'")
        return "\n".join(lines).encode("utf-8") + b"\n"


def load_policy(document: bytes | str) -> AccessMatrix:
    """Parse `<ROLE> <ATTRIBUTE> <R|RW|->` lines into a total matrix.

    Unlisted cells of attributes that do appear default to NONE; the five
    core roles must be given explicitly for every core attribute, and every
    attribute must end up with at least one writer.
    """
    text = document.decode("utf-8") if isinstance(document, bytes) else document
    given: dict[tuple[Role, str], Permission] = {}
    attributes: list[str] = list(CORE_ATTRIBUTES)

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 3:
            raise PolicyParseError(f"expected 3 tokens, got {len(tokens)}", line_no)
        role_tok, attr, perm_tok = tokens
        try:
            role = Role(role_tok)
        except ValueError:
            raise PolicyParseError(f"unknown role {role_tok!r}", line_no) from None
        try:
            validate_attribute_name(attr)
        except InvariantViolation as exc:
            raise PolicyParseError(str(exc), line_no) from None
        try:
            perm = Permission(perm_tok)
        except ValueError:
            raise PolicyParseError(
                f"permission must be R, RW or -, got {perm_tok!r}", line_no
            ) from None
        if (role, attr) in given:
            raise PolicyParseError(f"duplicate entry for ({role.value}, {attr})", line_no)
        given[(role, attr)] = perm
        if attr not in attributes:
            attributes.append(attr)

    for role in CORE_ROLES:
        for attr in CORE_ATTRIBUTES:
            if (role, attr) not in given:
                raise MissingEntry(f"core cell ({role.value}, {attr}) absent")

    entries = {
        (role, attr): given.get((role, attr), Permission.NONE)
        for role in Role
        for attr in attributes
    }
    matrix = AccessMatrix(entries, tuple(attributes))
    for attr in attributes:
        if not matrix.writers_of(attr):
            raise NoWriterForAttribute(f"no role holds RW on {attr}")
    return matrix


def check(matrix: AccessMatrix, role: Role, attribute: str, action: Action) -> bool:
    return matrix.check(role, attribute, action)


def writers_of(matrix: AccessMatrix, attribute: str) -> frozenset[Role]:
    return matrix.writers_of(attribute)


def readers_of(matrix: AccessMatrix, attribute: str) -> frozenset[Role]:
    return matrix.readers_of(attribute)


def protection_plan(
    matrix: AccessMatrix,
    sender: Role,
    receiver: Role,
    downstream_readers: Iterable[Role],
    attributes: Sequence[str],
) -> ProtectionPlan:
    """Choose a wire representation per attribute for one send.

    PLAIN if the receiver may read; otherwise SEALED for the downstream
    parties that may read; otherwise HASH_ONLY. The sender must itself
    hold read permission on anything it would emit as PLAIN or SEALED,
    since both require the plaintext in hand.
    """
    downstream = frozenset(Role(r) for r in downstream_readers)
    decisions: list[tuple[str, Decision]] = []
    writers: list[tuple[str, frozenset[Role]]] = []
    duties: set[tuple[Role, str]] = set()
    for attr in attributes:
        if matrix.check(receiver, attr, Action.READ):
            d = Decision(PlanKind.PLAIN)
        else:
            readers = frozenset(
                r
                for r in downstream
                if r is not Role(receiver) and matrix.check(r, attr, Action.READ)
            )
            d = Decision(PlanKind.SEALED, readers) if readers else Decision(PlanKind.HASH_ONLY)
        if d.kind is not PlanKind.HASH_ONLY and not matrix.check(sender, attr, Action.READ):
            raise SenderCannotRead(
                f"{Role(sender).value} may not read {attr} but would send it {d.kind.value}"
            )
        decisions.append((attr, d))
        ws = matrix.writers_of(attr)
        writers.append((attr, ws))
        duties.update((w, f"write-coverage:{attr}") for w in ws)
    return ProtectionPlan(tuple(decisions), tuple(writers), frozenset(duties))


DEFAULT_POLICY_TEXT = """\
# Global access control policy.
# One triple per line: <ROLE> <ATTRIBUTE> <R|RW|->

# Core attributes.
IMPORTER        B_NO      R
IMPORTER        BL_NO     R
IMPORTER        CNT_C     RW
IMPORTER        CNT_W     RW
IMPORTER        CSG_DATA  RW
IMPORTER        CNT_NO    R

SHIPPING_LINE   B_NO      RW
SHIPPING_LINE   BL_NO     RW
SHIPPING_LINE   CNT_C     R
SHIPPING_LINE   CNT_W     RW
SHIPPING_LINE   CSG_DATA  R
SHIPPING_LINE   CNT_NO    RW

PCS             B_NO      R
PCS             BL_NO     R
PCS             CNT_C     -
PCS             CNT_W     R
PCS             CSG_DATA  -
PCS             CNT_NO    R

TERMINAL        B_NO      R
TERMINAL        BL_NO     R
TERMINAL        CNT_C     -
TERMINAL        CNT_W     R
TERMINAL        CSG_DATA  -
TERMINAL        CNT_NO    R

CUSTOMS         B_NO      -
CUSTOMS         BL_NO     R
CUSTOMS         CNT_C     R
CUSTOMS         CNT_W     R
CUSTOMS         CSG_DATA  R
CUSTOMS         CNT_NO    R

PORT_AUTHORITY  B_NO      -
PORT_AUTHORITY  BL_NO     -
PORT_AUTHORITY  CNT_C     -
PORT_AUTHORITY  CNT_W     -
PORT_AUTHORITY  CSG_DATA  -
PORT_AUTHORITY  CNT_NO    R

# Extension attributes: dangerous-goods flag, container location,
# customs import reference, clearance status.
IMPORTER        DG        RW
SHIPPING_LINE   DG        R
PCS             DG        R
TERMINAL        DG        R
CUSTOMS         DG        R
PORT_AUTHORITY  DG        R

IMPORTER        CNT_LOC   -
SHIPPING_LINE   CNT_LOC   -
PCS             CNT_LOC   R
TERMINAL        CNT_LOC   RW
CUSTOMS         CNT_LOC   -
PORT_AUTHORITY  CNT_LOC   R

IMPORTER        ATB_NO    -
SHIPPING_LINE   ATB_NO    R
PCS             ATB_NO    R
TERMINAL        ATB_NO    R
CUSTOMS         ATB_NO    RW
PORT_AUTHORITY  ATB_NO    -

IMPORTER        CLR       -
SHIPPING_LINE   CLR       R
PCS             CLR       R
TERMINAL        CLR       R
CUSTOMS         CLR       RW
PORT_AUTHORITY  CLR       -
"""


def default_matrix() -> AccessMatrix:
    return load_policy(DEFAULT_POLICY_TEXT)
