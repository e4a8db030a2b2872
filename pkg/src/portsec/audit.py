"""Per-actor confidentiality audit over a run transcript.

Exposure is measured from wire evidence alone: an attribute counts as
seen in plaintext by whoever sent or received it as a Plain field, or
received it sealed with a key wrapped for them. Hash-only values never
count. The audit then holds each actor's exposure against its read
column; anything beyond the column is flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Plain, Sealed, from_flat
from .policy import AccessMatrix, Action, Role, default_matrix
from .transcript import LedgerEvent, SentEvent, Transcript

#: The only attribute a ledger participant learns from the chain itself.
LEDGER_ATTRS = frozenset({"CNT_NO"})


@dataclass(frozen=True)
class AuditResult:
    exposure: dict[str, frozenset[str]]  # identity -> attrs seen in plaintext
    handled: dict[str, frozenset[str]]  # identity -> attrs that transited it
    entitled: dict[str, frozenset[str]]  # identity -> read column (policy roles)
    excess: dict[str, frozenset[str]]  # identity -> exposure beyond the column

    def flagged(self) -> list[str]:
        return sorted(i for i, e in self.excess.items() if e)

    def compliant(self) -> bool:
        return not any(self.excess.values())


def read_column(matrix: AccessMatrix, role: Role) -> frozenset[str]:
    return frozenset(
        a for a in matrix.attributes if matrix.check(role, a, Action.READ)
    )


def audit_views(transcript: Transcript, matrix: AccessMatrix | None = None) -> AuditResult:
    matrix = matrix or default_matrix()
    exposure: dict[str, set[str]] = {}
    handled: dict[str, set[str]] = {}

    def touch(identity: str) -> tuple[set[str], set[str]]:
        return exposure.setdefault(identity, set()), handled.setdefault(identity, set())

    for ev in transcript.events:
        if isinstance(ev, SentEvent):
            sm = from_flat(ev.flat)
            s_exp, s_han = touch(ev.sender)
            r_exp, r_han = touch(ev.receiver)
            for name, value in sm.message.fields:
                s_han.add(name)
                r_han.add(name)
                if isinstance(value, Plain):
                    s_exp.add(name)
                    r_exp.add(name)
                elif isinstance(value, Sealed) and ev.receiver in value.wrapped_keys:
                    r_exp.add(name)
        elif isinstance(ev, LedgerEvent):
            exp, han = touch(ev.invoker)
            exp |= LEDGER_ATTRS
            han |= LEDGER_ATTRS

    entitled: dict[str, frozenset[str]] = {}
    excess: dict[str, frozenset[str]] = {}
    for identity, exposed in exposure.items():
        try:
            role = Role(transcript.actors.get(identity, ""))
        except ValueError:
            entitled[identity] = frozenset()
            excess[identity] = frozenset()
            continue
        column = read_column(matrix, role)
        entitled[identity] = column
        excess[identity] = frozenset(exposed - column)

    return AuditResult(
        exposure={i: frozenset(v) for i, v in exposure.items()},
        handled={i: frozenset(v) for i, v in handled.items()},
        entitled=entitled,
        excess=excess,
    )
