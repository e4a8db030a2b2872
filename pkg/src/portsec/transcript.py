"""Run transcripts: the ordered evidence trail of a scenario run.

A transcript records every message sent (full wire bytes), every
validation verdict, every ledger action, and the closing audit rows.
Replaying a script over the same fixtures reproduces the transcript
byte-for-byte except for sealing randomness (fresh symmetric keys and
their wrappings), which the determinism digest masks out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .adapter import ValidationReport, report_to_wire
from .envelope import DEFAULT_SUITE, CryptoSuite
from .model import (
    Message,
    ParseError,
    Sealed,
    SecuredMessage,
    _b64,
    _b64_strict,
    _escape_token,
    _split_elements,
    _split_segments,
    _unescape_token,
    from_flat,
    to_flat,
)

TRANSCRIPT_VERSION = "1"


@dataclass(frozen=True)
class SentEvent:
    step: str
    sender: str
    receiver: str
    msg_type: str
    instance_id: str
    flat: bytes


@dataclass(frozen=True)
class ValidatedEvent:
    actor: str
    msg_type: str
    instance_id: str
    verdict: str
    report: ValidationReport | None = None  # live runs only; never on the wire
    report_wire: bytes = b""  # findings as serialized by the validator


@dataclass(frozen=True)
class LedgerEvent:
    action: str
    cnt_no: str
    invoker: str
    outcome: str  # COMMITTED | PENDING | VISIBLE | denial class name
    detail: str = ""


@dataclass(frozen=True)
class AuditEvent:
    actor: str
    attributes: tuple[str, ...]
    flagged: bool


Event = SentEvent | ValidatedEvent | LedgerEvent | AuditEvent

#: Ledger outcomes that do not count against the run verdict.
BENIGN_OUTCOMES = {"COMMITTED", "PENDING", "VISIBLE", "VALID"}


@dataclass
class Transcript:
    scenario: str
    mode: str  # "p2p" | "ledger"
    actors: dict[str, str] = field(default_factory=dict)  # identity -> role token
    events: list[Event] = field(default_factory=list)

    def sent(self, step, sender, receiver, sm: SecuredMessage) -> SentEvent:
        ev = SentEvent(
            step, sender, receiver, sm.message.msg_type, sm.message.instance_id, to_flat(sm)
        )
        self.events.append(ev)
        return ev

    def validated(self, actor: str, sm: SecuredMessage, report: ValidationReport) -> None:
        self.events.append(
            ValidatedEvent(
                actor, sm.message.msg_type, sm.message.instance_id,
                report.verdict, report, report_to_wire(report),
            )
        )

    def ledger(self, action, cnt_no, invoker, outcome, detail="") -> None:
        self.events.append(LedgerEvent(str(action), cnt_no, invoker, outcome, detail))

    def audit(self, actor: str, attributes, flagged: bool) -> None:
        self.events.append(AuditEvent(actor, tuple(sorted(attributes)), flagged))

    @property
    def verdict(self) -> str:
        for ev in self.events:
            if isinstance(ev, ValidatedEvent) and ev.verdict != "ACCEPT":
                return "FAIL"
            if isinstance(ev, LedgerEvent) and ev.outcome not in BENIGN_OUTCOMES:
                return "FAIL"
            if isinstance(ev, AuditEvent) and ev.flagged:
                return "FAIL"
        return "PASS"

    def rejects(self) -> list[ValidatedEvent]:
        return [
            ev for ev in self.events
            if isinstance(ev, ValidatedEvent) and ev.verdict != "ACCEPT"
        ]

    def sent_events(self) -> list[SentEvent]:
        return [ev for ev in self.events if isinstance(ev, SentEvent)]

    def ledger_events(self) -> list[LedgerEvent]:
        return [ev for ev in self.events if isinstance(ev, LedgerEvent)]

    def step_outline(self) -> list[tuple[str, ...]]:
        """Compact shape of the run, for golden-sequence comparison."""
        out: list[tuple[str, ...]] = []
        for ev in self.events:
            if isinstance(ev, SentEvent):
                out.append(("SENT", ev.step, ev.sender, ev.receiver, ev.msg_type))
            elif isinstance(ev, ValidatedEvent):
                out.append(("VALIDATED", ev.actor, ev.msg_type, ev.verdict))
            elif isinstance(ev, LedgerEvent):
                out.append(("LEDGER", ev.action, ev.invoker, ev.outcome))
        return out


def transcript_to_wire(t: Transcript) -> bytes:
    lines = [
        b"+".join(
            [b"TRS", TRANSCRIPT_VERSION.encode(), _escape_token(t.scenario),
             _escape_token(t.mode), t.verdict.encode()]
        )
        + b"'"
    ]
    for ident in sorted(t.actors):
        lines.append(
            b"ACT+" + _escape_token(ident) + b"+" + _escape_token(t.actors[ident]) + b"'"
        )
    for ev in t.events:
        if isinstance(ev, SentEvent):
            lines.append(
                b"+".join(
                    [b"EVT", b"SENT", _escape_token(ev.step), _escape_token(ev.sender),
                     _escape_token(ev.receiver), _escape_token(ev.msg_type),
                     _escape_token(ev.instance_id), _b64(ev.flat)]
                )
                + b"'"
            )
        elif isinstance(ev, ValidatedEvent):
            report = _b64(ev.report_wire) if ev.report_wire else b""
            lines.append(
                b"+".join(
                    [b"EVT", b"VALIDATED", _escape_token(ev.actor),
                     _escape_token(ev.msg_type), _escape_token(ev.instance_id),
                     ev.verdict.encode(), report]
                )
                + b"'"
            )
        elif isinstance(ev, LedgerEvent):
            lines.append(
                b"+".join(
                    [b"EVT", b"LEDGER", _escape_token(ev.action), _escape_token(ev.cnt_no),
                     _escape_token(ev.invoker), _escape_token(ev.outcome),
                     _escape_token(ev.detail)]
                )
                + b"'"
            )
        else:
            lines.append(
                b"+".join(
                    [b"EVT", b"AUDIT", _escape_token(ev.actor),
                     _escape_token(",".join(ev.attributes)),
                     b"FLAG" if ev.flagged else b"OK"]
                )
                + b"'"
            )
    return b"\n".join(lines) + b"\n"


def transcript_from_wire(data: bytes) -> Transcript:
    """Reload a stored transcript. Validation reports come back as the
    serialized findings; live report objects do not survive the wire."""
    t: Transcript | None = None
    for line in data.splitlines():
        if not line:
            continue
        segs = _split_segments(line)
        if len(segs) != 1:
            raise ParseError("one transcript record per line expected", 0)
        off, seg = segs[0]
        elems = _split_elements(seg, off)
        tag = elems[0][1]
        if tag == b"TRS":
            if len(elems) != 5 or elems[1][1] != TRANSCRIPT_VERSION.encode():
                raise ParseError("unsupported transcript header", off)
            t = Transcript(_unescape_token(elems[2][1], 0), _unescape_token(elems[3][1], 0))
        elif tag == b"ACT":
            if t is None or len(elems) != 3:
                raise ParseError("malformed ACT record", off)
            t.actors[_unescape_token(elems[1][1], 0)] = _unescape_token(elems[2][1], 0)
        elif tag == b"EVT":
            if t is None:
                raise ParseError("event before transcript header", off)
            kind = elems[1][1]
            texts = [_unescape_token(e[1], e[0]) for e in elems[2:]]
            if kind == b"SENT" and len(elems) == 8:
                t.events.append(
                    SentEvent(*texts[:5], flat=_b64_strict(elems[7][1], elems[7][0]))
                )
            elif kind == b"VALIDATED" and len(elems) == 7:
                wire = _b64_strict(elems[6][1], elems[6][0]) if elems[6][1] else b""
                t.events.append(
                    ValidatedEvent(texts[0], texts[1], texts[2], texts[3],
                                   report_wire=wire)
                )
            elif kind == b"LEDGER" and len(elems) == 7:
                t.events.append(LedgerEvent(*texts))
            elif kind == b"AUDIT" and len(elems) == 5:
                attrs = tuple(a for a in texts[1].split(",") if a)
                t.events.append(AuditEvent(texts[0], attrs, texts[2] == "FLAG"))
            else:
                raise ParseError(f"malformed event {kind!r}", off)
        else:
            raise ParseError(f"unknown transcript record {tag!r}", off)
    if t is None:
        raise ParseError("empty transcript", 0)
    return t


def _mask_randomness(sm: SecuredMessage) -> SecuredMessage:
    """Blank the bytes that legitimately differ between replays: sealed
    ciphertexts and wrapped keys. Digests and reader lists stay."""
    fields = []
    for name, value in sm.message.fields:
        if isinstance(value, Sealed):
            value = Sealed(value.digest, b"", {r: b"" for r in value.wrapped_keys})
        fields.append((name, value))
    return SecuredMessage(
        Message(sm.message.msg_type, sm.message.instance_id, tuple(fields)),
        sm.signatures,
        sm.sender,
    )


def determinism_digest(t: Transcript, suite: CryptoSuite = DEFAULT_SUITE) -> bytes:
    """Digest of the transcript with fresh-randomness bytes excluded;
    equal across replays of one script over one fixture set."""
    acc = [t.scenario.encode(), t.mode.encode(), t.verdict.encode()]
    for ev in t.events:
        if isinstance(ev, SentEvent):
            masked = to_flat(_mask_randomness(from_flat(ev.flat)))
            acc.append(b"SENT|" + ev.step.encode() + b"|" + ev.receiver.encode() + b"|" + masked)
        elif isinstance(ev, ValidatedEvent):
            acc.append(f"VALIDATED|{ev.actor}|{ev.msg_type}|{ev.verdict}".encode())
        elif isinstance(ev, LedgerEvent):
            acc.append(
                f"LEDGER|{ev.action}|{ev.cnt_no}|{ev.invoker}|{ev.outcome}".encode()
            )
        else:
            acc.append(
                ("AUDIT|%s|%s|%d" % (ev.actor, ",".join(ev.attributes), ev.flagged)).encode()
            )
    return suite.digest(b"\x1e".join(acc))
