"""Attack injection harness and the two-mode comparison.

The attacker model: an in-transit mutator plus an insider who keeps old
transcripts and their signatures (and, as an insider, owns keys of some
uninvolved organization) but holds no other private keys. Message attacks
mutate a SecuredMessage between sender and receiver; ledger attacks
mutate the serialized chain or push rogue transactions at the chaincode.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from . import envelope
from .adapter import FindingCode, Severity
from .audit import audit_views
from .envelope import DigestView, PlainView, value_digest
from .fixtures import FixtureSet, build_world
from .ledger import (
    LedgerAction,
    LedgerError,
    build_transaction,
    export_chain,
    parse_chain,
    submit,
    verify_exported,
)
from .model import (
    HashOnly,
    ParseError,
    Plain,
    Sealed,
    SecuredMessage,
    _escape_token,
    _split_elements,
    _split_segments,
    _unescape_token,
)
from .sim import Simulation, make_script, run_scenario
from .transcript import Transcript, ValidatedEvent


class AttackKind(str, enum.Enum):
    TAMPER_FIELD = "TAMPER_FIELD"
    REPLAY_SPLICE = "REPLAY_SPLICE"
    NONCE_REUSE = "NONCE_REUSE"
    UNAUTHORIZED_AUTHOR = "UNAUTHORIZED_AUTHOR"
    LEDGER_TAMPER = "LEDGER_TAMPER"


class TargetUnresolved(Exception):
    pass


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind
    step: str = ""  # message step to strike, or "" for the scenario default
    attribute: str = ""  # TAMPER_FIELD target
    payload: str = ""  # replacement text / insider identity
    block: int = -1  # LEDGER_TAMPER block index
    sig_of: str = ""  # TAMPER_FIELD: flip this signer's signature instead


@dataclass(frozen=True)
class DetectionReport:
    kind: AttackKind
    scenario: str
    mode: str
    detected: bool
    detected_by: str = ""
    finding: str = ""
    localized: str = ""


#: Default strike point per scenario: the hop carrying the most data.
DEFAULT_STEP = {"export": "delivery", "import": "iftmcs"}


def battery(scenario: str) -> tuple[AttackSpec, ...]:
    """The shipped attack set: one representative spec per kind."""
    step = DEFAULT_STEP[scenario]
    return (
        AttackSpec(AttackKind.TAMPER_FIELD, step=step, attribute="CNT_W",
                   payload="1 kg"),
        AttackSpec(AttackKind.REPLAY_SPLICE, step=step),
        AttackSpec(AttackKind.NONCE_REUSE),
        AttackSpec(AttackKind.UNAUTHORIZED_AUTHOR, step=step, payload="t2-op"),
        AttackSpec(AttackKind.LEDGER_TAMPER, block=1),
    )


def mutate_field(sm: SecuredMessage, attribute: str, payload: str, suite) -> SecuredMessage:
    """In-transit substitution of one field, shaped to its representation:
    plain text is rewritten, hash-only and sealed values get the digest of
    the substitute (the only mutation every representation must catch)."""
    try:
        value = sm.message.get(attribute)
    except KeyError:
        raise TargetUnresolved(f"message has no attribute {attribute}") from None
    fake = payload or "tampered"
    if isinstance(value, Plain):
        new = Plain(fake)
    elif isinstance(value, HashOnly):
        new = HashOnly(value_digest(fake, suite))
    else:
        new = Sealed(value_digest(fake, suite), value.ciphertext, dict(value.wrapped_keys))
    return SecuredMessage(sm.message.replace_field(attribute, new), sm.signatures, sm.sender)


def flip_signature(sm: SecuredMessage, signer: str) -> SecuredMessage:
    sigs = []
    hit = False
    for s in sm.signatures:
        if s.signer == signer and not hit:
            hit = True
            s = replace(s, sig=s.sig[:-1] + bytes([s.sig[-1] ^ 0x01]))
        sigs.append(s)
    if not hit:
        raise TargetUnresolved(f"no signature by {signer}")
    return SecuredMessage(sm.message, tuple(sigs), sm.sender)


def substitute_signer(sm: SecuredMessage, old_signer: str, key_pair, identity, suite) -> SecuredMessage:
    """Insider re-signs the victim's attribute set under its own key,
    leaving the values untouched: pure authorship fraud."""
    sigs = []
    hit = False
    for s in sm.signatures:
        if s.signer == old_signer and not hit:
            hit = True
            views = []
            for a in s.attrs:
                v = sm.message.get(a)
                views.append((a, PlainView(v.text) if isinstance(v, Plain) else DigestView(v.digest)))
            s = envelope.multi_sign_views(key_pair, views, suite=suite)
            s = replace(s, signer=identity)
        sigs.append(s)
    if not hit:
        raise TargetUnresolved(f"no signature by {old_signer}")
    return SecuredMessage(sm.message, tuple(sigs), sm.sender)


def _first_rejection(transcript: Transcript) -> tuple[str, str, str] | None:
    for ev in transcript.events:
        if isinstance(ev, ValidatedEvent) and ev.verdict == "REJECT" and ev.report:
            worst = next(f for f in ev.report.findings if f.severity is Severity.REJECT)
            return ev.actor, worst.code.value, worst.detail
    return None


def _warning(transcript: Transcript, code: FindingCode) -> tuple[str, str, str] | None:
    for ev in transcript.events:
        if isinstance(ev, ValidatedEvent) and ev.report:
            for f in ev.report.findings:
                if f.code is code:
                    return ev.actor, f.code.value, f.detail
    return None


def inject_attack(
    fixtures: FixtureSet, scenario: str, spec: AttackSpec, mode: str = "p2p"
) -> tuple[Transcript, DetectionReport]:
    """Run the scenario with the attack applied; report whether, where,
    and how it was caught."""
    if mode == "ledger":
        return _inject_ledger(fixtures, scenario, spec)
    return _inject_p2p(fixtures, scenario, spec)


def _inject_p2p(fixtures, scenario, spec) -> tuple[Transcript, DetectionReport]:
    step = spec.step or DEFAULT_STEP[scenario]
    kind = spec.kind
    world = build_world(fixtures)

    if kind is AttackKind.NONCE_REUSE:
        run_scenario(fixtures, scenario, "p2p", world=world)
        again = fixtures.with_values(run_tag=fixtures.run_tag + "-replay")
        sim = run_scenario(again, scenario, "p2p", world=world)
        hit = _warning(sim.transcript, FindingCode.NONCE_REUSE)
        return sim.transcript, DetectionReport(
            kind, scenario, "p2p", hit is not None, *(hit or ("", "", ""))
        )

    if kind is AttackKind.REPLAY_SPLICE:
        origin = fixtures.with_values(
            run_tag=fixtures.run_tag + "-origin",
            B_NO="BKG-0007",
            CNT_C="600 crates declared as textiles",
            CSG_DATA="consignee Vanta Trading Ltd",
        )
        first = run_scenario(origin, scenario, "p2p", world=world)
        stolen = next(
            s for s in first.outbound["booking"].signatures if s.signer == "importer-1"
        )

        def splice(name, sm):
            if name != step:
                return sm
            sigs = tuple(stolen if s.signer == "importer-1" else s for s in sm.signatures)
            return SecuredMessage(sm.message, sigs, sm.sender)

        sim = _attacked_run(fixtures, scenario, world, splice, step)
        hit = _first_rejection(sim.transcript)
        return sim.transcript, DetectionReport(
            kind, scenario, "p2p", hit is not None, *(hit or ("", "", ""))
        )

    if kind is AttackKind.TAMPER_FIELD:
        def tamper(name, sm):
            if name != step:
                return sm
            if spec.sig_of:
                return flip_signature(sm, spec.sig_of)
            return mutate_field(sm, spec.attribute, spec.payload, world.suite)

        sim = _attacked_run(fixtures, scenario, world, tamper, step)
        hit = _first_rejection(sim.transcript)
        return sim.transcript, DetectionReport(
            kind, scenario, "p2p", hit is not None, *(hit or ("", "", ""))
        )

    if kind is AttackKind.UNAUTHORIZED_AUTHOR:
        insider = spec.payload or "t2-op"
        if insider not in world.key_pairs:
            raise TargetUnresolved(f"no insider keys for {insider}")

        def forge(name, sm):
            if name != step:
                return sm
            return substitute_signer(
                sm, "importer-1", world.key_pairs[insider], insider, world.suite
            )

        sim = _attacked_run(fixtures, scenario, world, forge, step)
        hit = _first_rejection(sim.transcript)
        return sim.transcript, DetectionReport(
            kind, scenario, "p2p", hit is not None, *(hit or ("", "", ""))
        )

    if kind is AttackKind.LEDGER_TAMPER:
        sim = run_scenario(fixtures, scenario, "p2p", world=world)
        return sim.transcript, DetectionReport(
            kind, scenario, "p2p", False, finding="NO_CHAIN",
            localized="no chain exists in p2p mode",
        )

    raise TargetUnresolved(f"unsupported attack kind {kind}")


def _attacked_run(fixtures, scenario, world, interceptor, step) -> Simulation:
    script = make_script(fixtures, scenario, "p2p")
    if all(s.name != step for s in script.steps):
        raise TargetUnresolved(f"scenario {scenario} has no step {step}")
    sim = Simulation(script, world, interceptor)
    sim.stop_on_reject = True
    return sim.run()


def _inject_ledger(fixtures, scenario, spec) -> tuple[Transcript, DetectionReport]:
    """Ledger-mode analogue of each attack kind: chain byte/field
    mutations are caught by re-validation; rogue or replayed transactions
    die at the chaincode gates."""
    kind = spec.kind
    world = build_world(fixtures)
    sim = run_scenario(fixtures, scenario, "ledger", world=world)
    net = sim.net
    cnt = fixtures.values["CNT_NO"]
    transcript = sim.transcript

    def denial(action, invoker, chain_holder, args=()):
        tx, chain = build_transaction(
            LedgerAction(action), cnt, args,
            world.chain_of(chain_holder), world.key_pairs[chain_holder], world.suite,
        )
        try:
            submit(net, tx, chain)
        except LedgerError as exc:
            transcript.ledger(action, cnt, invoker, type(exc).__name__, str(exc))
            return DetectionReport(
                kind, scenario, "ledger", True, "chaincode",
                type(exc).__name__, str(exc),
            )
        return DetectionReport(kind, scenario, "ledger", False)

    if kind is AttackKind.NONCE_REUSE:
        # the same container booked onto the chain a second time
        return transcript, denial("CREATE", "sl1-clerk", "sl1-clerk",
                                  args=(("terminal", "T1"),))

    if kind is AttackKind.REPLAY_SPLICE:
        # a captured CLEAR transaction replayed after commit
        return transcript, denial("CLEAR", "pcs-op", "pcs-op")

    if kind is AttackKind.UNAUTHORIZED_AUTHOR:
        # wrong role invokes CREATE
        insider = spec.payload or "customs-officer"
        return transcript, denial("CREATE", insider, insider, args=(("terminal", "T1"),))

    if kind in (AttackKind.LEDGER_TAMPER, AttackKind.TAMPER_FIELD):
        data = export_chain(net)
        if kind is AttackKind.LEDGER_TAMPER:
            mutated = _flip_block_byte(data, spec.block if spec.block >= 0 else 1)
        else:
            mutated = _rewrite_txn_token(data, cnt)
        try:
            res = verify_exported(parse_chain(mutated), net.endorsement_policy, net.suite)
            detected = not res.valid
            where = f"block {res.first_bad_block}: {res.reason}" if detected else ""
        except ParseError as exc:
            detected, where = True, f"chain unparseable: {exc}"
        transcript.ledger("VERIFY", cnt, net.orderer_identity,
                          "INVALID" if detected else "VALID", where)
        return transcript, DetectionReport(
            kind, scenario, "ledger", detected, "ledger-verify", "ChainTamper", where
        )

    raise TargetUnresolved(f"unsupported attack kind {kind}")


def _flip_block_byte(data: bytes, block: int) -> bytes:
    """Flip one byte inside the prev-hash element of the given block."""
    marker = b"BLK+%d+" % block
    start = 0
    for line in data.split(b"\n"):
        if line.startswith(marker):
            pos = start + len(marker) + 3
            out = bytearray(data)
            out[pos] ^= 0x02
            return bytes(out)
        start += len(line) + 1
    raise TargetUnresolved(f"chain has no block {block}")


def _rewrite_txn_token(data: bytes, cnt: str) -> bytes:
    """Rewrite the container number inside the CREATE transaction line,
    modeling an on-chain field edit."""
    needle = b"TXN+CREATE+" + _escape_token(cnt)
    if needle not in data:
        raise TargetUnresolved("chain has no CREATE transaction to edit")
    forged = _escape_token(cnt[:-1] + ("X" if cnt[-1] != "X" else "Y"))
    return data.replace(needle, b"TXN+CREATE+" + forged, 1)


# --- mode comparison ----------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    kind: AttackKind
    scenario: str
    p2p: DetectionReport
    ledger: DetectionReport


@dataclass
class ComparisonReport:
    honest: dict[tuple[str, str], str] = field(default_factory=dict)
    rows: list[ComparisonRow] = field(default_factory=list)
    exposure: dict[str, dict[str, frozenset[str]]] = field(default_factory=dict)

    def detected_somewhere(self, kind: AttackKind) -> bool:
        return any(
            (r.p2p.detected or r.ledger.detected) for r in self.rows if r.kind is kind
        )

    @property
    def verdict(self) -> str:
        ok = all(v == "PASS" for v in self.honest.values())
        ok &= all(self.detected_somewhere(k) for k in AttackKind)
        ok &= any(r.kind is AttackKind.TAMPER_FIELD and r.p2p.detected for r in self.rows)
        ok &= any(r.kind is AttackKind.LEDGER_TAMPER and r.ledger.detected for r in self.rows)
        return "PASS" if ok else "FAIL"


def compare_modes(fixtures: FixtureSet) -> ComparisonReport:
    """Honest runs plus the full battery in both modes: the integrity /
    traceability vs confidentiality trade-off, in one table."""
    report = ComparisonReport()
    for scenario in ("export", "import"):
        for mode in ("p2p", "ledger"):
            sim = run_scenario(fixtures, scenario, mode)
            report.honest[(scenario, mode)] = sim.transcript.verdict
            result = audit_views(sim.transcript)
            bucket = report.exposure.setdefault(mode, {})
            for ident, attrs in result.exposure.items():
                bucket[ident] = bucket.get(ident, frozenset()) | attrs
        for spec in battery(scenario):
            _, p2p = inject_attack(fixtures, scenario, spec, "p2p")
            _, led = inject_attack(fixtures, scenario, spec, "ledger")
            report.rows.append(ComparisonRow(spec.kind, scenario, p2p, led))
    return report


def comparison_to_wire(report: ComparisonReport) -> bytes:
    lines = [b"CMP+1+" + report.verdict.encode() + b"'"]
    for (scenario, mode), verdict in sorted(report.honest.items()):
        lines.append(
            b"+".join([b"HON", scenario.encode(), mode.encode(), verdict.encode()]) + b"'"
        )
    for r in report.rows:
        lines.append(
            b"+".join(
                [
                    b"ATK", r.kind.value.encode(), r.scenario.encode(),
                    b"p2p", b"DETECTED" if r.p2p.detected else b"MISSED",
                    _escape_token(r.p2p.detected_by), _escape_token(r.p2p.finding),
                    b"ledger", b"DETECTED" if r.ledger.detected else b"MISSED",
                    _escape_token(r.ledger.detected_by), _escape_token(r.ledger.finding),
                ]
            )
            + b"'"
        )
    for mode in sorted(report.exposure):
        for ident in sorted(report.exposure[mode]):
            attrs = ",".join(sorted(report.exposure[mode][ident]))
            lines.append(
                b"+".join(
                    [b"EXP", mode.encode(), _escape_token(ident), _escape_token(attrs)]
                )
                + b"'"
            )
    return b"\n".join(lines) + b"\n"


# --- attack spec files --------------------------------------------------------


def attack_to_wire(spec: AttackSpec) -> bytes:
    parts = [b"ATK", spec.kind.value.encode()]
    for key, val in (
        ("step", spec.step), ("attribute", spec.attribute), ("payload", spec.payload),
        ("block", str(spec.block) if spec.block >= 0 else ""), ("sig_of", spec.sig_of),
    ):
        if val:
            parts += [key.encode(), _escape_token(val)]
    return b"+".join(parts) + b"'"


def attack_from_wire(data: bytes) -> AttackSpec:
    segments = _split_segments(data.strip())
    if len(segments) != 1:
        raise ParseError("expected exactly one ATK segment", 0)
    off, seg = segments[0]
    elems = _split_elements(seg, off)
    if elems[0][1] != b"ATK" or len(elems) < 2 or len(elems) % 2 != 0:
        raise ParseError("malformed ATK segment", off)
    try:
        kind = AttackKind(_unescape_token(elems[1][1], 0))
    except ValueError:
        raise ParseError("unknown attack kind", elems[1][0]) from None
    fields: dict[str, str] = {}
    for i in range(2, len(elems), 2):
        fields[_unescape_token(elems[i][1], 0)] = _unescape_token(elems[i + 1][1], 0)
    unknown = set(fields) - {"step", "attribute", "payload", "block", "sig_of"}
    if unknown:
        raise ParseError(f"unknown ATK fields {sorted(unknown)}", off)
    try:
        block = int(fields.get("block", "-1"))
    except ValueError:
        raise ParseError("ATK block must be an integer", off) from None
    return AttackSpec(
        kind,
        step=fields.get("step", ""),
        attribute=fields.get("attribute", ""),
        payload=fields.get("payload", ""),
        block=block,
        sig_of=fields.get("sig_of", ""),
    )
