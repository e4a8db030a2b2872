"""Creator/validator behaviour: the import-manifest flow end to end, plus
every reject path the validator knows."""

import pytest

from portsec.adapter import (
    CarriedSignatureInvalid,
    FindingCode,
    NotValidated,
    WritePermissionDenied,
    forward,
    query_signature_store,
    report_to_wire,
    secure_outbound,
    validate_inbound,
)
from portsec.envelope import value_digest
from portsec.model import HashOnly, Message, Plain, Sealed, SecuredMessage
from portsec.policy import Role

VALUES = {
    "B_NO": "BKG-7401",
    "BL_NO": "BL-55821",
    "CNT_C": "400 cartons machine parts",
    "CNT_W": "18400 kg",
    "CSG_DATA": "consignee ACME Imports, notify NordFreight GmbH",
    "CNT_NO": "COSU1234567",
}


def importer_signature(world, run_id, values=VALUES):
    """The importer's pre-run signature over booking number and consignment
    details, produced by securing its order message to the shipping line."""
    imp = world.adapter("importer-1")
    msg = Message(
        "PORT_ORDER",
        run_id,
        tuple((a, Plain(values[a])) for a in ("B_NO", "CNT_C", "CSG_DATA")),
    )
    sm = secure_outbound(
        imp, msg, [], Role.SHIPPING_LINE, authored=["CNT_C", "CSG_DATA"], co_attest=["B_NO"]
    )
    assert len(sm.signatures) == 1
    return sm.signatures[0]


def make_iftmcs(world, run_id="RUN-1", values=VALUES):
    """Shipping line -> PCS manifest carrying the importer's signature."""
    imp_sig = importer_signature(world, run_id, values)
    sl = world.adapter("sl1-clerk")
    msg = Message(
        "IFTMCS",
        run_id,
        tuple((a, Plain(values[a])) for a in ("B_NO", "BL_NO", "CNT_C", "CNT_W", "CSG_DATA", "CNT_NO")),
    )
    return secure_outbound(
        sl,
        msg,
        [imp_sig],
        Role.PCS,
        downstream={Role.CUSTOMS},
        authored=["B_NO", "BL_NO", "CNT_W", "CNT_NO"],
    )


def test_secure_outbound_shape(world):
    sm = make_iftmcs(world)
    assert sm.sender == "sl1-clerk"
    assert len(sm.signatures) == 2
    assert sm.signatures[0].signer == "importer-1"
    assert sm.signatures[1].signer == "sl1-clerk"
    assert sm.signatures[1].attrs == ("B_NO", "BL_NO", "CNT_W", "CNT_NO")
    for attr in ("B_NO", "BL_NO", "CNT_W", "CNT_NO"):
        assert isinstance(sm.message.get(attr), Plain)
    for attr in ("CNT_C", "CSG_DATA"):
        sealed = sm.message.get(attr)
        assert isinstance(sealed, Sealed)
        assert set(sealed.wrapped_keys) == {"customs-officer"}
        assert sealed.digest == value_digest(VALUES[attr])


def test_pcs_accepts_and_sees_only_its_columns(world):
    sm = make_iftmcs(world)
    pcs = world.adapter("pcs-op")
    report = validate_inbound(pcs, sm, world.chain_of("sl1-clerk"))
    assert report.accepted, report.findings
    assert set(report.decrypted_view) == {"B_NO", "BL_NO", "CNT_W", "CNT_NO"}
    assert ("importer-1", "IMPORTER") in report.verified_signers
    assert ("sl1-clerk", "SHIPPING_LINE") in report.verified_signers


def test_forward_to_customs(world):
    sm = make_iftmcs(world)
    pcs = world.adapter("pcs-op")
    report = validate_inbound(pcs, sm, world.chain_of("sl1-clerk"))
    fwd = forward(pcs, report, sm, Role.CUSTOMS, new_msg_type="MANIFEST")

    assert fwd.message.msg_type == "MANIFEST"
    assert fwd.sender == "pcs-op"
    assert fwd.message.get("B_NO") == HashOnly(value_digest(VALUES["B_NO"]))
    # Sealed fields pass through byte-identical: the original seal survives.
    assert fwd.message.get("CNT_C") == sm.message.get("CNT_C")
    assert fwd.signatures == sm.signatures

    customs = world.adapter("customs-officer")
    rep = validate_inbound(customs, fwd, world.chain_of("pcs-op"))
    assert rep.accepted, rep.findings
    assert set(rep.decrypted_view) == {"BL_NO", "CNT_W", "CNT_NO", "CNT_C", "CSG_DATA"}
    assert "B_NO" not in rep.decrypted_view
    assert rep.decrypted_view["CNT_C"] == VALUES["CNT_C"]


def test_forward_requires_acceptance(world):
    sm = make_iftmcs(world)
    pcs = world.adapter("pcs-op")
    tampered = SecuredMessage(
        sm.message.replace_field("CNT_W", Plain("1 kg")), sm.signatures, sm.sender
    )
    report = validate_inbound(pcs, tampered, world.chain_of("sl1-clerk"))
    assert not report.accepted
    with pytest.raises(NotValidated):
        forward(pcs, report, tampered, Role.CUSTOMS)


def test_write_permission_enforced_outbound(world):
    t1 = world.adapter("t1-op")
    msg = Message("CODECO", "RUN-1", (("CNT_C", Plain("contraband")),))
    with pytest.raises(WritePermissionDenied):
        secure_outbound(t1, msg, [], Role.CUSTOMS, authored=["CNT_C"])


def test_carried_signature_checked_outbound(world):
    imp_sig = importer_signature(world, "RUN-1")
    sl = world.adapter("sl1-clerk")
    altered = dict(VALUES, CSG_DATA="consignee changed")
    msg = Message(
        "IFTMCS",
        "RUN-1",
        tuple((a, Plain(altered[a])) for a in ("B_NO", "BL_NO", "CNT_C", "CNT_W", "CSG_DATA", "CNT_NO")),
    )
    with pytest.raises(CarriedSignatureInvalid):
        secure_outbound(sl, msg, [imp_sig], Role.PCS, downstream={Role.CUSTOMS},
                        authored=["B_NO", "BL_NO", "CNT_W", "CNT_NO"])


def test_in_transit_tamper_detected(world):
    sm = make_iftmcs(world)
    pcs = world.adapter("pcs-op")
    tampered = SecuredMessage(
        sm.message.replace_field("CNT_W", Plain("99999 kg")), sm.signatures, sm.sender
    )
    report = validate_inbound(pcs, tampered, world.chain_of("sl1-clerk"))
    assert not report.accepted
    assert FindingCode.SIGNATURE_INVALID in report.codes()


def test_signature_byte_flip_detected(world):
    sm = make_iftmcs(world)
    sig = sm.signatures[1]
    broken = type(sig)(sig.signer, sig.attrs, sig.sig[:-1] + bytes([sig.sig[-1] ^ 1]))
    tampered = SecuredMessage(sm.message, (sm.signatures[0], broken), sm.sender)
    pcs = world.adapter("pcs-op")
    report = validate_inbound(pcs, tampered, world.chain_of("sl1-clerk"))
    assert not report.accepted
    assert FindingCode.SIGNATURE_INVALID in report.codes()


def test_write_coverage_gap(world):
    """Dropping the importer's signature leaves the consignment attributes
    vouched for by nobody with write permission."""
    sm = make_iftmcs(world)
    stripped = SecuredMessage(sm.message, (sm.signatures[1],), sm.sender)
    pcs = world.adapter("pcs-op")
    report = validate_inbound(pcs, stripped, world.chain_of("sl1-clerk"))
    assert not report.accepted
    gaps = {f.subject for f in report.findings if f.code is FindingCode.WRITE_COVERAGE_GAP}
    assert gaps == {"CNT_C", "CSG_DATA"}


def test_unauthorized_author_is_a_coverage_gap(world):
    """A terminal clerk hand-rolls a consignment update: the signature is
    cryptographically fine but no writer-role covers CNT_C."""
    from portsec.envelope import multi_sign

    t1 = world.adapter("t1-op")
    sig = multi_sign(t1.key_pair, [("CNT_C", "808 cartons")])
    sm = SecuredMessage(
        Message("IFTMCS", "RUN-X", (("CNT_C", Plain("808 cartons")),)), (sig,), "t1-op"
    )
    customs = world.adapter("customs-officer")
    report = validate_inbound(customs, sm, world.chain_of("t1-op"))
    assert not report.accepted
    assert {f.subject for f in report.findings if f.code is FindingCode.WRITE_COVERAGE_GAP} == {"CNT_C"}


def test_representation_violation_plaintext_overshare(world):
    sl = world.adapter("sl1-clerk")
    sig_src = make_iftmcs(world)
    # Rebuild with CNT_C in the clear and ship it to PCS, which may not read it.
    leaky = SecuredMessage(
        sig_src.message.replace_field("CNT_C", Plain(VALUES["CNT_C"])),
        sig_src.signatures,
        sig_src.sender,
    )
    pcs = world.adapter("pcs-op")
    report = validate_inbound(pcs, leaky, world.chain_of("sl1-clerk"))
    assert not report.accepted
    assert FindingCode.REPRESENTATION_VIOLATION in report.codes()
    assert "CNT_C" not in report.decrypted_view  # never surfaced to the actor


def test_sealed_ciphertext_tamper_found_at_opener(world):
    sm = make_iftmcs(world)
    sealed = sm.message.get("CNT_C")
    ct = bytearray(sealed.ciphertext)
    ct[0] ^= 0xFF
    patched = SecuredMessage(
        sm.message.replace_field("CNT_C", Sealed(sealed.digest, bytes(ct), sealed.wrapped_keys)),
        sm.signatures,
        sm.sender,
    )
    pcs = world.adapter("pcs-op")
    rep_pcs = validate_inbound(pcs, patched, world.chain_of("sl1-clerk"))
    # PCS cannot open the field; nothing else changed, so it still accepts.
    assert rep_pcs.accepted
    fwd = forward(pcs, rep_pcs, patched, Role.CUSTOMS, new_msg_type="MANIFEST")
    customs = world.adapter("customs-officer")
    rep = validate_inbound(customs, fwd, world.chain_of("pcs-op"))
    assert not rep.accepted
    assert FindingCode.DIGEST_MISMATCH in rep.codes()


def test_nonce_reuse_warning(world):
    pcs = world.adapter("pcs-op")
    first = make_iftmcs(world, run_id="RUN-A")
    assert validate_inbound(pcs, first, world.chain_of("sl1-clerk")).accepted
    second = make_iftmcs(world, run_id="RUN-B")  # same booking number
    report = validate_inbound(pcs, second, world.chain_of("sl1-clerk"))
    assert report.accepted  # warning-class by default
    reuse = [f for f in report.findings if f.code is FindingCode.NONCE_REUSE]
    assert reuse and reuse[0].severity.value == "WARNING"
    assert "RUN-A" in reuse[0].detail


def test_nonce_reuse_escalation(base_fixtures):
    from portsec.fixtures import build_world

    world = build_world(base_fixtures, nonce_reuse_rejects=True)
    pcs = world.adapter("pcs-op")
    assert validate_inbound(pcs, make_iftmcs(world, "RUN-A"), world.chain_of("sl1-clerk")).accepted
    report = validate_inbound(pcs, make_iftmcs(world, "RUN-B"), world.chain_of("sl1-clerk"))
    assert not report.accepted


def test_revoked_sender_chain(world):
    sm = make_iftmcs(world)
    world.ca_registry["SL1-CA"].revoke(world.directory_cert("sl1-clerk").serial)
    pcs = world.adapter("pcs-op")
    report = validate_inbound(pcs, sm, world.chain_of("sl1-clerk"))
    assert not report.accepted
    chain_findings = [f for f in report.findings if f.code is FindingCode.CHAIN_INVALID]
    assert chain_findings and "Revoked" in chain_findings[0].detail


def test_replay_splice_flagged_as_linkage_mismatch(world):
    """Importer signature from run 1 stitched into run 2's message: the
    booking numbers disagree, and the store knows where the original went."""
    pcs = world.adapter("pcs-op")
    run1 = make_iftmcs(world, run_id="SPL-R1")
    assert validate_inbound(pcs, run1, world.chain_of("sl1-clerk")).accepted

    values2 = dict(VALUES, B_NO="BKG-9999")
    run2 = make_iftmcs(world, run_id="SPL-R2", values=values2)
    spliced = SecuredMessage(run2.message, (run1.signatures[0], run2.signatures[1]), run2.sender)

    report = validate_inbound(pcs, spliced, world.chain_of("sl1-clerk"))
    assert not report.accepted
    linkage = [f for f in report.findings if f.code is FindingCode.LINKAGE_MISMATCH]
    assert linkage, report.findings
    assert linkage[0].subject == "B_NO"
    assert "SPL-R1" in linkage[0].detail
    # The forensic trail: the original signature is on file under run 1.
    run1_records = query_signature_store(pcs, "SPL-R1")
    assert any(r.signature.sig == run1.signatures[0].sig for r in run1_records)


def test_store_appends_even_on_reject(world):
    pcs = world.adapter("pcs-op")
    sm = make_iftmcs(world)
    tampered = SecuredMessage(
        sm.message.replace_field("CNT_W", Plain("tampered")), sm.signatures, sm.sender
    )
    before = len(pcs.signature_store)
    validate_inbound(pcs, tampered, world.chain_of("sl1-clerk"))
    after = query_signature_store(pcs, sm.message.instance_id)
    assert len(pcs.signature_store) == before + len(sm.signatures)
    assert len(after) == len(sm.signatures)


def test_report_wire_form(world):
    sm = make_iftmcs(world)
    pcs = world.adapter("pcs-op")
    report = validate_inbound(pcs, sm, world.chain_of("sl1-clerk"))
    wire = report_to_wire(report)
    assert wire.startswith(b"VERDICT+ACCEPT'")
    assert b"FINDING" not in wire  # honest run: no findings at all
