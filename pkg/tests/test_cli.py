"""End-to-end runs of every subcommand through main(argv)."""

import pytest

from portsec.attacks import AttackKind, AttackSpec, attack_to_wire
from portsec.cli import main
from portsec.fixtures import fixtures_to_bytes
from portsec.policy import DEFAULT_POLICY_TEXT
from portsec.transcript import transcript_from_wire


@pytest.fixture(scope="session")
def cli_files(base_fixtures, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    paths = {
        "fixtures": root / "fixtures.psf",
        "policy": root / "policy.txt",
        "tamper": root / "tamper.atk",
        "ledger_tamper": root / "ledger_tamper.atk",
        "root": root,
    }
    paths["fixtures"].write_bytes(fixtures_to_bytes(base_fixtures))
    paths["policy"].write_text(DEFAULT_POLICY_TEXT)
    paths["tamper"].write_bytes(
        attack_to_wire(AttackSpec(AttackKind.TAMPER_FIELD, attribute="CNT_W",
                                  payload="1 kg")) + b"\n"
    )
    paths["ledger_tamper"].write_bytes(
        attack_to_wire(AttackSpec(AttackKind.LEDGER_TAMPER, block=1)) + b"\n"
    )
    return paths


def test_run_honest_export(cli_files, tmp_path, capsys):
    out = tmp_path / "export.trs"
    code = main(["run", "--scenario", "export", "--mode", "p2p",
                 "--fixtures", str(cli_files["fixtures"]), "--out", str(out)])
    assert code == 0
    assert "VERDICT PASS" in capsys.readouterr().out
    stored = transcript_from_wire(out.read_bytes())
    assert stored.verdict == "PASS"
    assert stored.scenario == "export"


def test_run_ledger_writes_verifiable_chain(cli_files, tmp_path, capsys):
    chain = tmp_path / "import.chain"
    code = main(["run", "--scenario", "import", "--mode", "ledger",
                 "--fixtures", str(cli_files["fixtures"]),
                 "--chain-out", str(chain)])
    assert code == 0
    capsys.readouterr()
    assert main(["ledger-verify", "--chain", str(chain)]) == 0
    assert "CHAIN VALID" in capsys.readouterr().out


def test_chain_out_needs_ledger_mode(cli_files, tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["run", "--scenario", "export", "--mode", "p2p",
              "--fixtures", str(cli_files["fixtures"]),
              "--chain-out", str(tmp_path / "no.chain")])
    assert err.value.code == 2


def test_audit_of_honest_transcript_is_clean(cli_files, tmp_path, capsys):
    out = tmp_path / "import.trs"
    main(["run", "--scenario", "import", "--mode", "p2p",
          "--fixtures", str(cli_files["fixtures"]), "--out", str(out)])
    capsys.readouterr()
    assert main(["audit", "--transcript", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "AUDIT CLEAN" in printed
    assert "ACTOR pcs-op" in printed


def test_attack_detected_exits_zero(cli_files, capsys):
    code = main(["attack", "--scenario", "export", "--mode", "p2p",
                 "--fixtures", str(cli_files["fixtures"]),
                 "--spec", str(cli_files["tamper"])])
    assert code == 0
    printed = capsys.readouterr().out
    assert "DETECTED" in printed
    assert "FINDING SignatureInvalid" in printed


def test_undetectable_attack_exits_nonzero(cli_files, capsys):
    code = main(["attack", "--scenario", "export", "--mode", "p2p",
                 "--fixtures", str(cli_files["fixtures"]),
                 "--spec", str(cli_files["ledger_tamper"])])
    assert code == 1
    assert "UNDETECTED" in capsys.readouterr().out


def test_ledger_verify_flags_tampering(cli_files, tmp_path, capsys):
    chain = tmp_path / "good.chain"
    main(["run", "--scenario", "export", "--mode", "ledger",
          "--fixtures", str(cli_files["fixtures"]), "--chain-out", str(chain)])
    raw = bytearray(chain.read_bytes())
    raw[raw.find(b"TXN+") + 22] ^= 0x01
    bad = tmp_path / "bad.chain"
    bad.write_bytes(bytes(raw))
    capsys.readouterr()
    assert main(["ledger-verify", "--chain", str(bad)]) == 1
    assert "CHAIN INVALID" in capsys.readouterr().out


def test_compare_prints_report(cli_files, capsys):
    code = main(["compare", "--fixtures", str(cli_files["fixtures"])])
    printed = capsys.readouterr().out
    assert code == 0
    assert printed.startswith("CMP+1+PASS'")
    assert "ATK+LEDGER_TAMPER" in printed


@pytest.mark.parametrize(
    "role, attr, action, expected",
    [
        ("CUSTOMS", "CNT_C", "read", 0),
        ("PCS", "CSG_DATA", "read", 1),
        ("IMPORTER", "B_NO", "write", 1),
        ("SHIPPING_LINE", "B_NO", "write", 0),
        ("PORT_AUTHORITY", "CNT_NO", "read", 0),
    ],
)
def test_policy_check(cli_files, capsys, role, attr, action, expected):
    code = main(["policy-check", "--policy", str(cli_files["policy"]),
                 "--role", role, "--attr", attr, "--action", action])
    assert code == expected
    assert ("ALLOW" if expected == 0 else "DENY") in capsys.readouterr().out


def test_file_errors_exit_two(cli_files, capsys):
    with pytest.raises(SystemExit) as err:
        main(["audit", "--transcript", "/no/such/file"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["run", "--scenario", "export", "--mode", "p2p",
              "--fixtures", str(cli_files["policy"])])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["policy-check", "--policy", str(cli_files["policy"]),
              "--role", "PIRATE", "--attr", "CNT_C", "--action", "read"])
    assert err.value.code == 2
    capsys.readouterr()
