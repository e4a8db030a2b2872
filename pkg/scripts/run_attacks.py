"""Throw the whole attack battery at both scenarios in both modes and
print the detection table, then the mode-comparison verdict."""

import argparse
from pathlib import Path

from portsec.attacks import battery, compare_modes, comparison_to_wire, inject_attack
from portsec.fixtures import fixtures_from_bytes, generate_fixtures


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--fixtures", metavar="FILE",
                        help="fixture file to use (default: generate fresh)")
    parser.add_argument("--report", metavar="FILE",
                        help="also write the comparison report here")
    args = parser.parse_args()

    if args.fixtures:
        fixtures = fixtures_from_bytes(Path(args.fixtures).read_bytes())
    else:
        fixtures = generate_fixtures()

    print(f"{'scenario':8s} {'mode':7s} {'attack':20s} {'result':11s} "
          f"{'caught by':14s} finding")
    for scenario in ("export", "import"):
        for spec in battery(scenario):
            for mode in ("p2p", "ledger"):
                _, rep = inject_attack(fixtures, scenario, spec, mode)
                result = "DETECTED" if rep.detected else "UNDETECTED"
                print(f"{scenario:8s} {mode:7s} {spec.kind.value:20s} "
                      f"{result:11s} {rep.detected_by or '-':14s} "
                      f"{rep.finding or '-'}")
                if rep.localized:
                    print(f"{'':8s} {'':7s} {'':20s} {'':11s} {'':14s} "
                          f"  {rep.localized}")

    report = compare_modes(fixtures)
    print(f"\ncomparison verdict: {report.verdict}")
    if args.report:
        Path(args.report).write_bytes(comparison_to_wire(report))
    return 0 if report.verdict == "PASS" else 1


if __name__ == "__main__":
    raise SystemExit(main())
