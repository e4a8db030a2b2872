"""Run all four honest configurations (export/import x p2p/ledger) and
print, per run, the step outline, the verdict, and the per-actor audit."""

import argparse
from pathlib import Path

from portsec.audit import audit_views
from portsec.fixtures import fixtures_from_bytes, generate_fixtures
from portsec.sim import run_scenario
from portsec.transcript import transcript_to_wire


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--fixtures", metavar="FILE",
                        help="fixture file to use (default: generate fresh)")
    parser.add_argument("--out-dir", metavar="DIR",
                        help="write one transcript file per run here")
    args = parser.parse_args()

    if args.fixtures:
        fixtures = fixtures_from_bytes(Path(args.fixtures).read_bytes())
    else:
        fixtures = generate_fixtures()

    failures = 0
    for scenario in ("export", "import"):
        for mode in ("p2p", "ledger"):
            sim = run_scenario(fixtures, scenario, mode)
            t = sim.transcript
            print(f"=== {scenario} / {mode}")
            for entry in t.step_outline():
                print("   ", " ".join(entry))
            views = audit_views(t)
            for identity in sorted(views.exposure):
                attrs = ",".join(sorted(views.exposure[identity])) or "-"
                print(f"    audit {identity}: {attrs}")
            print(f"    verdict {t.verdict}")
            failures += t.verdict != "PASS"
            if args.out_dir:
                out = Path(args.out_dir)
                out.mkdir(parents=True, exist_ok=True)
                (out / f"{scenario}-{mode}.trs").write_bytes(transcript_to_wire(t))
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
