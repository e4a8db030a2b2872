"""Generate a fixture file: keys, certificates, and field values for the
desk-scale port world.

Key material is freshly generated on every invocation; everything built
on top of one fixture file is reproducible from that file alone, so keep
the file if you want to replay runs.
"""

import argparse
from pathlib import Path

from portsec.fixtures import fixtures_to_bytes, generate_fixtures


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixtures.psf", metavar="FILE")
    parser.add_argument("--run-tag", default="R1",
                        help="booking-run identifier stamped on every message")
    parser.add_argument("--dangerous-goods", action="store_true",
                        help="mark the consignment as dangerous goods")
    parser.add_argument("--set", action="append", default=[], metavar="ATTR=VALUE",
                        help="override a fixture field value (repeatable)")
    args = parser.parse_args()

    values = {}
    if args.dangerous_goods:
        values["DG"] = "true"
    for item in args.set:
        attr, sep, value = item.partition("=")
        if not sep:
            parser.error(f"--set needs ATTR=VALUE, got {item!r}")
        values[attr] = value

    fixtures = generate_fixtures(run_tag=args.run_tag)
    if values:
        fixtures = fixtures.with_values(**values)
    Path(args.out).write_bytes(fixtures_to_bytes(fixtures))
    print(f"wrote {args.out}: run {fixtures.run_tag}, "
          f"{len(fixtures.actors)} actors, {len(fixtures.values)} field values")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
