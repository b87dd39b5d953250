#!/usr/bin/env python3
"""Write the synthetic fisheries corpus to disk for manual experiments.

Produces the thirty native-layout daily files plus one alternate-layout
report, and a manifest.json recording the expected clean/bad counts per
file so you can check an ingestion run by hand.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from datameld.sampledata import make_daily_files, make_layout_b_file, write_files


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("directory", help="output directory (created if missing)")
    parser.add_argument("--days", type=int, default=30)
    args = parser.parse_args()

    files = make_daily_files(days=args.days)
    alternate = make_layout_b_file()
    paths = write_files(args.directory, files + [alternate])

    manifest = {
        "files": [
            {
                "name": f.name,
                "clean_rows": len(f.clean_rows),
                "bad_rows": f.bad_row_count,
            }
            for f in files + [alternate]
        ],
        "total_clean": sum(len(f.clean_rows) for f in files) + len(alternate.clean_rows),
        "total_bad": sum(f.bad_row_count for f in files),
    }
    manifest_path = Path(args.directory) / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    print(f"wrote {len(paths)} files to {args.directory}")
    print(f"expected clean rows: {manifest['total_clean']}, bad rows: {manifest['total_bad']}")


if __name__ == "__main__":
    main()
