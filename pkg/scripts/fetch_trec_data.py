#!/usr/bin/env python3
"""Install the TREC CAsT evaluation data used by the acceptance suite.

The official relevance judgments are public and downloaded straight from
trec.nist.gov.  The archived submission runfiles are not: TREC keeps
past runs in a password-protected participant area, so this script
cannot fetch them for you.  If you have copies, point the flags below at
them and they are installed under the filenames the tests expect:

    data/trec/2021qrels.txt             official judgments (downloaded)
    data/trec/waterloo-clarke-2021.run  --waterloo-run PATH
    data/trec/organizers-2021.run       --organizers-run PATH

Set CONVSEARCH_TREC_DATA to use a different data directory.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from pathlib import Path

import requests

QRELS_URL = "https://trec.nist.gov/data/cast/2021qrels.txt"


def data_dir() -> Path:
    return Path(os.environ.get("CONVSEARCH_TREC_DATA", "data/trec"))


def download_qrels(destination: Path, force: bool) -> None:
    if destination.exists() and not force:
        print(f"qrels already present: {destination}")
        return
    print(f"downloading {QRELS_URL}")
    response = requests.get(QRELS_URL, timeout=60)
    response.raise_for_status()
    destination.write_bytes(response.content)
    lines = destination.read_text().count("\n")
    print(f"wrote {destination} ({lines} lines)")


def install_runfile(source: str | None, destination: Path) -> None:
    if source is None:
        print(f"skipping {destination.name}: no local copy given "
              "(archived runs need TREC participant access)")
        return
    src = Path(source)
    if not src.exists():
        sys.exit(f"error: runfile not found: {src}")
    shutil.copyfile(src, destination)
    print(f"installed {destination}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--waterloo-run", metavar="PATH",
                        help="local copy of the WaterlooClarke 2021 runfile")
    parser.add_argument("--organizers-run", metavar="PATH",
                        help="local copy of the organizers' 2021 baseline runfile")
    parser.add_argument("--skip-qrels", action="store_true",
                        help="do not download the official judgments")
    parser.add_argument("--force", action="store_true",
                        help="re-download even if files exist")
    args = parser.parse_args(argv)

    target = data_dir()
    target.mkdir(parents=True, exist_ok=True)

    if not args.skip_qrels:
        download_qrels(target / "2021qrels.txt", args.force)
    install_runfile(args.waterloo_run, target / "waterloo-clarke-2021.run")
    install_runfile(args.organizers_run, target / "organizers-2021.run")
    return 0


if __name__ == "__main__":
    sys.exit(main())
