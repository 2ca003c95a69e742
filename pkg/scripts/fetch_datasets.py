"""Rebuild the bundled Spambase and white Wine Quality CSVs from PyPI-hosted copies.

Spambase comes from the KEEL mirror shipped in ``keel-ds`` (4597 rows; the UCI
original lists 4601); white Wine Quality (4898 rows) from the copy shipped in
``gcimpute``. Both are downloaded with ``pip download --no-deps``;
nothing is installed.
"""

from __future__ import annotations

import argparse
import csv
import io
import subprocess
import sys
import tarfile
import tempfile
import zipfile
from pathlib import Path

SPAM_WORDS = (
    "make address all 3d our over remove internet order mail receive will people "
    "report addresses free business email you credit your font 000 money hp hpl "
    "george 650 lab labs telnet 857 data 415 85 technology 1999 parts pm direct cs "
    "meeting original project re edu table conference"
).split()
SPAM_CHARS = ["semicolon", "paren", "bracket", "exclam", "dollar", "hash"]
SPAM_HEADER = (
    [f"word_freq_{w}" for w in SPAM_WORDS]
    + [f"char_freq_{c}" for c in SPAM_CHARS]
    + ["capital_run_length_average", "capital_run_length_longest", "capital_run_length_total", "class"]
)


def _download(package: str, version: str, dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", str(dest), f"{package}=={version}"],
        check=True,
    )
    return next(dest.iterdir())


def _write(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def fetch_spambase(out: Path, tmp: Path) -> None:
    archive = _download("keel-ds", "0.2.5", tmp / "keel")
    raw = zipfile.ZipFile(archive).read("keel_ds/data/balanced/raw/spambase.dat").decode()
    rows = [[f.strip() for f in line.split(",")] for line in raw.splitlines() if line.strip()]
    assert all(len(r) == len(SPAM_HEADER) for r in rows)
    _write(out / "spambase.csv", SPAM_HEADER, rows)


def fetch_wine(out: Path, tmp: Path) -> None:
    archive = _download("gcimpute", "0.0.4", tmp / "gc")
    member = "gcimpute-0.0.4/gcimpute/data/winequality-white.csv"
    text = tarfile.open(archive).extractfile(member).read().decode()
    reader = csv.reader(io.StringIO(text), delimiter=";")
    header = [h.strip().replace(" ", "_") for h in next(reader)]
    _write(out / "winequality_white.csv", header, [r for r in reader if r])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "src" / "pcgain" / "datasets")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        fetch_spambase(args.out, Path(tmp))
        fetch_wine(args.out, Path(tmp))


if __name__ == "__main__":
    main()
