#!/usr/bin/env python3
"""Download the UCI census-income ("Adult") data and assemble one CSV.

Writes data/adult.csv with a header row, merging the train and test
partitions (48842 rows). The test partition's trailing periods on the
labels are stripped and all cells are whitespace-trimmed, so the file
matches the bundled 'adult' schema preset. Rows with missing values are
kept; the loader drops them at read time.

Usage: python scripts/fetch_adult.py [--out data/adult.csv]
"""

import argparse
import csv
import io
import sys
import urllib.request
from pathlib import Path

BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult"

COLUMNS = ["age", "workclass", "fnlwgt", "education", "education-num",
           "marital-status", "occupation", "relationship", "race", "sex",
           "capital-gain", "capital-loss", "hours-per-week",
           "native-country", "income"]


def fetch(name: str) -> str:
    url = f"{BASE}/{name}"
    print(f"downloading {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read().decode("utf-8", errors="replace")


def parse_rows(raw: str, strip_label_period: bool) -> list[list[str]]:
    rows = []
    for line in io.StringIO(raw):
        line = line.strip()
        if not line or line.startswith("|"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(COLUMNS):
            continue
        if strip_label_period and cells[-1].endswith("."):
            cells[-1] = cells[-1][:-1]
        rows.append(cells)
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/adult.csv")
    args = parser.parse_args()

    rows = parse_rows(fetch("adult.data"), strip_label_period=False)
    rows += parse_rows(fetch("adult.test"), strip_label_period=True)
    if len(rows) != 48842:
        print(f"warning: expected 48842 rows, got {len(rows)}", file=sys.stderr)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        writer.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
