import csv
import os
from pathlib import Path

import numpy as np
import pytest

from fairmlp.fairloss import Batch
from fairmlp.numcore import Rng

ADULT_ENV = "FAIRMLP_ADULT_CSV"


def adult_csv_path():
    """Resolve the census CSV used by the full-scale acceptance runs."""
    candidate = os.environ.get(ADULT_ENV)
    if candidate and Path(candidate).exists():
        return Path(candidate)
    default = Path(__file__).resolve().parent.parent / "data" / "adult.csv"
    if default.exists():
        return default
    return None


def random_batch(rng: Rng, s_min=4, s_max=32, p_lo=0.05, p_hi=0.95,
                 need_classes=True) -> Batch:
    """Random batch guaranteed to contain both groups (and classes)."""
    size = int(rng.gen.integers(s_min, s_max + 1))
    p = rng.gen.uniform(p_lo, p_hi, size)
    while True:
        a = rng.gen.integers(0, 2, size)
        if 0 < a.sum() < size:
            break
    while True:
        y = rng.gen.integers(0, 2, size)
        if not need_classes or 0 < y.sum() < size:
            break
    return Batch(p, a, y)


def biased_rows(n: int, seed: int):
    """Synthetic census-like rows with group-correlated labels.

    The label is strongly predictable from f1, and its base rate differs
    sharply between the groups (0.75 vs 0.25), so an unconstrained
    classifier shows a demographic-parity gap near 0.5.
    """
    gen = np.random.default_rng(seed)
    header = ["f1", "f2", "shade", "grp", "outcome"]
    rows = []
    for _ in range(n):
        a = int(gen.integers(0, 2))
        y = int(gen.random() < (0.25 if a == 1 else 0.75))
        f1 = (2 * y - 1) * 1.0 + gen.normal(0, 0.6)
        f2 = gen.normal(a, 0.8)
        shade = gen.choice(["red", "green", "blue"])
        rows.append([f"{f1:.6f}", f"{f2:.6f}", str(shade),
                     "f" if a == 1 else "m", "yes" if y == 1 else "no"])
    return header, rows


def separable_rows(n: int, seed: int):
    """Linearly separable 2-D toy rows; the attribute is independent noise."""
    gen = np.random.default_rng(seed)
    header = ["f1", "f2", "grp", "outcome"]
    rows = []
    for _ in range(n):
        y = int(gen.integers(0, 2))
        a = int(gen.integers(0, 2))
        f1 = (2 * y - 1) * 1.5 + gen.normal(0, 0.3)
        f2 = (2 * y - 1) * 1.5 + gen.normal(0, 0.3)
        rows.append([f"{f1:.6f}", f"{f2:.6f}",
                     "f" if a == 1 else "m", "yes" if y == 1 else "no"])
    return header, rows


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture(scope="session")
def biased_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "biased.csv"
    header, rows = biased_rows(800, seed=11)
    write_csv(path, header, rows)
    return path


@pytest.fixture(scope="session")
def biased_schema_json(tmp_path_factory):
    path = tmp_path_factory.mktemp("schema") / "biased_schema.json"
    path.write_text(
        '{"numeric": ["f1", "f2"], "categorical": ["shade"],'
        ' "label": "outcome", "positive_label": "yes",'
        ' "sensitive": "grp", "protected_value": "f",'
        ' "missing_token": "?"}',
        encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for status in ("passed", "failed", "skipped", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and "::" in nodeid:
                rows.append((nodeid.split("::")[-1], status.upper()))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(set(rows)):
            terminalreporter.write_line(f"{name}: {status}")
