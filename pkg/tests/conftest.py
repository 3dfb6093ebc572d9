"""Shared fixtures. Tests touching the real snapshot ingest it once per
session into a temporary directory (a few seconds)."""

from __future__ import annotations

from pathlib import Path

import pytest

from hanpron.ids import RadicalInventory
from hanpron.phonology import build_vocab
from hanpron.pipeline import synthetic_entries
from hanpron.unihan import attach_bor

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
UNIHAN = DATA / "unihan" / "Unihan_Readings.txt"
IDS = DATA / "ids" / "ids.tsv"
RESULTS = ROOT / "results"


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    from hanpron.unihan import ingest

    out = tmp_path_factory.mktemp("dataset")
    ingest(UNIHAN, IDS, out, seed=42)
    return out


@pytest.fixture(scope="session")
def dataset(dataset_dir):
    from hanpron.unihan import load_dataset

    return load_dataset(dataset_dir)


@pytest.fixture
def toy():
    """(entries with BoR attached, inventory, vocab) for small model tests."""
    entries = synthetic_entries(8, seed=3)
    inv = RadicalInventory.from_sequences(e.geod for e in entries)
    entries = attach_bor(entries, inv)
    return entries, inv, build_vocab(entries)


# --- acceptance summary -------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
