"""Bundled resources: lemma rules, stop words and a synthetic fixture dataset."""

from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent
FIXTURE_DIR = DATA_DIR / "fixture"
FIXTURE_SEED = 0


def fixture_path(name: str = "") -> Path:
    """Path inside the bundled fixture (regenerate with ``capdisc simulate --seed 0``)."""
    return FIXTURE_DIR / name if name else FIXTURE_DIR
