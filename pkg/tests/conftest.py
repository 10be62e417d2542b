"""Shared fixtures over the bundled synthetic corpus."""

from pathlib import Path

import pytest
from hypothesis import settings

from itac import assemble_panel, load_vocabulary, read_series_csv
from itac.ingest import slugify
from itac.series import from_csv, parse_month

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def vocabulary():
    return load_vocabulary()


@pytest.fixture(scope="session")
def trend_panel(vocabulary):
    """All 32 bundled terms assembled over 2007-01..2024-12."""
    series = [
        read_series_csv(FIXTURES / "trends" / f"{slugify(t)}.csv",
                        term=t, category=vocabulary.category_of(t))
        for t in vocabulary.terms()
    ]
    span = (parse_month("2007-01"), parse_month("2024-12"))
    return assemble_panel(series, span)


@pytest.fixture(scope="session")
def consumption():
    text = (FIXTURES / "target_consumption.csv").read_text(encoding="utf-8")
    return from_csv(text, name="consumption")


@pytest.fixture(scope="session")
def commerce():
    text = (FIXTURES / "target_commerce.csv").read_text(encoding="utf-8")
    return from_csv(text, name="commerce")
