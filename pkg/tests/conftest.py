"""Shared pytest fixtures for neurq tests."""

import tempfile
from pathlib import Path

import pytest

from neurq.catalog import Catalog, Column, TableDef
from neurq.config.types import NeurqConfig
from neurq.database import Database
from neurq.settings import load_settings

LISTING_QUERY = """\
WITH ud AS (SELECT user_age, user_gender FROM users WHERE user_id = UID)
SELECT pr.product_id, pr.rating
FROM (
  PREDICT VALUE OF r.rating WITH PRIMARY KEY r.product_id
  FROM ratings r JOIN users u ON r.user_id = u.user_id CROSS JOIN ud
  WHERE u.user_gender = ud.user_gender
     AND u.user_age BETWEEN ud.user_age - 10 AND ud.user_age + 10
  TRAIN ON r.product_id) pr
ORDER BY pr.rating DESC LIMIT 100;"""

USERS = TableDef(
    "users",
    (Column("user_id", "int64"), Column("user_age", "int64"), Column("user_gender", "text")),
    "user_id",
)
RATINGS = TableDef(
    "ratings",
    (Column("user_id", "int64"), Column("product_id", "int64"), Column("rating", "float64")),
    "product_id",
)

USER_ROWS = [
    (1, 34, "f"),
    (2, 29, "m"),
    (3, 41, "f"),
    (4, 38, "f"),
    (5, 52, "m"),
    (6, 27, "f"),
]
RATING_ROWS = [
    (1, 101, 4.5),
    (2, 102, 3.0),
    (3, 103, 4.0),
    (4, 104, 4.8),
    (5, 105, 2.5),
    (6, 106, 3.9),
    (1, 107, 4.1),
    (3, 108, 3.7),
]


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def settings() -> NeurqConfig:
    """Packaged default settings."""
    return NeurqConfig.default()


@pytest.fixture
def catalog() -> Catalog:
    """Catalog with the users/ratings schema and a few rows (version 2)."""
    cat = Catalog()
    cat.create_table(USERS)
    cat.create_table(RATINGS)
    cat.append_rows("users", USER_ROWS)
    cat.append_rows("ratings", RATING_ROWS)
    return cat


@pytest.fixture
def db():
    """Demo database with the cache disabled so runs stay independent."""
    database = Database.from_manifest(config=load_settings(overrides=["cache.enabled=false"]))
    yield database
    database.close()


@pytest.fixture
def cached_db():
    """Demo database with the cache enabled."""
    database = Database.from_manifest()
    yield database
    database.close()


def make_db(*overrides: str, manifest=None) -> Database:
    """Demo database with settings overrides (callers close it)."""
    return Database.from_manifest(manifest, load_settings(overrides=list(overrides)))
