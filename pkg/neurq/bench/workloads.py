"""Synthetic benchmark workloads.

R: app-usage ratings. A ``usage`` table with ten numeric context features
and a rating that is a planted linear function of them plus noise, joined
to ``users``. Every query is the same PREDICT-with-TRAIN-ON shape for a
different user id, so the usage/users join is shared across queries while
the training rows differ.

T: multi-tenant embedding. One text table per tenant with a bimodal mix of
short and long sentences, and the same USING MODEL embedding query per
tenant over its own table.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from neurq.catalog import Column, TableDef

R_FEATURES = (
    "user_id", "item", "daytime", "weekday", "isweekend",
    "homework", "cost", "weather", "country", "city",
)
# upper bounds (exclusive) of the categorical codes, user_id excluded
_R_RANGES = {
    "item": 400, "daytime": 7, "weekday": 7, "isweekend": 2, "homework": 3,
    "cost": 2, "weather": 9, "country": 80, "city": 200,
}

R_QUERY = """\
WITH ud AS (SELECT user_age, user_gender FROM users WHERE user_id = {uid})
SELECT pr.usage_id, pr.rating
FROM (
  PREDICT VALUE OF r.rating WITH PRIMARY KEY r.usage_id
  FROM usage r JOIN users u ON r.user_id = u.user_id CROSS JOIN ud
  WHERE u.user_gender = ud.user_gender
    AND u.user_age BETWEEN ud.user_age - 10 AND ud.user_age + 10
  TRAIN ON {features}) pr
ORDER BY pr.rating DESC LIMIT 100"""

T_QUERY = (
    "PREDICT VALUE OF d.embedding WITH PRIMARY KEY d.doc_id "
    "FROM {table} d USING MODEL embedder"
)

SHORT_WORDS = (3, 7)  # half-open token count range of short sentences
LONG_WORDS = (40, 61)
LONG_SHARE = 0.4
VOCABULARY = 2000


@dataclass
class Workload:
    """Tables, models and tenant-tagged queries of one benchmark run."""

    name: str
    tables: dict[str, tuple[TableDef, list[tuple]]] = field(default_factory=dict)
    models: list[str] = field(default_factory=list)
    queries: list[tuple[str, str]] = field(default_factory=list)  # (tenant, sql)

    @property
    def tenants(self) -> list[str]:
        return list(dict.fromkeys(t for t, _ in self.queries))

    def table_hash(self) -> str:
        """Content digest of every table, for determinism checks."""
        digest = hashlib.blake2b(digest_size=16)
        for name in sorted(self.tables):
            definition, rows = self.tables[name]
            digest.update(repr((name, definition.column_names, rows)).encode())
        return digest.hexdigest()

    def install(self, db: Any) -> None:
        """Create the tables and models in a Database."""
        for definition, rows in self.tables.values():
            db.catalog.create_table(definition)
            db.catalog.append_rows(definition.name, rows)
        for statement in self.models:
            db.execute(statement)


def gen_workload_r(rows: int, users: int = 500, queries: int = 16, seed: int = 7) -> Workload:
    """Usage-context ratings with a planted linear signal.

    Raises:
        ValueError: if ``rows`` < 100 or ``users`` < 1
    """
    if rows < 100:
        raise ValueError(f"workload R needs at least 100 rows, got {rows}")
    if users < 1:
        raise ValueError("workload R needs at least one user")
    rng = np.random.default_rng(seed)

    ages = rng.integers(18, 70, size=users)
    genders = rng.choice(["f", "m"], size=users)
    user_rows = [(i + 1, int(ages[i]), str(genders[i])) for i in range(users)]

    features = {"user_id": rng.integers(1, users + 1, size=rows)}
    for name, high in _R_RANGES.items():
        features[name] = rng.integers(0, high, size=rows)
    matrix = np.column_stack([features[f] for f in R_FEATURES]).astype(float)
    scaled = matrix / matrix.std(axis=0).clip(min=1e-9)
    weights = rng.normal(0.0, 1.0, size=len(R_FEATURES))
    signal = scaled @ weights
    noise = rng.normal(0.0, 0.1 * signal.std(), size=rows)
    rating = 3.0 + (signal - signal.mean()) / signal.std() + noise

    usage_rows = [
        (i + 1, *(int(features[f][i]) for f in R_FEATURES), round(float(rating[i]), 6))
        for i in range(rows)
    ]
    users_def = TableDef(
        "users",
        (Column("user_id", "int64"), Column("user_age", "int64"), Column("user_gender", "text")),
        "user_id",
    )
    usage_def = TableDef(
        "usage",
        (Column("usage_id", "int64"),)
        + tuple(Column(f, "int64") for f in R_FEATURES)
        + (Column("rating", "float64"),),
        "usage_id",
    )
    picked = rng.choice(np.arange(1, users + 1), size=queries, replace=queries > users)
    train_on = ", ".join(f"r.{f}" for f in R_FEATURES)
    workload = Workload("R")
    workload.tables = {"users": (users_def, user_rows), "usage": (usage_def, usage_rows)}
    workload.queries = [("default", R_QUERY.format(uid=int(uid), features=train_on)) for uid in picked]
    return workload


def sentence_lengths(count: int, rng: np.random.Generator) -> np.ndarray:
    """Bimodal token counts: mostly short sentences, a long minority."""
    long = rng.random(count) < LONG_SHARE
    short_len = rng.integers(*SHORT_WORDS, size=count)
    long_len = rng.integers(*LONG_WORDS, size=count)
    return np.where(long, long_len, short_len)


def gen_workload_t(rows_per_tenant: int, tenants: int = 8, seed: int = 7) -> Workload:
    """One text table and one embedding query per tenant.

    Raises:
        ValueError: if ``tenants`` < 1 or ``rows_per_tenant`` < 1
    """
    if tenants < 1:
        raise ValueError("workload T needs at least one tenant")
    if rows_per_tenant < 1:
        raise ValueError("workload T needs at least one row per tenant")
    rng = np.random.default_rng(seed)
    workload = Workload("T")
    for t in range(tenants):
        name = f"docs_{t}"
        lengths = sentence_lengths(rows_per_tenant, rng)
        rows = []
        for i, n in enumerate(lengths):
            words = rng.integers(0, VOCABULARY, size=int(n))
            rows.append((i + 1, " ".join(f"w{w}" for w in words)))
        definition = TableDef(name, (Column("doc_id", "int64"), Column("body", "text")), "doc_id")
        workload.tables[name] = (definition, rows)
        workload.queries.append((f"tenant{t}", T_QUERY.format(table=name)))
    workload.models = ["CREATE MODEL embedder KIND hash_embedder ON docs_0 FEATURES (body)"]
    return workload
